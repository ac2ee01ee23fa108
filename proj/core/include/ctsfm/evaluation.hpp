#pragma once

// Rigid alignment of an estimated position track to ground truth and the
// soap-bubble area between the two.

#include <optional>
#include <utility>
#include <vector>

#include "ctsfm/trajectory.hpp"

namespace ctsfm {

struct RigidTransform {
  Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
  Eigen::Vector3d p = Eigen::Vector3d::Zero();

  Eigen::Vector3d apply(const Eigen::Vector3d& x) const { return R * x + p; }
};

struct AlignedPair {
  std::vector<double> times;
  /// Estimate after the transform below has been applied.
  std::vector<Eigen::Vector3d> estimate;
  std::vector<Eigen::Vector3d> ground_truth;
  /// Maps the raw estimate onto the ground truth.
  RigidTransform transform;
};

/// Rotation by orthogonal Procrustes (det = +1), translation by centroid
/// matching. No scale. Throws kDegenerate for collinear or coincident samples.
RigidTransform fit_rigid(const std::vector<Eigen::Vector3d>& from, const std::vector<Eigen::Vector3d>& to);

AlignedPair align(const std::vector<double>& times, const std::vector<Eigen::Vector3d>& estimate,
                  const std::vector<Eigen::Vector3d>& ground_truth);

using TimeWindow = std::pair<double, double>;

/// Uniform grid at `rate` over the overlap of both supports, optionally
/// clipped to `window`.
std::vector<double> common_grid(const Trajectory& a, const Trajectory& b, double rate = 100.0,
                                const std::optional<TimeWindow>& window = std::nullopt);

std::vector<Eigen::Vector3d> sample_positions(const Trajectory& trajectory, const std::vector<double>& times);

AlignedPair align(const Trajectory& estimate, const Trajectory& ground_truth, double rate = 100.0,
                  const std::optional<TimeWindow>& window = std::nullopt);

/// Trapezoid sum of |f_k - g_k| / 2 (|f_k - f_k+1| + |g_k - g_k+1|). m^2.
double area_error(const std::vector<Eigen::Vector3d>& f, const std::vector<Eigen::Vector3d>& g);
double area_error(const AlignedPair& pair);

/// Percentile q in [0, 100] with linear interpolation between order statistics.
double percentile(std::vector<double> values, double q);

struct ErrorSummary {
  int count = 0;
  int inliers = 0;
  double threshold = 0.25;
  double inlier_ratio = 0.0;
  /// Statistics of the inlier set; NaN when it is empty.
  double median = 0.0;
  double p40 = 0.0;
  double p60 = 0.0;
};

/// Inliers are errors strictly below `threshold`.
ErrorSummary summarize(const std::vector<double>& errors, double threshold = 0.25);

}  // namespace ctsfm
