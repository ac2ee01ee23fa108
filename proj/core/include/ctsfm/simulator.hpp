#pragma once

// Synthetic sequences: smooth random ground-truth motion, landmark clouds,
// noisy IMU streams and rolling-shutter observations found by root search.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>

#include "ctsfm/dataset.hpp"

namespace ctsfm {

enum class MotionType { kFree, kForward, kSideways };

const char* to_string(MotionType motion);
MotionType motion_type_from_string(const std::string& name);

struct SimConfig {
  std::uint64_t seed = 0;
  double duration = 5.0;
  double camera_rate = 29.97;
  double imu_rate = 300.0;
  double sigma_image = 0.5;
  double sigma_imu = 0.01;
  Eigen::Vector3d gyro_bias = Eigen::Vector3d::Zero();
  Eigen::Vector3d accel_bias = Eigen::Vector3d::Zero();
  double landmarks_per_second = 80.0;
  RsCamera camera;
  Eigen::Vector3d gravity = default_gravity();

  // Motion model.
  double gt_knot_spacing = 0.02;
  double walking_speed = 1.0;    // Free, m/s
  double min_speed = 1.0;        // Forward/Sideways, m/s
  double max_speed = 5.0;        // Forward/Sideways, m/s
  double max_curvature = 0.5;    // Forward/Sideways, 1/m
  bool zero_velocity_start = true;
  double min_depth = 2.0;
  double max_depth = 50.0;

  void validate() const;
};

struct SimulatedSequence {
  Dataset dataset;
  Trajectory ground_truth;
};

/// Smooth split trajectory covering [-1, duration + 1] s.
Trajectory generate_trajectory(MotionType motion, const SimConfig& config);

std::vector<GroundTruthLandmark> generate_landmarks(const Trajectory& gt, const SimConfig& config);

std::vector<ImuSample> sample_imu(const Trajectory& gt, const SimConfig& config);

struct ObservationSet {
  std::vector<Frame> frames;
  std::vector<Track> tracks;
  std::vector<CleanObservation> clean;
};

ObservationSet observe(const Trajectory& gt, const std::vector<GroundTruthLandmark>& landmarks,
                       const SimConfig& config);

SimulatedSequence simulate(MotionType motion, const SimConfig& config);

/// Bracketed root of f on [a, b] by Brent's method, to |b - a| <= xtol.
std::optional<double> brent_root(const std::function<double(double)>& f, double a, double b, double xtol = 1e-13,
                                 int max_iterations = 200);

/// Capture time of world point x in frame with first-row time t0: root of
/// (t - t0) Nv / r - v(t) nearest `prefer_row` (earliest root when absent).
std::optional<CleanObservation> observe_point(const RsCamera& cam, const Trajectory& gt, const Eigen::Vector3d& x,
                                              double frame_t0, std::optional<double> prefer_row = std::nullopt);

/// Deterministic per-stream seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index);

}  // namespace ctsfm
