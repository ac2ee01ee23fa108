#include "ctsfm/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/SVD>

#include "ctsfm/errors.hpp"

namespace ctsfm {

namespace {

Eigen::Vector3d centroid(const std::vector<Eigen::Vector3d>& x) {
  Eigen::Vector3d c = Eigen::Vector3d::Zero();
  for (const auto& v : x) c += v;
  return c / static_cast<double>(x.size());
}

bool spans_plane(const std::vector<Eigen::Vector3d>& x, const Eigen::Vector3d& c) {
  Eigen::Matrix3d S = Eigen::Matrix3d::Zero();
  for (const auto& v : x) S += (v - c) * (v - c).transpose();
  const Eigen::JacobiSVD<Eigen::Matrix3d> svd(S);
  const auto s = svd.singularValues();
  return s[0] > 0.0 && s[1] > 1e-12 * s[0];
}

}  // namespace

RigidTransform fit_rigid(const std::vector<Eigen::Vector3d>& from, const std::vector<Eigen::Vector3d>& to) {
  if (from.size() != to.size()) throw Error(Errc::kInvalidArgument, "alignment needs matched samples");
  if (from.size() < 3) throw Error(Errc::kDegenerate, "alignment needs at least 3 samples");
  const Eigen::Vector3d cf = centroid(from);
  const Eigen::Vector3d ct = centroid(to);
  if (!spans_plane(from, cf) || !spans_plane(to, ct)) {
    throw Error(Errc::kDegenerate, "alignment samples are collinear or coincident");
  }
  Eigen::Matrix3d H = Eigen::Matrix3d::Zero();
  for (std::size_t i = 0; i < from.size(); ++i) H += (from[i] - cf) * (to[i] - ct).transpose();
  const Eigen::JacobiSVD<Eigen::Matrix3d> svd(H, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Matrix3d U = svd.matrixU();
  const Eigen::Matrix3d V = svd.matrixV();
  Eigen::Matrix3d D = Eigen::Matrix3d::Identity();
  D(2, 2) = (V * U.transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  RigidTransform out;
  out.R = V * D * U.transpose();
  out.p = ct - out.R * cf;
  return out;
}

AlignedPair align(const std::vector<double>& times, const std::vector<Eigen::Vector3d>& estimate,
                  const std::vector<Eigen::Vector3d>& ground_truth) {
  if (times.size() != estimate.size() || times.size() != ground_truth.size()) {
    throw Error(Errc::kInvalidArgument, "alignment inputs differ in length");
  }
  AlignedPair out;
  out.times = times;
  out.ground_truth = ground_truth;
  out.transform = fit_rigid(estimate, ground_truth);
  out.estimate.reserve(estimate.size());
  for (const auto& x : estimate) out.estimate.push_back(out.transform.apply(x));
  return out;
}

std::vector<double> common_grid(const Trajectory& a, const Trajectory& b, double rate,
                                const std::optional<TimeWindow>& window) {
  if (!(rate > 0.0)) throw Error(Errc::kInvalidArgument, "grid rate must be positive");
  double lo = std::max(a.grid().t_min(), b.grid().t_min());
  double hi = std::min(a.grid().t_max(), b.grid().t_max());
  if (window) {
    lo = std::max(lo, window->first);
    hi = std::min(hi, std::nextafter(window->second, window->second + 1.0));
  }
  std::vector<double> out;
  if (!(hi > lo)) return out;
  const auto n = static_cast<long>(std::floor((hi - lo) * rate));
  for (long k = 0; k <= n; ++k) {
    const double t = lo + static_cast<double>(k) / rate;
    if (t < hi) out.push_back(t);
  }
  return out;
}

std::vector<Eigen::Vector3d> sample_positions(const Trajectory& trajectory, const std::vector<double>& times) {
  std::vector<Eigen::Vector3d> out;
  out.reserve(times.size());
  for (double t : times) out.push_back(trajectory.pose(t).p);
  return out;
}

AlignedPair align(const Trajectory& estimate, const Trajectory& ground_truth, double rate,
                  const std::optional<TimeWindow>& window) {
  const auto times = common_grid(estimate, ground_truth, rate, window);
  return align(times, sample_positions(estimate, times), sample_positions(ground_truth, times));
}

double area_error(const std::vector<Eigen::Vector3d>& f, const std::vector<Eigen::Vector3d>& g) {
  if (f.size() != g.size()) throw Error(Errc::kInvalidArgument, "area metric needs matched samples");
  if (f.size() < 2) throw Error(Errc::kInvalidArgument, "area metric needs at least 2 samples");
  double sum = 0.0;
  for (std::size_t k = 0; k + 1 < f.size(); ++k) {
    sum += (f[k] - g[k]).norm() / 2.0 * ((f[k] - f[k + 1]).norm() + (g[k] - g[k + 1]).norm());
  }
  return sum;
}

double area_error(const AlignedPair& pair) { return area_error(pair.estimate, pair.ground_truth); }

double percentile(std::vector<double> values, double q) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  if (!(q >= 0.0 && q <= 100.0)) throw Error(Errc::kInvalidArgument, "percentile must lie in [0, 100]");
  std::sort(values.begin(), values.end());
  const double pos = q / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

ErrorSummary summarize(const std::vector<double>& errors, double threshold) {
  if (errors.empty()) throw Error(Errc::kInvalidArgument, "summary needs at least one error");
  ErrorSummary s;
  s.count = static_cast<int>(errors.size());
  s.threshold = threshold;
  std::vector<double> in;
  for (double e : errors) {
    if (e < threshold) in.push_back(e);
  }
  s.inliers = static_cast<int>(in.size());
  s.inlier_ratio = static_cast<double>(s.inliers) / s.count;
  s.median = percentile(in, 50.0);
  s.p40 = percentile(in, 40.0);
  s.p60 = percentile(in, 60.0);
  return s;
}

}  // namespace ctsfm
