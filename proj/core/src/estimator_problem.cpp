#include <algorithm>
#include <cmath>
#include <map>
#include <unordered_map>

#include "estimator_internal.hpp"

namespace ctsfm {

namespace est {

Layout make_layout(const Problem& problem) {
  Layout out;
  out.trajectory_dim = 6 * problem.trajectory.num_control_points();
  const int L = static_cast<int>(problem.landmarks.size());
  const int n = static_cast<int>(problem.observations.size());
  const bool lifting = problem.projection_method == ProjectionMethod::kLifting;
  out.group_offset.assign(L, 0);
  out.group_size.assign(L, 1);
  out.obs_begin.assign(L + 1, n);
  out.obs_local.assign(n, 0);
  int i = 0;
  for (int k = 0; k < L; ++k) {
    out.obs_begin[k] = i;
    int local = 1;
    while (i < n && problem.observations[i].landmark == k) {
      out.obs_local[i++] = local++;
    }
    if (lifting) out.group_size[k] = local;
  }
  if (i != n) {
    throw Error(Errc::kInvalidArgument, "observations must be sorted by landmark");
  }
  int offset = out.trajectory_dim;
  for (int k = 0; k < L; ++k) {
    out.group_offset[k] = offset;
    offset += out.group_size[k];
  }
  out.dim = offset;
  return out;
}

}  // namespace est

void Problem::validate() const {
  auto fail = [](const std::string& what) { throw Error(Errc::kInvalidArgument, "invalid problem: " + what); };
  camera.validate();
  if (observations.empty()) fail("no observations");
  if (imu.empty()) fail("no IMU samples");
  for (const auto* W : {&W_gyro, &W_accel}) {
    if (Eigen::LLT<Eigen::Matrix3d>(*W).info() != Eigen::Success) fail("IMU weights must be positive definite");
  }
  for (const auto& m : imu) {
    if (!trajectory.contains(m.t)) fail("IMU sample outside trajectory support");
  }
  std::vector<int> counts(landmarks.size(), 0);
  int prev = -1;
  for (const auto& o : observations) {
    if (o.landmark < 0 || o.landmark >= static_cast<int>(landmarks.size())) fail("observation of unknown landmark");
    if (o.landmark < prev) fail("observations must be sorted by landmark");
    prev = o.landmark;
    ++counts[o.landmark];
    const auto [lo, hi] = lifting_window(camera, o.frame_t0);
    if (!trajectory.contains(o.capture_time(camera)) || !trajectory.contains(lo) || !trajectory.contains(hi)) {
      fail("observation outside trajectory support");
    }
  }
  for (std::size_t k = 0; k < landmarks.size(); ++k) {
    if (counts[k] == 0) fail("landmark " + std::to_string(landmarks[k].id) + " has a single observation");
    if (!trajectory.contains(landmarks[k].ref_time(camera))) fail("reference observation outside trajectory support");
    if (!(landmarks[k].inv_depth >= 0.0)) fail("negative inverse depth");
  }
  if (projection_method == ProjectionMethod::kLifting && lifted_times.size() != observations.size()) {
    fail("one lifted time per observation required");
  }
}

SewResult analyze_imu(const Dataset& dataset, const SewOptions& options) {
  const int N = static_cast<int>(dataset.imu.size());
  if (N == 0) {
    throw Error(Errc::kInvalidArgument, "dataset has no IMU samples");
  }
  Eigen::MatrixXd gyro(N, 3);
  Eigen::MatrixXd accel(N, 3);
  for (int i = 0; i < N; ++i) {
    gyro.row(i) = dataset.imu[i].gyro.transpose();
    accel.row(i) = dataset.imu[i].accel.transpose();
  }
  return compute_weights(gyro, accel, dataset.meta.imu_rate, dataset.meta.sigma_imu, dataset.meta.sigma_imu,
                         options);
}

namespace {

struct Candidate {
  int track = 0;
  int entry = 0;
  int strength = 0;
  int landmark = 0;
};

}  // namespace

Problem build_problem(const Dataset& dataset, TrajectoryKind kind, ProjectionMethod method, const SewResult& sew,
                      const ProblemOptions& options) {
  dataset.validate();
  if (options.keyframe_stride < 1 || options.max_observations_per_keyframe < 1 || options.bucket_grid < 1) {
    throw Error(Errc::kInvalidArgument, "problem options must be positive");
  }
  if (dataset.imu.empty()) {
    throw Error(Errc::kInvalidArgument, "dataset has no IMU samples");
  }
  if (dataset.frames.empty() || dataset.tracks.empty()) {
    throw Error(Errc::kInvalidArgument, "dataset has no observations");
  }
  if (!(sew.dt > 0.0)) {
    throw Error(Errc::kInvalidArgument, "knot spacing must be positive");
  }
  const RsCamera& cam = dataset.meta.camera;

  Problem P;
  P.camera = cam;
  P.projection_method = method;
  P.W_gyro = sew.W_gyro;
  P.W_accel = sew.W_accel;
  P.gyro_bias = dataset.meta.gyro_bias;
  P.accel_bias = dataset.meta.accel_bias;
  P.imu = dataset.imu;

  std::unordered_map<int, int> frame_index;
  for (std::size_t i = 0; i < dataset.frames.size(); ++i) {
    frame_index[dataset.frames[i].id] = static_cast<int>(i);
    if (i % options.keyframe_stride == 0) P.keyframes.push_back(dataset.frames[i].id);
  }
  auto is_keyframe = [&](int frame) { return frame_index.at(frame) % options.keyframe_stride == 0; };

  // Entries of each track that fall on keyframes.
  const int T = static_cast<int>(dataset.tracks.size());
  std::vector<std::vector<int>> key_entries(T);
  for (int t = 0; t < T; ++t) {
    const auto& entries = dataset.tracks[t].entries;
    for (std::size_t e = 0; e < entries.size(); ++e) {
      if (is_keyframe(entries[e].frame)) key_entries[t].push_back(static_cast<int>(e));
    }
  }

  std::map<int, std::vector<Candidate>> per_keyframe;
  for (int t = 0; t < T; ++t) {
    const int strength = static_cast<int>(key_entries[t].size());
    if (strength < 2) continue;
    for (int e : key_entries[t]) {
      per_keyframe[frame_index.at(dataset.tracks[t].entries[e].frame)].push_back(
          {t, e, strength, dataset.tracks[t].landmark});
    }
  }

  std::vector<std::vector<int>> selected(T);
  const int G = options.bucket_grid;
  for (auto& [frame, cands] : per_keyframe) {
    std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
      return a.strength != b.strength ? a.strength > b.strength : a.landmark < b.landmark;
    });
    std::vector<bool> taken(cands.size(), false);
    std::vector<bool> bucket_used(G * G, false);
    int count = 0;
    for (std::size_t c = 0; c < cands.size() && count < options.max_observations_per_keyframe; ++c) {
      const Eigen::Vector2d& y = dataset.tracks[cands[c].track].entries[cands[c].entry].pixel;
      const int bx = std::clamp(static_cast<int>(y.x() / cam.Nu * G), 0, G - 1);
      const int by = std::clamp(static_cast<int>(y.y() / cam.Nv * G), 0, G - 1);
      if (bucket_used[by * G + bx]) continue;
      bucket_used[by * G + bx] = true;
      taken[c] = true;
      ++count;
    }
    for (std::size_t c = 0; c < cands.size() && count < options.max_observations_per_keyframe; ++c) {
      if (taken[c]) continue;
      taken[c] = true;
      ++count;
    }
    for (std::size_t c = 0; c < cands.size(); ++c) {
      if (taken[c]) selected[cands[c].track].push_back(cands[c].entry);
    }
  }

  for (int t = 0; t < T; ++t) {
    auto& sel = selected[t];
    if (sel.size() < 2) continue;
    std::sort(sel.begin(), sel.end());
    const auto& track = dataset.tracks[t];
    const int k = static_cast<int>(P.landmarks.size());
    Landmark lm;
    lm.id = track.landmark;
    lm.ref_frame = track.entries[sel[0]].frame;
    lm.ref_frame_t0 = dataset.frame(lm.ref_frame).t0;
    lm.ref_obs = track.entries[sel[0]].pixel;
    lm.inv_depth = 0.0;
    P.landmarks.push_back(lm);
    for (std::size_t s = 1; s < sel.size(); ++s) {
      Observation o;
      o.landmark = k;
      o.frame = track.entries[sel[s]].frame;
      o.frame_t0 = dataset.frame(o.frame).t0;
      o.pixel = track.entries[sel[s]].pixel;
      P.observations.push_back(o);
    }
  }
  if (P.observations.empty()) {
    throw Error(Errc::kInvalidArgument, "no landmark is observed in two keyframes");
  }
  if (method == ProjectionMethod::kLifting) {
    for (const auto& o : P.observations) P.lifted_times.push_back(o.capture_time(cam));
  }

  const double a = std::min(dataset.imu.front().t, dataset.frames.front().t0 - 0.5 * cam.readout);
  const double b = std::max(dataset.imu.back().t, dataset.frames.back().t0 + 1.5 * cam.readout);
  P.trajectory = Trajectory::constant(kind, KnotGrid::covering(a, b, sew.dt), Pose(), dataset.meta.gravity);
  P.validate();
  return P;
}

Reconstruction reconstruct(const Dataset& dataset, TrajectoryKind kind, ProjectionMethod method,
                           const ReconstructionOptions& options) {
  Reconstruction out;
  out.sew = analyze_imu(dataset, options.sew);
  out.solve = solve(build_problem(dataset, kind, method, out.sew, options.problem), options.solver);
  return out;
}

double reference_inverse_depth(const RsCamera& camera, const Trajectory& trajectory, const Landmark& landmark,
                               const Eigen::Vector3d& position) {
  return 1.0 / world_to_camera(trajectory.pose(landmark.ref_time(camera)), position).z();
}

}  // namespace ctsfm
