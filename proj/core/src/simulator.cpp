#include "ctsfm/simulator.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include <gsl/gsl_errno.h>
#include <gsl/gsl_roots.h>

namespace ctsfm {

const char* to_string(MotionType motion) {
  switch (motion) {
    case MotionType::kFree: return "free";
    case MotionType::kForward: return "forward";
    case MotionType::kSideways: return "sideways";
  }
  return "unknown";
}

MotionType motion_type_from_string(const std::string& name) {
  if (name == "free") return MotionType::kFree;
  if (name == "forward") return MotionType::kForward;
  if (name == "sideways") return MotionType::kSideways;
  throw Error(Errc::kInvalidArgument, "unknown motion type '" + name + "' (expected free|forward|sideways)");
}

void SimConfig::validate() const {
  if (!(duration >= 1.0)) throw Error(Errc::kInvalidArgument, "duration must be at least 1 s");
  if (!(camera_rate > 0.0) || !(imu_rate > 0.0)) throw Error(Errc::kInvalidArgument, "rates must be positive");
  if (!(sigma_image >= 0.0) || !(sigma_imu >= 0.0)) throw Error(Errc::kInvalidArgument, "noise sigmas must be >= 0");
  if (!(landmarks_per_second > 0.0)) throw Error(Errc::kInvalidArgument, "landmarks_per_second must be positive");
  if (!(gt_knot_spacing > 0.0)) throw Error(Errc::kInvalidArgument, "gt_knot_spacing must be positive");
  if (!(min_depth > 0.0) || !(max_depth > min_depth)) throw Error(Errc::kInvalidArgument, "bad depth range");
  if (!(max_speed >= min_speed) || !(min_speed >= 0.0)) throw Error(Errc::kInvalidArgument, "bad speed range");
  camera.validate();
  if (std::abs(camera.frame_period * camera_rate - 1.0) > 1e-9) {
    throw Error(Errc::kInvalidArgument, "camera frame_period must equal 1 / camera_rate");
  }
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  // splitmix64 over the three words.
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(seed) ^ stream) ^ index);
}

namespace {

constexpr std::uint64_t kStreamMotion = 1;
constexpr std::uint64_t kStreamLandmarks = 2;
constexpr std::uint64_t kStreamImu = 3;
constexpr std::uint64_t kStreamFrames = 4;

/// White noise smoothed by a Gaussian of width sigma_t, unit variance.
std::vector<double> smoothed_noise(std::mt19937_64& rng, int n, double dt, double sigma_t) {
  const int half = static_cast<int>(std::ceil(4.0 * sigma_t / dt));
  std::vector<double> kernel(2 * half + 1);
  double energy = 0.0;
  for (int i = -half; i <= half; ++i) {
    const double x = i * dt / sigma_t;
    kernel[i + half] = std::exp(-0.5 * x * x);
    energy += kernel[i + half] * kernel[i + half];
  }
  for (double& k : kernel) k /= std::sqrt(energy);
  std::normal_distribution<double> normal;
  std::vector<double> white(n + 2 * half);
  for (double& w : white) w = normal(rng);
  std::vector<double> out(n, 0.0);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= 2 * half; ++j) out[i] += kernel[j] * white[i + j];
  }
  return out;
}

double interp(const std::vector<double>& v, double x) {
  const double c = std::clamp(x, 0.0, static_cast<double>(v.size() - 1));
  const auto i = std::min(static_cast<std::size_t>(c), v.size() - 2);
  const double f = c - i;
  return v[i] * (1.0 - f) + v[i + 1] * f;
}

Eigen::Matrix3d yaw(double a) { return Eigen::AngleAxisd(a, Eigen::Vector3d::UnitZ()).toRotationMatrix(); }

std::vector<Pose> free_motion(const KnotGrid& grid, const SimConfig& cfg, std::mt19937_64& rng) {
  const int n = grid.count;
  const double dt = grid.dt;
  const double heading0 = std::uniform_real_distribution<double>(-std::numbers::pi, std::numbers::pi)(rng);
  const auto path_turn = smoothed_noise(rng, n, dt, 0.6);
  const auto speed = smoothed_noise(rng, n, dt, 0.5);
  const auto climb = smoothed_noise(rng, n, dt, 0.5);
  const auto look = smoothed_noise(rng, n, dt, 0.6);
  std::array<std::vector<double>, 3> wobble;
  for (auto& w : wobble) w = smoothed_noise(rng, n, dt, 0.3);

  std::vector<Pose> poses(n);
  Eigen::Vector3d p = Eigen::Vector3d::Zero();
  for (int k = 0; k < n; ++k) {
    const double heading = heading0 + 1.0 * path_turn[k];
    const double s = cfg.walking_speed * (1.0 + 0.3 * speed[k]);
    const Eigen::Vector3d v(s * std::cos(heading), s * std::sin(heading), 0.15 * climb[k]);
    if (k > 0) p += v * dt;
    poses[k].p = p;
    const Eigen::Vector3d wob(0.2 * wobble[0][k], 0.2 * wobble[1][k], 0.2 * wobble[2][k]);
    poses[k].R = yaw(heading0 + 0.7 * look[k]) * rotation_exp(wob);
  }
  return poses;
}

std::vector<Pose> car_motion(const KnotGrid& grid, const SimConfig& cfg, bool sideways, std::mt19937_64& rng) {
  const int n = grid.count;
  const double dt = grid.dt;
  const auto speed_noise = smoothed_noise(rng, n, dt, 0.8);
  const auto turn_noise = smoothed_noise(rng, n, dt, 0.6);
  double heading = std::uniform_real_distribution<double>(-std::numbers::pi, std::numbers::pi)(rng);
  const double mid = 0.5 * (cfg.min_speed + cfg.max_speed);
  const double half = 0.5 * (cfg.max_speed - cfg.min_speed);
  const double ramp_time = 2.0;
  auto speed_at = [&](double t, double x) {
    double s = mid + half * std::tanh(interp(speed_noise, x));
    if (cfg.zero_velocity_start) {
      const double u = std::clamp(t / ramp_time, 0.0, 1.0);
      s *= u * u * (3.0 - 2.0 * u);
    }
    return s;
  };

  const int sub = 20;
  const double h = dt / sub;
  std::vector<Pose> poses(n);
  Eigen::Vector3d p = Eigen::Vector3d::Zero();
  const double offset = sideways ? 0.5 * std::numbers::pi : 0.0;
  for (int k = 0; k < n; ++k) {
    if (k > 0) {
      for (int j = 0; j < sub; ++j) {
        const double x = (k - 1) + (j + 0.5) / sub;
        const double t = grid.t0 + x * dt;
        const double s = speed_at(t, x);
        const double kappa = cfg.max_curvature * std::tanh(0.8 * interp(turn_noise, x));
        heading += kappa * s * h;
        p += s * h * Eigen::Vector3d(std::cos(heading), std::sin(heading), 0.0);
      }
    }
    poses[k].p = p;
    poses[k].R = yaw(heading + offset);
  }
  return poses;
}

}  // namespace

Trajectory generate_trajectory(MotionType motion, const SimConfig& config) {
  std::mt19937_64 rng(derive_seed(config.seed, kStreamMotion, 0));
  const KnotGrid grid = KnotGrid::covering(-1.0, config.duration + 1.0, config.gt_knot_spacing);
  std::vector<Pose> poses;
  switch (motion) {
    case MotionType::kFree: poses = free_motion(grid, config, rng); break;
    case MotionType::kForward: poses = car_motion(grid, config, false, rng); break;
    case MotionType::kSideways: poses = car_motion(grid, config, true, rng); break;
  }
  return Trajectory::from_control_poses(TrajectoryKind::kSplit, grid, poses, config.gravity);
}

std::vector<GroundTruthLandmark> generate_landmarks(const Trajectory& gt, const SimConfig& config) {
  const int count = static_cast<int>(std::lround(config.landmarks_per_second * config.duration));
  std::vector<GroundTruthLandmark> out(count);
  const RsCamera& cam = config.camera;
  for (int i = 0; i < count; ++i) {
    std::mt19937_64 rng(derive_seed(config.seed, kStreamLandmarks, i));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double t = config.duration * unit(rng);
    const Eigen::Vector2d y(cam.Nu * unit(rng), cam.Nv * unit(rng));
    const double depth = config.min_depth * std::pow(config.max_depth / config.min_depth, unit(rng));
    const Eigen::Vector3d ray = unproject(cam, y, 0.0).head<3>();
    out[i].id = i;
    out[i].position = camera_to_world(gt.pose(t), Eigen::Vector3d(ray * depth));
  }
  return out;
}

std::vector<ImuSample> sample_imu(const Trajectory& gt, const SimConfig& config) {
  std::mt19937_64 rng(derive_seed(config.seed, kStreamImu, 0));
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<ImuSample> out;
  for (long m = 0;; ++m) {
    const double t = m / config.imu_rate;
    if (t > config.duration) break;
    ImuSample s;
    s.t = t;
    s.gyro = gt.predict_gyro(t) + config.gyro_bias;
    s.accel = gt.predict_accel(t) + config.accel_bias;
    for (int k = 0; k < 3; ++k) s.gyro[k] += config.sigma_imu * noise(rng);
    for (int k = 0; k < 3; ++k) s.accel[k] += config.sigma_imu * noise(rng);
    out.push_back(s);
  }
  return out;
}

std::optional<double> brent_root(const std::function<double(double)>& f, double a, double b, double xtol,
                                 int max_iterations) {
  gsl_set_error_handler_off();
  struct Ctx {
    const std::function<double(double)>* f;
  } ctx{&f};
  gsl_function F;
  F.function = [](double x, void* p) { return (*static_cast<Ctx*>(p)->f)(x); };
  F.params = &ctx;
  const double fa = f(a);
  const double fb = f(b);
  if (fa == 0.0) return a;
  if (fb == 0.0) return b;
  if ((fa > 0.0) == (fb > 0.0)) return std::nullopt;
  gsl_root_fsolver* s = gsl_root_fsolver_alloc(gsl_root_fsolver_brent);
  if (gsl_root_fsolver_set(s, &F, a, b) != GSL_SUCCESS) {
    gsl_root_fsolver_free(s);
    return std::nullopt;
  }
  std::optional<double> root;
  for (int it = 0; it < max_iterations; ++it) {
    if (gsl_root_fsolver_iterate(s) != GSL_SUCCESS) break;
    const double lo = gsl_root_fsolver_x_lower(s);
    const double hi = gsl_root_fsolver_x_upper(s);
    if (gsl_root_test_interval(lo, hi, xtol, 0.0) == GSL_SUCCESS || f(gsl_root_fsolver_root(s)) == 0.0) {
      root = gsl_root_fsolver_root(s);
      break;
    }
  }
  gsl_root_fsolver_free(s);
  return root;
}

std::optional<CleanObservation> observe_point(const RsCamera& cam, const Trajectory& gt, const Eigen::Vector3d& x,
                                              double frame_t0, std::optional<double> prefer_row) {
  auto pixel_at = [&](double t) { return try_project(cam, world_to_camera(gt.pose(t), x)); };
  if (!(cam.readout > 0.0)) {
    const auto y = pixel_at(frame_t0);
    if (!y) return std::nullopt;
    return CleanObservation{0, 0, *y, frame_t0};
  }
  const double rows_per_sec = cam.Nv / cam.readout;
  bool behind = false;
  auto eps = [&](double t) {
    const auto y = pixel_at(t);
    if (!y) {
      behind = true;
      return 0.0;
    }
    return (t - frame_t0) * rows_per_sec - y->y();
  };
  constexpr int kScan = 16;
  std::vector<double> roots;
  double ta = frame_t0;
  double fa = eps(ta);
  if (behind) return std::nullopt;
  for (int i = 1; i <= kScan; ++i) {
    const double tb = frame_t0 + cam.readout * i / kScan;
    const double fb = eps(tb);
    if (behind) return std::nullopt;
    if (fa == 0.0) {
      roots.push_back(ta);
    } else if ((fa > 0.0) != (fb > 0.0) && fb != 0.0) {
      if (const auto r = brent_root(eps, ta, tb)) roots.push_back(*r);
      if (behind) return std::nullopt;
    }
    if (i == kScan && fb == 0.0) roots.push_back(tb);
    ta = tb;
    fa = fb;
  }
  if (roots.empty()) return std::nullopt;
  double best = roots.front();
  if (prefer_row) {
    for (double r : roots) {
      const double row = (r - frame_t0) * rows_per_sec;
      const double best_row = (best - frame_t0) * rows_per_sec;
      if (std::abs(row - *prefer_row) < std::abs(best_row - *prefer_row)) best = r;
    }
  }
  const auto y = pixel_at(best);
  if (!y || std::abs((best - frame_t0) * rows_per_sec - y->y()) > 1e-6) return std::nullopt;
  return CleanObservation{0, 0, *y, best};
}

ObservationSet observe(const Trajectory& gt, const std::vector<GroundTruthLandmark>& landmarks,
                       const SimConfig& config) {
  const RsCamera& cam = config.camera;
  ObservationSet out;
  for (int n = 0;; ++n) {
    const double t0 = n / config.camera_rate;
    if (t0 + cam.readout > config.duration) break;
    out.frames.push_back(Frame{n, t0});
  }
  std::vector<Track> tracks(landmarks.size());
  std::vector<std::optional<std::pair<int, double>>> last_row(landmarks.size());
  for (std::size_t i = 0; i < landmarks.size(); ++i) tracks[i].landmark = landmarks[i].id;

  const double margin_u = 0.3 * cam.Nu;
  const double margin_v = 0.3 * cam.Nv;
  for (const Frame& frame : out.frames) {
    std::mt19937_64 rng(derive_seed(config.seed, kStreamFrames, frame.id));
    std::normal_distribution<double> noise(0.0, config.sigma_image);
    const Pose mid = gt.pose(frame.t0 + 0.5 * cam.readout);
    for (std::size_t i = 0; i < landmarks.size(); ++i) {
      const auto coarse = try_project(cam, world_to_camera(mid, landmarks[i].position));
      if (!coarse || coarse->x() < -margin_u || coarse->x() > cam.Nu + margin_u || coarse->y() < -margin_v ||
          coarse->y() > cam.Nv + margin_v) {
        continue;
      }
      std::optional<double> prefer;
      if (last_row[i] && last_row[i]->first == frame.id - 1) prefer = last_row[i]->second;
      auto obs = observe_point(cam, gt, landmarks[i].position, frame.t0, prefer);
      if (!obs || !cam.in_image(obs->pixel)) continue;
      const Eigen::Vector2d noisy = obs->pixel + Eigen::Vector2d(noise(rng), noise(rng));
      if (!cam.in_image(noisy)) continue;
      obs->landmark = landmarks[i].id;
      obs->frame = frame.id;
      last_row[i] = std::make_pair(frame.id, obs->pixel.y());
      out.clean.push_back(*obs);
      tracks[i].entries.push_back(TrackEntry{frame.id, noisy});
    }
  }
  std::vector<bool> keep(tracks.size());
  for (std::size_t i = 0; i < tracks.size(); ++i) keep[i] = tracks[i].entries.size() >= 2;
  std::erase_if(out.clean, [&](const CleanObservation& c) { return !keep[c.landmark]; });
  for (std::size_t i = 0; i < tracks.size(); ++i) {
    if (keep[i]) out.tracks.push_back(std::move(tracks[i]));
  }
  return out;
}

SimulatedSequence simulate(MotionType motion, const SimConfig& config) {
  config.validate();
  SimulatedSequence seq;
  seq.ground_truth = generate_trajectory(motion, config);
  auto landmarks = generate_landmarks(seq.ground_truth, config);
  ObservationSet obs = observe(seq.ground_truth, landmarks, config);

  Dataset& d = seq.dataset;
  d.meta.camera = config.camera;
  d.meta.imu_rate = config.imu_rate;
  d.meta.sigma_image = config.sigma_image;
  d.meta.sigma_imu = config.sigma_imu;
  d.meta.seed = config.seed;
  d.meta.motion = to_string(motion);
  d.meta.gravity = config.gravity;
  d.meta.gyro_bias = config.gyro_bias;
  d.meta.accel_bias = config.accel_bias;
  d.frames = std::move(obs.frames);
  d.tracks = std::move(obs.tracks);
  d.imu = sample_imu(seq.ground_truth, config);

  GroundTruth gt;
  gt.grid = seq.ground_truth.grid();
  gt.control_poses = seq.ground_truth.control_poses();
  for (double t = 0.0; t <= config.duration + 1e-9; t += 0.01) {
    gt.samples.emplace_back(t, seq.ground_truth.pose(t));
  }
  // Inverse depth relative to each track's first entry.
  std::vector<const CleanObservation*> first(landmarks.size(), nullptr);
  for (const auto& c : obs.clean) {
    if (!first[c.landmark]) first[c.landmark] = &c;
  }
  for (const Track& tr : d.tracks) {
    GroundTruthLandmark lm = landmarks[tr.landmark];
    const CleanObservation* c = first[tr.landmark];
    const Eigen::Vector3d x_cam = world_to_camera(seq.ground_truth.pose(c->time), lm.position);
    lm.inv_depth = 1.0 / x_cam.z();
    gt.landmarks.push_back(lm);
  }
  gt.clean_observations = std::move(obs.clean);
  d.ground_truth = std::move(gt);
  return seq;
}

}  // namespace ctsfm
