#include <algorithm>
#include <cmath>
#include <thread>

#include "estimator_internal.hpp"

namespace ctsfm {
namespace est {

namespace {

using Jet1 = ceres::Jet<double, 1>;
using Jet12 = ceres::Jet<double, 12>;
using Jet24 = ceres::Jet<double, 24>;
using Jet50 = ceres::Jet<double, 50>;
using Jet56 = ceres::Jet<double, 56>;

// Jet50: two segments (8 control points), rho, time.
constexpr int kRhoIndex = 48;
constexpr int kTimeIndex = 49;
// Jet56: up to kMaxSlots control points, rho, time.
constexpr int kUnrolledRho = kCpCols;
constexpr int kUnrolledTime = kCpCols + 1;

struct ProjectionTime {
  double t = 0.0;
  bool fallback = false;
  /// Residual uses the implicit derivative of the Newton root.
  bool implicit = false;
};

ProjectionTime projection_time(const Problem& P, int i) {
  const Observation& o = P.observations[i];
  const Landmark& lm = P.landmarks[o.landmark];
  const RsCamera& cam = P.camera;
  switch (P.projection_method) {
    case ProjectionMethod::kStatic:
      return {o.capture_time(cam), false, false};
    case ProjectionMethod::kLifting:
      return {P.lifted_times[i], false, false};
    case ProjectionMethod::kNewton:
      break;
  }
  if (!(cam.readout > 0.0)) {
    return {o.frame_t0, false, false};
  }
  const auto res = try_project_newton(cam, P.trajectory, lm, o, P.newton);
  if (!res) {
    return {o.capture_time(cam), true, false};
  }
  return {res->time, false, true};
}

/// Pixel residual and, for Lifting, the time residual in rows. False when the
/// landmark is behind either camera.
template <typename S>
bool reprojection(const Problem& P, int i, const ProjectionTime& pt, ControlJets<S>& cj, int rho_index,
                  int time_index, Vec2<S>& r, S& time_rows) {
  const Observation& o = P.observations[i];
  const Landmark& lm = P.landmarks[o.landmark];
  const RsCamera& cam = P.camera;
  const bool lifting = P.projection_method == ProjectionMethod::kLifting;
  const double t_ref = lm.ref_time(cam);

  cj.add_segment(segment_of(P.trajectory, t_ref));
  cj.add_segment(segment_of(P.trajectory, pt.t));
  const S rho = param<S>(lm.inv_depth, rho_index);
  const S t_cur = param<S>(pt.t, (lifting || pt.implicit) ? time_index : -1);
  const PoseT<S> ref = cj.pose(S(t_ref));
  const PoseT<S> cur = cj.pose(t_cur);
  const auto y = try_transfer_poses<S>(cam, ref, cur, lm.ref_obs, rho);
  if (!y) {
    return false;
  }
  Vec2<S> pix = *y;
  if constexpr (!std::is_same_v<S, double>) {
    if (pt.implicit) {
      // First-order correction along the root: t* moves by -eps / eps'.
      const double rows_per_sec = cam.Nv / cam.readout;
      const Eigen::Vector2d rate(pix.x().v[time_index], pix.y().v[time_index]);
      pix.x().v[time_index] = 0.0;
      pix.y().v[time_index] = 0.0;
      const S eps = S((pt.t - o.frame_t0) * rows_per_sec) - pix.y();
      const S delta = -eps / (rows_per_sec - rate.y());
      pix.x() += rate.x() * delta;
      pix.y() += rate.y() * delta;
    }
  }
  r = o.pixel.cast<S>() - pix;
  if (lifting) {
    time_rows = cam.readout > 0.0 ? S((t_cur - o.frame_t0) * (cam.Nv / cam.readout) - y->y()) : S(0.0);
  }
  return true;
}

/// Newton iterations on epsilon carried out in S, so derivatives flow through
/// every step. The time slot is seeded afresh at each iterate to obtain
/// d epsilon / dt. False when an iterate leaves the window or the support,
/// the point is behind a camera, more control points are touched than fit in
/// kMaxSlots, or the iteration does not converge; the caller then falls back to
/// the root solver.
template <typename S>
bool newton_unrolled(const Problem& P, int i, ControlJets<S>& cj, int rho_index, int time_index, Vec2<S>& pix) {
  const Observation& o = P.observations[i];
  const Landmark& lm = P.landmarks[o.landmark];
  const RsCamera& cam = P.camera;
  const double t_ref = lm.ref_time(cam);
  if (!(cam.readout > 0.0) || !P.trajectory.contains(t_ref)) return false;
  cj.add_segment(segment_of(P.trajectory, t_ref));
  const PoseT<S> ref = cj.pose(S(t_ref));
  const S rho = param<S>(lm.inv_depth, rho_index);
  const double rows_per_sec = cam.Nv / cam.readout;
  const double lo = o.frame_t0 - 0.5 * cam.readout;
  const double hi = o.frame_t0 + 1.5 * cam.readout;

  S t(o.capture_time(cam));
  for (int it = 0; it < P.newton.max_iterations; ++it) {
    if (!P.trajectory.contains(t.a)) return false;
    const int seg = segment_of(P.trajectory, t.a);
    if (cj.count + cj.missing(seg) > kMaxSlots) return false;
    cj.add_segment(seg);
    S ts = t;
    ts.v[time_index] = 1.0;
    const auto y = try_transfer_poses<S>(cam, ref, cj.pose(ts), lm.ref_obs, rho);
    if (!y) return false;
    S eps = (ts - o.frame_t0) * rows_per_sec - y->y();
    if (std::abs(eps.a) <= P.newton.tolerance_rows) {
      pix = *y;
      pix.x().v[time_index] = 0.0;
      pix.y().v[time_index] = 0.0;
      return true;
    }
    const double deps = eps.v[time_index];
    if (!std::isfinite(deps) || deps == 0.0) return false;
    eps.v[time_index] = 0.0;
    t = t - eps / deps;
    if (!(t.a >= lo && t.a <= hi)) return false;
  }
  return false;
}

bool unrolled(const Problem& P) {
  return P.projection_method == ProjectionMethod::kNewton && P.newton_derivative == NewtonDerivative::kUnrolled;
}

template <typename S>
Vec3<S> imu_prediction(const Problem& P, BlockType type, double t, ControlJets<S>& cj) {
  const int seg = segment_of(P.trajectory, t);
  cj.add_segment(seg);
  const CumulativeBasis<S> basis = cumulative_basis(P.trajectory.grid(), S(t));
  const Eigen::Vector3d& g = P.trajectory.gravity();
  if (P.trajectory.kind() == TrajectoryKind::kSplit) {
    const SplitSegment<S> s = cj.split_segment(seg);
    return type == BlockType::kGyro ? split_gyro(basis, s.q) : split_accel(basis, s, g);
  }
  const Se3Segment<S> s = cj.se3_segment(seg);
  return type == BlockType::kGyro ? se3_gyro(basis, s) : se3_accel(basis, s, g);
}

template <typename S>
Vec3<S> imu_residual(const Problem& P, BlockType type, int sample, ControlJets<S>& cj) {
  const ImuSample& m = P.imu[sample];
  const Vec3<S> pred = imu_prediction(P, type, m.t, cj);
  const bool gyro = type == BlockType::kGyro;
  const Eigen::Vector3d meas = gyro ? Eigen::Vector3d(m.gyro - P.gyro_bias) : Eigen::Vector3d(m.accel - P.accel_bias);
  const Eigen::Matrix3d U = weight_factor(gyro ? P.W_gyro : P.W_accel);
  return U.cast<S>() * (meas.cast<S>() - pred);
}

BlockType block_type(const Problem& P, int block, int* sample) {
  const int n_obs = static_cast<int>(P.observations.size());
  const int n_imu = static_cast<int>(P.imu.size());
  if (block < 0 || block >= n_obs + 2 * n_imu) {
    throw Error(Errc::kInvalidArgument, "block index out of range");
  }
  if (block < n_obs) {
    *sample = block;
    return BlockType::kReprojection;
  }
  if (block < n_obs + n_imu) {
    *sample = block - n_obs;
    return BlockType::kGyro;
  }
  *sample = block - n_obs - n_imu;
  return BlockType::kAccel;
}

template <int N>
void copy_cp_jacobian(const ControlJets<ceres::Jet<double, N>>& cj, int row, const ceres::Jet<double, N>& x,
                      SeedMode mode, Block& out) {
  for (int s = 0; s < cj.count; ++s) {
    if (mode == SeedMode::kRotationOnly) {
      for (int k = 0; k < 3; ++k) {
        out.Jc(row, 6 * s + k) = 0.0;
        out.Jc(row, 6 * s + 3 + k) = x.v[3 * s + k];
      }
    } else {
      for (int k = 0; k < 6; ++k) out.Jc(row, 6 * s + k) = x.v[6 * s + k];
    }
  }
}

template <int N>
void linearize_imu(const Problem& P, BlockType type, int sample, SeedMode mode, Block& out) {
  using J = ceres::Jet<double, N>;
  ControlJets<J> cj;
  cj.traj = &P.trajectory;
  cj.mode = mode;
  const Vec3<J> r = imu_residual(P, type, sample, cj);
  out.dim = 3;
  out.num_cps = cj.count;
  for (int s = 0; s < cj.count; ++s) out.cps[s] = cj.index[s];
  for (int row = 0; row < 3; ++row) {
    out.r[row] = r[row].a;
    copy_cp_jacobian<N>(cj, row, r[row], mode, out);
  }
}

}  // namespace

double huber_weight(double s, double c) { return s <= c ? 1.0 : c / s; }

Eigen::Matrix3d weight_factor(const Eigen::Matrix3d& W) {
  const Eigen::LLT<Eigen::Matrix3d> llt(W);
  if (llt.info() != Eigen::Success) {
    throw Error(Errc::kInvalidArgument, "IMU weight must be positive definite");
  }
  return llt.matrixU();
}

void linearize(const Problem& P, const Layout& layout, int block, Block& out) {
  int i = 0;
  const BlockType type = block_type(P, block, &i);
  out = Block();
  out.type = type;
  out.Jc.setZero();
  out.Jg.setZero();
  if (type == BlockType::kReprojection && unrolled(P)) {
    ControlJets<Jet56> cj;
    cj.traj = &P.trajectory;
    cj.mode = SeedMode::kFull;
    Vec2<Jet56> pix;
    if (newton_unrolled(P, i, cj, kUnrolledRho, kUnrolledTime, pix)) {
      const Vec2<Jet56> r = P.observations[i].pixel.cast<Jet56>() - pix;
      out.dim = 2;
      out.num_cps = cj.count;
      for (int s = 0; s < cj.count; ++s) out.cps[s] = cj.index[s];
      out.group = P.observations[i].landmark;
      out.num_group_cols = 1;
      out.group_cols = {0, 0};
      for (int row = 0; row < 2; ++row) {
        out.r[row] = r[row].a;
        copy_cp_jacobian<56>(cj, row, r[row], SeedMode::kFull, out);
        out.Jg(row, 0) = r[row].v[kUnrolledRho];
      }
      return;
    }
  }
  if (type == BlockType::kReprojection) {
    const ProjectionTime pt = projection_time(P, i);
    const bool lifting = P.projection_method == ProjectionMethod::kLifting;
    ControlJets<Jet50> cj;
    cj.traj = &P.trajectory;
    cj.mode = SeedMode::kFull;
    Vec2<Jet50> r;
    Jet50 time_rows;
    const bool ok = reprojection(P, i, pt, cj, kRhoIndex, kTimeIndex, r, time_rows);
    out.dim = lifting ? 3 : 2;
    out.num_cps = cj.count;
    for (int s = 0; s < cj.count; ++s) out.cps[s] = cj.index[s];
    out.group = P.observations[i].landmark;
    out.num_group_cols = lifting ? 2 : 1;
    out.group_cols = {0, lifting ? layout.obs_local[i] : 0};
    out.newton_fallback = pt.fallback;
    if (!ok) {
      out.behind_camera = true;
      return;
    }
    for (int row = 0; row < out.dim; ++row) {
      const Jet50& x = row < 2 ? r[row] : time_rows;
      out.r[row] = x.a;
      copy_cp_jacobian<50>(cj, row, x, SeedMode::kFull, out);
      out.Jg(row, 0) = x.v[kRhoIndex];
      if (lifting) out.Jg(row, 1) = x.v[kTimeIndex];
    }
    return;
  }
  if (type == BlockType::kGyro && P.trajectory.kind() == TrajectoryKind::kSplit) {
    linearize_imu<12>(P, type, i, SeedMode::kRotationOnly, out);
  } else {
    linearize_imu<24>(P, type, i, SeedMode::kFull, out);
  }
}

void evaluate(const Problem& P, int block, BlockValue& out) {
  int i = 0;
  const BlockType type = block_type(P, block, &i);
  out = BlockValue();
  out.type = type;
  if (type == BlockType::kReprojection && unrolled(P)) {
    ControlJets<Jet1> cj;
    cj.traj = &P.trajectory;
    Vec2<Jet1> pix;
    if (newton_unrolled(P, i, cj, -1, 0, pix)) {
      out.dim = 2;
      out.r.head<2>() = P.observations[i].pixel - Eigen::Vector2d(pix.x().a, pix.y().a);
      return;
    }
  }
  if (type == BlockType::kReprojection) {
    const ProjectionTime pt = projection_time(P, i);
    const bool lifting = P.projection_method == ProjectionMethod::kLifting;
    out.dim = lifting ? 3 : 2;
    out.newton_fallback = pt.fallback;
    bool ok = false;
    if (pt.implicit) {
      ControlJets<Jet1> cj;
      cj.traj = &P.trajectory;
      Vec2<Jet1> r;
      Jet1 unused;
      ok = reprojection(P, i, pt, cj, -1, 0, r, unused);
      if (ok) out.r.head<2>() = Eigen::Vector2d(r.x().a, r.y().a);
    } else {
      ControlJets<double> cj;
      cj.traj = &P.trajectory;
      Eigen::Vector2d r;
      double time_rows = 0.0;
      ok = reprojection(P, i, pt, cj, -1, -1, r, time_rows);
      if (ok) {
        out.r.head<2>() = r;
        out.r[2] = time_rows;
      }
    }
    out.behind_camera = !ok;
    if (!ok) out.r.setZero();
    return;
  }
  ControlJets<double> cj;
  cj.traj = &P.trajectory;
  out.dim = 3;
  out.r = imu_residual(P, type, i, cj);
}

double block_cost(const BlockValue& v, double huber_c) {
  if (v.type != BlockType::kReprojection) {
    return v.r.squaredNorm();
  }
  double cost = huber(v.r.head<2>().norm(), huber_c);
  if (v.dim == 3) cost += v.r[2] * v.r[2];
  return cost;
}

CostBreakdown accumulate(const std::vector<BlockValue>& values, double huber_c) {
  CostBreakdown out;
  for (const BlockValue& v : values) {
    const double c = block_cost(v, huber_c);
    switch (v.type) {
      case BlockType::kReprojection:
        ++out.reprojection_blocks;
        out.reprojection += huber(v.r.head<2>().norm(), huber_c);
        if (v.dim == 3) {
          ++out.time_blocks;
          out.time += v.r[2] * v.r[2];
        }
        out.behind_camera += v.behind_camera ? 1 : 0;
        out.newton_fallbacks += v.newton_fallback ? 1 : 0;
        break;
      case BlockType::kGyro:
        ++out.gyro_blocks;
        out.gyro += c;
        break;
      case BlockType::kAccel:
        ++out.accel_blocks;
        out.accel += c;
        break;
    }
    out.total += c;
  }
  return out;
}

void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
  threads = std::max(1, std::min(threads, n));
  if (threads == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (int w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (int i = w; i < n; i += threads) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace est

double huber(double s, double c) { return s <= c ? s * s : 2.0 * c * s - c * c; }

// ---------------------------------------------------------------------------

CostBreakdown evaluate_cost(const Problem& problem, double huber_c) {
  std::vector<est::BlockValue> values(num_blocks(problem));
  for (int b = 0; b < static_cast<int>(values.size()); ++b) est::evaluate(problem, b, values[b]);
  return est::accumulate(values, huber_c);
}

double total_cost(const Problem& problem, double huber_c) { return evaluate_cost(problem, huber_c).total; }

int num_blocks(const Problem& problem) {
  return static_cast<int>(problem.observations.size() + 2 * problem.imu.size());
}

int tangent_dimension(const Problem& problem) { return est::make_layout(problem).dim; }

BlockLinearization linearize_block(const Problem& problem, int block) {
  const est::Layout layout = est::make_layout(problem);
  est::Block b;
  est::linearize(problem, layout, block, b);
  BlockLinearization out;
  out.type = b.type;
  out.behind_camera = b.behind_camera;
  out.newton_fallback = b.newton_fallback;
  out.residual = b.r.head(b.dim);
  const int n_cols = 6 * b.num_cps + (b.group >= 0 ? b.num_group_cols : 0);
  out.jacobian.resize(b.dim, n_cols);
  int col = 0;
  for (int s = 0; s < b.num_cps; ++s) {
    for (int k = 0; k < 6; ++k) {
      out.columns.push_back(6 * b.cps[s] + k);
      out.jacobian.col(col++) = b.Jc.block(0, 6 * s + k, b.dim, 1);
    }
  }
  if (b.group >= 0) {
    for (int k = 0; k < b.num_group_cols; ++k) {
      out.columns.push_back(layout.group_offset[b.group] + b.group_cols[k]);
      out.jacobian.col(col++) = b.Jg.block(0, k, b.dim, 1);
    }
  }
  return out;
}

Eigen::VectorXd evaluate_block(const Problem& problem, int block) {
  est::BlockValue v;
  est::evaluate(problem, block, v);
  return v.r.head(v.dim);
}

void apply_update(Problem& problem, const Eigen::VectorXd& delta) {
  const est::Layout layout = est::make_layout(problem);
  if (delta.size() != layout.dim) {
    throw Error(Errc::kInvalidArgument, "update has the wrong dimension");
  }
  Trajectory& traj = problem.trajectory;
  const int K = traj.num_control_points();
  if (traj.kind() == TrajectoryKind::kSplit) {
    auto& p = traj.position_spline().control_points();
    auto& q = traj.orientation_spline().control_points();
    for (int c = 0; c < K; ++c) {
      p[c] += delta.segment<3>(6 * c);
      q[c] = (q[c] * quat_exp<double>(delta.segment<3>(6 * c + 3))).normalized();
    }
    traj.orientation_spline().normalize();
  } else {
    auto& T = traj.se3_spline().control_points();
    for (int c = 0; c < K; ++c) {
      Twist xi;
      xi.v = delta.segment<3>(6 * c);
      xi.omega = delta.segment<3>(6 * c + 3);
      Pose next = T[c] * se3_exp(xi, 1.0);
      next.R = Eigen::Quaterniond(next.R).normalized().toRotationMatrix();
      T[c] = next;
    }
  }
  const bool lifting = problem.projection_method == ProjectionMethod::kLifting;
  for (std::size_t k = 0; k < problem.landmarks.size(); ++k) {
    double& rho = problem.landmarks[k].inv_depth;
    rho = std::max(0.0, rho + delta[layout.group_offset[k]]);
    if (!lifting) continue;
    for (int i = layout.obs_begin[k]; i < layout.obs_begin[k + 1]; ++i) {
      const auto [lo, hi] = lifting_window(problem.camera, problem.observations[i].frame_t0);
      double& t = problem.lifted_times[i];
      t = std::clamp(t + delta[layout.group_offset[k] + layout.obs_local[i]], lo, hi);
    }
  }
}

}  // namespace ctsfm
