#include "ctsfm/rs_camera.hpp"

#include <cmath>
#include <optional>

#include <ceres/jet.h>

namespace ctsfm {

const char* to_string(ProjectionMethod method) {
  switch (method) {
    case ProjectionMethod::kStatic: return "static";
    case ProjectionMethod::kNewton: return "newton";
    case ProjectionMethod::kLifting: return "lifting";
  }
  return "unknown";
}

ProjectionMethod projection_method_from_string(const std::string& name) {
  if (name == "static") return ProjectionMethod::kStatic;
  if (name == "newton") return ProjectionMethod::kNewton;
  if (name == "lifting") return ProjectionMethod::kLifting;
  throw Error(Errc::kInvalidArgument, "unknown projection method '" + name + "' (expected static|newton|lifting)");
}

void RsCamera::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0) || Nu <= 0 || Nv <= 0) {
    throw Error(Errc::kInvalidArgument, "camera intrinsics must be positive");
  }
  if (!(readout >= 0.0) || !(frame_period > 0.0) || readout > frame_period) {
    throw Error(Errc::kInvalidArgument, "camera readout must satisfy 0 <= r <= frame period");
  }
}

Eigen::Vector2d project(const RsCamera& cam, const Eigen::Vector3d& x_cam) {
  const auto y = try_project(cam, x_cam);
  if (!y) {
    throw Error(Errc::kBehindCamera, "behind camera");
  }
  return *y;
}

namespace {

using Jet1 = ceres::Jet<double, 1>;

std::optional<Eigen::Vector2d> try_transfer(const RsCamera& cam, const Trajectory& traj, const Landmark& lm,
                                            double t) {
  const double t_ref = lm.ref_time(cam);
  if (!traj.contains(t) || !traj.contains(t_ref)) {
    return std::nullopt;
  }
  return try_transfer_poses<double>(cam, traj.pose(t_ref), traj.pose(t), lm.ref_obs, lm.inv_depth);
}

struct PsiSample {
  Eigen::Vector2d y;
  double dv_dt;
};

std::optional<PsiSample> try_transfer_with_rate(const RsCamera& cam, const Trajectory& traj, const Pose& ref,
                                                const Landmark& lm, double t) {
  if (!traj.contains(t)) {
    return std::nullopt;
  }
  const PoseT<Jet1> cur = traj.pose_at(Jet1(t, 0));
  const auto y = try_transfer_poses<Jet1>(cam, cast_pose<Jet1>(ref), cur, lm.ref_obs, Jet1(lm.inv_depth));
  if (!y) {
    return std::nullopt;
  }
  return PsiSample{Eigen::Vector2d(y->x().a, y->y().a), y->y().v[0]};
}

}  // namespace

Eigen::Vector2d transfer(const RsCamera& cam, const Trajectory& traj, const Landmark& lm, double t) {
  const double t_ref = lm.ref_time(cam);
  const auto y = try_transfer_poses<double>(cam, traj.pose(t_ref), traj.pose(t), lm.ref_obs, lm.inv_depth);
  if (!y) {
    throw Error(Errc::kBehindCamera, "behind camera");
  }
  return *y;
}

double epsilon(const RsCamera& cam, const Trajectory& traj, const Landmark& lm, double frame_t0, double t) {
  if (!(cam.readout > 0.0)) {
    throw Error(Errc::kGlobalShutter, "time deviation is undefined for global shutter");
  }
  return (t - frame_t0) * cam.Nv / cam.readout - transfer(cam, traj, lm, t).y();
}

Eigen::Vector2d project_static(const RsCamera& cam, const Trajectory& traj, const Landmark& lm,
                               const Observation& obs) {
  return transfer(cam, traj, lm, obs.capture_time(cam));
}

std::optional<NewtonResult> try_project_newton(const RsCamera& cam, const Trajectory& traj, const Landmark& lm,
                                               const Observation& obs, const NewtonOptions& opts) {
  const double t_ref = lm.ref_time(cam);
  if (!traj.contains(t_ref)) {
    return std::nullopt;
  }
  const Pose ref = traj.pose(t_ref);
  NewtonResult res;
  if (!(cam.readout > 0.0)) {
    const auto y = try_transfer_poses<double>(cam, ref, traj.pose(obs.frame_t0), lm.ref_obs, lm.inv_depth);
    if (!y) {
      return std::nullopt;
    }
    res.pixel = *y;
    res.time = obs.frame_t0;
    return res;
  }
  const double rows_per_sec = cam.Nv / cam.readout;
  const double lo = obs.frame_t0 - 0.5 * cam.readout;
  const double hi = obs.frame_t0 + 1.5 * cam.readout;

  double t = obs.capture_time(cam);
  for (int it = 1; it <= opts.max_iterations; ++it) {
    const auto s = try_transfer_with_rate(cam, traj, ref, lm, t);
    if (!s) {
      break;
    }
    const double eps = (t - obs.frame_t0) * rows_per_sec - s->y.y();
    res.iterations = it;
    if (std::abs(eps) <= opts.tolerance_rows) {
      res.pixel = s->y;
      res.time = t;
      res.epsilon_rows = eps;
      return res;
    }
    const double deps = rows_per_sec - s->dv_dt;
    if (!std::isfinite(deps) || deps == 0.0) {
      break;
    }
    t -= eps / deps;
    if (!(t >= lo && t <= hi)) {
      break;
    }
  }

  // Bisection over the readout window.
  auto eps_at = [&](double tt) -> std::optional<double> {
    if (!traj.contains(tt)) {
      return std::nullopt;
    }
    const auto y = try_transfer_poses<double>(cam, ref, traj.pose(tt), lm.ref_obs, lm.inv_depth);
    if (!y) {
      return std::nullopt;
    }
    return (tt - obs.frame_t0) * rows_per_sec - y->y();
  };
  double a = obs.frame_t0;
  double b = obs.frame_t0 + cam.readout;
  if (!traj.contains(a) || !traj.contains(b)) {
    return std::nullopt;
  }
  auto fa = eps_at(a);
  auto fb = eps_at(b);
  if (!fa || !fb || (*fa > 0.0) == (*fb > 0.0)) {
    return std::nullopt;
  }
  res.used_bisection = true;
  for (int k = 0; k < 200; ++k) {
    const double m = 0.5 * (a + b);
    const auto fm = eps_at(m);
    if (!fm) {
      return std::nullopt;
    }
    ++res.iterations;
    if (std::abs(*fm) <= opts.tolerance_rows || b - a < 1e-15) {
      res.time = m;
      res.epsilon_rows = *fm;
      res.pixel = *try_transfer_poses<double>(cam, ref, traj.pose(m), lm.ref_obs, lm.inv_depth);
      return res;
    }
    if ((*fm > 0.0) == (*fa > 0.0)) {
      a = m;
      fa = fm;
    } else {
      b = m;
    }
  }
  return std::nullopt;
}

NewtonResult project_newton(const RsCamera& cam, const Trajectory& traj, const Landmark& lm, const Observation& obs,
                            const NewtonOptions& opts) {
  const auto res = try_project_newton(cam, traj, lm, obs, opts);
  if (!res) {
    // Distinguish a point behind the camera from a missing root.
    const double t = obs.capture_time(cam);
    if (traj.contains(t) && !try_transfer(cam, traj, lm, t)) {
      throw Error(Errc::kBehindCamera, "behind camera");
    }
    throw Error(Errc::kProjectionTimeNotFound, "projection time not found");
  }
  return *res;
}

LiftingResiduals lifting_residuals(const RsCamera& cam, const Trajectory& traj, const Landmark& lm,
                                   const Observation& obs, double t_lift) {
  LiftingResiduals out;
  const Eigen::Vector2d y = transfer(cam, traj, lm, t_lift);
  out.reprojection = obs.pixel - y;
  out.time_rows = cam.readout > 0.0 ? (t_lift - obs.frame_t0) * cam.Nv / cam.readout - y.y() : 0.0;
  return out;
}

}  // namespace ctsfm
