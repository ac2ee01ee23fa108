#pragma once

// Pinhole rolling-shutter camera, landmarks parameterized by a reference
// observation and inverse depth, and the three ways of choosing the time at
// which a landmark is reprojected into a frame.

#include <optional>
#include <utility>
#include <string>

#include "ctsfm/trajectory.hpp"

namespace ctsfm {

struct RsCamera {
  double fx = 1000.0;
  double fy = 1000.0;
  double cx = 960.0;
  double cy = 540.0;
  int Nu = 1920;
  int Nv = 1080;
  double readout = 0.03;
  double frame_period = 1.0 / 29.97;

  double row_time(double frame_t0, double v) const { return frame_t0 + readout * v / Nv; }
  bool in_image(const Eigen::Vector2d& y) const {
    return y.x() >= 0.0 && y.x() <= Nu && y.y() >= 0.0 && y.y() <= Nv;
  }
  void validate() const;
};

struct Landmark {
  int id = 0;
  int ref_frame = 0;
  double ref_frame_t0 = 0.0;
  Eigen::Vector2d ref_obs = Eigen::Vector2d::Zero();
  double inv_depth = 0.0;

  double ref_time(const RsCamera& cam) const { return cam.row_time(ref_frame_t0, ref_obs.y()); }
};

struct Observation {
  int landmark = 0;
  int frame = 0;
  double frame_t0 = 0.0;
  Eigen::Vector2d pixel = Eigen::Vector2d::Zero();

  double capture_time(const RsCamera& cam) const { return cam.row_time(frame_t0, pixel.y()); }
};

enum class ProjectionMethod { kStatic, kNewton, kLifting };

const char* to_string(ProjectionMethod method);
ProjectionMethod projection_method_from_string(const std::string& name);

inline constexpr double kMinDepth = 1e-9;

/// Camera-to-body rotation. The body (IMU) frame is x forward, y left, z up;
/// the camera looks along body x with x right and y down in the image.
inline Eigen::Matrix3d camera_to_body() {
  Eigen::Matrix3d R;
  // clang-format off
  R <<  0.0,  0.0, 1.0,
       -1.0,  0.0, 0.0,
        0.0, -1.0, 0.0;
  // clang-format on
  return R;
}

/// Camera coordinates of world point x seen from body pose `body`.
template <typename T>
Vec3<T> world_to_camera(const PoseT<T>& body, const Vec3<T>& x) {
  return camera_to_body().transpose().cast<T>() * (body.R.transpose() * (x - body.p));
}

template <typename T>
Vec3<T> camera_to_world(const PoseT<T>& body, const Vec3<T>& x_cam) {
  return body.R * (camera_to_body().cast<T>() * x_cam) + body.p;
}

template <typename T>
std::optional<Vec2<T>> try_project(const RsCamera& cam, const Vec3<T>& x) {
  if (!(value_of(x.z()) > kMinDepth)) {
    return std::nullopt;
  }
  return Vec2<T>(cam.fx * x.x() / x.z() + cam.cx, cam.fy * x.y() / x.z() + cam.cy);
}

/// Unit-depth ray of pixel y stacked with rho.
template <typename T>
Vec4<T> unproject(const RsCamera& cam, const Eigen::Vector2d& y, const T& rho) {
  return Vec4<T>(T((y.x() - cam.cx) / cam.fx), T((y.y() - cam.cy) / cam.fy), T(1.0), rho);
}

/// pi(T_cur^-1 T_ref [pi^-1(y_ref); rho]) for explicit body poses, with the
/// camera mount applied on both sides.
template <typename T>
std::optional<Vec2<T>> try_transfer_poses(const RsCamera& cam, const PoseT<T>& ref, const PoseT<T>& cur,
                                          const Eigen::Vector2d& y_ref, const T& rho) {
  const Vec4<T> h = unproject(cam, y_ref, rho);
  const Mat3<T> mount = camera_to_body().cast<T>();
  // Homogeneous transform: R x + p rho.
  const Vec3<T> ray = mount * h.template head<3>();
  const Vec3<T> x_global = ref.R * ray + ref.p * rho;
  const Vec3<T> x_cur = mount.transpose() * (cur.R.transpose() * (x_global - cur.p * rho));
  return try_project(cam, x_cur);
}

Eigen::Vector2d project(const RsCamera& cam, const Eigen::Vector3d& x_cam);

/// psi(t) for landmark `lm` with the trajectory's pose at t.
Eigen::Vector2d transfer(const RsCamera& cam, const Trajectory& traj, const Landmark& lm, double t);

/// (t - t0_n) Nv / r - psi_v(t), in rows.
double epsilon(const RsCamera& cam, const Trajectory& traj, const Landmark& lm, double frame_t0, double t);

Eigen::Vector2d project_static(const RsCamera& cam, const Trajectory& traj, const Landmark& lm,
                               const Observation& obs);

struct NewtonOptions {
  double tolerance_rows = 1e-2;
  int max_iterations = 10;
};

struct NewtonResult {
  Eigen::Vector2d pixel = Eigen::Vector2d::Zero();
  double time = 0.0;
  double epsilon_rows = 0.0;
  int iterations = 0;
  bool used_bisection = false;
};

/// Non-throwing Newton solve of epsilon(t) = 0 started at the observed row time.
/// Falls back to bisection over the readout window when Newton fails.
std::optional<NewtonResult> try_project_newton(const RsCamera& cam, const Trajectory& traj, const Landmark& lm,
                                               const Observation& obs, const NewtonOptions& opts = {});

NewtonResult project_newton(const RsCamera& cam, const Trajectory& traj, const Landmark& lm, const Observation& obs,
                            const NewtonOptions& opts = {});

struct LiftingResiduals {
  Eigen::Vector2d reprojection = Eigen::Vector2d::Zero();
  double time_rows = 0.0;
};

/// (y_obs - psi(t_lift), epsilon(t_lift)).
LiftingResiduals lifting_residuals(const RsCamera& cam, const Trajectory& traj, const Landmark& lm,
                                   const Observation& obs, double t_lift);

/// Window in which a lifted time may move: the readout window widened by 20% each side.
inline std::pair<double, double> lifting_window(const RsCamera& cam, double frame_t0) {
  return {frame_t0 - 0.2 * cam.readout, frame_t0 + 1.2 * cam.readout};
}

}  // namespace ctsfm
