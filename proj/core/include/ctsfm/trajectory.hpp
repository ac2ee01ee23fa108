#pragma once

// Continuous body-to-global pose over either a split R3 + SO(3) spline pair or
// a single SE(3) spline, with body-frame IMU predictions.

#include <array>
#include <string>
#include <vector>

#include "ctsfm/splines.hpp"

namespace ctsfm {

enum class TrajectoryKind { kSplit, kSe3 };

const char* to_string(TrajectoryKind kind);
TrajectoryKind trajectory_kind_from_string(const std::string& name);

/// Global-frame gravity, z up.
inline Eigen::Vector3d default_gravity() { return {0.0, 0.0, -9.8065}; }

// ---------------------------------------------------------------------------
// Segment-level evaluation on explicit control points

template <typename T>
struct SplitSegment {
  std::array<Vec3<T>, 4> p;
  std::array<Quat<T>, 4> q;
};

template <typename T>
struct Se3Segment {
  std::array<PoseT<T>, 4> T_;
};

template <typename T>
PoseT<T> split_pose(const CumulativeBasis<T>& basis, const SplitSegment<T>& seg) {
  PoseT<T> out;
  out.R = so3_segment(basis, seg.q, 0).q.normalized().toRotationMatrix();
  out.p = r3_segment(basis, seg.p, 0);
  return out;
}

/// 2 Im(q^* dq): body angular velocity.
template <typename T>
Vec3<T> split_gyro(const CumulativeBasis<T>& basis, const std::array<Quat<T>, 4>& q) {
  const So3Eval<T> e = so3_segment(basis, q, 1);
  return T(2.0) * (e.q.conjugate() * e.dq).vec();
}

template <typename T>
Vec3<T> split_accel(const CumulativeBasis<T>& basis, const SplitSegment<T>& seg, const Eigen::Vector3d& g) {
  const Mat3<T> R = so3_segment(basis, seg.q, 0).q.normalized().toRotationMatrix();
  const Vec3<T> acc = r3_segment(basis, seg.p, 2);
  return R.transpose() * (acc - g.cast<T>());
}

template <typename T>
PoseT<T> se3_pose(const CumulativeBasis<T>& basis, const Se3Segment<T>& seg) {
  return PoseT<T>::from_matrix(se3_segment(basis, seg.T_, 0).T_);
}

/// vee(R^T dR/dt).
template <typename T>
Vec3<T> se3_gyro(const CumulativeBasis<T>& basis, const Se3Segment<T>& seg) {
  const Se3Eval<T> e = se3_segment(basis, seg.T_, 1);
  const Mat3<T> R = e.T_.template block<3, 3>(0, 0);
  const Mat3<T> dR = e.dT.template block<3, 3>(0, 0);
  return vee(Mat3<T>(R.transpose() * dR));
}

/// R^T (a - g) with a the translation block of the spline's second derivative.
template <typename T>
Vec3<T> se3_accel(const CumulativeBasis<T>& basis, const Se3Segment<T>& seg, const Eigen::Vector3d& g) {
  const Se3Eval<T> e = se3_segment(basis, seg.T_, 2);
  const Mat3<T> R = e.T_.template block<3, 3>(0, 0);
  const Vec3<T> acc = e.ddT.template block<3, 1>(0, 3);
  return R.transpose() * (acc - g.cast<T>());
}

template <typename T>
PoseT<T> cast_pose(const Pose& pose) {
  PoseT<T> out;
  out.R = pose.R.cast<T>();
  out.p = pose.p.cast<T>();
  return out;
}

// ---------------------------------------------------------------------------

class Trajectory {
 public:
  Trajectory() = default;

  static Trajectory split(R3Spline position, So3Spline orientation, Eigen::Vector3d gravity = default_gravity());
  static Trajectory se3(Se3Spline spline, Eigen::Vector3d gravity = default_gravity());
  /// Control points taken directly from per-knot poses.
  static Trajectory from_control_poses(TrajectoryKind kind, const KnotGrid& grid, const std::vector<Pose>& poses,
                                       Eigen::Vector3d gravity = default_gravity());
  /// Every control point set to `pose`.
  static Trajectory constant(TrajectoryKind kind, const KnotGrid& grid, const Pose& pose = Pose(),
                             Eigen::Vector3d gravity = default_gravity());

  TrajectoryKind kind() const { return kind_; }
  const KnotGrid& grid() const;
  bool contains(double t) const { return grid().contains(t); }
  int num_control_points() const { return grid().count; }

  const Eigen::Vector3d& gravity() const { return gravity_; }
  void set_gravity(const Eigen::Vector3d& g) { gravity_ = g; }

  Pose pose(double t) const;
  Eigen::Vector3d predict_gyro(double t) const;
  Eigen::Vector3d predict_accel(double t) const;

  /// Control poses, one per knot (Split: assembled from both sub-splines).
  std::vector<Pose> control_poses() const;

  /// Pose at a (possibly dual-number) time with fixed control points.
  template <typename T>
  PoseT<T> pose_at(const T& t) const {
    const CumulativeBasis<T> basis = cumulative_basis(grid(), t);
    const int s = basis.segment;
    if (kind_ == TrajectoryKind::kSplit) {
      SplitSegment<T> seg;
      for (int j = 0; j < 4; ++j) {
        seg.p[j] = position_.control_points()[s + j].cast<T>();
        seg.q[j] = orientation_.control_points()[s + j].cast<T>();
      }
      return split_pose(basis, seg);
    }
    Se3Segment<T> seg;
    for (int j = 0; j < 4; ++j) {
      seg.T_[j] = cast_pose<T>(se3_.control_points()[s + j]);
    }
    return se3_pose(basis, seg);
  }

  const R3Spline& position_spline() const;
  R3Spline& position_spline();
  const So3Spline& orientation_spline() const;
  So3Spline& orientation_spline();
  const Se3Spline& se3_spline() const;
  Se3Spline& se3_spline();

 private:
  TrajectoryKind kind_ = TrajectoryKind::kSplit;
  R3Spline position_;
  So3Spline orientation_;
  Se3Spline se3_;
  Eigen::Vector3d gravity_ = default_gravity();
};

}  // namespace ctsfm
