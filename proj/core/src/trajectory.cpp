#include "ctsfm/trajectory.hpp"

namespace ctsfm {

const char* to_string(TrajectoryKind kind) {
  return kind == TrajectoryKind::kSplit ? "split" : "se3";
}

TrajectoryKind trajectory_kind_from_string(const std::string& name) {
  if (name == "split") {
    return TrajectoryKind::kSplit;
  }
  if (name == "se3") {
    return TrajectoryKind::kSe3;
  }
  throw Error(Errc::kInvalidArgument, "unknown trajectory kind '" + name + "' (expected split|se3)");
}

Trajectory Trajectory::split(R3Spline position, So3Spline orientation, Eigen::Vector3d gravity) {
  const KnotGrid& a = position.grid();
  const KnotGrid& b = orientation.grid();
  if (a.count != b.count || a.t0 != b.t0 || a.dt != b.dt) {
    throw Error(Errc::kInvalidArgument, "split sub-splines must share one knot grid");
  }
  Trajectory out;
  out.kind_ = TrajectoryKind::kSplit;
  out.position_ = std::move(position);
  out.orientation_ = std::move(orientation);
  out.gravity_ = gravity;
  return out;
}

Trajectory Trajectory::se3(Se3Spline spline, Eigen::Vector3d gravity) {
  Trajectory out;
  out.kind_ = TrajectoryKind::kSe3;
  out.se3_ = std::move(spline);
  out.gravity_ = gravity;
  return out;
}

Trajectory Trajectory::from_control_poses(TrajectoryKind kind, const KnotGrid& grid, const std::vector<Pose>& poses,
                                          Eigen::Vector3d gravity) {
  if (kind == TrajectoryKind::kSe3) {
    return se3(Se3Spline(grid, poses), gravity);
  }
  std::vector<Eigen::Vector3d> p;
  std::vector<UnitQuaternion> q;
  p.reserve(poses.size());
  q.reserve(poses.size());
  for (const Pose& pose : poses) {
    p.push_back(pose.p);
    q.push_back(UnitQuaternion(pose.R));
  }
  return split(R3Spline(grid, std::move(p)), So3Spline(grid, std::move(q)), gravity);
}

Trajectory Trajectory::constant(TrajectoryKind kind, const KnotGrid& grid, const Pose& pose, Eigen::Vector3d gravity) {
  return from_control_poses(kind, grid, std::vector<Pose>(grid.count, pose), gravity);
}

const KnotGrid& Trajectory::grid() const {
  return kind_ == TrajectoryKind::kSplit ? position_.grid() : se3_.grid();
}

Pose Trajectory::pose(double t) const {
  return pose_at(t);
}

Eigen::Vector3d Trajectory::predict_gyro(double t) const {
  const auto basis = cumulative_basis(grid(), t);
  if (kind_ == TrajectoryKind::kSplit) {
    return split_gyro(basis, orientation_.active(basis.segment));
  }
  return se3_gyro(basis, Se3Segment<double>{se3_.active(basis.segment)});
}

Eigen::Vector3d Trajectory::predict_accel(double t) const {
  const auto basis = cumulative_basis(grid(), t);
  if (kind_ == TrajectoryKind::kSplit) {
    const SplitSegment<double> seg{position_.active(basis.segment), orientation_.active(basis.segment)};
    return split_accel(basis, seg, gravity_);
  }
  return se3_accel(basis, Se3Segment<double>{se3_.active(basis.segment)}, gravity_);
}

std::vector<Pose> Trajectory::control_poses() const {
  if (kind_ == TrajectoryKind::kSe3) {
    return se3_.control_points();
  }
  std::vector<Pose> out(position_.control_points().size());
  for (std::size_t k = 0; k < out.size(); ++k) {
    out[k].R = orientation_.control_points()[k].normalized().toRotationMatrix();
    out[k].p = position_.control_points()[k];
  }
  return out;
}

namespace {

[[noreturn]] void wrong_kind(const char* wanted) {
  throw Error(Errc::kInvalidArgument, std::string("trajectory is not of kind ") + wanted);
}

}  // namespace

const R3Spline& Trajectory::position_spline() const {
  if (kind_ != TrajectoryKind::kSplit) wrong_kind("split");
  return position_;
}

R3Spline& Trajectory::position_spline() {
  if (kind_ != TrajectoryKind::kSplit) wrong_kind("split");
  return position_;
}

const So3Spline& Trajectory::orientation_spline() const {
  if (kind_ != TrajectoryKind::kSplit) wrong_kind("split");
  return orientation_;
}

So3Spline& Trajectory::orientation_spline() {
  if (kind_ != TrajectoryKind::kSplit) wrong_kind("split");
  return orientation_;
}

const Se3Spline& Trajectory::se3_spline() const {
  if (kind_ != TrajectoryKind::kSe3) wrong_kind("se3");
  return se3_;
}

Se3Spline& Trajectory::se3_spline() {
  if (kind_ != TrajectoryKind::kSe3) wrong_kind("se3");
  return se3_;
}

}  // namespace ctsfm
