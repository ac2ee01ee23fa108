#include "ctsfm/splines.hpp"

#include <sstream>

namespace ctsfm {

KnotGrid KnotGrid::covering(double a, double b, double dt) {
  if (!(dt > 0.0) || !(b >= a)) {
    throw Error(Errc::kInvalidArgument, "knot grid needs dt > 0 and b >= a");
  }
  KnotGrid g;
  g.dt = dt;
  g.t0 = a - 2.0 * dt;
  g.count = static_cast<int>(std::ceil((b - g.t0) / dt)) + 3;
  g.count = std::max(g.count, 4);
  return g;
}

void throw_out_of_support(const KnotGrid& grid, double t) {
  std::ostringstream os;
  os.precision(17);
  os << "out of spline support: t = " << t << " not in [" << grid.t_min() << ", " << grid.t_max() << ")";
  throw Error(Errc::kOutOfSupport, os.str());
}

namespace {

void check_count(const KnotGrid& grid, std::size_t n) {
  if (grid.count < 4 || static_cast<std::size_t>(grid.count) != n || !(grid.dt > 0.0)) {
    throw Error(Errc::kInvalidArgument, "control point count must equal knot count (>= 4)");
  }
}

}  // namespace

// ---------------------------------------------------------------------------

R3Spline::R3Spline(KnotGrid grid, std::vector<Eigen::Vector3d> control_points)
    : grid_(grid), cps_(std::move(control_points)) {
  check_count(grid_, cps_.size());
}

std::array<Eigen::Vector3d, 4> R3Spline::active(int segment) const {
  return {cps_[segment], cps_[segment + 1], cps_[segment + 2], cps_[segment + 3]};
}

Eigen::Vector3d R3Spline::evaluate(double t, int order) const {
  if (order < 0 || order > 2) {
    throw Error(Errc::kInvalidArgument, "derivative order must be 0, 1 or 2");
  }
  const auto basis = cumulative_basis(grid_, t);
  return r3_segment(basis, active(basis.segment), order);
}

Eigen::Vector3d R3Spline::evaluate_direct(double t) const {
  const auto [seg, u] = locate_segment(grid_, t);
  const double pw[4] = {1.0, u, u * u, u * u * u};
  Eigen::Vector3d out = Eigen::Vector3d::Zero();
  for (int j = 0; j < 4; ++j) {
    double w = 0.0;
    for (int k = 0; k < 4; ++k) {
      w += kBasisMatrix6[j][k] * pw[k];
    }
    out += cps_[seg + j] * (w / 6.0);
  }
  return out;
}

// ---------------------------------------------------------------------------

So3Spline::So3Spline(KnotGrid grid, std::vector<UnitQuaternion> control_points)
    : grid_(grid), cps_(std::move(control_points)) {
  check_count(grid_, cps_.size());
  normalize();
}

void So3Spline::normalize() {
  for (std::size_t k = 0; k < cps_.size(); ++k) {
    cps_[k].normalize();
    if (k > 0 && cps_[k - 1].dot(cps_[k]) < 0.0) {
      cps_[k].coeffs() = -cps_[k].coeffs();
    }
  }
}

std::array<Quat<double>, 4> So3Spline::active(int segment) const {
  return {cps_[segment], cps_[segment + 1], cps_[segment + 2], cps_[segment + 3]};
}

So3Eval<double> So3Spline::evaluate(double t, int max_order) const {
  const auto basis = cumulative_basis(grid_, t);
  return so3_segment(basis, active(basis.segment), max_order);
}

UnitQuaternion So3Spline::orientation(double t) const {
  return evaluate(t, 0).q.normalized();
}

Eigen::Vector3d So3Spline::angular_velocity(double t) const {
  const auto e = evaluate(t, 1);
  return 2.0 * (e.q.conjugate() * e.dq).vec();
}

// ---------------------------------------------------------------------------

Se3Spline::Se3Spline(KnotGrid grid, std::vector<Pose> control_points)
    : grid_(grid), cps_(std::move(control_points)) {
  check_count(grid_, cps_.size());
}

std::array<Pose, 4> Se3Spline::active(int segment) const {
  return {cps_[segment], cps_[segment + 1], cps_[segment + 2], cps_[segment + 3]};
}

Se3Eval<double> Se3Spline::evaluate(double t, int max_order) const {
  const auto basis = cumulative_basis(grid_, t);
  return se3_segment(basis, active(basis.segment), max_order);
}

Pose Se3Spline::pose(double t) const {
  return Pose::from_matrix(evaluate(t, 0).T_);
}

}  // namespace ctsfm
