#pragma once

// Uniform cubic B-splines in cumulative form on R^3, SO(3) (unit quaternions)
// and SE(3).
//
// A grid with K knots t_k = t0 + k dt supports K control points. Segment i
// uses control points i..i+3 and covers [t0 + (i+1) dt, t0 + (i+2) dt), so
// the valid interval is [t0 + dt, t0 + (K-2) dt).
//
// The segment evaluators take the four active control points explicitly so
// that callers can substitute dual-number control points for differentiation.

#include <array>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "ctsfm/errors.hpp"
#include "ctsfm/lie.hpp"

namespace ctsfm {

struct KnotGrid {
  double t0 = 0.0;
  double dt = 0.1;
  int count = 4;

  double t_min() const { return t0 + dt; }
  double t_max() const { return t0 + (count - 2) * dt; }
  bool contains(double t) const { return t >= t_min() && t < t_max(); }

  /// Smallest grid with two knots before `a` and two after `b`, so that
  /// every time in [a, b] is evaluable.
  static KnotGrid covering(double a, double b, double dt);
};

/// Standard uniform cubic B-spline matrix: b_j(u) = sum_k M[j][k] u^k / 6.
inline constexpr std::array<std::array<double, 4>, 4> kBasisMatrix6{{
    {1.0, -3.0, 3.0, -1.0},
    {4.0, 0.0, -6.0, 3.0},
    {1.0, 3.0, 3.0, -3.0},
    {0.0, 0.0, 0.0, 1.0},
}};

/// Rows of the cumulative matrix are suffix sums of the basis matrix rows.
constexpr std::array<std::array<double, 4>, 4> cumulative_matrix() {
  std::array<std::array<double, 4>, 4> c{};
  for (int j = 3; j >= 0; --j) {
    for (int k = 0; k < 4; ++k) {
      c[j][k] = kBasisMatrix6[j][k] + (j < 3 ? c[j + 1][k] : 0.0);
    }
  }
  for (auto& row : c) {
    for (auto& x : row) x /= 6.0;
  }
  return c;
}

inline constexpr auto kCumulativeMatrix = cumulative_matrix();

template <typename T>
struct CumulativeBasis {
  int segment = 0;
  T u{};
  std::array<T, 4> b{};    // btilde
  std::array<T, 4> db{};   // d btilde / dt
  std::array<T, 4> ddb{};  // d^2 btilde / dt^2
};

[[noreturn]] void throw_out_of_support(const KnotGrid& grid, double t);

/// Segment index and normalized position for t. Tolerates t a few ulps
/// below t_min (clamped onto the first segment).
inline std::pair<int, double> locate_segment(const KnotGrid& grid, double t) {
  if (!(t >= grid.t_min() - 1e-12 * (1.0 + std::abs(t))) || !(t < grid.t_max())) {
    throw_out_of_support(grid, t);
  }
  const double s = (t - grid.t0) / grid.dt - 1.0;
  int i = static_cast<int>(std::floor(s));
  i = std::clamp(i, 0, grid.count - 4);
  return {i, s - i};
}

template <typename T>
CumulativeBasis<T> cumulative_basis(const KnotGrid& grid, const T& t) {
  const auto [seg, u_val] = locate_segment(grid, value_of(t));
  (void)u_val;
  CumulativeBasis<T> out;
  out.segment = seg;
  const T u = (t - grid.t0) / grid.dt - double(seg + 1);
  out.u = u;
  const T u2 = u * u;
  const T u3 = u2 * u;
  const double inv_dt = 1.0 / grid.dt;
  const double inv_dt2 = inv_dt * inv_dt;
  const auto& C = kCumulativeMatrix;
  for (int j = 0; j < 4; ++j) {
    out.b[j] = C[j][0] + C[j][1] * u + C[j][2] * u2 + C[j][3] * u3;
    out.db[j] = (C[j][1] + 2.0 * C[j][2] * u + 3.0 * C[j][3] * u2) * inv_dt;
    out.ddb[j] = (2.0 * C[j][2] + 6.0 * C[j][3] * u) * inv_dt2;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Segment evaluators

template <typename T>
Vec3<T> r3_segment(const CumulativeBasis<T>& basis, const std::array<Vec3<T>, 4>& cp, int order) {
  const std::array<T, 4>& w = order == 0 ? basis.b : (order == 1 ? basis.db : basis.ddb);
  Vec3<T> out = order == 0 ? cp[0] : Vec3<T>::Zero().eval();
  for (int j = 1; j < 4; ++j) {
    out += (cp[j] - cp[j - 1]) * w[j];
  }
  return out;
}

template <typename T>
struct So3Eval {
  Quat<T> q;
  Quat<T> dq;   // not unit; zero unless requested
  Quat<T> ddq;  // not unit; zero unless requested
};

namespace detail {

template <typename T>
Quat<T> qsum(const Quat<T>& a, const Quat<T>& b) {
  return Quat<T>(a.coeffs() + b.coeffs());
}

template <typename T>
Quat<T> qmul(const Quat<T>& a, const T& s) {
  return Quat<T>(a.coeffs() * s);
}

template <typename T>
Quat<T> qzero() {
  return Quat<T>(T(0.0), T(0.0), T(0.0), T(0.0));
}

}  // namespace detail

/// q(t) = q_i prod_j exp(log(q_{j-1}^* q_j) btilde_j), with time derivatives
/// up to `max_order` by the product rule over the three blending factors.
template <typename T>
So3Eval<T> so3_segment(const CumulativeBasis<T>& basis, const std::array<Quat<T>, 4>& cp, int max_order) {
  using detail::qmul;
  using detail::qsum;
  std::array<Vec3<T>, 3> omega;
  std::array<Quat<T>, 3> E;
  for (int j = 1; j < 4; ++j) {
    omega[j - 1] = quat_log(Quat<T>(cp[j - 1].conjugate() * cp[j]));
    E[j - 1] = quat_exp(Vec3<T>(omega[j - 1] * basis.b[j]));
  }
  So3Eval<T> out;
  out.q = cp[0] * E[0] * E[1] * E[2];
  out.dq = detail::qzero<T>();
  out.ddq = detail::qzero<T>();
  if (max_order < 1) {
    return out;
  }
  std::array<Quat<T>, 3> dE;
  std::array<Quat<T>, 3> ddE;
  for (int j = 0; j < 3; ++j) {
    const Quat<T> half = pure_quat(Vec3<T>(omega[j] * 0.5));
    dE[j] = qmul(Quat<T>(E[j] * half), basis.db[j + 1]);
    if (max_order >= 2) {
      const Quat<T> half_sq = half * half;
      ddE[j] = qsum(qmul(Quat<T>(E[j] * half), basis.ddb[j + 1]),
                    qmul(Quat<T>(E[j] * half_sq), T(basis.db[j + 1] * basis.db[j + 1])));
    }
  }
  const Quat<T> d_sum = qsum(qsum(Quat<T>(dE[0] * E[1] * E[2]), Quat<T>(E[0] * dE[1] * E[2])),
                             Quat<T>(E[0] * E[1] * dE[2]));
  out.dq = cp[0] * d_sum;
  if (max_order >= 2) {
    Quat<T> dd_sum = qsum(qsum(Quat<T>(ddE[0] * E[1] * E[2]), Quat<T>(E[0] * ddE[1] * E[2])),
                          Quat<T>(E[0] * E[1] * ddE[2]));
    const Quat<T> cross = qsum(qsum(Quat<T>(dE[0] * dE[1] * E[2]), Quat<T>(dE[0] * E[1] * dE[2])),
                               Quat<T>(E[0] * dE[1] * dE[2]));
    dd_sum = qsum(dd_sum, qmul(cross, T(2.0)));
    out.ddq = cp[0] * dd_sum;
  }
  return out;
}

template <typename T>
struct Se3Eval {
  Mat4<T> T_;
  Mat4<T> dT;
  /// Twist-rate second derivative T d/dt(T^-1 dT/dt). Its translation block is
  /// p'' - w_global x p', which equals p'' only while the orientation is constant.
  Mat4<T> ddT;
  /// Full product-rule second derivative d^2T/dt^2.
  Mat4<T> ddT_full;
};

template <typename T>
void check_log_branch(const PoseT<T>& rel) {
  if (rotation_angle(rel.R) >= 3.14159265358979323846 - kLogBranchMargin) {
    throw Error(Errc::kLogBranchBoundary, "log branch boundary between adjacent SE(3) control points");
  }
}

/// T(t) = T_i prod_j exp(log(T_{j-1}^-1 T_j) btilde_j) and its derivatives.
template <typename T>
Se3Eval<T> se3_segment(const CumulativeBasis<T>& basis, const std::array<PoseT<T>, 4>& cp, int max_order) {
  std::array<TwistT<T>, 3> xi;
  std::array<Mat4<T>, 3> A;
  for (int j = 1; j < 4; ++j) {
    const PoseT<T> rel = cp[j - 1].inverse() * cp[j];
    check_log_branch(rel);
    xi[j - 1] = se3_log_unchecked(rel);
    A[j - 1] = se3_exp(xi[j - 1], basis.b[j]).matrix();
  }
  Se3Eval<T> out;
  const Mat4<T> T0 = cp[0].matrix();
  out.T_ = T0 * A[0] * A[1] * A[2];
  out.dT.setZero();
  out.ddT.setZero();
  out.ddT_full.setZero();
  if (max_order < 1) {
    return out;
  }
  std::array<Mat4<T>, 3> dA;
  std::array<Mat4<T>, 3> ddA;
  for (int j = 0; j < 3; ++j) {
    const Mat4<T> Omega = twist_hat(xi[j]);
    const Mat4<T> AO = A[j] * Omega;
    dA[j] = AO * basis.db[j + 1];
    if (max_order >= 2) {
      ddA[j] = AO * basis.ddb[j + 1] + (AO * Omega) * (basis.db[j + 1] * basis.db[j + 1]);
    }
  }
  out.dT = T0 * (dA[0] * A[1] * A[2] + A[0] * dA[1] * A[2] + A[0] * A[1] * dA[2]);
  if (max_order >= 2) {
    const Mat4<T> cross = dA[0] * dA[1] * A[2] + dA[0] * A[1] * dA[2] + A[0] * dA[1] * dA[2];
    out.ddT_full =
        T0 * (ddA[0] * A[1] * A[2] + A[0] * ddA[1] * A[2] + A[0] * A[1] * ddA[2] + cross * T(2.0));
    const Mat4<T> T_inv = PoseT<T>::from_matrix(out.T_).inverse().matrix();
    out.ddT = out.ddT_full - out.dT * T_inv * out.dT;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Splines owning their control points

class R3Spline {
 public:
  R3Spline() = default;
  R3Spline(KnotGrid grid, std::vector<Eigen::Vector3d> control_points);

  const KnotGrid& grid() const { return grid_; }
  const std::vector<Eigen::Vector3d>& control_points() const { return cps_; }
  std::vector<Eigen::Vector3d>& control_points() { return cps_; }

  /// Position (order 0), velocity (1) or acceleration (2).
  Eigen::Vector3d evaluate(double t, int order = 0) const;

  /// Direct non-cumulative form sum_k p_k B_k(t).
  Eigen::Vector3d evaluate_direct(double t) const;

  std::array<Eigen::Vector3d, 4> active(int segment) const;

 private:
  KnotGrid grid_;
  std::vector<Eigen::Vector3d> cps_;
};

class So3Spline {
 public:
  So3Spline() = default;
  /// Control quaternions are normalized and sign-aligned on construction.
  So3Spline(KnotGrid grid, std::vector<UnitQuaternion> control_points);

  const KnotGrid& grid() const { return grid_; }
  const std::vector<UnitQuaternion>& control_points() const { return cps_; }
  std::vector<UnitQuaternion>& control_points() { return cps_; }

  So3Eval<double> evaluate(double t, int max_order = 2) const;
  UnitQuaternion orientation(double t) const;
  /// Body-frame angular velocity 2 Im(q^* dq).
  Eigen::Vector3d angular_velocity(double t) const;

  /// Re-establishes unit norm and dot(q_{k-1}, q_k) >= 0.
  void normalize();

  std::array<Quat<double>, 4> active(int segment) const;

 private:
  KnotGrid grid_;
  std::vector<UnitQuaternion> cps_;
};

class Se3Spline {
 public:
  Se3Spline() = default;
  Se3Spline(KnotGrid grid, std::vector<Pose> control_points);

  const KnotGrid& grid() const { return grid_; }
  const std::vector<Pose>& control_points() const { return cps_; }
  std::vector<Pose>& control_points() { return cps_; }

  Se3Eval<double> evaluate(double t, int max_order = 2) const;
  Pose pose(double t) const;

  std::array<Pose, 4> active(int segment) const;

 private:
  KnotGrid grid_;
  std::vector<Pose> cps_;
};

}  // namespace ctsfm
