#pragma once

// Quaternion, SO(3) and SE(3) primitives shared by all spline types.
//
// Everything here is templated on the scalar so the estimator can push
// forward-mode dual numbers through the same code the evaluators use.
// Small-angle branches test squared angles only: a dual number sitting at
// exactly zero rotation must never go through sqrt().

#include <algorithm>
#include <cmath>
#include <type_traits>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace ctsfm {

template <typename T>
using Vec2 = Eigen::Matrix<T, 2, 1>;
template <typename T>
using Vec3 = Eigen::Matrix<T, 3, 1>;
template <typename T>
using Vec4 = Eigen::Matrix<T, 4, 1>;
template <typename T>
using Mat3 = Eigen::Matrix<T, 3, 3>;
template <typename T>
using Mat4 = Eigen::Matrix<T, 4, 4>;
template <typename T>
using Quat = Eigen::Quaternion<T>;

using UnitQuaternion = Eigen::Quaterniond;

/// Scalar part of a plain double or of a dual number (anything with a `.a` member).
template <typename T>
inline double value_of(const T& x) {
  if constexpr (std::is_arithmetic_v<T>) {
    return static_cast<double>(x);
  } else {
    return x.a;
  }
}

/// Below this angle (rad) trig ratios switch to their Taylor series.
inline constexpr double kSmallAngle = 1e-4;
/// se3_log refuses rotations this close to pi.
inline constexpr double kLogBranchMargin = 1e-6;

template <typename T>
Mat3<T> skew(const Vec3<T>& v) {
  Mat3<T> m;
  // clang-format off
  m << T(0),  -v.z(),  v.y(),
       v.z(),  T(0),  -v.x(),
      -v.y(),  v.x(),  T(0);
  // clang-format on
  return m;
}

template <typename T>
Vec3<T> vee(const Mat3<T>& m) {
  return Vec3<T>(m(2, 1), m(0, 2), m(1, 0));
}

namespace detail {

// sin(th)/th, (1 - cos th)/th^2, (th - sin th)/th^3 as functions of th^2.
template <typename T>
struct RotationCoefficients {
  T a, b, c;
};

template <typename T>
RotationCoefficients<T> rotation_coefficients(const T& theta_sq) {
  using std::cos;
  using std::sin;
  using std::sqrt;
  RotationCoefficients<T> k;
  if (value_of(theta_sq) < kSmallAngle * kSmallAngle) {
    const T t2 = theta_sq;
    const T t4 = t2 * t2;
    k.a = T(1.0) - t2 / 6.0 + t4 / 120.0;
    k.b = T(0.5) - t2 / 24.0 + t4 / 720.0;
    k.c = T(1.0 / 6.0) - t2 / 120.0 + t4 / 5040.0;
  } else {
    const T th = sqrt(theta_sq);
    const T s = sin(th);
    k.a = s / th;
    const T sh = sin(th / 2.0);
    k.b = T(2.0) * sh * sh / theta_sq;
    k.c = (th - s) / (theta_sq * th);
  }
  return k;
}

}  // namespace detail

/// Unit quaternion for the rotation by |w| about w / |w|.
template <typename T>
Quat<T> quat_exp(const Vec3<T>& w) {
  using std::cos;
  using std::sin;
  using std::sqrt;
  const T theta_sq = w.squaredNorm();
  T real;
  T imag;
  if (value_of(theta_sq) < kSmallAngle * kSmallAngle) {
    real = T(1.0) - theta_sq / 8.0 + theta_sq * theta_sq / 384.0;
    imag = T(0.5) - theta_sq / 48.0 + theta_sq * theta_sq / 3840.0;
  } else {
    const T th = sqrt(theta_sq);
    real = cos(th / 2.0);
    imag = sin(th / 2.0) / th;
  }
  return Quat<T>(real, imag * w.x(), imag * w.y(), imag * w.z());
}

/// Principal-branch axis-angle of q. q and -q give the same result.
template <typename T>
Vec3<T> quat_log(const Quat<T>& q_in) {
  using std::atan2;
  using std::sqrt;
  Quat<T> q = q_in;
  if (value_of(q.w()) < 0.0) {
    q.coeffs() = -q.coeffs();
  }
  const Vec3<T> v = q.vec();
  const T n_sq = v.squaredNorm();
  T scale;
  if (value_of(n_sq) < kSmallAngle * kSmallAngle) {
    // 2 atan(n / w) / n expanded in (n / w)^2.
    const T r = n_sq / (q.w() * q.w());
    scale = (T(2.0) / q.w()) * (T(1.0) - r / 3.0 + r * r / 5.0);
  } else {
    const T n = sqrt(n_sq);
    scale = T(2.0) * atan2(n, q.w()) / n;
  }
  return scale * v;
}

/// Rodrigues: rotation matrix for axis-angle w.
template <typename T>
Mat3<T> rotation_exp(const Vec3<T>& w) {
  const auto k = detail::rotation_coefficients(w.squaredNorm());
  const Mat3<T> W = skew(w);
  return Mat3<T>::Identity() + k.a * W + k.b * (W * W);
}

/// Left Jacobian of SO(3); maps twist translation to pose translation.
template <typename T>
Mat3<T> so3_left_jacobian(const Vec3<T>& w) {
  const auto k = detail::rotation_coefficients(w.squaredNorm());
  const Mat3<T> W = skew(w);
  return Mat3<T>::Identity() + k.b * W + k.c * (W * W);
}

template <typename T>
Mat3<T> so3_left_jacobian_inverse(const Vec3<T>& w) {
  using std::cos;
  using std::sin;
  using std::sqrt;
  const T theta_sq = w.squaredNorm();
  T d;
  if (value_of(theta_sq) < kSmallAngle * kSmallAngle) {
    d = T(1.0 / 12.0) + theta_sq / 720.0 + theta_sq * theta_sq / 30240.0;
  } else {
    const T th = sqrt(theta_sq);
    const T sh = sin(th / 2.0);
    d = (T(1.0) - th * sin(th) / (T(4.0) * sh * sh)) / theta_sq;
  }
  const Mat3<T> W = skew(w);
  return Mat3<T>::Identity() - 0.5 * W + d * (W * W);
}

/// Quaternion of a rotation matrix (Shepperd's method), returned with w >= 0.
template <typename T>
Quat<T> matrix_to_quat(const Mat3<T>& R) {
  using std::sqrt;
  const double tr = value_of(R(0, 0)) + value_of(R(1, 1)) + value_of(R(2, 2));
  Quat<T> q;
  if (tr > 0.0) {
    const T s = sqrt(R(0, 0) + R(1, 1) + R(2, 2) + T(1.0)) * 2.0;
    q.w() = 0.25 * s;
    q.x() = (R(2, 1) - R(1, 2)) / s;
    q.y() = (R(0, 2) - R(2, 0)) / s;
    q.z() = (R(1, 0) - R(0, 1)) / s;
  } else if (value_of(R(0, 0)) > value_of(R(1, 1)) && value_of(R(0, 0)) > value_of(R(2, 2))) {
    const T s = sqrt(T(1.0) + R(0, 0) - R(1, 1) - R(2, 2)) * 2.0;
    q.w() = (R(2, 1) - R(1, 2)) / s;
    q.x() = 0.25 * s;
    q.y() = (R(0, 1) + R(1, 0)) / s;
    q.z() = (R(0, 2) + R(2, 0)) / s;
  } else if (value_of(R(1, 1)) > value_of(R(2, 2))) {
    const T s = sqrt(T(1.0) + R(1, 1) - R(0, 0) - R(2, 2)) * 2.0;
    q.w() = (R(0, 2) - R(2, 0)) / s;
    q.x() = (R(0, 1) + R(1, 0)) / s;
    q.y() = 0.25 * s;
    q.z() = (R(1, 2) + R(2, 1)) / s;
  } else {
    const T s = sqrt(T(1.0) + R(2, 2) - R(0, 0) - R(1, 1)) * 2.0;
    q.w() = (R(1, 0) - R(0, 1)) / s;
    q.x() = (R(0, 2) + R(2, 0)) / s;
    q.y() = (R(1, 2) + R(2, 1)) / s;
    q.z() = 0.25 * s;
  }
  if (value_of(q.w()) < 0.0) {
    q.coeffs() = -q.coeffs();
  }
  return q;
}

template <typename T>
struct TwistT {
  Vec3<T> v = Vec3<T>::Zero();
  Vec3<T> omega = Vec3<T>::Zero();
};
using Twist = TwistT<double>;

/// Rigid transform x_global = R x_body + p.
template <typename T>
struct PoseT {
  Mat3<T> R = Mat3<T>::Identity();
  Vec3<T> p = Vec3<T>::Zero();

  static PoseT from_matrix(const Mat4<T>& m) {
    PoseT out;
    out.R = m.template block<3, 3>(0, 0);
    out.p = m.template block<3, 1>(0, 3);
    return out;
  }

  Mat4<T> matrix() const {
    Mat4<T> m = Mat4<T>::Identity();
    m.template block<3, 3>(0, 0) = R;
    m.template block<3, 1>(0, 3) = p;
    return m;
  }

  PoseT inverse() const {
    PoseT out;
    out.R = R.transpose();
    out.p = -(out.R * p);
    return out;
  }

  PoseT operator*(const PoseT& rhs) const {
    PoseT out;
    out.R = R * rhs.R;
    out.p = R * rhs.p + p;
    return out;
  }

  Vec3<T> operator*(const Vec3<T>& x) const { return R * x + p; }
};
using Pose = PoseT<double>;

/// 4x4 matrix form of a twist, [[omega]x v; 0 0].
template <typename T>
Mat4<T> twist_hat(const TwistT<T>& xi) {
  Mat4<T> m = Mat4<T>::Zero();
  m.template block<3, 3>(0, 0) = skew(xi.omega);
  m.template block<3, 1>(0, 3) = xi.v;
  return m;
}

/// exp(xi * theta). The twist keeps |omega| equal to the rotation angle of exp(xi);
/// with unit axis w and angle th = |omega| * theta the translation block is
/// (I - exp([w]x th)) [w]x v' + w w^T v' th, v' = v / |omega|, which expands to
/// J_l(omega theta) v theta and stays finite as |omega| -> 0.
template <typename T, typename S>
PoseT<T> se3_exp(const TwistT<T>& xi, const S& theta) {
  const Vec3<T> w = xi.omega * theta;
  const auto k = detail::rotation_coefficients(w.squaredNorm());
  const Mat3<T> W = skew(w);
  const Mat3<T> WW = W * W;
  PoseT<T> out;
  out.R = Mat3<T>::Identity() + k.a * W + k.b * WW;
  const Vec3<T> vt = xi.v * theta;
  out.p = vt + k.b * (W * vt) + k.c * (WW * vt);
  return out;
}

/// Twist of a relative pose, principal branch. Does not check the branch boundary.
template <typename T>
TwistT<T> se3_log_unchecked(const PoseT<T>& pose) {
  TwistT<T> xi;
  xi.omega = quat_log(matrix_to_quat(pose.R));
  xi.v = so3_left_jacobian_inverse(xi.omega) * pose.p;
  return xi;
}

/// Rotation angle of R in [0, pi].
template <typename T>
double rotation_angle(const Mat3<T>& R) {
  const double c = 0.5 * (value_of(R(0, 0)) + value_of(R(1, 1)) + value_of(R(2, 2)) - 1.0);
  return std::acos(std::clamp(c, -1.0, 1.0));
}

Twist se3_log(const Pose& pose);

/// Hamilton product helpers for quaternions used as plain 4-vectors (rates).
template <typename T>
Quat<T> quat_scale(const Quat<T>& q, const T& s) {
  return Quat<T>(q.w() * s, q.x() * s, q.y() * s, q.z() * s);
}

template <typename T>
Quat<T> quat_add(const Quat<T>& a, const Quat<T>& b) {
  return Quat<T>(a.w() + b.w(), a.x() + b.x(), a.y() + b.y(), a.z() + b.z());
}

template <typename T>
Quat<T> pure_quat(const Vec3<T>& v) {
  return Quat<T>(T(0.0), v.x(), v.y(), v.z());
}

/// Normalizes and flips q so that dot(prev, q) >= 0.
UnitQuaternion sign_aligned(const UnitQuaternion& prev, const UnitQuaternion& q);

}  // namespace ctsfm
