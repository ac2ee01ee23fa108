#include "ctsfm/lie.hpp"

#include <numbers>
#include <string>

#include "ctsfm/errors.hpp"

namespace ctsfm {

const char* errc_name(Errc code) {
  switch (code) {
    case Errc::kOutOfSupport: return "out of spline support";
    case Errc::kLogBranchBoundary: return "log branch boundary";
    case Errc::kBehindCamera: return "behind camera";
    case Errc::kGlobalShutter: return "undefined for global shutter";
    case Errc::kProjectionTimeNotFound: return "projection time not found";
    case Errc::kDegenerate: return "degenerate input";
    case Errc::kInvalidArgument: return "invalid argument";
    case Errc::kDiverged: return "diverged";
    case Errc::kSchema: return "schema violation";
    case Errc::kIo: return "i/o error";
  }
  return "unknown";
}

Twist se3_log(const Pose& pose) {
  const double angle = rotation_angle(pose.R);
  if (angle >= std::numbers::pi - kLogBranchMargin) {
    throw Error(Errc::kLogBranchBoundary,
                "log branch boundary: relative rotation of " + std::to_string(angle) + " rad");
  }
  return se3_log_unchecked(pose);
}

UnitQuaternion sign_aligned(const UnitQuaternion& prev, const UnitQuaternion& q) {
  UnitQuaternion out = q.normalized();
  if (prev.coeffs().dot(out.coeffs()) < 0.0) {
    out.coeffs() = -out.coeffs();
  }
  return out;
}

}  // namespace ctsfm
