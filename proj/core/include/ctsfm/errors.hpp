#pragma once

#include <stdexcept>
#include <string>

namespace ctsfm {

enum class Errc {
  kOutOfSupport,
  kLogBranchBoundary,
  kBehindCamera,
  kGlobalShutter,
  kProjectionTimeNotFound,
  kDegenerate,
  kInvalidArgument,
  kDiverged,
  kSchema,
  kIo,
};

const char* errc_name(Errc code);

/// Library error. Every failure the library reports carries one of the codes above.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace ctsfm
