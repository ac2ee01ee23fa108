#pragma once

namespace ctsfm {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace ctsfm
