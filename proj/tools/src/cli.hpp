#pragma once
// Entry point of the ctsfm command-line tool, callable in-process.

#include <iosfwd>

namespace ctsfm::cli {

/// Exit status: 0 success, 1 runtime failure, 2 usage or configuration error.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace ctsfm::cli
