#pragma once

#include <iosfwd>

namespace qcomp::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 1;
inline constexpr int kExitNumerical = 2;

// Entry point of the qcomp tool. Data written to files or `out`; logs and
// error messages go to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace qcomp::cli
