#pragma once

#include <stdexcept>
#include <string>

namespace qcomp {

// Bad user input: unreadable files, malformed tables, schema mismatches,
// violated preconditions. The CLI maps it to exit code 1.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Numerical failure that survived the jitter retry, or a non-finite loss.
// The CLI maps it to exit code 2.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace qcomp
