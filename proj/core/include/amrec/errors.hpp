#pragma once

#include <stdexcept>

namespace amrec {

// Precondition and configuration failures: mismatched shapes, parameter
// values out of range, malformed config or data files. The CLI maps these
// to exit code 2.
class ValidationError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Broken runtime guarantees: non-finite values appearing mid-computation,
// an exhausted safeguard line search, a failed report check. These signal
// bugs or corrupt inputs rather than user error; the CLI maps them to
// exit code 3.
class InvariantFailure : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

} // namespace amrec
