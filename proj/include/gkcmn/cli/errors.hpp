#pragma once

#include <stdexcept>
#include <string>

namespace gkcmn::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitParse = 2,
  kExitValidation = 3,
  kExitDivergence = 4,
  kExitGradcheck = 5,
};

/// Malformed input document or flag (exit 2).
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Well-formed input that breaks an invariant (exit 3).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace gkcmn::cli
