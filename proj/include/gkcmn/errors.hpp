#pragma once

#include <stdexcept>
#include <string>

namespace gkcmn {

/// Operand shapes or ranks disagree.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// An input violates a documented precondition (degenerate box, empty list, ...).
class DomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed serialized input (GKTN stream, JSON document).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An optimization run left the region where its loss is finite and differentiable.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, int step)
      : std::runtime_error(what + " (step " + std::to_string(step) + ")"), step_(step) {}

  int step() const noexcept { return step_; }

 private:
  int step_;
};

}  // namespace gkcmn
