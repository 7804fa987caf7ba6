#pragma once

#include <stdexcept>
#include <string>

namespace gfsvi {

enum class ErrorKind {
  NotPositiveDefinite,
  NonSquare,
  NotSymmetric,
  ShapeMismatch,
  DimensionMismatch,
  NegativeScale,
  NegativeVariance,
  NonFiniteLoss,
  ParseError,
  MissingValue,
  TooFewRows,
  EmptyInput,
  LabelOutOfRange,
  GridTooSmall,
  Infeasible,
  InvalidArgument,
  Config,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Thrown by the trainer when the loss stops being finite.
class NonFiniteLossError : public Error {
 public:
  NonFiniteLossError(long step, const std::string& what)
      : Error(ErrorKind::NonFiniteLoss, "step " + std::to_string(step) + ": " + what),
        step_(step) {}

  long step() const noexcept { return step_; }

 private:
  long step_;
};

}  // namespace gfsvi
