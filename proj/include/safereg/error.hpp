#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace safereg {

enum class ErrorCode {
  // causal graph
  CycleDetected,
  UnknownEndpoint,
  DuplicateNode,
  UnknownNode,
  OverlappingSets,
  NotAControl,
  OutOfDomain,
  // spec logic
  SyntaxError,
  UnknownComparator,
  LengthMismatch,
  MissingMetric,
  NonFiniteMetric,
  // data and estimation
  IoError,
  SchemaMismatch,
  EmptyDataset,
  MissingColumn,
  NotIdentifiable,
  InsufficientData,
  EmptyStratum,
  TooFewSamples,
  // gaussian process
  SingularFactorization,
  NonFiniteValue,
  NotPSD,
  InvalidStep,
  // learner / env / cli
  MissingTruthFlags,
  EnvironmentFailure,
  ConfigError,
};

std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Parse failure in the spec grammar; position is a 0-based byte offset.
class SyntaxError : public Error {
 public:
  SyntaxError(std::size_t position, const std::string& what)
      : Error(ErrorCode::SyntaxError, "at position " + std::to_string(position) + ": " + what),
        position_(position) {}

  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

}  // namespace safereg
