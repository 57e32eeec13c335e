#include "safereg/error.hpp"

namespace safereg {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::CycleDetected: return "CycleDetected";
    case ErrorCode::UnknownEndpoint: return "UnknownEndpoint";
    case ErrorCode::DuplicateNode: return "DuplicateNode";
    case ErrorCode::UnknownNode: return "UnknownNode";
    case ErrorCode::OverlappingSets: return "OverlappingSets";
    case ErrorCode::NotAControl: return "NotAControl";
    case ErrorCode::OutOfDomain: return "OutOfDomain";
    case ErrorCode::SyntaxError: return "SyntaxError";
    case ErrorCode::UnknownComparator: return "UnknownComparator";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::MissingMetric: return "MissingMetric";
    case ErrorCode::NonFiniteMetric: return "NonFiniteMetric";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::SchemaMismatch: return "SchemaMismatch";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::MissingColumn: return "MissingColumn";
    case ErrorCode::NotIdentifiable: return "NotIdentifiable";
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::EmptyStratum: return "EmptyStratum";
    case ErrorCode::TooFewSamples: return "TooFewSamples";
    case ErrorCode::SingularFactorization: return "SingularFactorization";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::NotPSD: return "NotPSD";
    case ErrorCode::InvalidStep: return "InvalidStep";
    case ErrorCode::MissingTruthFlags: return "MissingTruthFlags";
    case ErrorCode::EnvironmentFailure: return "EnvironmentFailure";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

}  // namespace safereg
