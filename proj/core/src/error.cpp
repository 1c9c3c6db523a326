#include "zeta/error.hpp"

namespace zeta {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedJson: return "MALFORMED_JSON";
    case ErrorCode::WrongShape: return "WRONG_SHAPE";
    case ErrorCode::DuplicateObservation: return "DUPLICATE_OBSERVATION";
    case ErrorCode::UnmappedCondition: return "UNMAPPED_CONDITION";
    case ErrorCode::UnknownCandidate: return "UNKNOWN_CANDIDATE";
    case ErrorCode::MissingRevisedText: return "MISSING_REVISED_TEXT";
    case ErrorCode::MissingReasons: return "MISSING_REASONS";
    case ErrorCode::AlreadyRejected: return "ALREADY_REJECTED";
    case ErrorCode::InvalidRevision: return "INVALID_REVISION";
    case ErrorCode::EmptyPolarity: return "EMPTY_POLARITY";
    case ErrorCode::ZeroVector: return "ZERO_VECTOR";
    case ErrorCode::BadMagic: return "BAD_MAGIC";
    case ErrorCode::TruncatedFile: return "TRUNCATED_FILE";
    case ErrorCode::TrailingData: return "TRAILING_DATA";
    case ErrorCode::DimMismatch: return "DIM_MISMATCH";
    case ErrorCode::DuplicateId: return "DUPLICATE_ID";
    case ErrorCode::MissingKey: return "MISSING_KEY";
    case ErrorCode::HttpError: return "HTTP_ERROR";
    case ErrorCode::UnknownCondition: return "UNKNOWN_CONDITION";
    case ErrorCode::PairingUnavailable: return "PAIRING_UNAVAILABLE";
    case ErrorCode::EmptyKnowledgeBase: return "EMPTY_KNOWLEDGE_BASE";
    case ErrorCode::DegenerateClass: return "DEGENERATE_CLASS";
    case ErrorCode::AllClassesSkipped: return "ALL_CLASSES_SKIPPED";
    case ErrorCode::LengthMismatch: return "LENGTH_MISMATCH";
    case ErrorCode::Empty: return "EMPTY";
    case ErrorCode::UnmappedLabel: return "UNMAPPED_LABEL";
    case ErrorCode::MissingSample: return "MISSING_SAMPLE";
    case ErrorCode::EmptyCondition: return "EMPTY_CONDITION";
    case ErrorCode::NoModels: return "NO_MODELS";
    case ErrorCode::AuthError: return "AUTH_ERROR";
    case ErrorCode::RateLimited: return "RATE_LIMITED";
    case ErrorCode::TransportError: return "TRANSPORT_ERROR";
    case ErrorCode::EmptyResponse: return "EMPTY_RESPONSE";
    case ErrorCode::AllModelsFailed: return "ALL_MODELS_FAILED";
    case ErrorCode::InsufficientSamples: return "INSUFFICIENT_SAMPLES";
    case ErrorCode::NotFound: return "NOT_FOUND";
    case ErrorCode::Conflict: return "CONFLICT";
    case ErrorCode::InvalidConfig: return "INVALID_CONFIG";
    case ErrorCode::InvalidFormat: return "INVALID_FORMAT";
    case ErrorCode::Io: return "IO";
    case ErrorCode::Usage: return "USAGE";
  }
  return "UNKNOWN";
}

ErrorClass classify(ErrorCode code) {
  switch (code) {
    case ErrorCode::HttpError:
    case ErrorCode::AuthError:
    case ErrorCode::RateLimited:
    case ErrorCode::TransportError:
    case ErrorCode::EmptyResponse:
    case ErrorCode::AllModelsFailed:
      return ErrorClass::Remote;
    case ErrorCode::Io:
    case ErrorCode::NotFound:
    case ErrorCode::Conflict:
      return ErrorClass::Runtime;
    case ErrorCode::Usage:
      return ErrorClass::Usage;
    default:
      return ErrorClass::Validation;
  }
}

void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace zeta
