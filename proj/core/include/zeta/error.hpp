#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace zeta {

enum class ErrorCode {
  // kb
  MalformedJson,
  WrongShape,
  DuplicateObservation,
  UnmappedCondition,
  UnknownCandidate,
  MissingRevisedText,
  MissingReasons,
  AlreadyRejected,
  InvalidRevision,
  EmptyPolarity,
  // embed
  ZeroVector,
  BadMagic,
  TruncatedFile,
  TrailingData,
  DimMismatch,
  DuplicateId,
  MissingKey,
  HttpError,
  // infer
  UnknownCondition,
  PairingUnavailable,
  EmptyKnowledgeBase,
  // eval
  DegenerateClass,
  AllClassesSkipped,
  LengthMismatch,
  Empty,
  UnmappedLabel,
  MissingSample,
  // llmgen
  EmptyCondition,
  NoModels,
  AuthError,
  RateLimited,
  TransportError,
  EmptyResponse,
  AllModelsFailed,
  // service
  InsufficientSamples,
  NotFound,
  Conflict,
  // generic
  InvalidConfig,
  InvalidFormat,
  Io,
  Usage,
};

// Exit-code classes used by the command-line tool.
enum class ErrorClass { Usage = 1, Validation = 2, Runtime = 3, Remote = 4 };

std::string_view to_string(ErrorCode code);
ErrorClass classify(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

}  // namespace zeta
