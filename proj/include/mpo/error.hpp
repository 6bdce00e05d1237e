#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace mpo {

enum class ErrorCode {
  DuplicateSectionTag,
  MalformedTag,
  UntaggedLeadingContent,
  TagInContent,
  EmptyInput,
  ExtractorFailure,
  BackendError,
  ConsolidationRejected,
  ReplayMiss,
  TargetMismatch,
  FormatError,
  MissingAnswerKey,
  DuplicateId,
  DatasetMismatch,
  EvalAborted,
  InvalidArgument,
  IoError,
};

std::string_view to_string(ErrorCode code);
std::optional<ErrorCode> parse_error_code(std::string_view name);

// Every failure raised by the library carries one of the codes above so callers
// (the CLI in particular) can map them onto exit codes without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code), message_(message) {}

  ErrorCode code() const noexcept { return code_; }
  // The message without the code prefix.
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorCode code_;
  std::string message_;
};

}  // namespace mpo
