#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mbtcover {

enum class ErrorCode {
  MalformedDocument,
  SchemaViolation,
  DanglingReference,
  DuplicateId,
  UnknownKind,
  MalformedSpec,
  ThresholdOutOfRange,
  UndefinedRatio,
  OutOfOrderEvent,
  InvalidSuite,
  AdapterFailure,
  OutOfRange,
  IoFailure,
  UnknownPage,
  NotStarted,
};

std::string_view to_string(ErrorCode code);

// Single exception type for the library; the code tells callers what went wrong.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace mbtcover
