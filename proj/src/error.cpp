#include "mbtcover/error.hpp"

namespace mbtcover {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedDocument: return "MalformedDocument";
    case ErrorCode::SchemaViolation: return "SchemaViolation";
    case ErrorCode::DanglingReference: return "DanglingReference";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::UnknownKind: return "UnknownKind";
    case ErrorCode::MalformedSpec: return "MalformedSpec";
    case ErrorCode::ThresholdOutOfRange: return "ThresholdOutOfRange";
    case ErrorCode::UndefinedRatio: return "UndefinedRatio";
    case ErrorCode::OutOfOrderEvent: return "OutOfOrderEvent";
    case ErrorCode::InvalidSuite: return "InvalidSuite";
    case ErrorCode::AdapterFailure: return "AdapterFailure";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::UnknownPage: return "UnknownPage";
    case ErrorCode::NotStarted: return "NotStarted";
  }
  return "Unknown";
}

}  // namespace mbtcover
