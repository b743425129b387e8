#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace rgma {

enum class ErrorCode {
  Syntax,
  Schema,
  Type,
  UnsupportedFeature,
  KeyMismatch,
  Frame,
  Protocol,
  UnknownComponent,
  UnsupportedQueryClass,
  ViewViolation,
  NotInsertable,
  Storage,
  UnsupportedProducerType,
  SinkMismatch,
  SourceUnsupported,
  Scenario,
  Connection,
  LimitExceeded,
  InvalidArgument,
  Timeout,
  Internal,
};

std::string_view errorName(ErrorCode code);
ErrorCode errorCodeFromString(std::string_view name);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace rgma
