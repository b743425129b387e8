#include "common/error.hpp"

#include <array>
#include <utility>

namespace rgma {

namespace {

constexpr std::array<std::pair<ErrorCode, std::string_view>, 21> kNames{{
    {ErrorCode::Syntax, "SyntaxError"},
    {ErrorCode::Schema, "SchemaError"},
    {ErrorCode::Type, "TypeError"},
    {ErrorCode::UnsupportedFeature, "UnsupportedFeature"},
    {ErrorCode::KeyMismatch, "KeyMismatch"},
    {ErrorCode::Frame, "FrameError"},
    {ErrorCode::Protocol, "ProtocolError"},
    {ErrorCode::UnknownComponent, "UnknownComponent"},
    {ErrorCode::UnsupportedQueryClass, "UnsupportedQueryClass"},
    {ErrorCode::ViewViolation, "ViewViolation"},
    {ErrorCode::NotInsertable, "NotInsertable"},
    {ErrorCode::Storage, "StorageError"},
    {ErrorCode::UnsupportedProducerType, "UnsupportedProducerType"},
    {ErrorCode::SinkMismatch, "SinkMismatch"},
    {ErrorCode::SourceUnsupported, "SourceUnsupported"},
    {ErrorCode::Scenario, "ScenarioError"},
    {ErrorCode::Connection, "ConnectionError"},
    {ErrorCode::LimitExceeded, "LimitExceeded"},
    {ErrorCode::InvalidArgument, "InvalidArgument"},
    {ErrorCode::Timeout, "Timeout"},
    {ErrorCode::Internal, "InternalError"},
}};

}  // namespace

std::string_view errorName(ErrorCode code) {
  for (const auto& [c, name] : kNames) {
    if (c == code) return name;
  }
  return "InternalError";
}

ErrorCode errorCodeFromString(std::string_view name) {
  for (const auto& [c, n] : kNames) {
    if (n == name) return c;
  }
  return ErrorCode::Internal;
}

}  // namespace rgma
