#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "common/error.hpp"
#include "json.hpp"

namespace rgma {

using Json = nlohmann::json;

enum class MessageKind {
  DeclareTable,
  RegisterProducer,
  RegisterConsumer,
  Heartbeat,
  Unregister,
  Insert,
  StartQuery,
  TupleBatch,
  EndOfResults,
  NotifyNewProducer,
  RegistrySync,
  Error,
  Ack,
  Lookup,
  ListTables,
  DescribeTable,
  ListEntries,
  CreateProducer,
  CreateArchiver,
};

std::string_view kindName(MessageKind kind);
std::optional<MessageKind> kindFromName(std::string_view name);

struct Message {
  MessageKind kind = MessageKind::Ack;
  std::string requestId;
  Json body = Json::object();

  bool operator==(const Message&) const = default;
};

constexpr std::uint32_t kMaxFrameBytes = 64u << 20;

/// 4-byte big-endian payload length, then the UTF-8 JSON object
/// {"kind": ..., "requestId": ..., "body": {...}}.
std::string frame(const Message& message);

/// Decodes exactly one frame. FrameError for a bad length, truncation, trailing
/// bytes, invalid UTF-8 or JSON, or a malformed envelope; ProtocolError for an
/// unknown kind.
Message unframe(std::string_view bytes);

/// Decodes a frame payload (the JSON object without its length prefix).
Message decodePayload(std::string_view payload);

Message makeMessage(MessageKind kind, std::string requestId, Json body = Json::object());
Message ackFor(const Message& request, Json body = Json::object());
Message errorFor(const Message& request, ErrorCode code, const std::string& text);

/// Throws the rgma::Error an Error reply carries; returns other replies unchanged.
const Message& throwIfError(const Message& reply);

/// Delay before the next heartbeat for a termination interval: half the interval,
/// clamped to [100 ms, interval - 100 ms]. Intervals too short for that clamp
/// fall back to half the interval, at least 1 ms.
std::int64_t heartbeatSchedule(std::int64_t intervalMs);

}  // namespace rgma
