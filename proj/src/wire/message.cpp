#include "wire/message.hpp"

#include <algorithm>
#include <array>
#include <set>
#include <vector>

namespace rgma {

namespace {

constexpr std::array<std::pair<MessageKind, std::string_view>, 19> kKinds{{
    {MessageKind::DeclareTable, "DeclareTable"},
    {MessageKind::RegisterProducer, "RegisterProducer"},
    {MessageKind::RegisterConsumer, "RegisterConsumer"},
    {MessageKind::Heartbeat, "Heartbeat"},
    {MessageKind::Unregister, "Unregister"},
    {MessageKind::Insert, "Insert"},
    {MessageKind::StartQuery, "StartQuery"},
    {MessageKind::TupleBatch, "TupleBatch"},
    {MessageKind::EndOfResults, "EndOfResults"},
    {MessageKind::NotifyNewProducer, "NotifyNewProducer"},
    {MessageKind::RegistrySync, "RegistrySync"},
    {MessageKind::Error, "Error"},
    {MessageKind::Ack, "Ack"},
    {MessageKind::Lookup, "Lookup"},
    {MessageKind::ListTables, "ListTables"},
    {MessageKind::DescribeTable, "DescribeTable"},
    {MessageKind::ListEntries, "ListEntries"},
    {MessageKind::CreateProducer, "CreateProducer"},
    {MessageKind::CreateArchiver, "CreateArchiver"},
}};

bool validUtf8(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size()) {
    const auto c = static_cast<unsigned char>(s[i]);
    std::size_t n = 0;
    std::uint32_t cp = 0;
    if (c < 0x80) {
      ++i;
      continue;
    } else if ((c & 0xe0) == 0xc0) {
      n = 1;
      cp = c & 0x1f;
    } else if ((c & 0xf0) == 0xe0) {
      n = 2;
      cp = c & 0x0f;
    } else if ((c & 0xf8) == 0xf0) {
      n = 3;
      cp = c & 0x07;
    } else {
      return false;
    }
    if (s.size() - i <= n) return false;
    for (std::size_t k = 1; k <= n; ++k) {
      const auto cc = static_cast<unsigned char>(s[i + k]);
      if ((cc & 0xc0) != 0x80) return false;
      cp = (cp << 6) | (cc & 0x3f);
    }
    static constexpr std::uint32_t kMin[] = {0, 0x80, 0x800, 0x10000};
    if (cp < kMin[n] || cp > 0x10ffff || (cp >= 0xd800 && cp <= 0xdfff)) return false;
    i += n + 1;
  }
  return true;
}

// Rejects duplicate object keys so that no two distinct payloads decode to the same message.
Json strictParse(std::string_view text) {
  std::vector<std::set<std::string>> keys;
  Json::parser_callback_t cb = [&](int, Json::parse_event_t event, Json& parsed) {
    switch (event) {
      case Json::parse_event_t::object_start: keys.emplace_back(); break;
      case Json::parse_event_t::object_end: keys.pop_back(); break;
      case Json::parse_event_t::key:
        if (!keys.back().insert(parsed.get<std::string>()).second) {
          fail(ErrorCode::Frame, "duplicate key in frame payload");
        }
        break;
      default: break;
    }
    return true;
  };
  try {
    return Json::parse(text.begin(), text.end(), cb);
  } catch (const Json::exception& e) {
    fail(ErrorCode::Frame, std::string("invalid JSON payload: ") + e.what());
  }
}

}  // namespace

std::string_view kindName(MessageKind kind) {
  for (const auto& [k, n] : kKinds) {
    if (k == kind) return n;
  }
  return "Unknown";
}

std::optional<MessageKind> kindFromName(std::string_view name) {
  for (const auto& [k, n] : kKinds) {
    if (n == name) return k;
  }
  return std::nullopt;
}

std::string frame(const Message& message) {
  if (!message.body.is_object()) fail(ErrorCode::Frame, "message body must be an object");
  Json envelope = {{"kind", kindName(message.kind)}, {"requestId", message.requestId}, {"body", message.body}};
  std::string payload;
  try {
    payload = envelope.dump();
  } catch (const Json::exception& e) {
    fail(ErrorCode::Frame, std::string("message is not encodable: ") + e.what());
  }
  if (payload.size() > kMaxFrameBytes) fail(ErrorCode::Frame, "message exceeds the frame size limit");
  std::string out;
  out.reserve(payload.size() + 4);
  const auto len = static_cast<std::uint32_t>(payload.size());
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<char>((len >> s) & 0xff));
  out += payload;
  return out;
}

Message decodePayload(std::string_view payload) {
  if (payload.empty()) fail(ErrorCode::Frame, "empty frame");
  if (!validUtf8(payload)) fail(ErrorCode::Frame, "frame payload is not valid UTF-8");
  const Json j = strictParse(payload);
  if (!j.is_object() || j.size() != 3 || !j.contains("kind") || !j.contains("requestId") || !j.contains("body")) {
    fail(ErrorCode::Frame, "frame payload is not a message envelope");
  }
  if (!j["kind"].is_string() || !j["requestId"].is_string() || !j["body"].is_object()) {
    fail(ErrorCode::Frame, "message envelope has fields of the wrong type");
  }
  const auto kind = kindFromName(j["kind"].get<std::string>());
  if (!kind) fail(ErrorCode::Protocol, "unknown message kind '" + j["kind"].get<std::string>() + "'");
  return Message{*kind, j["requestId"].get<std::string>(), j["body"]};
}

Message unframe(std::string_view bytes) {
  if (bytes.size() < 4) fail(ErrorCode::Frame, "frame shorter than its length prefix");
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::uint32_t len = (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) | p[3];
  if (len == 0) fail(ErrorCode::Frame, "zero-length frame");
  if (len > kMaxFrameBytes) fail(ErrorCode::Frame, "frame length exceeds the limit");
  if (bytes.size() - 4 < len) fail(ErrorCode::Frame, "truncated frame");
  if (bytes.size() - 4 > len) fail(ErrorCode::Frame, "trailing bytes after frame");
  return decodePayload(bytes.substr(4));
}

Message makeMessage(MessageKind kind, std::string requestId, Json body) {
  return Message{kind, std::move(requestId), std::move(body)};
}

Message ackFor(const Message& request, Json body) {
  return makeMessage(MessageKind::Ack, request.requestId, std::move(body));
}

Message errorFor(const Message& request, ErrorCode code, const std::string& text) {
  return makeMessage(MessageKind::Error, request.requestId, {{"code", errorName(code)}, {"message", text}});
}

const Message& throwIfError(const Message& reply) {
  if (reply.kind == MessageKind::Error) {
    const auto code = errorCodeFromString(reply.body.value("code", std::string("Internal")));
    fail(code, reply.body.value("message", std::string("remote error")));
  }
  return reply;
}

std::int64_t heartbeatSchedule(std::int64_t intervalMs) {
  if (intervalMs <= 0) fail(ErrorCode::InvalidArgument, "termination interval must be positive");
  if (intervalMs < 200) return std::max<std::int64_t>(1, intervalMs / 2);
  return std::clamp<std::int64_t>(intervalMs / 2, 100, intervalMs - 100);
}

}  // namespace rgma
