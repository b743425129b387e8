#include "store/record_log.hpp"

#include <fcntl.h>
#include <unistd.h>
#include <zlib.h>

#include <cerrno>
#include <cstring>
#include <utility>

#include "common/error.hpp"

namespace rgma {

namespace {

constexpr char kMagic[8] = {'R', 'G', 'M', 'A', 'T', 'B', 'L', '1'};

[[noreturn]] void ioFail(const std::string& what, const std::filesystem::path& path) {
  fail(ErrorCode::Storage, what + " " + path.string() + ": " + std::strerror(errno));
}

void writeAll(int fd, const std::string& data, const std::filesystem::path& path) {
  std::size_t off = 0;
  while (off < data.size()) {
    const ssize_t n = ::write(fd, data.data() + off, data.size() - off);
    if (n < 0) {
      if (errno == EINTR) continue;
      ioFail("write", path);
    }
    off += static_cast<std::size_t>(n);
  }
}

std::string header(std::uint64_t schemaHash) {
  std::string h(kMagic, sizeof kMagic);
  appendU32(h, RecordLog::kVersion);
  appendU64(h, schemaHash);
  return h;
}

std::uint32_t crcOf(std::string_view payload) {
  return static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(payload.data()), static_cast<uInt>(payload.size())));
}

void encodeRecord(std::string& out, std::string_view payload) {
  if (payload.size() > RecordLog::kMaxRecord) fail(ErrorCode::Storage, "record too large");
  appendU32(out, static_cast<std::uint32_t>(payload.size()));
  appendU32(out, crcOf(payload));
  out.append(payload);
}

std::string readFile(int fd, const std::filesystem::path& path) {
  std::string data;
  char buf[1 << 16];
  while (true) {
    const ssize_t n = ::read(fd, buf, sizeof buf);
    if (n < 0) {
      if (errno == EINTR) continue;
      ioFail("read", path);
    }
    if (n == 0) break;
    data.append(buf, static_cast<std::size_t>(n));
  }
  return data;
}

void syncDirectory(const std::filesystem::path& path) {
  const auto dir = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
  const int dfd = ::open(dir.c_str(), O_RDONLY | O_DIRECTORY);
  if (dfd >= 0) {
    ::fsync(dfd);
    ::close(dfd);
  }
}

}  // namespace

void appendU32(std::string& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<char>((v >> s) & 0xff));
}

void appendU64(std::string& out, std::uint64_t v) {
  for (int s = 56; s >= 0; s -= 8) out.push_back(static_cast<char>((v >> s) & 0xff));
}

std::uint32_t readU32(const unsigned char* p) {
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) | p[3];
}

std::uint64_t readU64(const unsigned char* p) {
  return (std::uint64_t{readU32(p)} << 32) | readU32(p + 4);
}

RecordLog::RecordLog(RecordLog&& other) noexcept { *this = std::move(other); }

RecordLog& RecordLog::operator=(RecordLog&& other) noexcept {
  if (this != &other) {
    close();
    fd_ = std::exchange(other.fd_, -1);
    path_ = std::move(other.path_);
    schemaHash_ = other.schemaHash_;
    records_ = other.records_;
    truncated_ = other.truncated_;
    sync_ = other.sync_;
  }
  return *this;
}

RecordLog::~RecordLog() { close(); }

void RecordLog::close() {
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
}

RecordLog RecordLog::open(const std::filesystem::path& path, std::uint64_t schemaHash,
                          std::vector<std::string>* recovered, bool syncWrites) {
  RecordLog log;
  log.path_ = path;
  log.schemaHash_ = schemaHash;
  log.sync_ = syncWrites;
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  log.fd_ = ::open(path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
  if (log.fd_ < 0) ioFail("open", path);

  const std::string data = readFile(log.fd_, path);
  if (data.empty()) {
    writeAll(log.fd_, header(schemaHash), path);
    if (syncWrites && ::fdatasync(log.fd_) != 0) ioFail("fdatasync", path);
    return log;
  }
  const auto* bytes = reinterpret_cast<const unsigned char*>(data.data());
  if (data.size() < kHeaderSize || std::memcmp(data.data(), kMagic, sizeof kMagic) != 0) {
    fail(ErrorCode::Storage, path.string() + " is not a table file");
  }
  if (readU32(bytes + 8) != kVersion) {
    fail(ErrorCode::Storage, path.string() + " has unsupported format version " +
                                 std::to_string(readU32(bytes + 8)));
  }
  if (readU64(bytes + 12) != schemaHash) {
    fail(ErrorCode::Storage, path.string() + " was written for a different schema");
  }

  std::size_t off = kHeaderSize;
  while (off + 8 <= data.size()) {
    const std::uint32_t len = readU32(bytes + off);
    const std::uint32_t crc = readU32(bytes + off + 4);
    if (len > kMaxRecord || off + 8 + len > data.size()) break;
    const std::string_view payload(data.data() + off + 8, len);
    if (crcOf(payload) != crc) break;
    if (recovered) recovered->emplace_back(payload);
    ++log.records_;
    off += 8 + len;
  }
  if (off < data.size()) {
    log.truncated_ = data.size() - off;
    if (::ftruncate(log.fd_, static_cast<off_t>(off)) != 0) ioFail("truncate", path);
  }
  if (::lseek(log.fd_, 0, SEEK_END) < 0) ioFail("seek", path);
  return log;
}

void RecordLog::append(std::span<const std::string> payloads) {
  if (fd_ < 0) fail(ErrorCode::Storage, "log is not open");
  if (payloads.empty()) return;
  std::string buf;
  for (const auto& p : payloads) encodeRecord(buf, p);
  writeAll(fd_, buf, path_);
  if (sync_ && ::fdatasync(fd_) != 0) ioFail("fdatasync", path_);
  records_ += payloads.size();
}

void RecordLog::append(std::string_view payload) {
  const std::string one(payload);
  append(std::span<const std::string>(&one, 1));
}

void RecordLog::rewrite(std::span<const std::string> payloads) {
  if (fd_ < 0) fail(ErrorCode::Storage, "log is not open");
  auto tmp = path_;
  tmp += ".tmp";
  const int fd = ::open(tmp.c_str(), O_RDWR | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
  if (fd < 0) ioFail("open", tmp);
  std::string buf = header(schemaHash_);
  for (const auto& p : payloads) encodeRecord(buf, p);
  try {
    writeAll(fd, buf, tmp);
    if (::fdatasync(fd) != 0) ioFail("fdatasync", tmp);
  } catch (...) {
    ::close(fd);
    throw;
  }
  if (::rename(tmp.c_str(), path_.c_str()) != 0) {
    ::close(fd);
    ioFail("rename", tmp);
  }
  syncDirectory(path_);
  ::close(fd_);
  fd_ = fd;
  if (::lseek(fd_, 0, SEEK_END) < 0) ioFail("seek", path_);
  records_ = payloads.size();
}

}  // namespace rgma
