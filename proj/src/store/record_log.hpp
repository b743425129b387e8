#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace rgma {

// On-disk layout shared by table files, write-ahead logs and the registry:
//
//   header:  "RGMATBL1" | u32 version | u64 schema hash       (big endian)
//   record:  u32 payload length | u32 CRC-32 of payload | payload
//
// A record that is cut short or fails its checksum ends the readable log; it and
// anything after it are truncated on open.
class RecordLog {
 public:
  static constexpr std::uint32_t kVersion = 1;
  static constexpr std::size_t kHeaderSize = 20;
  static constexpr std::uint32_t kMaxRecord = 64u << 20;

  RecordLog() = default;
  RecordLog(const RecordLog&) = delete;
  RecordLog& operator=(const RecordLog&) = delete;
  RecordLog(RecordLog&& other) noexcept;
  RecordLog& operator=(RecordLog&& other) noexcept;
  ~RecordLog();

  /// Opens or creates the log. Existing records are returned through `recovered`.
  /// Throws StorageError on I/O failure or a header for a different schema.
  static RecordLog open(const std::filesystem::path& path, std::uint64_t schemaHash,
                        std::vector<std::string>* recovered, bool syncWrites);

  bool isOpen() const { return fd_ >= 0; }
  const std::filesystem::path& path() const { return path_; }
  std::size_t records() const { return records_; }
  /// Bytes dropped from a torn tail during the last open.
  std::uint64_t truncatedBytes() const { return truncated_; }

  /// Appends the payloads with one write and, in sync mode, one fdatasync.
  void append(std::span<const std::string> payloads);
  void append(std::string_view payload);

  /// Atomically replaces the whole log with `payloads` (temp file + rename).
  void rewrite(std::span<const std::string> payloads);

  void close();

 private:
  int fd_ = -1;
  std::filesystem::path path_;
  std::uint64_t schemaHash_ = 0;
  std::size_t records_ = 0;
  std::uint64_t truncated_ = 0;
  bool sync_ = false;
};

void appendU32(std::string& out, std::uint32_t v);
void appendU64(std::string& out, std::uint64_t v);
std::uint32_t readU32(const unsigned char* p);
std::uint64_t readU64(const unsigned char* p);

}  // namespace rgma
