#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sql/ast.hpp"
#include "store/record_log.hpp"

namespace rgma {

/// Column values in schema order: INT and TIMESTAMP as 8-byte two's complement,
/// REAL as the 8-byte IEEE-754 bit pattern, STRING as u32 length plus bytes.
std::string encodeTuple(const TableDefinition& def, const Tuple& tuple);
Tuple decodeTuple(const TableDefinition& def, std::string_view payload);

/// The latest-value replacement rule: the incoming tuple wins unless it is older.
/// Throws KeyMismatch when the two tuples measure different things.
Tuple latestMerge(const TableDefinition& def, const std::optional<Tuple>& existing, const Tuple& incoming);

struct CleanupRule {
  enum class Kind { Where, KeepNewest };

  std::string table;
  Kind kind = Kind::Where;
  Condition where;            // Where: rows satisfying this are deleted; may use NOW
  std::size_t keepNewest = 0; // KeepNewest: rows beyond the N most recent are deleted
  std::int64_t intervalMs = 0;
  std::string text;

  static CleanupRule whereRule(const TableDefinition& def, std::string_view condition, std::int64_t intervalMs);
  static CleanupRule keepNewestRule(const TableDefinition& def, std::size_t count, std::int64_t intervalMs);
};

/// Removes the rows the rule selects and returns how many went.
std::size_t applyCleanup(std::vector<Tuple>& rows, const CleanupRule& rule, std::int64_t now);

/// Evaluates `query` over one row source per FROM entry. Each result row is the
/// concatenation of the full rows of every FROM entry, in FROM order.
std::vector<std::vector<Value>> selectRows(const Query& query, std::span<const std::vector<Tuple>* const> sources);

/// Latest value per defining key, optionally backed by a table file.
class LatestStore {
 public:
  explicit LatestStore(TableDefinition def) : def_(std::move(def)) {}

  /// Loads the file's content (replaying it through latestMerge) and logs further changes there.
  void attach(const std::filesystem::path& path, bool syncWrites);

  /// Returns true when the tuple replaced (or created) the key's entry.
  bool insert(const Tuple& tuple);
  std::vector<Tuple> rows() const;
  std::size_t size() const { return rows_.size(); }
  std::size_t cleanup(const CleanupRule& rule, std::int64_t now);
  std::size_t removeIf(const std::function<bool(const Tuple&)>& pred);
  const TableDefinition& definition() const { return def_; }

 private:
  void compactIfLarge();
  void replaceAll(std::vector<Tuple> rows);

  TableDefinition def_;
  std::map<std::vector<Value>, Tuple, ValueLess> rows_;
  RecordLog log_;
};

/// Every inserted row, in arrival order, optionally backed by a table file.
class HistoryStore {
 public:
  explicit HistoryStore(TableDefinition def) : def_(std::move(def)) {}

  void attach(const std::filesystem::path& path, bool syncWrites);
  void append(const Tuple& tuple);
  const std::vector<Tuple>& rows() const { return rows_; }
  std::size_t size() const { return rows_.size(); }
  std::size_t cleanup(const CleanupRule& rule, std::int64_t now);
  const TableDefinition& definition() const { return def_; }

 private:
  TableDefinition def_;
  std::vector<Tuple> rows_;
  RecordLog log_;
};

}  // namespace rgma
