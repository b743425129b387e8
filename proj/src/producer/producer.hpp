#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "common/clock.hpp"
#include "common/kinds.hpp"
#include "sql/ast.hpp"
#include "store/stores.hpp"

namespace rgma {

struct PublishedTable {
  TableDefinition def;
  ViewPredicate view;
};

struct ProducerConfig {
  std::string componentId;
  ProducerType type = ProducerType::Stream;
  std::vector<PublishedTable> tables;
  std::size_t ringCapacity = 1024;
  std::int64_t terminationMs = 30000;
  std::vector<QueryClass> classes;  // Canonical only; empty means Latest and History
  /// Where stores and logs live. Required for ResilientStream; optional for
  /// DataBase and Latest (memory only when empty).
  std::filesystem::path dataDir;
};

/// One tuple on a continuous stream. `seq` increases by one per published tuple
/// of this producer; `backlog` marks tuples that predate the subscription.
struct StreamItem {
  Tuple tuple;
  std::uint64_t seq = 0;
  bool backlog = false;
};

/// Receives stream items on the insert path. Must not block; returning false detaches.
using StreamSink = std::function<bool(const StreamItem&)>;

/// User code answering Latest/History queries for a Canonical producer. Rows are
/// the concatenated columns of the query's FROM tables.
using CanonicalHandler = std::function<std::vector<std::vector<Value>>(const Query&, QueryClass)>;

class Producer {
 public:
  Producer(ProducerConfig config, const Clock& clock, CanonicalHandler handler = {});
  ~Producer();
  Producer(const Producer&) = delete;
  Producer& operator=(const Producer&) = delete;

  const ProducerConfig& config() const { return config_; }
  const std::string& id() const { return config_.componentId; }
  ProducerType type() const { return config_.type; }
  /// Identifies the sequence-number space: stable across restarts of a
  /// ResilientStream producer, fresh for every other incarnation.
  const std::string& epoch() const { return epoch_; }
  const PublishedTable* table(std::string_view name) const;
  std::vector<QueryClass> answeredClasses() const;

  /// Publishes the tuples as one batch. A ResilientStream producer has them on
  /// disk before this returns.
  void insert(std::span<const Tuple> batch);
  void insert(const Tuple& tuple) { insert(std::span<const Tuple>(&tuple, 1)); }

  /// One-shot Latest or History query; rows are full concatenated rows.
  std::vector<std::vector<Value>> answer(const Query& query, QueryClass cls) const;

  /// Attaches a continuous subscription for a single-table query. The sink first
  /// receives the buffered tuples (from `fromSeq` on, when given) as backlog.
  std::uint64_t subscribe(const Query& query, std::optional<std::uint64_t> fromSeq, StreamSink sink);
  void unsubscribe(std::uint64_t subscription);
  std::size_t subscriptions() const;

  void scheduleCleanup(CleanupRule rule);
  /// Runs every rule whose interval has elapsed; returns rows deleted.
  std::size_t runDueCleanups(std::int64_t now);

  /// Current content of one table: ring, latest or history rows.
  std::vector<Tuple> contents(std::string_view table) const;
  std::uint64_t lastSeq() const;

  /// Replaces a table's declared view. Only widening is sound once data exists;
  /// callers are responsible for that.
  void setView(std::string_view table, ViewPredicate view);

 private:
  struct Subscription {
    Query query;
    StreamSink sink;
  };
  struct ScheduledRule {
    CleanupRule rule;
    std::int64_t due = 0;
  };

  void openStores();
  void validate(const Tuple& tuple) const;
  void publishLocked(const Tuple& tuple, std::uint64_t seq);
  const PublishedTable& requireTable(std::string_view name) const;
  std::string encodeLogRecord(const Tuple& tuple, std::uint64_t seq) const;

  ProducerConfig config_;
  const Clock& clock_;
  CanonicalHandler handler_;
  std::string epoch_;

  mutable std::mutex mutex_;
  std::deque<StreamItem> ring_;
  std::uint64_t nextSeq_ = 1;
  RecordLog wal_;
  std::map<std::string, std::unique_ptr<LatestStore>> latest_;
  std::map<std::string, std::unique_ptr<HistoryStore>> history_;
  std::map<std::uint64_t, Subscription> subs_;
  std::uint64_t nextSub_ = 1;
  std::vector<ScheduledRule> rules_;
};

}  // namespace rgma
