#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "common/kinds.hpp"
#include "producer/producer.hpp"
#include "registry/registry.hpp"
#include "sql/ast.hpp"

namespace rgma {

/// One producer a query will be sent to, with the condition left to check
/// once its views are taken into account.
struct Target {
  std::string componentId;
  std::string endpoint;
  ProducerType producerType = ProducerType::Stream;
  std::map<std::string, ViewPredicate> views;  // by table name
  Query residual;                              // the query with the residual condition

  std::string residualSql() const;
};

enum class MergePolicy { Union, LatestPerKey };

struct QueryPlan {
  Query query;
  QueryClass queryClass = QueryClass::Continuous;
  std::vector<Target> targets;
  MergePolicy merge = MergePolicy::Union;

  bool noProducers() const { return targets.empty(); }
};

/// Accepts the requested class or raises UnsupportedQueryClass (continuous joins).
QueryClass classify(const Query& query, QueryClass requested);

/// Groups registry entries per component and derives each target's residual query.
/// Components whose residual condition simplifies to FALSE are dropped.
QueryPlan plan(const Query& query, QueryClass cls, const std::vector<RegistryEntry>& lookup);

std::vector<std::string> outputColumnNames(const Query& query);
/// Picks the projected columns out of a full concatenated row.
std::vector<Value> project(const Query& query, const std::vector<Value>& fullRow);

struct TargetFailure {
  std::string componentId;
  std::string message;
};

struct RowSet {
  std::vector<std::string> columns;
  std::vector<std::vector<Value>> rows;
  std::vector<TargetFailure> failures;
  bool noProducers = false;
};

/// Full rows one target returns for a one-shot query.
using FetchFn = std::function<std::vector<std::vector<Value>>(const Target&, QueryClass)>;

RowSet executeLatest(const QueryPlan& plan, const FetchFn& fetch);
RowSet executeHistory(const QueryPlan& plan, const FetchFn& fetch);
RowSet execute(const QueryPlan& plan, const FetchFn& fetch);

/// A live continuous subscription at one producer.
class StreamLink {
 public:
  virtual ~StreamLink() = default;
  virtual bool alive() const = 0;
  virtual void close() = 0;
};

/// Where a re-attached subscription should pick up: the first sequence number
/// not yet seen, meaningful only within the same producer epoch.
struct Resume {
  std::string epoch;
  std::uint64_t fromSeq = 0;
};

/// Called for every item a producer pushes, with the epoch of its sequence numbers.
using ItemFn = std::function<void(const StreamItem& item, const std::string& epoch)>;
using SubscribeFn =
    std::function<std::unique_ptr<StreamLink>(const Target&, const std::optional<Resume>& resume, ItemFn onItem)>;
using LookupFn = std::function<std::vector<RegistryEntry>(const Query&, QueryClass)>;

struct Delivery {
  std::string producerId;
  std::uint64_t seq = 0;
  bool backlog = false;
  Tuple tuple;
  std::vector<Value> row;  // projected
};
using DeliverySink = std::function<void(const Delivery&)>;

/// A continuous query across every relevant stream producer, growing as new
/// producers appear. Delivers each producer's tuples in its publication order,
/// dropping repeats of sequence numbers already delivered after a reconnect.
class ContinuousSession {
 public:
  ContinuousSession(Query query, LookupFn lookup, SubscribeFn subscribe, DeliverySink sink);
  ~ContinuousSession();
  ContinuousSession(const ContinuousSession&) = delete;
  ContinuousSession& operator=(const ContinuousSession&) = delete;

  /// Called before a producer is attached; may veto it by throwing.
  void setAttachHook(std::function<void(const Target&)> hook) { attachHook_ = std::move(hook); }

  /// Looks up and attaches every relevant producer. Returns false when there
  /// were none (the NoProducers signal); the session stays open regardless.
  bool start();
  /// Attaches a producer announced by the registry, if it is relevant.
  void onNotification(const RegistryEntry& producer);
  /// Re-runs the lookup and (re)attaches anything missing or disconnected.
  void refresh();
  void close();

  const Query& query() const { return query_; }
  std::vector<std::string> attached() const;
  std::uint64_t delivered() const { return delivered_.load(); }
  std::vector<TargetFailure> failures() const;

 private:
  struct Source {
    std::unique_ptr<StreamLink> link;
    bool connecting = false;
  };
  struct Progress {
    std::string epoch;
    std::uint64_t lastSeq = 0;
  };

  void attachAll(const std::vector<RegistryEntry>& entries);
  void attach(const Target& target);
  void deliver(const std::string& producerId, const StreamItem& item, const std::string& epoch);

  Query query_;
  LookupFn lookup_;
  SubscribeFn subscribe_;
  DeliverySink sink_;
  std::function<void(const Target&)> attachHook_;

  mutable std::mutex mutex_;
  std::map<std::string, Source> sources_;
  std::vector<TargetFailure> failures_;
  bool closed_ = false;

  std::mutex deliverMutex_;
  std::map<std::string, Progress> progress_;
  std::atomic<std::uint64_t> delivered_{0};
  std::atomic<bool> stopped_{false};
};

}  // namespace rgma
