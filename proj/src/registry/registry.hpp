#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "common/clock.hpp"
#include "common/kinds.hpp"
#include "sql/ast.hpp"
#include "store/stores.hpp"
#include "wire/message.hpp"

namespace rgma {

/// A soft-state registration. Producers get one entry per published table;
/// consumers get a single entry with an empty table.
struct RegistryEntry {
  enum class Role { Producer, Consumer };

  Role role = Role::Producer;
  std::string componentId;
  std::string endpoint;  // HOST:PORT of the component's service

  ProducerType producerType = ProducerType::Stream;
  std::string table;
  ViewPredicate view;
  std::vector<QueryClass> classes;  // Canonical only: the classes it answers

  std::string query;  // consumer SELECT text
  QueryClass queryClass = QueryClass::Continuous;

  std::int64_t terminationMs = 0;
  std::int64_t deadline = 0;       // last instant the entry is alive; for tombstones, the time of removal
  std::string master;
  std::uint64_t version = 0;       // (master, version) is the version stamp
  std::uint64_t registration = 0;  // version at the registration event that created this content
  bool tombstone = false;

  bool isProducer() const { return role == Role::Producer; }
  bool answers(QueryClass cls) const;
  /// Identity within one master: role, component and table.
  std::tuple<int, std::string, std::string> key() const {
    return {static_cast<int>(role), componentId, table};
  }

  Json toJson() const;
  static RegistryEntry fromJson(const Json& j);
  bool operator==(const RegistryEntry&) const = default;
};

/// Everything one registry masters, as exchanged during replication.
struct RegistrySnapshot {
  std::string registryId;
  std::vector<RegistryEntry> entries;
  std::vector<TableDefinition> tables;

  Json toJson() const;
  static RegistrySnapshot fromJson(const Json& j);
};

struct Notification {
  RegistryEntry consumer;
  RegistryEntry producer;
};

/// Soft-state directory with the co-located schema. All mutations serialize on
/// one mutex; notifications are returned to the caller for delivery outside it.
class Registry {
 public:
  /// With a non-empty `dataDir`, mastered entries and the schema persist there.
  Registry(std::string registryId, const Clock& clock, std::filesystem::path dataDir = {});

  const std::string& id() const { return id_; }
  const Clock& clock() const { return clock_; }

  /// Adds a table; an identical redeclaration is accepted, a conflicting one is a SchemaError.
  void declareTable(const TableDefinition& def);
  Catalog catalog() const;

  /// Stores (or replaces) a producer entry mastered here and reports the consumers to notify.
  std::vector<Notification> registerProducer(RegistryEntry entry);
  /// Stores a consumer entry and returns the producers currently relevant to it.
  std::vector<RegistryEntry> registerConsumer(RegistryEntry entry);
  /// Refreshes every live entry of the component mastered here. UnknownComponent otherwise.
  void heartbeat(const std::string& componentId, std::int64_t terminationMs);
  void unregister(const std::string& componentId);

  /// Tombstones mastered entries whose deadline has passed and drops tombstones
  /// (and orphaned foreign entries) older than ten termination intervals.
  /// Returns the expired component ids, sorted and distinct.
  std::vector<std::string> expireSweep();

  std::vector<RegistryEntry> lookup(const Query& query, QueryClass cls) const;
  std::vector<RegistryEntry> liveEntries() const;
  std::vector<RegistryEntry> allEntries() const;

  RegistrySnapshot snapshot() const;
  /// Merges a peer's snapshot. ProtocolError if it carries entries the peer does not master.
  std::vector<Notification> replicaSync(const RegistrySnapshot& peer);

  /// Deterministic serialization of every entry and table, for replica comparison.
  std::string canonicalBytes() const;

 private:
  using Key = std::tuple<std::string, int, std::string, std::string>;  // master, role, component, table

  static Key keyOf(const RegistryEntry& e);
  std::vector<RegistryEntry> lookupLocked(const Query& query, QueryClass cls, std::int64_t now) const;
  std::vector<Notification> notificationsFor(const RegistryEntry& producer, std::int64_t now) const;
  const Query* consumerQuery(const RegistryEntry& consumer) const;
  void store(const RegistryEntry& e);
  void persistEntry(const RegistryEntry& e);
  void persistErase(const RegistryEntry& e);
  void persistTable(const TableDefinition& def);
  void load();

  std::string id_;
  const Clock& clock_;
  mutable std::mutex mutex_;
  Catalog catalog_;
  std::map<Key, RegistryEntry> entries_;
  std::uint64_t counter_ = 0;
  mutable std::map<std::string, std::optional<Query>> queryCache_;
  std::unique_ptr<LatestStore> disk_;
};

}  // namespace rgma
