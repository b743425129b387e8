#include "registry/registry.hpp"

#include <algorithm>
#include <set>

#include <spdlog/spdlog.h>

#include "sql/parser.hpp"
#include "sql/relevance.hpp"
#include "wire/codec.hpp"

namespace rgma {

namespace {

constexpr std::int64_t kGcIntervals = 10;

const TableDefinition& diskTable() {
  static const TableDefinition def = TableDefinition::make(
      "registry_state", {{"key", ColumnType::String}, {"body", ColumnType::String}, {"ts", ColumnType::Timestamp}},
      {"key"});
  return def;
}

std::string diskKey(const RegistryEntry& e) {
  return "e|" + std::to_string(static_cast<int>(e.role)) + "|" + e.componentId + "|" + e.table;
}

}  // namespace

bool RegistryEntry::answers(QueryClass cls) const {
  if (producerType == ProducerType::Canonical) {
    return rgma::answers(producerType, cls) && std::find(classes.begin(), classes.end(), cls) != classes.end();
  }
  return rgma::answers(producerType, cls);
}

Json RegistryEntry::toJson() const {
  Json cls = Json::array();
  for (auto c : classes) cls.push_back(queryClassName(c));
  return {{"role", role == Role::Producer ? "producer" : "consumer"},
          {"componentId", componentId},
          {"endpoint", endpoint},
          {"producerType", producerTypeName(producerType)},
          {"table", table},
          {"view", viewToJson(view)},
          {"classes", cls},
          {"query", query},
          {"queryClass", queryClassName(queryClass)},
          {"terminationMs", terminationMs},
          {"deadline", deadline},
          {"master", master},
          {"version", version},
          {"registration", registration},
          {"tombstone", tombstone}};
}

RegistryEntry RegistryEntry::fromJson(const Json& j) {
  RegistryEntry e;
  const std::string role = stringMember(j, "role");
  if (role != "producer" && role != "consumer") fail(ErrorCode::Protocol, "bad entry role '" + role + "'");
  e.role = role == "producer" ? Role::Producer : Role::Consumer;
  e.componentId = stringMember(j, "componentId");
  e.endpoint = j.value("endpoint", std::string());
  const auto type = producerTypeFromName(j.value("producerType", std::string("Stream")));
  if (!type) fail(ErrorCode::Protocol, "bad producer type");
  e.producerType = *type;
  e.table = toLower(j.value("table", std::string()));
  if (j.contains("view")) e.view = viewFromJson(j["view"]);
  if (j.contains("classes")) {
    for (const auto& c : j["classes"]) {
      const auto qc = c.is_string() ? queryClassFromName(c.get<std::string>()) : std::nullopt;
      if (!qc) fail(ErrorCode::Protocol, "bad query class in entry");
      e.classes.push_back(*qc);
    }
  }
  e.query = j.value("query", std::string());
  const auto qc = queryClassFromName(j.value("queryClass", std::string("Continuous")));
  if (!qc) fail(ErrorCode::Protocol, "bad query class");
  e.queryClass = *qc;
  e.terminationMs = j.value("terminationMs", std::int64_t{0});
  e.deadline = j.value("deadline", std::int64_t{0});
  e.master = j.value("master", std::string());
  e.version = j.value("version", std::uint64_t{0});
  e.registration = j.value("registration", std::uint64_t{0});
  e.tombstone = j.value("tombstone", false);
  return e;
}

Json RegistrySnapshot::toJson() const {
  Json entriesJson = Json::array();
  for (const auto& e : entries) entriesJson.push_back(e.toJson());
  Json tablesJson = Json::array();
  for (const auto& t : tables) tablesJson.push_back(tableToJson(t));
  return {{"registryId", registryId}, {"entries", entriesJson}, {"tables", tablesJson}};
}

RegistrySnapshot RegistrySnapshot::fromJson(const Json& j) {
  RegistrySnapshot s;
  s.registryId = stringMember(j, "registryId");
  const auto& entries = member(j, "entries");
  const auto& tables = member(j, "tables");
  if (!entries.is_array() || !tables.is_array()) fail(ErrorCode::Protocol, "snapshot lists must be arrays");
  for (const auto& e : entries) s.entries.push_back(RegistryEntry::fromJson(e));
  for (const auto& t : tables) s.tables.push_back(tableFromJson(t));
  return s;
}

Registry::Registry(std::string registryId, const Clock& clock, std::filesystem::path dataDir)
    : id_(std::move(registryId)), clock_(clock) {
  if (id_.empty()) fail(ErrorCode::InvalidArgument, "registry id must not be empty");
  if (!dataDir.empty()) {
    disk_ = std::make_unique<LatestStore>(diskTable());
    disk_->attach(dataDir / "registry.tbl", false);
    load();
  }
}

Registry::Key Registry::keyOf(const RegistryEntry& e) {
  return {e.master, static_cast<int>(e.role), e.componentId, e.table};
}

void Registry::load() {
  for (const auto& row : disk_->rows()) {
    const auto& key = std::get<std::string>(row.values[0]);
    const auto& body = std::get<std::string>(row.values[1]);
    counter_ = std::max<std::uint64_t>(counter_, static_cast<std::uint64_t>(row.timestamp));
    if (key.rfind("t|", 0) == 0) {
      catalog_.add(tableFromJson(Json::parse(body)));
    } else if (key.rfind("e|", 0) == 0) {
      auto e = RegistryEntry::fromJson(Json::parse(body));
      if (e.master == id_) entries_[keyOf(e)] = e;
    }
  }
}

void Registry::persistEntry(const RegistryEntry& e) {
  if (!disk_ || e.master != id_) return;
  disk_->insert(makeTuple(diskTable(), {diskKey(e), e.toJson().dump(), static_cast<std::int64_t>(e.version)}));
}

void Registry::persistErase(const RegistryEntry& e) {
  if (!disk_ || e.master != id_) return;
  const std::string key = diskKey(e);
  disk_->removeIf([&](const Tuple& t) { return std::get<std::string>(t.values[0]) == key; });
  // Keep the counter high-water mark so versions never repeat after a restart.
  disk_->insert(makeTuple(diskTable(), {std::string("counter"), std::string(), static_cast<std::int64_t>(counter_)}));
}

void Registry::persistTable(const TableDefinition& def) {
  if (!disk_) return;
  disk_->insert(makeTuple(diskTable(), {"t|" + def.name(), tableToJson(def).dump(), std::int64_t{0}}));
}

void Registry::store(const RegistryEntry& e) {
  entries_[keyOf(e)] = e;
  persistEntry(e);
}

void Registry::declareTable(const TableDefinition& def) {
  std::lock_guard lock(mutex_);
  const bool fresh = catalog_.find(def.name()) == nullptr;
  catalog_.add(def);
  if (fresh) persistTable(def);
}

Catalog Registry::catalog() const {
  std::lock_guard lock(mutex_);
  return catalog_;
}

const Query* Registry::consumerQuery(const RegistryEntry& consumer) const {
  auto it = queryCache_.find(consumer.query);
  if (it == queryCache_.end()) {
    std::optional<Query> q;
    try {
      q = parseSelect(consumer.query, catalog_);
    } catch (const Error& e) {
      spdlog::warn("registry {}: consumer {} query unusable: {}", id_, consumer.componentId, e.what());
    }
    it = queryCache_.emplace(consumer.query, std::move(q)).first;
  }
  return it->second ? &*it->second : nullptr;
}

std::vector<RegistryEntry> Registry::lookupLocked(const Query& query, QueryClass cls, std::int64_t now) const {
  // Live producers able to answer the class, one copy per (component, table).
  std::map<std::pair<std::string, std::string>, const RegistryEntry*> live;
  for (const auto& [k, e] : entries_) {
    if (!e.isProducer() || e.tombstone || e.deadline < now || !e.answers(cls)) continue;
    auto& slot = live[{e.componentId, e.table}];
    if (!slot || std::tie(e.deadline, e.master) > std::tie(slot->deadline, slot->master)) slot = &e;
  }
  std::set<std::string> tables;
  for (const auto& t : query.tables) tables.insert(t.def.name());

  std::vector<RegistryEntry> out;
  if (tables.size() == 1) {
    const std::string& table = *tables.begin();
    for (const auto& [k, e] : live) {
      if (e->table == table && relevant(e->view, query, table)) out.push_back(*e);
    }
    return out;
  }
  // Joins are answered by a single producer that publishes every table involved.
  std::map<std::string, std::map<std::string, const RegistryEntry*>> byComponent;
  for (const auto& [k, e] : live) {
    if (tables.count(e->table)) byComponent[e->componentId][e->table] = e;
  }
  for (const auto& [component, perTable] : byComponent) {
    if (perTable.size() != tables.size()) continue;
    std::map<std::string, ViewPredicate> views;
    for (const auto& [table, e] : perTable) views[table] = e->view;
    if (!relevantAll(views, query)) continue;
    for (const auto& [table, e] : perTable) out.push_back(*e);
  }
  return out;
}

std::vector<Notification> Registry::notificationsFor(const RegistryEntry& producer, std::int64_t now) const {
  std::vector<Notification> out;
  for (const auto& [k, c] : entries_) {
    if (c.isProducer() || c.master != id_ || c.tombstone || c.deadline < now) continue;
    const Query* q = consumerQuery(c);
    if (!q) continue;
    const bool mentions = std::any_of(q->tables.begin(), q->tables.end(),
                                      [&](const TableRef& t) { return t.def.name() == producer.table; });
    if (!mentions) continue;
    for (const auto& match : lookupLocked(*q, c.queryClass, now)) {
      if (match.componentId == producer.componentId && match.table == producer.table) {
        out.push_back({c, producer});
        break;
      }
    }
  }
  return out;
}

std::vector<Notification> Registry::registerProducer(RegistryEntry entry) {
  std::lock_guard lock(mutex_);
  const TableDefinition* def = catalog_.find(entry.table);
  if (!def) fail(ErrorCode::Schema, "view references unknown table '" + entry.table + "'");
  if (entry.componentId.empty()) fail(ErrorCode::InvalidArgument, "component id must not be empty");
  if (entry.terminationMs <= 0) fail(ErrorCode::InvalidArgument, "termination interval must be positive");
  entry.role = RegistryEntry::Role::Producer;
  entry.table = def->name();
  entry.view = entry.view.validated(*def);
  if (entry.producerType == ProducerType::Canonical) {
    if (entry.classes.empty()) entry.classes = {QueryClass::Latest, QueryClass::History};
    for (auto c : entry.classes) {
      if (!answers(ProducerType::Canonical, c)) {
        fail(ErrorCode::UnsupportedQueryClass, "a canonical producer cannot answer continuous queries");
      }
    }
    std::sort(entry.classes.begin(), entry.classes.end());
    entry.classes.erase(std::unique(entry.classes.begin(), entry.classes.end()), entry.classes.end());
  } else {
    entry.classes.clear();
  }
  entry.query.clear();
  const std::int64_t now = clock_.nowMs();
  entry.master = id_;
  entry.version = ++counter_;
  entry.registration = entry.version;
  entry.deadline = now + entry.terminationMs;
  entry.tombstone = false;
  store(entry);
  return notificationsFor(entry, now);
}

std::vector<RegistryEntry> Registry::registerConsumer(RegistryEntry entry) {
  std::lock_guard lock(mutex_);
  if (entry.componentId.empty()) fail(ErrorCode::InvalidArgument, "component id must not be empty");
  if (entry.terminationMs <= 0) fail(ErrorCode::InvalidArgument, "termination interval must be positive");
  const Query query = parseSelect(entry.query, catalog_);
  if (entry.queryClass == QueryClass::Continuous && query.isJoin()) {
    fail(ErrorCode::UnsupportedQueryClass, "continuous queries cannot join tables");
  }
  const std::int64_t now = clock_.nowMs();
  entry.role = RegistryEntry::Role::Consumer;
  entry.table.clear();
  entry.view = {};
  entry.classes.clear();
  entry.master = id_;
  entry.version = ++counter_;
  entry.registration = entry.version;
  entry.deadline = now + entry.terminationMs;
  entry.tombstone = false;
  store(entry);
  return lookupLocked(query, entry.queryClass, now);
}

void Registry::heartbeat(const std::string& componentId, std::int64_t terminationMs) {
  std::lock_guard lock(mutex_);
  if (terminationMs <= 0) fail(ErrorCode::InvalidArgument, "termination interval must be positive");
  const std::int64_t now = clock_.nowMs();
  bool found = false;
  for (auto& [k, e] : entries_) {
    if (e.componentId != componentId || e.master != id_ || e.tombstone || e.deadline < now) continue;
    found = true;
    e.terminationMs = terminationMs;
    e.deadline = now + terminationMs;
    e.version = ++counter_;
    persistEntry(e);
  }
  if (!found) fail(ErrorCode::UnknownComponent, "component '" + componentId + "' is not registered here");
}

void Registry::unregister(const std::string& componentId) {
  std::lock_guard lock(mutex_);
  const std::int64_t now = clock_.nowMs();
  for (auto& [k, e] : entries_) {
    if (e.componentId != componentId || e.master != id_ || e.tombstone) continue;
    e.tombstone = true;
    e.deadline = now;
    e.version = ++counter_;
    persistEntry(e);
  }
}

std::vector<std::string> Registry::expireSweep() {
  std::lock_guard lock(mutex_);
  const std::int64_t now = clock_.nowMs();
  std::set<std::string> expired;
  for (auto it = entries_.begin(); it != entries_.end();) {
    auto& e = it->second;
    if (e.master == id_ && !e.tombstone && e.deadline < now) {
      expired.insert(e.componentId);
      e.tombstone = true;
      e.deadline = now;
      e.version = ++counter_;
      persistEntry(e);
    }
    const bool stale = e.deadline + kGcIntervals * e.terminationMs <= now;
    const bool orphan = e.master != id_ && !e.tombstone && stale;
    if ((e.tombstone && stale) || orphan) {
      persistErase(e);
      it = entries_.erase(it);
    } else {
      ++it;
    }
  }
  return {expired.begin(), expired.end()};
}

std::vector<RegistryEntry> Registry::lookup(const Query& query, QueryClass cls) const {
  std::lock_guard lock(mutex_);
  for (const auto& t : query.tables) {
    if (!catalog_.find(t.def.name())) fail(ErrorCode::Schema, "unknown table '" + t.def.name() + "'");
  }
  return lookupLocked(query, cls, clock_.nowMs());
}

std::vector<RegistryEntry> Registry::liveEntries() const {
  std::lock_guard lock(mutex_);
  const std::int64_t now = clock_.nowMs();
  std::vector<RegistryEntry> out;
  for (const auto& [k, e] : entries_) {
    if (!e.tombstone && e.deadline >= now) out.push_back(e);
  }
  return out;
}

std::vector<RegistryEntry> Registry::allEntries() const {
  std::lock_guard lock(mutex_);
  std::vector<RegistryEntry> out;
  for (const auto& [k, e] : entries_) out.push_back(e);
  return out;
}

RegistrySnapshot Registry::snapshot() const {
  std::lock_guard lock(mutex_);
  RegistrySnapshot s;
  s.registryId = id_;
  for (const auto& [k, e] : entries_) {
    if (e.master == id_) s.entries.push_back(e);
  }
  for (const auto& [name, def] : catalog_.tables()) s.tables.push_back(def);
  return s;
}

std::vector<Notification> Registry::replicaSync(const RegistrySnapshot& peer) {
  std::lock_guard lock(mutex_);
  if (peer.registryId == id_) fail(ErrorCode::Protocol, "snapshot claims to come from this registry");
  for (const auto& e : peer.entries) {
    if (e.master != peer.registryId) {
      fail(ErrorCode::Protocol, "registry " + peer.registryId + " sent an entry mastered by " + e.master);
    }
  }
  for (const auto& def : peer.tables) {
    try {
      const bool fresh = catalog_.find(def.name()) == nullptr;
      catalog_.add(def);
      if (fresh) persistTable(def);
    } catch (const Error& err) {
      spdlog::warn("registry {}: ignoring table from {}: {}", id_, peer.registryId, err.what());
    }
  }

  const std::int64_t now = clock_.nowMs();
  std::vector<RegistryEntry> registered;
  std::set<Key> present;
  for (const auto& e : peer.entries) {
    const Key k = keyOf(e);
    present.insert(k);
    auto it = entries_.find(k);
    if (it != entries_.end() && e.version <= it->second.version) continue;
    const bool newEvent = it == entries_.end() || it->second.registration != e.registration;
    entries_[k] = e;
    if (newEvent && e.isProducer() && !e.tombstone && e.deadline >= now) registered.push_back(e);
  }
  // The snapshot is complete, so anything of the peer's it no longer lists was collected there.
  for (auto it = entries_.begin(); it != entries_.end();) {
    if (it->second.master == peer.registryId && !present.count(it->first)) {
      it = entries_.erase(it);
    } else {
      ++it;
    }
  }
  std::vector<Notification> out;
  for (const auto& p : registered) {
    auto n = notificationsFor(p, now);
    out.insert(out.end(), n.begin(), n.end());
  }
  return out;
}

std::string Registry::canonicalBytes() const {
  std::lock_guard lock(mutex_);
  std::string out;
  for (const auto& [name, def] : catalog_.tables()) out += "table " + def.canonicalText() + "\n";
  for (const auto& [k, e] : entries_) out += e.toJson().dump() + "\n";
  return out;
}

}  // namespace rgma
