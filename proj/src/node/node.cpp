#include "node/node.hpp"

#include <algorithm>

#include "httplib.h"
#include "spdlog/spdlog.h"
#include "sql/parser.hpp"
#include "wire/codec.hpp"

namespace rgma {

namespace {

constexpr std::size_t kBatchItems = 4096;
constexpr std::size_t kHttpBuffer = 10000;
constexpr std::size_t kHttpPage = 1000;
constexpr std::int64_t kHttpIdleMs = 60000;

struct Defer {
  std::function<void()> fn;
  ~Defer() {
    if (fn) fn();
  }
};

/// Bounded hand-off from insert paths to a connection's sender loop. A push
/// that would exceed the bound marks the queue overflowed instead of blocking.
template <class T>
class Outbox {
 public:
  explicit Outbox(std::size_t limit) : limit_(limit) {}

  bool push(T item) {
    {
      std::lock_guard lock(mutex_);
      if (overflow_) return false;
      if (items_.size() >= limit_) {
        overflow_ = true;
      } else {
        items_.push_back(std::move(item));
      }
    }
    cv_.notify_one();
    return !overflow_;
  }

  std::vector<T> take(int waitMs, std::size_t max) {
    std::unique_lock lock(mutex_);
    cv_.wait_for(lock, std::chrono::milliseconds(waitMs), [this] { return !items_.empty() || overflow_; });
    const auto n = std::min(max, items_.size());
    std::vector<T> out(std::make_move_iterator(items_.begin()),
                       std::make_move_iterator(items_.begin() + static_cast<std::ptrdiff_t>(n)));
    items_.erase(items_.begin(), items_.begin() + static_cast<std::ptrdiff_t>(n));
    return out;
  }

  bool overflowed() {
    std::lock_guard lock(mutex_);
    return overflow_ && items_.empty();
  }

 private:
  std::size_t limit_;
  std::mutex mutex_;
  std::condition_variable cv_;
  std::deque<T> items_;
  bool overflow_ = false;
};

QueryClass classOf(const Json& body) {
  const auto name = body.value("class", std::string("continuous"));
  const auto cls = queryClassFromName(name);
  if (!cls) fail(ErrorCode::InvalidArgument, "unknown query class '" + name + "'");
  return *cls;
}

Json errorJson(ErrorCode code, const std::string& message) {
  return {{"error", {{"code", std::string(errorName(code))}, {"message", message}}}};
}

Json tableInfo(const TableDefinition& def) {
  Json cols = Json::array();
  for (const auto& c : def.columns()) cols.push_back({{"name", c.name}, {"type", std::string(typeName(c.type))}});
  return {{"name", def.name()},
          {"sql", renderCreateTable(def)},
          {"key", def.definingKeyNames()},
          {"timestamp", def.columns()[def.timestampIndex()].name},
          {"columns", cols}};
}

Json failuresJson(const std::vector<TargetFailure>& failures) {
  Json a = Json::array();
  for (const auto& f : failures) a.push_back({{"componentId", f.componentId}, {"message", f.message}});
  return a;
}

bool peerClosed(Connection& conn) {
  try {
    conn.receive(0);
    return false;
  } catch (const std::exception&) {
    return true;
  }
}

std::string sanitize(const std::string& s) {
  std::string out = s;
  for (auto& c : out) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') c = '-';
  }
  return out;
}

}  // namespace

NodeConfig NodeConfig::fromJson(const Json& j) {
  if (!j.is_object()) fail(ErrorCode::InvalidArgument, "node config must be a JSON object");
  NodeConfig c;
  c.nodeId = j.value("nodeId", c.nodeId);
  c.listen = j.value("listen", c.listen);
  c.advertise = j.value("advertise", c.advertise);
  c.dataDir = j.value("dataDir", std::string());
  if (j.contains("registry")) {
    const auto& r = j["registry"];
    if (r.is_string()) {
      c.registryEndpoint = r.get<std::string>();
    } else {
      c.hostRegistry = r.value("host", true);
      c.registryId = r.value("id", c.registryId);
      c.peers = r.value("peers", std::vector<std::string>{});
      c.syncPeriodMs = r.value("syncPeriodMs", c.syncPeriodMs);
      c.sweepPeriodMs = r.value("sweepPeriodMs", c.sweepPeriodMs);
      c.registryEndpoint = r.value("endpoint", c.registryEndpoint);
    }
  }
  c.schema = j.value("schema", Json::array());
  c.producers = j.value("producers", Json::array());
  c.archivers = j.value("archivers", Json::array());
  if (j.contains("http")) {
    c.httpListen = j["http"].value("listen", std::string("127.0.0.1:0"));
    c.httpRoot = j["http"].value("root", std::string());
  }
  c.refreshPeriodMs = j.value("refreshPeriodMs", c.refreshPeriodMs);
  c.consumerTerminationMs = j.value("consumerTerminationMs", c.consumerTerminationMs);
  c.timeoutMs = j.value("timeoutMs", c.timeoutMs);
  c.streamQueueLimit = j.value("streamQueueLimit", c.streamQueueLimit);
  return c;
}

class Node::LocalRegistryApi : public RegistryApi {
 public:
  explicit LocalRegistryApi(Node& node) : node_(node) {}

  void declareTable(const TableDefinition& def) override { node_.registry_->declareTable(def); }
  Catalog catalog() override { return node_.registry_->catalog(); }
  void registerProducer(const RegistryEntry& entry) override {
    node_.enqueueNotifications(node_.registry_->registerProducer(entry));
  }
  std::vector<RegistryEntry> registerConsumer(const RegistryEntry& entry) override {
    return node_.registry_->registerConsumer(entry);
  }
  void heartbeat(const std::string& id, std::int64_t terminationMs) override {
    node_.registry_->heartbeat(id, terminationMs);
  }
  void unregister(const std::string& id) override { node_.registry_->unregister(id); }
  std::vector<RegistryEntry> lookup(const Query& query, QueryClass cls) override {
    return node_.registry_->lookup(query, cls);
  }
  std::vector<RegistryEntry> entries() override { return node_.registry_->liveEntries(); }

 private:
  Node& node_;
};

struct Node::HttpQuery {
  std::string id;
  std::vector<std::string> columns;
  bool noProducers = false;
  std::mutex mutex;
  std::condition_variable cv;
  std::deque<std::pair<Json, std::string>> rows;  // row, originating producer
  std::size_t dropped = 0;
  bool done = false;
  std::int64_t lastPollMs = 0;
  std::optional<ContinuousHandle> handle;
};

const Clock& Node::defaultClock() {
  static const SystemClock clock;
  return clock;
}

Node::Node(NodeConfig config, const Clock& clock)
    : config_(std::move(config)), clock_(clock), remote_(config_.timeoutMs) {}

Node::~Node() { stop(); }

std::uint16_t Node::port() const { return server_ ? server_->port() : 0; }

void Node::start() {
  if (started_) return;
  started_ = true;
  const auto listen = HostPort::parse(config_.listen);
  server_ = std::make_unique<TcpServer>(listen.host, listen.port,
                                        [this](const std::shared_ptr<Connection>& c) { serve(c); });
  endpoint_ = config_.advertise.empty() ? HostPort{listen.host, server_->port()}.str() : config_.advertise;
  if (config_.nodeId.empty()) config_.nodeId = "n" + sanitize(endpoint_);

  if (config_.hostRegistry) {
    std::filesystem::path dir;
    if (!config_.dataDir.empty()) dir = config_.dataDir / "registry";
    registry_ = std::make_unique<Registry>(config_.registryId.empty() ? config_.nodeId : config_.registryId, clock_, dir);
    registryApi_ = std::make_unique<LocalRegistryApi>(*this);
  } else {
    if (config_.registryEndpoint.empty()) fail(ErrorCode::InvalidArgument, "node needs a registry endpoint or its own registry");
    registryApi_ = std::make_unique<RemoteRegistry>(HostPort::parse(config_.registryEndpoint), config_.timeoutMs);
  }
  for (const auto& t : config_.schema) registryApi_->declareTable(tableFromJson(t));
  {
    std::lock_guard lock(stopMutex_);
    ready_ = true;
  }
  stopCv_.notify_all();

  spawn(20, [this] { heartbeatTick(); });
  spawn(config_.refreshPeriodMs, [this] { refreshTick(); });
  spawn(config_.sweepPeriodMs, [this] { housekeepingTick(); });
  if (registry_) {
    threads_.emplace_back([this] { notifierLoop(); });
    if (!config_.peers.empty()) spawn(config_.syncPeriodMs, [this] { syncTick(); });
  }
  for (const auto& p : config_.producers) createProducer(p);
  for (const auto& a : config_.archivers) createArchiver(a);
  if (!config_.httpListen.empty()) startHttp();
  spdlog::info("node {} serving on {}{}", config_.nodeId, endpoint_, registry_ ? " with a registry" : "");
}

void Node::stop(bool unregister) {
  if (!started_ || stopping_.exchange(true)) return;
  stopCv_.notify_all();
  notifyCv_.notify_all();
  if (http_) static_cast<httplib::Server*>(http_.get())->stop();
  if (httpThread_.joinable()) httpThread_.join();
  std::vector<std::shared_ptr<HttpQuery>> queries;
  {
    std::lock_guard lock(httpMutex_);
    for (auto& [id, q] : httpQueries_) queries.push_back(q);
    httpQueries_.clear();
  }
  for (auto& q : queries) {
    if (q->handle) q->handle->session->close();
  }
  if (server_) server_->stop();
  std::map<std::string, std::shared_ptr<Archiver>> archivers;
  {
    std::lock_guard lock(mutex_);
    archivers.swap(archivers_);
    notifyTargets_.clear();
    refreshers_.clear();
  }
  for (auto& [id, a] : archivers) a->stop();
  for (auto& t : threads_) t.join();
  threads_.clear();
  if (unregister && registryApi_) {
    std::vector<std::string> ids;
    {
      std::lock_guard lock(regMutex_);
      for (const auto& [id, r] : registrations_) ids.push_back(id);
      registrations_.clear();
    }
    for (const auto& id : ids) {
      try {
        registryApi_->unregister(id);
      } catch (const std::exception&) {
      }
    }
  }
  {
    std::lock_guard lock(mutex_);
    producers_.clear();
  }
}

void Node::spawn(std::int64_t periodMs, std::function<void()> fn) {
  threads_.emplace_back([this, periodMs, fn = std::move(fn)] {
    std::unique_lock lock(stopMutex_);
    while (!stopping_) {
      lock.unlock();
      try {
        fn();
      } catch (const std::exception& e) {
        spdlog::warn("node {}: {}", config_.nodeId, e.what());
      }
      lock.lock();
      stopCv_.wait_for(lock, std::chrono::milliseconds(periodMs), [this] { return stopping_.load(); });
    }
  });
}

Catalog Node::catalog() { return registryApi_->catalog(); }

std::string Node::newIdLocked(const std::string& stem) {
  return config_.nodeId + "-" + stem + "-" + std::to_string(++counter_);
}

// ---- connection handling

void Node::serve(const std::shared_ptr<Connection>& conn) {
  {
    std::unique_lock lock(stopMutex_);
    stopCv_.wait(lock, [this] { return ready_ || stopping_.load(); });
  }
  while (!stopping_) {
    std::optional<Message> m;
    try {
      m = conn->receive(-1);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::Connection) {
        try {
          conn->send(errorFor(Message{}, e.code(), e.what()));
        } catch (const std::exception&) {
        }
      }
      return;
    }
    if (!m) continue;
    try {
      if (!dispatch(conn, *m)) return;
    } catch (const Error& e) {
      try {
        conn->send(errorFor(*m, e.code(), e.what()));
      } catch (const std::exception&) {
        return;
      }
    } catch (const std::exception& e) {
      try {
        conn->send(errorFor(*m, ErrorCode::Internal, e.what()));
      } catch (const std::exception&) {
        return;
      }
    }
  }
}

bool Node::dispatch(const std::shared_ptr<Connection>& conn, const Message& m) {
  const Json& b = m.body;
  switch (m.kind) {
    case MessageKind::DeclareTable: {
      const auto def = tableFromJson(b);
      registryApi_->declareTable(def);
      conn->send(ackFor(m, {{"table", def.name()}}));
      return true;
    }
    case MessageKind::ListTables:
      conn->send(ackFor(m, {{"tables", catalogToJson(catalog())}}));
      return true;
    case MessageKind::DescribeTable:
      conn->send(ackFor(m, tableInfo(catalog().get(stringMember(b, "name")))));
      return true;
    case MessageKind::RegisterProducer:
      registryApi_->registerProducer(RegistryEntry::fromJson(member(b, "entry")));
      conn->send(ackFor(m));
      return true;
    case MessageKind::RegisterConsumer:
      conn->send(ackFor(m, {{"producers", entriesToJson(registryApi_->registerConsumer(
                                              RegistryEntry::fromJson(member(b, "entry"))))}}));
      return true;
    case MessageKind::Heartbeat:
      registryApi_->heartbeat(stringMember(b, "componentId"), intMember(b, "terminationMs"));
      conn->send(ackFor(m));
      return true;
    case MessageKind::Unregister: {
      const auto id = stringMember(b, "componentId");
      const bool removed = removeComponent(id);
      if (!removed) registryApi_->unregister(id);
      conn->send(ackFor(m, {{"removed", removed}}));
      return true;
    }
    case MessageKind::Lookup: {
      const auto q = parseSelect(stringMember(b, "sql"), catalog());
      conn->send(ackFor(m, {{"producers", entriesToJson(registryApi_->lookup(q, classOf(b)))}}));
      return true;
    }
    case MessageKind::ListEntries:
      conn->send(ackFor(m, {{"entries", entriesToJson(registryApi_->entries())}}));
      return true;
    case MessageKind::RegistrySync: {
      if (!registry_) fail(ErrorCode::Protocol, "this node hosts no registry");
      enqueueNotifications(registry_->replicaSync(RegistrySnapshot::fromJson(member(b, "snapshot"))));
      conn->send(ackFor(m, {{"snapshot", registry_->snapshot().toJson()}}));
      return true;
    }
    case MessageKind::NotifyNewProducer: {
      const auto consumer = stringMember(b, "consumer");
      const auto producer = RegistryEntry::fromJson(member(b, "producer"));
      conn->send(ackFor(m));
      notifyLocal(consumer, producer);
      return true;
    }
    case MessageKind::Insert:
      conn->send(ackFor(m, {{"count", insert(b)}}));
      return true;
    case MessageKind::CreateProducer:
      conn->send(ackFor(m, {{"componentId", createProducer(b, b.value("session", std::string()))}}));
      return true;
    case MessageKind::CreateArchiver:
      conn->send(ackFor(m, {{"componentId", createArchiver(b, b.value("session", std::string()))}}));
      return true;
    case MessageKind::StartQuery:
      return b.contains("producer") ? serveProducerQuery(conn, m) : serveConsumerQuery(conn, m);
    default:
      fail(ErrorCode::Protocol, "unexpected " + std::string(kindName(m.kind)) + " message");
  }
}

bool Node::serveProducerQuery(const std::shared_ptr<Connection>& conn, const Message& m) {
  const auto id = stringMember(m.body, "producer");
  auto p = producer(id);
  if (!p) fail(ErrorCode::UnknownComponent, "no producer " + id + " on this node");
  Catalog local;
  for (const auto& t : p->config().tables) local.add(t.def);
  const Query q = parseSelect(stringMember(m.body, "sql"), local);
  const QueryClass cls = classOf(m.body);

  if (cls != QueryClass::Continuous) {
    const auto rows = p->answer(q, cls);
    for (std::size_t i = 0; i < rows.size(); i += kBatchItems) {
      Json batch = Json::array();
      for (std::size_t k = i; k < std::min(rows.size(), i + kBatchItems); ++k) batch.push_back(rowToJson(rows[k]));
      conn->send(makeMessage(MessageKind::TupleBatch, m.requestId, {{"rows", batch}}));
    }
    conn->send(makeMessage(MessageKind::EndOfResults, m.requestId, {{"count", rows.size()}}));
    return true;
  }

  std::optional<std::uint64_t> from;
  if (m.body.contains("resume")) {
    const auto& r = m.body["resume"];
    if (stringMember(r, "epoch") == p->epoch()) from = static_cast<std::uint64_t>(intMember(r, "fromSeq"));
  }
  auto box = std::make_shared<Outbox<StreamItem>>(config_.streamQueueLimit);
  const auto sub = p->subscribe(q, from, [box](const StreamItem& item) { return box->push(item); });
  Defer unsubscribe{[&] { p->unsubscribe(sub); }};

  auto encode = [](std::vector<StreamItem> items) {
    Json a = Json::array();
    for (const auto& it : items) {
      Json j = {{"seq", it.seq}, {"row", rowToJson(it.tuple.values)}};
      if (it.backlog) j["backlog"] = true;
      a.push_back(std::move(j));
    }
    return a;
  };
  conn->send(makeMessage(MessageKind::TupleBatch, m.requestId,
                         {{"epoch", p->epoch()}, {"items", encode(box->take(0, SIZE_MAX))}}));
  while (!stopping_) {
    auto items = box->take(100, kBatchItems);
    if (!items.empty()) {
      conn->send(makeMessage(MessageKind::TupleBatch, m.requestId, {{"items", encode(std::move(items))}}));
      continue;
    }
    if (box->overflowed()) {
      conn->send(errorFor(m, ErrorCode::LimitExceeded, "subscriber fell too far behind producer " + id));
      break;
    }
    if (producer(id) != p) {
      conn->send(makeMessage(MessageKind::EndOfResults, m.requestId, {{"reason", "producer closed"}}));
      break;
    }
    if (peerClosed(*conn)) break;
  }
  return false;
}

bool Node::serveConsumerQuery(const std::shared_ptr<Connection>& conn, const Message& m) {
  const auto sql = stringMember(m.body, "sql");
  const QueryClass cls = classOf(m.body);
  if (cls != QueryClass::Continuous) {
    const auto rs = query(sql, cls);
    std::size_t i = 0;
    do {
      Json batch = Json::array();
      for (std::size_t k = i; k < std::min(rs.rows.size(), i + kBatchItems); ++k) batch.push_back(rowToJson(rs.rows[k]));
      Json body = {{"rows", batch}};
      if (i == 0) {
        body["columns"] = rs.columns;
        body["noProducers"] = rs.noProducers;
        body["failures"] = failuresJson(rs.failures);
      }
      conn->send(makeMessage(MessageKind::TupleBatch, m.requestId, body));
      i += kBatchItems;
    } while (i < rs.rows.size());
    conn->send(makeMessage(MessageKind::EndOfResults, m.requestId, {{"count", rs.rows.size()}}));
    return true;
  }

  auto box = std::make_shared<Outbox<Delivery>>(config_.streamQueueLimit);
  const auto handle = openContinuous(sql, [box](const Delivery& d) { box->push(d); });
  Defer close{[&] { closeContinuous(handle); }};
  conn->send(makeMessage(MessageKind::TupleBatch, m.requestId,
                         {{"columns", handle.columns},
                          {"noProducers", handle.noProducers},
                          {"consumer", handle.consumerId},
                          {"rows", Json::array()},
                          {"origins", Json::array()}}));
  while (!stopping_) {
    auto items = box->take(100, kBatchItems);
    if (!items.empty()) {
      Json rows = Json::array();
      Json origins = Json::array();
      for (const auto& d : items) {
        rows.push_back(rowToJson(d.row));
        origins.push_back(d.producerId);
      }
      conn->send(makeMessage(MessageKind::TupleBatch, m.requestId, {{"rows", rows}, {"origins", origins}}));
      continue;
    }
    if (box->overflowed()) {
      conn->send(errorFor(m, ErrorCode::LimitExceeded, "consumer fell too far behind"));
      break;
    }
    if (peerClosed(*conn)) break;
  }
  if (stopping_) {
    try {
      conn->send(makeMessage(MessageKind::EndOfResults, m.requestId, {{"reason", "node stopping"}}));
    } catch (const std::exception&) {
    }
  }
  return false;
}

void Node::notifyLocal(const std::string& consumerId, const RegistryEntry& producer) {
  std::function<void(const RegistryEntry&)> fn;
  {
    std::lock_guard lock(mutex_);
    auto it = notifyTargets_.find(consumerId);
    if (it == notifyTargets_.end()) return;
    fn = it->second;
  }
  fn(producer);
}

// ---- queries

RowSet Node::query(const std::string& sql, QueryClass cls) {
  const Query q = parseSelect(sql, catalog());
  cls = classify(q, cls);
  if (cls == QueryClass::Continuous) fail(ErrorCode::InvalidArgument, "continuous queries run as sessions");
  return execute(plan(q, cls, registryApi_->lookup(q, cls)), remote_.fetcher());
}

ContinuousHandle Node::openContinuous(const std::string& sql, DeliverySink sink) {
  Query q = parseSelect(sql, catalog());
  classify(q, QueryClass::Continuous);
  ContinuousHandle h;
  {
    std::lock_guard lock(mutex_);
    h.consumerId = newIdLocked("consumer");
  }
  h.columns = outputColumnNames(q);
  auto session = std::make_shared<ContinuousSession>(
      std::move(q), [this](const Query& query, QueryClass c) { return registryApi_->lookup(query, c); },
      remote_.subscriber(), std::move(sink));
  std::weak_ptr<ContinuousSession> weak = session;
  {
    std::lock_guard lock(mutex_);
    notifyTargets_[h.consumerId] = [weak](const RegistryEntry& e) {
      if (auto s = weak.lock()) s->onNotification(e);
    };
    refreshers_[h.consumerId] = [weak] {
      if (auto s = weak.lock()) s->refresh();
    };
  }
  RegistryEntry ce;
  ce.role = RegistryEntry::Role::Consumer;
  ce.componentId = h.consumerId;
  ce.endpoint = endpoint_;
  ce.query = sql;
  ce.queryClass = QueryClass::Continuous;
  ce.terminationMs = config_.consumerTerminationMs;
  try {
    addRegistration(h.consumerId, Registration{{ce}, ce.terminationMs, 0, true});
  } catch (const Error& e) {
    spdlog::warn("consumer {} could not register yet: {}", h.consumerId, e.what());
  }
  h.noProducers = !session->start();
  h.session = std::move(session);
  return h;
}

void Node::closeContinuous(const ContinuousHandle& handle) {
  {
    std::lock_guard lock(mutex_);
    notifyTargets_.erase(handle.consumerId);
    refreshers_.erase(handle.consumerId);
  }
  dropRegistration(handle.consumerId);
  if (handle.session) handle.session->close();
}

// ---- hosted components

std::string Node::createProducer(const Json& spec, const std::string& session) {
  const auto typeText = stringMember(spec, "type");
  const auto type = producerTypeFromName(typeText);
  if (!type) fail(ErrorCode::InvalidArgument, "unknown producer type '" + typeText + "'");
  const auto cat = catalog();

  ProducerConfig pc;
  pc.type = *type;
  Json tables = spec.contains("tables")
                    ? spec["tables"]
                    : Json::array({{{"table", stringMember(spec, "table")}, {"view", spec.value("view", Json())}}});
  if (!tables.is_array() || tables.empty()) fail(ErrorCode::InvalidArgument, "producer publishes no tables");
  for (const auto& t : tables) {
    const auto& def = cat.get(t.is_string() ? t.get<std::string>() : stringMember(t, "table"));
    ViewPredicate view;
    if (t.is_object() && t.contains("view") && !t["view"].is_null()) {
      const auto& v = t["view"];
      if (v.is_string()) {
        if (!v.get<std::string>().empty()) view = parseView(v.get<std::string>(), def);
      } else {
        view = viewFromJson(v);
      }
    }
    pc.tables.push_back({def, view});
  }
  pc.ringCapacity = spec.value("ringCapacity", pc.ringCapacity);
  pc.terminationMs = spec.value("terminationMs", pc.terminationMs);
  for (const auto& c : spec.value("classes", std::vector<std::string>{})) {
    const auto cls = queryClassFromName(c);
    if (!cls) fail(ErrorCode::InvalidArgument, "unknown query class '" + c + "'");
    pc.classes.push_back(*cls);
  }
  if (!config_.dataDir.empty()) {
    pc.dataDir = config_.dataDir / "producers";
  } else if (pc.type == ProducerType::ResilientStream) {
    fail(ErrorCode::InvalidArgument, "a resilient stream producer needs a node data directory");
  }

  std::string id = spec.value("componentId", std::string());
  {
    std::lock_guard lock(mutex_);
    if (!session.empty()) {
      const auto& held = sessions_[session].producers;
      auto it = held.find(pc.type);
      if (it != held.end() && producers_.count(it->second)) {
        fail(ErrorCode::LimitExceeded, "session " + session + " already has a " + std::string(producerTypeName(pc.type)) +
                                           " producer (" + it->second + ")");
      }
    }
    if (id.empty()) id = newIdLocked(toLower(producerTypeName(pc.type)));
    if (producers_.count(id) || archivers_.count(id)) fail(ErrorCode::InvalidArgument, "component " + id + " already exists");
  }
  pc.componentId = id;
  auto p = std::make_shared<Producer>(pc, clock_);
  for (const auto& c : spec.value("cleanup", Json::array())) {
    const auto& def = cat.get(stringMember(c, "table"));
    const auto interval = c.value("intervalMs", std::int64_t{60000});
    p->scheduleCleanup(c.contains("where") ? CleanupRule::whereRule(def, stringMember(c, "where"), interval)
                                           : CleanupRule::keepNewestRule(
                                                 def, static_cast<std::size_t>(intMember(c, "keepNewest")), interval));
  }
  {
    std::lock_guard lock(mutex_);
    if (producers_.count(id)) fail(ErrorCode::InvalidArgument, "component " + id + " already exists");
    producers_[id] = p;
    if (!session.empty()) sessions_[session].producers[pc.type] = id;
  }
  Registration reg;
  reg.terminationMs = pc.terminationMs;
  for (const auto& t : p->config().tables) {
    RegistryEntry e;
    e.componentId = id;
    e.endpoint = endpoint_;
    e.producerType = pc.type;
    e.table = t.def.name();
    e.view = t.view;
    if (pc.type == ProducerType::Canonical) e.classes = p->answeredClasses();
    e.terminationMs = pc.terminationMs;
    reg.entries.push_back(std::move(e));
  }
  try {
    addRegistration(id, std::move(reg));
  } catch (...) {
    removeComponent(id);
    throw;
  }
  spdlog::info("node {}: {} producer {} publishing {}", config_.nodeId, producerTypeName(pc.type), id,
               p->config().tables.front().def.name());
  return id;
}

std::string Node::createArchiver(const Json& spec, const std::string& session) {
  const auto sinkId = stringMember(spec, "sink");
  auto sink = producer(sinkId);
  if (!sink) fail(ErrorCode::UnknownComponent, "no producer " + sinkId + " on this node to archive into");
  ArchiverSpec as;
  if (spec.contains("tables")) {
    for (const auto& t : spec["tables"]) {
      if (t.is_string()) {
        as.tables.push_back({t.get<std::string>(), ""});
      } else {
        as.tables.push_back({stringMember(t, "table"), t.value("condition", std::string())});
      }
    }
  } else {
    for (const auto& t : sink->config().tables) as.tables.push_back({t.def.name(), ""});
  }
  if (spec.contains("sourceClass")) as.sourceClass = classOf({{"class", spec["sourceClass"]}});
  std::string id = spec.value("componentId", std::string());
  {
    std::lock_guard lock(mutex_);
    if (!session.empty()) {
      const auto& held = sessions_[session].archiver;
      if (!held.empty() && archivers_.count(held)) {
        fail(ErrorCode::LimitExceeded, "session " + session + " already has an archiver (" + held + ")");
      }
    }
    if (id.empty()) id = newIdLocked("archiver");
    if (producers_.count(id) || archivers_.count(id)) fail(ErrorCode::InvalidArgument, "component " + id + " already exists");
  }
  as.componentId = id;
  auto a = std::make_shared<Archiver>(
      as, sink, catalog(), [this](const Query& q, QueryClass c) { return registryApi_->lookup(q, c); },
      remote_.subscriber(), clock_, true);
  a->setViewListener([this, sinkId](const std::string& table, const ViewPredicate& view) { onSinkView(sinkId, table, view); });
  std::weak_ptr<Archiver> weak = a;
  std::vector<std::pair<std::string, RegistryEntry>> consumers;
  for (const auto& t : as.tables) {
    RegistryEntry ce;
    ce.role = RegistryEntry::Role::Consumer;
    ce.componentId = id + "." + toLower(t.table);
    ce.endpoint = endpoint_;
    ce.query = "SELECT * FROM " + t.table + (t.condition.empty() ? "" : " WHERE " + t.condition);
    ce.queryClass = QueryClass::Continuous;
    ce.terminationMs = config_.consumerTerminationMs;
    consumers.emplace_back(ce.componentId, ce);
  }
  {
    std::lock_guard lock(mutex_);
    if (archivers_.count(id)) fail(ErrorCode::InvalidArgument, "component " + id + " already exists");
    archivers_[id] = a;
    auto& cids = archiverConsumers_[id];
    for (const auto& [cid, e] : consumers) {
      cids.push_back(cid);
      notifyTargets_[cid] = [weak](const RegistryEntry& p) {
        if (auto x = weak.lock()) x->onNotification(p);
      };
    }
    refreshers_[id] = [weak] {
      if (auto x = weak.lock()) x->refresh();
    };
    if (!session.empty()) sessions_[session].archiver = id;
  }
  for (const auto& [cid, e] : consumers) {
    try {
      addRegistration(cid, Registration{{e}, e.terminationMs, 0, true});
    } catch (const Error& err) {
      spdlog::warn("archiver {} could not register yet: {}", id, err.what());
    }
  }
  a->start();
  spdlog::info("node {}: archiver {} into {}", config_.nodeId, id, sinkId);
  return id;
}

bool Node::removeComponent(const std::string& componentId) {
  std::shared_ptr<Producer> p;
  std::shared_ptr<Archiver> a;
  std::vector<std::string> consumers;
  {
    std::lock_guard lock(mutex_);
    if (auto it = producers_.find(componentId); it != producers_.end()) {
      p = std::move(it->second);
      producers_.erase(it);
    }
    if (auto it = archivers_.find(componentId); it != archivers_.end()) {
      a = std::move(it->second);
      archivers_.erase(it);
      consumers = archiverConsumers_[componentId];
      archiverConsumers_.erase(componentId);
      for (const auto& c : consumers) notifyTargets_.erase(c);
      refreshers_.erase(componentId);
    }
  }
  if (!p && !a) return false;
  if (a) {
    a->stop();
    for (const auto& c : consumers) dropRegistration(c);
  }
  if (p) dropRegistration(componentId);
  return true;
}

std::size_t Node::insert(const Json& body) {
  std::string table;
  if (body.contains("sql")) {
    const auto& sql = body["sql"];
    table = toLower(insertTargetTable(sql.is_array() ? sql.at(0).get<std::string>() : sql.get<std::string>()));
  } else {
    table = toLower(stringMember(body, "table"));
  }
  std::shared_ptr<Producer> p;
  if (body.contains("producer")) {
    p = producer(stringMember(body, "producer"));
    if (!p) fail(ErrorCode::UnknownComponent, "no producer " + stringMember(body, "producer") + " on this node");
  } else {
    const auto session = stringMember(body, "session");
    std::optional<ProducerType> type;
    if (body.contains("type")) {
      type = producerTypeFromName(stringMember(body, "type"));
      if (!type) fail(ErrorCode::InvalidArgument, "unknown producer type");
    }
    std::vector<std::shared_ptr<Producer>> candidates;
    {
      std::lock_guard lock(mutex_);
      if (auto s = sessions_.find(session); s != sessions_.end()) {
        for (const auto& [t, id] : s->second.producers) {
          auto it = producers_.find(id);
          if (it == producers_.end() || (type && *type != t) || !it->second->table(table)) continue;
          candidates.push_back(it->second);
        }
      }
    }
    if (candidates.empty()) fail(ErrorCode::UnknownComponent, "session " + session + " has no producer for table " + table);
    if (candidates.size() > 1) {
      fail(ErrorCode::InvalidArgument, "session " + session + " has several producers for " + table + "; name a type");
    }
    p = candidates.front();
  }
  const auto* published = p->table(table);
  if (!published) fail(ErrorCode::Schema, "producer " + p->id() + " does not publish table " + table);
  std::vector<Tuple> tuples;
  if (body.contains("sql")) {
    const auto& sql = body["sql"];
    if (sql.is_array()) {
      for (const auto& s : sql) tuples.push_back(parseInsert(s.get<std::string>(), published->def));
    } else {
      tuples.push_back(parseInsert(sql.get<std::string>(), published->def));
    }
  }
  if (body.contains("rows")) {
    for (const auto& r : body["rows"]) tuples.push_back(tupleFromJson(published->def, r));
  }
  p->insert(tuples);
  return tuples.size();
}

std::shared_ptr<Producer> Node::producer(const std::string& componentId) const {
  std::lock_guard lock(mutex_);
  auto it = producers_.find(componentId);
  return it == producers_.end() ? nullptr : it->second;
}

std::shared_ptr<Archiver> Node::archiver(const std::string& componentId) const {
  std::lock_guard lock(mutex_);
  auto it = archivers_.find(componentId);
  return it == archivers_.end() ? nullptr : it->second;
}

std::vector<std::string> Node::producerIds() const {
  std::lock_guard lock(mutex_);
  std::vector<std::string> out;
  for (const auto& [id, p] : producers_) out.push_back(id);
  return out;
}

// ---- registrations and background work

void Node::addRegistration(const std::string& id, Registration reg) {
  reg.nextBeatMs = clock_.nowMs() + heartbeatSchedule(reg.terminationMs);
  {
    std::lock_guard lock(regMutex_);
    registrations_[id] = reg;
  }
  publishEntries(reg.entries, reg.consumer);
}

void Node::dropRegistration(const std::string& id) {
  {
    std::lock_guard lock(regMutex_);
    if (!registrations_.erase(id)) return;
  }
  try {
    registryApi_->unregister(id);
  } catch (const std::exception& e) {
    spdlog::debug("unregister {}: {}", id, e.what());
  }
}

void Node::publishEntries(const std::vector<RegistryEntry>& entries, bool consumer) {
  for (const auto& e : entries) {
    if (consumer) {
      registryApi_->registerConsumer(e);
    } else {
      registryApi_->registerProducer(e);
    }
  }
}

void Node::onSinkView(const std::string& sinkId, const std::string& table, const ViewPredicate& view) {
  std::vector<RegistryEntry> changed;
  {
    std::lock_guard lock(regMutex_);
    auto it = registrations_.find(sinkId);
    if (it == registrations_.end()) return;
    for (auto& e : it->second.entries) {
      if (e.table == table) {
        e.view = view;
        changed.push_back(e);
      }
    }
  }
  try {
    publishEntries(changed, false);
  } catch (const std::exception& e) {
    spdlog::warn("could not publish the new view of {}: {}", sinkId, e.what());
  }
}

void Node::heartbeatTick() {
  if (heartbeatsPaused_) return;
  const auto now = clock_.nowMs();
  std::vector<std::pair<std::string, Registration>> due;
  {
    std::lock_guard lock(regMutex_);
    for (auto& [id, r] : registrations_) {
      if (r.nextBeatMs > now) continue;
      r.nextBeatMs = now + heartbeatSchedule(r.terminationMs);
      due.emplace_back(id, r);
    }
  }
  for (const auto& [id, r] : due) {
    try {
      registryApi_->heartbeat(id, r.terminationMs);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::UnknownComponent) {
        spdlog::warn("heartbeat for {} failed: {}", id, e.what());
        continue;
      }
      {
        std::lock_guard lock(regMutex_);
        if (!registrations_.count(id)) continue;
      }
      spdlog::info("registry forgot {}; registering again", id);
      try {
        publishEntries(r.entries, r.consumer);
      } catch (const std::exception& again) {
        spdlog::warn("re-registering {} failed: {}", id, again.what());
      }
    }
  }
}

void Node::refreshTick() {
  std::vector<std::function<void()>> fns;
  {
    std::lock_guard lock(mutex_);
    for (const auto& [id, fn] : refreshers_) fns.push_back(fn);
  }
  for (auto& fn : fns) {
    if (stopping_) return;
    fn();
  }
}

void Node::housekeepingTick() {
  const auto now = clock_.nowMs();
  std::vector<std::shared_ptr<Producer>> ps;
  {
    std::lock_guard lock(mutex_);
    for (const auto& [id, p] : producers_) ps.push_back(p);
  }
  for (auto& p : ps) p->runDueCleanups(now);
  if (registry_) {
    for (const auto& id : registry_->expireSweep()) spdlog::info("registry {}: {} expired", registry_->id(), id);
  }
  std::vector<std::shared_ptr<HttpQuery>> idle;
  {
    std::lock_guard lock(httpMutex_);
    for (auto it = httpQueries_.begin(); it != httpQueries_.end();) {
      std::lock_guard ql(it->second->mutex);
      if (now - it->second->lastPollMs > kHttpIdleMs) {
        idle.push_back(it->second);
        it = httpQueries_.erase(it);
      } else {
        ++it;
      }
    }
  }
  for (auto& q : idle) {
    if (q->handle) closeContinuous(*q->handle);
  }
}

void Node::syncTick() {
  const auto mine = registry_->snapshot().toJson();
  for (const auto& peer : config_.peers) {
    try {
      auto conn = Connection::connect(HostPort::parse(peer), config_.timeoutMs);
      const auto reply =
          conn->call(makeMessage(MessageKind::RegistrySync, nextRequestId(), {{"snapshot", mine}}), config_.timeoutMs);
      conn->shutdown();
      enqueueNotifications(registry_->replicaSync(RegistrySnapshot::fromJson(member(reply.body, "snapshot"))));
    } catch (const std::exception& e) {
      spdlog::debug("sync with {} failed: {}", peer, e.what());
    }
  }
}

void Node::enqueueNotifications(std::vector<Notification> ns) {
  if (ns.empty()) return;
  {
    std::lock_guard lock(notifyMutex_);
    for (auto& n : ns) notifications_.push_back(std::move(n));
  }
  notifyCv_.notify_one();
}

void Node::notifierLoop() {
  while (true) {
    Notification n;
    {
      std::unique_lock lock(notifyMutex_);
      notifyCv_.wait(lock, [this] { return stopping_ || !notifications_.empty(); });
      if (stopping_) return;
      n = std::move(notifications_.front());
      notifications_.pop_front();
    }
    try {
      auto conn = Connection::connect(HostPort::parse(n.consumer.endpoint), config_.timeoutMs);
      conn->call(makeMessage(MessageKind::NotifyNewProducer, nextRequestId(),
                             {{"consumer", n.consumer.componentId}, {"producer", n.producer.toJson()}}),
                 config_.timeoutMs);
      conn->shutdown();
    } catch (const std::exception& e) {
      spdlog::debug("notifying {} failed: {}", n.consumer.componentId, e.what());
    }
  }
}

// ---- HTTP gateway

std::string Node::createHttpQuery(const std::string& sql, QueryClass cls) {
  auto q = std::make_shared<HttpQuery>();
  q->lastPollMs = clock_.nowMs();
  {
    std::lock_guard lock(mutex_);
    q->id = newIdLocked("q");
  }
  if (cls == QueryClass::Continuous) {
    std::weak_ptr<HttpQuery> weak = q;
    auto handle = openContinuous(sql, [weak](const Delivery& d) {
      auto hq = weak.lock();
      if (!hq) return;
      {
        std::lock_guard lock(hq->mutex);
        if (hq->rows.size() >= kHttpBuffer) {
          ++hq->dropped;
          return;
        }
        hq->rows.emplace_back(rowToJson(d.row), d.producerId);
      }
      hq->cv.notify_all();
    });
    q->columns = handle.columns;
    q->noProducers = handle.noProducers;
    q->handle = std::move(handle);
  } else {
    const auto rs = query(sql, cls);
    q->columns = rs.columns;
    q->noProducers = rs.noProducers;
    for (const auto& r : rs.rows) q->rows.emplace_back(rowToJson(r), "");
    q->done = true;
  }
  std::lock_guard lock(httpMutex_);
  httpQueries_[q->id] = q;
  return q->id;
}

Json Node::httpQueryInfo(const std::string& id) {
  std::shared_ptr<HttpQuery> q;
  {
    std::lock_guard lock(httpMutex_);
    auto it = httpQueries_.find(id);
    if (it == httpQueries_.end()) return nullptr;
    q = it->second;
  }
  return {{"id", q->id}, {"columns", q->columns}, {"noProducers", q->noProducers}};
}

Json Node::nextHttpRows(const std::string& id, int waitMs) {
  std::shared_ptr<HttpQuery> q;
  {
    std::lock_guard lock(httpMutex_);
    auto it = httpQueries_.find(id);
    if (it == httpQueries_.end()) return nullptr;
    q = it->second;
  }
  std::unique_lock lock(q->mutex);
  q->cv.wait_for(lock, std::chrono::milliseconds(waitMs), [&] { return !q->rows.empty() || q->done || stopping_; });
  Json rows = Json::array();
  Json origins = Json::array();
  while (!q->rows.empty() && rows.size() < kHttpPage) {
    rows.push_back(std::move(q->rows.front().first));
    origins.push_back(std::move(q->rows.front().second));
    q->rows.pop_front();
  }
  q->lastPollMs = clock_.nowMs();
  return {{"rows", rows}, {"origins", origins}, {"done", q->done && q->rows.empty()}, {"dropped", q->dropped}};
}

bool Node::deleteHttpQuery(const std::string& id) {
  std::shared_ptr<HttpQuery> q;
  {
    std::lock_guard lock(httpMutex_);
    auto it = httpQueries_.find(id);
    if (it == httpQueries_.end()) return false;
    q = it->second;
    httpQueries_.erase(it);
  }
  if (q->handle) closeContinuous(*q->handle);
  return true;
}

void Node::startHttp() {
  auto svr = std::make_shared<httplib::Server>();
  auto json = [](httplib::Response& res, int status, const Json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  };
  svr->set_default_headers({{"Access-Control-Allow-Origin", "*"}});
  svr->set_exception_handler([json](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    try {
      std::rethrow_exception(ep);
    } catch (const Error& e) {
      json(res, 400, errorJson(e.code(), e.what()));
    } catch (const std::exception& e) {
      json(res, 500, errorJson(ErrorCode::Internal, e.what()));
    }
  });
  svr->Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Methods", "GET, POST, DELETE, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });
  svr->Post("/query", [this, json](const httplib::Request& req, httplib::Response& res) {
    try {
      const auto body = Json::parse(req.body);
      const auto id = createHttpQuery(stringMember(body, "sql"), classOf(body));
      json(res, 200, httpQueryInfo(id));
    } catch (const Error& e) {
      json(res, 400, errorJson(e.code(), e.what()));
    } catch (const Json::exception& e) {
      json(res, 400, errorJson(ErrorCode::Protocol, e.what()));
    }
  });
  svr->Get(R"(/query/([^/]+)/next)", [this, json](const httplib::Request& req, httplib::Response& res) {
    int wait = 1000;
    if (req.has_param("wait")) {
      try {
        wait = std::clamp(std::stoi(req.get_param_value("wait")), 0, 30000);
      } catch (const std::exception&) {
        json(res, 400, errorJson(ErrorCode::InvalidArgument, "wait must be a number of milliseconds"));
        return;
      }
    }
    auto out = nextHttpRows(req.matches[1], wait);
    if (out.is_null()) {
      json(res, 404, errorJson(ErrorCode::InvalidArgument, "no query " + std::string(req.matches[1])));
    } else {
      json(res, 200, out);
    }
  });
  svr->Delete(R"(/query/([^/]+))", [this, json](const httplib::Request& req, httplib::Response& res) {
    if (deleteHttpQuery(req.matches[1])) {
      json(res, 200, Json::object());
    } else {
      json(res, 404, errorJson(ErrorCode::InvalidArgument, "no query " + std::string(req.matches[1])));
    }
  });
  svr->Get("/tables", [this, json](const httplib::Request&, httplib::Response& res) {
    try {
      Json tables = Json::array();
      const auto cat = catalog();
      for (const auto& [name, def] : cat.tables()) tables.push_back(tableInfo(def));
      json(res, 200, {{"tables", tables}});
    } catch (const Error& e) {
      json(res, 503, errorJson(e.code(), e.what()));
    }
  });
  svr->Get(R"(/tables/([^/]+))", [this, json](const httplib::Request& req, httplib::Response& res) {
    try {
      const auto cat = catalog();
      const auto* def = cat.find(toLower(std::string(req.matches[1])));
      if (!def) {
        json(res, 404, errorJson(ErrorCode::Schema, "no table " + std::string(req.matches[1])));
      } else {
        json(res, 200, tableInfo(*def));
      }
    } catch (const Error& e) {
      json(res, 503, errorJson(e.code(), e.what()));
    }
  });
  if (!config_.httpRoot.empty()) svr->set_mount_point("/", config_.httpRoot.string());

  const auto hp = HostPort::parse(config_.httpListen);
  if (hp.port == 0) {
    const int port = svr->bind_to_any_port(hp.host);
    if (port <= 0) fail(ErrorCode::Connection, "cannot bind the HTTP gateway on " + hp.host);
    httpPort_ = static_cast<std::uint16_t>(port);
  } else {
    if (!svr->bind_to_port(hp.host, hp.port)) fail(ErrorCode::Connection, "cannot bind the HTTP gateway on " + hp.str());
    httpPort_ = hp.port;
  }
  http_ = svr;
  httpThread_ = std::thread([svr] { svr->listen_after_bind(); });
  spdlog::info("node {}: HTTP gateway on {}:{}", config_.nodeId, hp.host, httpPort_);
}

}  // namespace rgma
