#include "node/remote.hpp"

#include <atomic>
#include <thread>

#include "sql/parser.hpp"
#include "wire/codec.hpp"

namespace rgma {

Json entriesToJson(const std::vector<RegistryEntry>& entries) {
  Json a = Json::array();
  for (const auto& e : entries) a.push_back(e.toJson());
  return a;
}

std::vector<RegistryEntry> entriesFromJson(const Json& j) {
  if (!j.is_array()) fail(ErrorCode::Protocol, "entries must be an array");
  std::vector<RegistryEntry> out;
  for (const auto& e : j) out.push_back(RegistryEntry::fromJson(e));
  return out;
}

Json catalogToJson(const Catalog& catalog) {
  Json a = Json::array();
  for (const auto& [name, def] : catalog.tables()) a.push_back(tableToJson(def));
  return a;
}

Catalog catalogFromJson(const Json& j) {
  if (!j.is_array()) fail(ErrorCode::Protocol, "tables must be an array");
  Catalog c;
  for (const auto& t : j) c.add(tableFromJson(t));
  return c;
}

Message RemoteRegistry::call(MessageKind kind, Json body) {
  std::lock_guard lock(mutex_);
  for (int attempt = 0;; ++attempt) {
    try {
      if (!conn_ || conn_->isShutdown()) conn_ = Connection::connect(endpoint_, timeoutMs_);
      return conn_->call(makeMessage(kind, nextRequestId(), body), timeoutMs_);
    } catch (const Error& e) {
      // A stale pooled connection gets one retry on a fresh socket.
      if (e.code() != ErrorCode::Connection && e.code() != ErrorCode::Timeout) throw;
      if (conn_) conn_->shutdown();
      conn_.reset();
      if (attempt > 0) throw;
    }
  }
}

void RemoteRegistry::declareTable(const TableDefinition& def) { call(MessageKind::DeclareTable, tableToJson(def)); }

Catalog RemoteRegistry::catalog() {
  return catalogFromJson(member(call(MessageKind::ListTables, Json::object()).body, "tables"));
}

void RemoteRegistry::registerProducer(const RegistryEntry& entry) {
  call(MessageKind::RegisterProducer, {{"entry", entry.toJson()}});
}

std::vector<RegistryEntry> RemoteRegistry::registerConsumer(const RegistryEntry& entry) {
  return entriesFromJson(member(call(MessageKind::RegisterConsumer, {{"entry", entry.toJson()}}).body, "producers"));
}

void RemoteRegistry::heartbeat(const std::string& componentId, std::int64_t terminationMs) {
  call(MessageKind::Heartbeat, {{"componentId", componentId}, {"terminationMs", terminationMs}});
}

void RemoteRegistry::unregister(const std::string& componentId) {
  call(MessageKind::Unregister, {{"componentId", componentId}});
}

std::vector<RegistryEntry> RemoteRegistry::lookup(const Query& query, QueryClass cls) {
  const auto reply =
      call(MessageKind::Lookup, {{"sql", renderSelect(query)}, {"class", std::string(queryClassName(cls))}});
  return entriesFromJson(member(reply.body, "producers"));
}

std::vector<RegistryEntry> RemoteRegistry::entries() {
  return entriesFromJson(member(call(MessageKind::ListEntries, Json::object()).body, "entries"));
}

namespace {

Json startBody(const Target& target, QueryClass cls) {
  return {{"producer", target.componentId}, {"sql", target.residualSql()},
          {"class", std::string(queryClassName(cls))}};
}

class RemoteLink : public StreamLink {
 public:
  RemoteLink(std::shared_ptr<Connection> conn, const TableDefinition& def, ItemFn onItem, Message first)
      : conn_(std::move(conn)), def_(def), onItem_(std::move(onItem)) {
    reader_ = std::thread([this, first = std::move(first)] { run(first); });
  }
  ~RemoteLink() override { close(); }

  bool alive() const override { return alive_.load(); }

  void close() override {
    alive_ = false;
    conn_->shutdown();
    if (!reader_.joinable()) return;
    if (reader_.get_id() == std::this_thread::get_id()) {
      reader_.detach();
    } else {
      reader_.join();
    }
  }

 private:
  void run(Message first) {
    try {
      if (!handle(first)) return;
      while (alive_) {
        auto m = conn_->receive(-1);
        if (!m || !handle(*m)) return;
      }
    } catch (const std::exception&) {
    }
    alive_ = false;
  }

  bool handle(const Message& m) {
    if (m.kind != MessageKind::TupleBatch) {
      alive_ = false;
      return false;
    }
    if (m.body.contains("epoch")) epoch_ = stringMember(m.body, "epoch");
    const auto& items = member(m.body, "items");
    for (const auto& it : items) {
      if (!alive_) return false;
      StreamItem item;
      item.tuple = tupleFromJson(def_, member(it, "row"));
      item.seq = static_cast<std::uint64_t>(intMember(it, "seq"));
      item.backlog = it.value("backlog", false);
      onItem_(item, epoch_);
    }
    return true;
  }

  std::shared_ptr<Connection> conn_;
  TableDefinition def_;
  ItemFn onItem_;
  std::string epoch_;
  std::atomic<bool> alive_{true};
  std::thread reader_;
};

}  // namespace

FetchFn RemoteProducers::fetcher() const {
  const int timeout = timeoutMs_;
  return [timeout](const Target& target, QueryClass cls) {
    auto conn = Connection::connect(HostPort::parse(target.endpoint), timeout);
    conn->send(makeMessage(MessageKind::StartQuery, nextRequestId(), startBody(target, cls)));
    std::vector<std::vector<Value>> rows;
    while (true) {
      auto m = conn->receive(timeout);
      if (!m) fail(ErrorCode::Timeout, "producer " + target.componentId + " did not answer in time");
      throwIfError(*m);
      if (m->kind == MessageKind::EndOfResults) break;
      if (m->kind != MessageKind::TupleBatch) fail(ErrorCode::Protocol, "unexpected reply to StartQuery");
      for (const auto& r : member(m->body, "rows")) rows.push_back(rowFromJson(r));
    }
    conn->shutdown();
    return rows;
  };
}

SubscribeFn RemoteProducers::subscriber() const {
  const int timeout = timeoutMs_;
  return [timeout](const Target& target, const std::optional<Resume>& resume,
                   ItemFn onItem) -> std::unique_ptr<StreamLink> {
    auto conn = Connection::connect(HostPort::parse(target.endpoint), timeout);
    auto body = startBody(target, QueryClass::Continuous);
    if (resume) body["resume"] = {{"epoch", resume->epoch}, {"fromSeq", resume->fromSeq}};
    conn->send(makeMessage(MessageKind::StartQuery, nextRequestId(), body));
    auto first = conn->receive(timeout);
    if (!first) {
      conn->shutdown();
      fail(ErrorCode::Timeout, "producer " + target.componentId + " did not accept the subscription in time");
    }
    throwIfError(*first);
    if (first->kind != MessageKind::TupleBatch || !first->body.contains("epoch")) {
      fail(ErrorCode::Protocol, "unexpected reply to a continuous StartQuery");
    }
    return std::make_unique<RemoteLink>(std::move(conn), target.residual.tables[0].def, std::move(onItem),
                                        std::move(*first));
  };
}

}  // namespace rgma
