#include "client/client.hpp"

#include "node/remote.hpp"
#include "wire/codec.hpp"

namespace rgma {

ContinuousQuery::ContinuousQuery(std::shared_ptr<Connection> conn, std::string requestId, const Json& first)
    : conn_(std::move(conn)), requestId_(std::move(requestId)) {
  columns_ = first.value("columns", std::vector<std::string>{});
  noProducers_ = first.value("noProducers", false);
  consumerId_ = first.value("consumer", std::string());
}

ContinuousQuery::~ContinuousQuery() { close(); }

void ContinuousQuery::close() {
  finished_ = true;
  conn_->shutdown();
}

std::vector<StreamRow> ContinuousQuery::next(int timeoutMs) {
  std::vector<StreamRow> out;
  if (finished_) return out;
  auto m = conn_->receive(timeoutMs);
  while (m) {
    if (m->kind == MessageKind::EndOfResults) {
      finished_ = true;
      break;
    }
    if (m->kind == MessageKind::Error) {
      finished_ = true;
      throwIfError(*m);
    }
    if (m->kind != MessageKind::TupleBatch) fail(ErrorCode::Protocol, "unexpected message on a continuous query");
    const auto& rows = member(m->body, "rows");
    const Json origins = m->body.value("origins", Json::array());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      out.push_back({rowFromJson(rows[i]), i < origins.size() ? origins[i].get<std::string>() : ""});
    }
    m = conn_->receive(0);
  }
  return out;
}

Json Client::call(MessageKind kind, Json body) {
  auto conn = Connection::connect(endpoint_, timeoutMs_);
  auto reply = conn->call(makeMessage(kind, nextRequestId(), std::move(body)), timeoutMs_);
  conn->shutdown();
  return std::move(reply.body);
}

void Client::declareTable(const std::string& createSql, const std::vector<std::string>& definingKey) {
  call(MessageKind::DeclareTable, {{"sql", createSql}, {"key", definingKey}});
}

std::vector<TableDefinition> Client::tables() {
  const auto cat = catalogFromJson(member(call(MessageKind::ListTables, Json::object()), "tables"));
  std::vector<TableDefinition> out;
  for (const auto& [name, def] : cat.tables()) out.push_back(def);
  return out;
}

Json Client::describe(const std::string& table) { return call(MessageKind::DescribeTable, {{"name", table}}); }

std::string Client::createProducer(const Json& spec) {
  return stringMember(call(MessageKind::CreateProducer, spec), "componentId");
}

std::string Client::createArchiver(const Json& spec) {
  return stringMember(call(MessageKind::CreateArchiver, spec), "componentId");
}

std::size_t Client::insert(const Json& body) {
  return static_cast<std::size_t>(intMember(call(MessageKind::Insert, body), "count"));
}

bool Client::close(const std::string& componentId) {
  return call(MessageKind::Unregister, {{"componentId", componentId}}).value("removed", false);
}

ResultSet Client::query(const std::string& sql, QueryClass cls) {
  auto conn = Connection::connect(endpoint_, timeoutMs_);
  const auto id = nextRequestId();
  conn->send(makeMessage(MessageKind::StartQuery, id, {{"sql", sql}, {"class", std::string(queryClassName(cls))}}));
  ResultSet rs;
  bool first = true;
  while (true) {
    auto m = conn->receive(timeoutMs_);
    if (!m) fail(ErrorCode::Timeout, "no answer from " + endpoint_.str() + " within " + std::to_string(timeoutMs_) + " ms");
    throwIfError(*m);
    if (m->kind == MessageKind::EndOfResults) break;
    if (m->kind != MessageKind::TupleBatch) fail(ErrorCode::Protocol, "unexpected reply to StartQuery");
    if (first) {
      rs.columns = m->body.value("columns", std::vector<std::string>{});
      rs.noProducers = m->body.value("noProducers", false);
      for (const auto& f : m->body.value("failures", Json::array())) {
        rs.failures.push_back({f.value("componentId", ""), f.value("message", "")});
      }
      first = false;
    }
    for (const auto& r : member(m->body, "rows")) rs.rows.push_back(rowFromJson(r));
  }
  conn->shutdown();
  return rs;
}

std::unique_ptr<ContinuousQuery> Client::subscribe(const std::string& sql) {
  auto conn = Connection::connect(endpoint_, timeoutMs_);
  const auto id = nextRequestId();
  conn->send(makeMessage(MessageKind::StartQuery, id, {{"sql", sql}, {"class", "continuous"}}));
  auto m = conn->receive(timeoutMs_);
  if (!m) fail(ErrorCode::Timeout, "no answer from " + endpoint_.str() + " within " + std::to_string(timeoutMs_) + " ms");
  throwIfError(*m);
  if (m->kind != MessageKind::TupleBatch) fail(ErrorCode::Protocol, "unexpected reply to StartQuery");
  return std::make_unique<ContinuousQuery>(std::move(conn), id, m->body);
}

std::vector<RegistryEntry> Client::entries() {
  return entriesFromJson(member(call(MessageKind::ListEntries, Json::object()), "entries"));
}

}  // namespace rgma
