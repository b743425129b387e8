#include "rgma/rgma.h"

#include <cstring>
#include <memory>
#include <string>

#include "client/client.hpp"
#include "node/node.hpp"
#include "node/remote.hpp"
#include "spdlog/spdlog.h"
#include "wire/codec.hpp"

using namespace rgma;

struct rgma_node {
  std::unique_ptr<Node> node;
  std::string endpoint;
};

struct rgma_client {
  Client client;
};

struct rgma_rowset {
  std::vector<std::string> columns;
  std::vector<std::vector<Value>> rows;
  std::vector<std::string> origins;
  std::vector<std::string> failures;
  bool noProducers = false;
  mutable std::vector<std::vector<std::string>> text;
};

struct rgma_stream {
  std::unique_ptr<ContinuousQuery> query;
};

static_assert(static_cast<int>(ErrorCode::Internal) + 1 == RGMA_ERR_INTERNAL);
static_assert(static_cast<int>(ErrorCode::Connection) + 1 == RGMA_ERR_CONNECTION);

namespace {

thread_local std::string lastError;

int record(ErrorCode code, const std::string& message) {
  lastError = std::string(errorName(code)) + ": " + message;
  return static_cast<int>(code) + 1;
}

template <class F>
int guarded(F&& fn) {
  try {
    fn();
    lastError.clear();
    return RGMA_OK;
  } catch (const Error& e) {
    return record(e.code(), e.what());
  } catch (const Json::exception& e) {
    return record(ErrorCode::InvalidArgument, e.what());
  } catch (const std::exception& e) {
    return record(ErrorCode::Internal, e.what());
  }
}

char* dup(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out) std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

Json parseJson(const char* text) {
  if (!text || !*text) return Json::object();
  return Json::parse(text);
}

void require(const void* p, const char* what) {
  if (!p) fail(ErrorCode::InvalidArgument, std::string(what) + " is null");
}

const Value& cell(const rgma_rowset* rs, size_t row, size_t column) {
  static const Value empty = std::string();
  if (!rs || row >= rs->rows.size() || column >= rs->rows[row].size()) return empty;
  return rs->rows[row][column];
}

}  // namespace

extern "C" {

const char* rgma_last_error(void) { return lastError.c_str(); }

const char* rgma_status_name(int status) {
  if (status == RGMA_OK) return "OK";
  if (status < 1 || status > RGMA_ERR_INTERNAL) return "Unknown";
  static thread_local std::string name;
  name = std::string(errorName(static_cast<ErrorCode>(status - 1)));
  return name.c_str();
}

int rgma_set_log_level(const char* level) {
  return guarded([&] {
    require(level, "level");
    const auto l = spdlog::level::from_str(level);
    if (l == spdlog::level::off && std::string(level) != "off") fail(ErrorCode::InvalidArgument, "unknown log level");
    spdlog::set_level(l);
  });
}

void rgma_free_string(char* s) { std::free(s); }

int rgma_node_start(const char* config_json, rgma_node** out) {
  return guarded([&] {
    require(out, "out");
    auto n = std::make_unique<rgma_node>();
    n->node = std::make_unique<Node>(NodeConfig::fromJson(parseJson(config_json)));
    n->node->start();
    n->endpoint = n->node->endpoint();
    *out = n.release();
  });
}

const char* rgma_node_endpoint(const rgma_node* node) { return node ? node->endpoint.c_str() : ""; }

int rgma_node_http_port(const rgma_node* node) { return node ? node->node->httpPort() : 0; }

void rgma_node_stop(rgma_node* node, int unregister) {
  if (node) node->node->stop(unregister != 0);
}

void rgma_node_free(rgma_node* node) { delete node; }

int rgma_client_open(const char* endpoint, int timeout_ms, rgma_client** out) {
  return guarded([&] {
    require(endpoint, "endpoint");
    require(out, "out");
    *out = new rgma_client{Client(HostPort::parse(endpoint), timeout_ms)};
  });
}

void rgma_client_free(rgma_client* client) { delete client; }

int rgma_call(rgma_client* client, const char* kind, const char* body_json, char** reply_json) {
  return guarded([&] {
    require(client, "client");
    require(kind, "kind");
    const auto k = kindFromName(kind);
    if (!k) fail(ErrorCode::InvalidArgument, std::string("unknown message kind ") + kind);
    const auto reply = client->client.call(*k, parseJson(body_json));
    if (reply_json) *reply_json = dup(reply.dump());
  });
}

int rgma_declare_table(rgma_client* client, const char* create_sql, const char* const* key, size_t key_len) {
  return guarded([&] {
    require(client, "client");
    require(create_sql, "create_sql");
    std::vector<std::string> k;
    for (size_t i = 0; i < key_len; ++i) k.emplace_back(key[i]);
    client->client.declareTable(create_sql, k);
  });
}

int rgma_tables(rgma_client* client, char** tables_json) {
  return guarded([&] {
    require(client, "client");
    require(tables_json, "tables_json");
    *tables_json = dup(client->client.call(MessageKind::ListTables, Json::object())["tables"].dump());
  });
}

int rgma_describe(rgma_client* client, const char* table, char** table_json) {
  return guarded([&] {
    require(client, "client");
    require(table, "table");
    require(table_json, "table_json");
    *table_json = dup(client->client.describe(table).dump());
  });
}

int rgma_entries(rgma_client* client, char** entries_json) {
  return guarded([&] {
    require(client, "client");
    require(entries_json, "entries_json");
    *entries_json = dup(entriesToJson(client->client.entries()).dump());
  });
}

int rgma_create_producer(rgma_client* client, const char* spec_json, char** component_id) {
  return guarded([&] {
    require(client, "client");
    const auto id = client->client.createProducer(parseJson(spec_json));
    if (component_id) *component_id = dup(id);
  });
}

int rgma_create_archiver(rgma_client* client, const char* spec_json, char** component_id) {
  return guarded([&] {
    require(client, "client");
    const auto id = client->client.createArchiver(parseJson(spec_json));
    if (component_id) *component_id = dup(id);
  });
}

int rgma_insert(rgma_client* client, const char* body_json, size_t* inserted) {
  return guarded([&] {
    require(client, "client");
    const auto n = client->client.insert(parseJson(body_json));
    if (inserted) *inserted = n;
  });
}

int rgma_close_component(rgma_client* client, const char* component_id) {
  return guarded([&] {
    require(client, "client");
    require(component_id, "component_id");
    if (!client->client.close(component_id)) {
      fail(ErrorCode::UnknownComponent, std::string("no component ") + component_id + " on that node");
    }
  });
}

int rgma_query(rgma_client* client, const char* sql, const char* cls, rgma_rowset** out) {
  return guarded([&] {
    require(client, "client");
    require(sql, "sql");
    require(out, "out");
    const auto c = queryClassFromName(cls ? cls : "");
    if (!c) fail(ErrorCode::InvalidArgument, "query class must be latest or history");
    if (*c == QueryClass::Continuous) fail(ErrorCode::InvalidArgument, "continuous queries use rgma_subscribe");
    auto rs = client->client.query(sql, *c);
    auto r = std::make_unique<rgma_rowset>();
    r->columns = std::move(rs.columns);
    r->rows = std::move(rs.rows);
    r->origins.assign(r->rows.size(), "");
    r->noProducers = rs.noProducers;
    for (const auto& f : rs.failures) r->failures.push_back(f.componentId + ": " + f.message);
    *out = r.release();
  });
}

size_t rgma_rowset_columns(const rgma_rowset* rs) { return rs ? rs->columns.size() : 0; }

const char* rgma_rowset_column_name(const rgma_rowset* rs, size_t column) {
  return rs && column < rs->columns.size() ? rs->columns[column].c_str() : "";
}

size_t rgma_rowset_rows(const rgma_rowset* rs) { return rs ? rs->rows.size() : 0; }

rgma_value_type rgma_rowset_type(const rgma_rowset* rs, size_t row, size_t column) {
  const auto& v = cell(rs, row, column);
  if (std::holds_alternative<std::int64_t>(v)) return RGMA_INT;
  if (std::holds_alternative<double>(v)) return RGMA_REAL;
  return RGMA_STRING;
}

int64_t rgma_rowset_int(const rgma_rowset* rs, size_t row, size_t column) {
  const auto& v = cell(rs, row, column);
  if (const auto* i = std::get_if<std::int64_t>(&v)) return *i;
  if (const auto* d = std::get_if<double>(&v)) return static_cast<int64_t>(*d);
  return 0;
}

double rgma_rowset_real(const rgma_rowset* rs, size_t row, size_t column) {
  const auto& v = cell(rs, row, column);
  if (const auto* d = std::get_if<double>(&v)) return *d;
  if (const auto* i = std::get_if<std::int64_t>(&v)) return static_cast<double>(*i);
  return 0.0;
}

const char* rgma_rowset_text(const rgma_rowset* rs, size_t row, size_t column) {
  if (!rs || row >= rs->rows.size() || column >= rs->rows[row].size()) return "";
  if (rs->text.size() != rs->rows.size()) rs->text.assign(rs->rows.size(), {});
  auto& line = rs->text[row];
  if (line.empty()) {
    for (const auto& v : rs->rows[row]) line.push_back(displayValue(v));
  }
  return line[column].c_str();
}

const char* rgma_rowset_origin(const rgma_rowset* rs, size_t row) {
  return rs && row < rs->origins.size() ? rs->origins[row].c_str() : "";
}

int rgma_rowset_no_producers(const rgma_rowset* rs) { return rs && rs->noProducers ? 1 : 0; }

size_t rgma_rowset_failures(const rgma_rowset* rs) { return rs ? rs->failures.size() : 0; }

const char* rgma_rowset_failure(const rgma_rowset* rs, size_t index) {
  return rs && index < rs->failures.size() ? rs->failures[index].c_str() : "";
}

int rgma_rowset_json(const rgma_rowset* rs, char** json) {
  return guarded([&] {
    require(rs, "rowset");
    require(json, "json");
    Json rows = Json::array();
    for (const auto& r : rs->rows) rows.push_back(rowToJson(r));
    *json = dup(Json{{"columns", rs->columns}, {"rows", rows}, {"noProducers", rs->noProducers}}.dump());
  });
}

void rgma_rowset_free(rgma_rowset* rs) { delete rs; }

int rgma_subscribe(rgma_client* client, const char* sql, rgma_stream** out) {
  return guarded([&] {
    require(client, "client");
    require(sql, "sql");
    require(out, "out");
    *out = new rgma_stream{client->client.subscribe(sql)};
  });
}

size_t rgma_stream_columns(const rgma_stream* q) { return q ? q->query->columns().size() : 0; }

const char* rgma_stream_column_name(const rgma_stream* q, size_t column) {
  return q && column < q->query->columns().size() ? q->query->columns()[column].c_str() : "";
}

int rgma_stream_no_producers(const rgma_stream* q) { return q && q->query->noProducers() ? 1 : 0; }

int rgma_stream_next(rgma_stream* q, int timeout_ms, rgma_rowset** out) {
  return guarded([&] {
    require(q, "query");
    require(out, "out");
    auto r = std::make_unique<rgma_rowset>();
    r->columns = q->query->columns();
    for (auto& row : q->query->next(timeout_ms)) {
      r->rows.push_back(std::move(row.values));
      r->origins.push_back(std::move(row.origin));
    }
    *out = r.release();
  });
}

int rgma_stream_finished(const rgma_stream* q) { return !q || q->query->finished() ? 1 : 0; }

void rgma_stream_free(rgma_stream* q) { delete q; }

}  // extern "C"
