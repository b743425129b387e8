// rgma: operator command line tool. Talks to a node through the C interface.
#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "rgma/rgma.h"

using Json = nlohmann::json;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitConnection = 3;
constexpr int kExitRejected = 4;

std::atomic<bool> interrupted{false};

struct Options {
  std::string registry;
  int timeoutMs = 5000;
  std::string format = "tsv";
  std::string session;
};

class Failure {
 public:
  Failure(int status, std::string message) : status_(status), message_(std::move(message)) {}
  int status() const { return status_; }
  const std::string& message() const { return message_; }

 private:
  int status_;
  std::string message_;
};

void check(int status) {
  if (status != RGMA_OK) throw Failure(status, rgma_last_error());
}

std::string take(char* s) {
  std::string out = s ? s : "";
  rgma_free_string(s);
  return out;
}

std::string envOr(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return v && *v ? v : fallback;
}

std::string escapeField(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '\t': out += "\\t"; break;
      case '\n': out += "\\n"; break;
      case '\\': out += "\\\\"; break;
      default: out += c;
    }
  }
  return out;
}

void printLine(const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) std::cout << '\t';
    std::cout << escapeField(fields[i]);
  }
  std::cout << '\n';
}

Json cellJson(const rgma_rowset* rs, std::size_t r, std::size_t c) {
  switch (rgma_rowset_type(rs, r, c)) {
    case RGMA_INT: return rgma_rowset_int(rs, r, c);
    case RGMA_REAL: return rgma_rowset_real(rs, r, c);
    default: return rgma_rowset_text(rs, r, c);
  }
}

class Session {
 public:
  explicit Session(const Options& o) : opts_(o) {
    if (opts_.registry.empty()) {
      throw Failure(RGMA_ERR_INVALID_ARGUMENT, "no endpoint: pass --registry HOST:PORT or set RGMA_REGISTRY");
    }
    check(rgma_client_open(opts_.registry.c_str(), opts_.timeoutMs, &client_));
  }
  ~Session() { rgma_client_free(client_); }
  Session(const Session&) = delete;
  Session& operator=(const Session&) = delete;

  rgma_client* client() { return client_; }
  const Options& opts() const { return opts_; }
  bool json() const { return opts_.format == "json"; }

 private:
  Options opts_;
  rgma_client* client_ = nullptr;
};

std::string renderView(const Json& view) {
  std::string out;
  for (const auto& atom : view) {
    if (!out.empty()) out += " AND ";
    out += atom.at(0).get<std::string>() + " = ";
    out += atom.at(1).is_string() ? "'" + atom.at(1).get<std::string>() + "'" : atom.at(1).dump();
  }
  return out;
}

void cmdTables(Session& s) {
  char* out = nullptr;
  check(rgma_tables(s.client(), &out));
  const auto tables = Json::parse(take(out));
  if (s.json()) {
    std::cout << tables.dump() << '\n';
    return;
  }
  printLine({"table"});
  for (const auto& t : tables) printLine({t.value("name", "")});
}

void cmdDescribe(Session& s, const std::string& table) {
  char* out = nullptr;
  check(rgma_describe(s.client(), table.c_str(), &out));
  const auto info = Json::parse(take(out));
  if (s.json()) {
    std::cout << info.dump() << '\n';
    return;
  }
  const auto key = info.value("key", std::vector<std::string>{});
  printLine({"column", "type", "key"});
  for (const auto& c : info.at("columns")) {
    const auto name = c.value("name", "");
    const bool isKey = std::find(key.begin(), key.end(), name) != key.end();
    printLine({name, c.value("type", ""), isKey ? "yes" : ""});
  }
}

void cmdDeclare(Session& s, const std::string& sql, const std::vector<std::string>& key) {
  std::vector<const char*> k;
  for (const auto& name : key) k.push_back(name.c_str());
  check(rgma_declare_table(s.client(), sql.c_str(), k.data(), k.size()));
}

void cmdStatus(Session& s) {
  char* out = nullptr;
  check(rgma_entries(s.client(), &out));
  const auto entries = Json::parse(take(out));
  if (s.json()) {
    std::cout << entries.dump() << '\n';
    return;
  }
  printLine({"component", "role", "type", "table", "endpoint", "detail", "terminationMs"});
  for (const auto& e : entries) {
    const bool producer = e.value("role", "") == "producer";
    printLine({e.value("componentId", ""), e.value("role", ""),
               producer ? e.value("producerType", "") : e.value("queryClass", ""), e.value("table", ""),
               e.value("endpoint", ""), producer ? renderView(e.value("view", Json::array())) : e.value("query", ""),
               std::to_string(e.value("terminationMs", 0))});
  }
}

void printRowset(const rgma_rowset* rs, bool header, bool json, bool withOrigin) {
  const auto cols = rgma_rowset_columns(rs);
  if (json) {
    for (std::size_t r = 0; r < rgma_rowset_rows(rs); ++r) {
      Json row = Json::object();
      for (std::size_t c = 0; c < cols; ++c) row[rgma_rowset_column_name(rs, c)] = cellJson(rs, r, c);
      if (withOrigin) row["_origin"] = rgma_rowset_origin(rs, r);
      std::cout << row.dump() << '\n';
    }
    std::cout.flush();
    return;
  }
  if (header) {
    std::vector<std::string> names;
    for (std::size_t c = 0; c < cols; ++c) names.emplace_back(rgma_rowset_column_name(rs, c));
    printLine(names);
  }
  for (std::size_t r = 0; r < rgma_rowset_rows(rs); ++r) {
    std::vector<std::string> fields;
    for (std::size_t c = 0; c < cols; ++c) fields.emplace_back(rgma_rowset_text(rs, r, c));
    printLine(fields);
  }
  std::cout.flush();
}

void cmdQueryOnce(Session& s, const std::string& sql, const char* cls) {
  rgma_rowset* rs = nullptr;
  check(rgma_query(s.client(), sql.c_str(), cls, &rs));
  if (rgma_rowset_no_producers(rs)) std::cerr << "NoProducers: no producer can answer this query\n";
  for (std::size_t i = 0; i < rgma_rowset_failures(rs); ++i) {
    std::cerr << "warning: " << rgma_rowset_failure(rs, i) << '\n';
  }
  printRowset(rs, true, s.json(), false);
  rgma_rowset_free(rs);
}

void cmdQueryContinuous(Session& s, const std::string& sql, int durationMs, long maxRows, bool origin) {
  rgma_stream* q = nullptr;
  check(rgma_subscribe(s.client(), sql.c_str(), &q));
  std::unique_ptr<rgma_stream, void (*)(rgma_stream*)> guard(q, rgma_stream_free);
  if (rgma_stream_no_producers(q)) std::cerr << "NoProducers: waiting for a matching producer\n";
  if (!s.json()) {
    std::vector<std::string> names;
    for (std::size_t c = 0; c < rgma_stream_columns(q); ++c) names.emplace_back(rgma_stream_column_name(q, c));
    if (origin) names.emplace_back("_origin");
    printLine(names);
    std::cout.flush();
  }
  const auto start = std::chrono::steady_clock::now();
  long seen = 0;
  while (!interrupted && !rgma_stream_finished(q)) {
    if (durationMs > 0 &&
        std::chrono::steady_clock::now() - start >= std::chrono::milliseconds(durationMs)) {
      break;
    }
    rgma_rowset* batch = nullptr;
    check(rgma_stream_next(q, 200, &batch));
    std::unique_ptr<rgma_rowset, void (*)(rgma_rowset*)> b(batch, rgma_rowset_free);
    if (origin && !s.json()) {
      for (std::size_t r = 0; r < rgma_rowset_rows(batch) && (maxRows <= 0 || seen < maxRows); ++r, ++seen) {
        std::vector<std::string> fields;
        for (std::size_t c = 0; c < rgma_rowset_columns(batch); ++c) fields.emplace_back(rgma_rowset_text(batch, r, c));
        fields.emplace_back(rgma_rowset_origin(batch, r));
        printLine(fields);
      }
      std::cout.flush();
    } else {
      printRowset(batch, false, s.json(), true);
      seen += static_cast<long>(rgma_rowset_rows(batch));
    }
    if (maxRows > 0 && seen >= maxRows) break;
  }
}

Json producerSpec(const std::string& type, const std::string& table, const std::string& view, long termination,
                  long ring, const std::string& id) {
  Json spec = {{"type", type}, {"table", table}};
  if (!view.empty()) spec["view"] = view;
  if (termination > 0) spec["terminationMs"] = termination;
  if (ring > 0) spec["ringCapacity"] = ring;
  if (!id.empty()) spec["componentId"] = id;
  return spec;
}

int exitFor(int status, bool query) {
  if (status == RGMA_ERR_CONNECTION || status == RGMA_ERR_TIMEOUT) return kExitConnection;
  return query ? kExitRejected : 1;
}

}  // namespace

int main(int argc, char** argv) {
  std::signal(SIGINT, [](int) { interrupted = true; });
  std::signal(SIGTERM, [](int) { interrupted = true; });
  rgma_set_log_level(envOr("RGMA_LOG", "error").c_str());

  CLI::App app{"R-GMA command line tool"};
  app.require_subcommand(1);
  Options opts;
  opts.registry = envOr("RGMA_REGISTRY", "");
  opts.session = envOr("RGMA_SESSION", "cli-" + envOr("USER", "default"));
  app.add_option("--registry", opts.registry, "node endpoint HOST:PORT (env RGMA_REGISTRY)");
  app.add_option("--timeout", opts.timeoutMs, "request timeout in ms")->check(CLI::Range(1, 3600000));
  app.add_option("--format", opts.format, "output format")->check(CLI::IsMember({"tsv", "json"}));
  app.add_option("--session", opts.session, "session holding this tool's producers (env RGMA_SESSION)");

  auto* tables = app.add_subcommand("tables", "list tables");
  std::string describeTable;
  auto* describe = app.add_subcommand("describe", "show a table's columns");
  describe->add_option("table", describeTable)->required();

  std::string declareSql;
  std::vector<std::string> declareKey;
  auto* declare = app.add_subcommand("declare", "declare a table");
  declare->add_option("sql", declareSql, "CREATE TABLE statement")->required();
  declare->add_option("--key", declareKey, "defining key columns besides the timestamp")->delimiter(',');

  std::string pType, pTable, pView, pId;
  long pTermination = 0, pRing = 0;
  auto* create = app.add_subcommand("create-producer", "create a producer held by this session");
  create->add_option("type", pType, "stream, resilient, latest, database or canonical")->required();
  create->add_option("table", pTable)->required();
  create->add_option("--view", pView, "WHERE-style view predicate");
  create->add_option("--termination", pTermination, "termination interval in ms");
  create->add_option("--ring", pRing, "stream ring capacity");
  create->add_option("--id", pId, "component id");

  std::vector<std::string> insertSql;
  std::string insertType, insertProducer;
  auto* insert = app.add_subcommand("insert", "publish tuples through this session's producer");
  insert->add_option("sql", insertSql, "INSERT statements")->required();
  insert->add_option("--type", insertType, "producer type when the session has several for the table");
  insert->add_option("--producer", insertProducer, "explicit producer id");

  std::string querySql;
  bool qc = false, ql = false, qh = false, qOrigin = false;
  int qDuration = 0;
  long qMax = 0;
  auto* query = app.add_subcommand("query", "run a query");
  query->set_help_flag("--help");
  auto* classes = query->add_option_group("class");
  classes->add_flag("-c,--continuous", qc);
  classes->add_flag("-l,--latest", ql);
  classes->add_flag("-h,--history", qh);
  classes->require_option(1);
  query->add_option("sql", querySql)->required();
  query->add_option("--duration", qDuration, "stop a continuous query after this many ms");
  query->add_option("--max-rows", qMax, "stop a continuous query after this many rows");
  query->add_flag("--origin", qOrigin, "append the producing component to continuous rows");

  std::string aSink, aClass, aId;
  std::vector<std::string> aTables;
  auto* archive = app.add_subcommand("archive", "create the session's archiver");
  archive->add_option("sink", aSink, "producer on the node to archive into")->required();
  archive->add_option("tables", aTables, "TABLE or TABLE:condition")->required();
  archive->add_option("--source-class", aClass, "continuous (default) or latest");
  archive->add_option("--id", aId, "component id");

  std::string closeId;
  auto* closeCmd = app.add_subcommand("close", "remove a producer or archiver");
  closeCmd->add_option("component", closeId)->required();

  auto* status = app.add_subcommand("status", "list live registry entries");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  const bool isQuery = query->parsed();
  try {
    Session s(opts);
    if (tables->parsed()) {
      cmdTables(s);
    } else if (describe->parsed()) {
      cmdDescribe(s, describeTable);
    } else if (declare->parsed()) {
      cmdDeclare(s, declareSql, declareKey);
    } else if (create->parsed()) {
      Json spec = producerSpec(pType, pTable, pView, pTermination, pRing, pId);
      spec["session"] = opts.session;
      char* id = nullptr;
      check(rgma_create_producer(s.client(), spec.dump().c_str(), &id));
      std::cout << take(id) << '\n';
    } else if (insert->parsed()) {
      Json body = {{"sql", insertSql}};
      if (!insertProducer.empty()) {
        body["producer"] = insertProducer;
      } else {
        body["session"] = opts.session;
        if (!insertType.empty()) body["type"] = insertType;
      }
      std::size_t n = 0;
      check(rgma_insert(s.client(), body.dump().c_str(), &n));
      std::cerr << "inserted " << n << " tuple(s)\n";
    } else if (isQuery) {
      if (qc) {
        cmdQueryContinuous(s, querySql, qDuration, qMax, qOrigin);
      } else {
        cmdQueryOnce(s, querySql, ql ? "latest" : "history");
      }
    } else if (archive->parsed()) {
      Json t = Json::array();
      for (const auto& spec : aTables) {
        const auto colon = spec.find(':');
        if (colon == std::string::npos) {
          t.push_back(spec);
        } else {
          t.push_back({{"table", spec.substr(0, colon)}, {"condition", spec.substr(colon + 1)}});
        }
      }
      Json spec = {{"sink", aSink}, {"tables", t}, {"session", opts.session}};
      if (!aClass.empty()) spec["sourceClass"] = aClass;
      if (!aId.empty()) spec["componentId"] = aId;
      char* id = nullptr;
      check(rgma_create_archiver(s.client(), spec.dump().c_str(), &id));
      std::cout << take(id) << '\n';
    } else if (closeCmd->parsed()) {
      check(rgma_close_component(s.client(), closeId.c_str()));
    } else if (status->parsed()) {
      cmdStatus(s);
    }
  } catch (const Failure& f) {
    std::cerr << "rgma: " << f.message() << '\n';
    if (f.status() == RGMA_ERR_INVALID_ARGUMENT && opts.registry.empty()) return kExitUsage;
    return exitFor(f.status(), isQuery);
  } catch (const std::exception& e) {
    std::cerr << "rgma: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
