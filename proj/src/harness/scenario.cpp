#include "harness/scenario.hpp"

#include <set>

#include "common/error.hpp"
#include "mediator/mediator.hpp"
#include "sql/parser.hpp"

namespace rgma::harness {

namespace {

const char* kDemoSchema[][2] = {
    {"CREATE TABLE Service (uri VARCHAR(255), serviceType VARCHAR(64), site VARCHAR(64), ts TIMESTAMP)", "uri"},
    {"CREATE TABLE ServiceStatus (uri VARCHAR(255), up INT, status VARCHAR(255), responseMs REAL, ts TIMESTAMP)",
     "uri"},
};

[[noreturn]] void bad(const std::string& message) { fail(ErrorCode::Scenario, message); }

ProducerType producerType(const Json& j, const char* field, ProducerType fallback) {
  if (!j.contains(field)) return fallback;
  const auto t = producerTypeFromName(j[field].get<std::string>());
  if (!t) bad("unknown producer type '" + j[field].get<std::string>() + "'");
  return *t;
}

QueryClass queryClass(const Json& j, const char* field, QueryClass fallback) {
  if (!j.contains(field)) return fallback;
  const auto c = queryClassFromName(j[field].get<std::string>());
  if (!c) bad("unknown query class '" + j[field].get<std::string>() + "'");
  return *c;
}

FaultAction faultAction(const std::string& name) {
  if (name == "kill") return FaultAction::Kill;
  if (name == "restart") return FaultAction::Restart;
  if (name == "dropLink") return FaultAction::DropLink;
  if (name == "restoreLink") return FaultAction::RestoreLink;
  if (name == "pauseSink") return FaultAction::PauseSink;
  if (name == "resumeSink") return FaultAction::ResumeSink;
  bad("unknown fault action '" + name + "'");
}

ProducerPlan producerFromJson(const Json& j, std::size_t index) {
  ProducerPlan p;
  p.id = j.value("id", "p" + std::to_string(index));
  p.type = producerType(j, "type", ProducerType::Stream);
  p.table = j.value("table", std::string());
  p.view = j.value("view", std::string());
  p.ratePerSec = j.value("ratePerSec", p.ratePerSec);
  p.seed = j.value("seed", static_cast<std::uint64_t>(index + 1));
  p.keys = j.value("keys", std::vector<std::string>{});
  const auto values = j.value("values", Json::object());
  for (const auto& [col, vals] : values.items()) {
    p.values[toLower(col)] = vals.get<std::vector<Json>>();
  }
  p.startMs = j.value("startMs", p.startMs);
  p.stopMs = j.value("stopMs", p.stopMs);
  p.maxTuples = j.value("maxTuples", p.maxTuples);
  p.terminationMs = j.value("terminationMs", p.terminationMs);
  p.ringCapacity = j.value("ringCapacity", p.ringCapacity);
  p.registry = j.value("registry", p.registry);
  return p;
}

}  // namespace

Json demoSchema() {
  Json out = Json::array();
  for (const auto& t : kDemoSchema) out.push_back({{"sql", t[0]}, {"key", {t[1]}}});
  return out;
}

const char* monitorTableSql() {
  return "CREATE TABLE rgma_monitor (component VARCHAR(255), metric VARCHAR(32), value REAL, ts TIMESTAMP)";
}

std::string faultActionName(FaultAction a) {
  switch (a) {
    case FaultAction::Kill: return "kill";
    case FaultAction::Restart: return "restart";
    case FaultAction::DropLink: return "dropLink";
    case FaultAction::RestoreLink: return "restoreLink";
    case FaultAction::PauseSink: return "pauseSink";
    case FaultAction::ResumeSink: return "resumeSink";
  }
  return "kill";
}

void addTypicalSites(Scenario& s, int sites, double ratePerSec, const std::vector<ProducerType>& sinks,
                     std::int64_t maxTuplesPerProducer) {
  const Json statuses = Json::array({"ok", "degraded", "down"});
  for (int site = 0; site < sites; ++site) {
    const std::string name = "site" + std::to_string(site);
    for (int k = 0; k < 4; ++k) {
      ProducerPlan p;
      const bool se = k == 0;
      p.id = name + (se ? "-se" : "-ce" + std::to_string(k));
      p.table = "ServiceStatus";
      p.ratePerSec = ratePerSec;
      p.seed = s.seed * 1000 + static_cast<std::uint64_t>(site * 4 + k);
      p.maxTuples = maxTuplesPerProducer;
      const std::string host = (se ? "se." : "ce" + std::to_string(k) + ".") + name + ".example.org";
      for (const char* svc : se ? std::vector<const char*>{"srm", "gridftp"} : std::vector<const char*>{"gk", "gris"}) {
        p.keys.push_back(std::string(svc) + "://" + host);
      }
      p.values["status"] = statuses.get<std::vector<Json>>();
      p.values["up"] = {0, 1, 1, 1};
      s.producers.push_back(std::move(p));
    }
  }
  for (std::size_t i = 0; i < sinks.size(); ++i) {
    ArchiverPlan a;
    a.id = "archiver-" + toLower(producerTypeName(sinks[i]));
    a.sink = {"sink-" + toLower(producerTypeName(sinks[i])), sinks[i], "ServiceStatus"};
    a.tables = {{"ServiceStatus", ""}};
    s.archivers.push_back(std::move(a));
  }
}

Scenario Scenario::fromJson(const Json& j) {
  if (!j.is_object()) bad("a scenario is a JSON object");
  Scenario s;
  try {
    s.name = j.value("name", s.name);
    const auto clock = j.value("clock", std::string("simulated"));
    if (clock == "simulated") {
      s.clock = ClockMode::Simulated;
    } else if (clock == "wall") {
      s.clock = ClockMode::Wall;
    } else {
      bad("clock must be simulated or wall");
    }
    s.seed = j.value("seed", s.seed);
    s.durationMs = j.value("durationMs", s.durationMs);
    s.settleMs = j.value("settleMs", s.settleMs);
    s.tickMs = j.value("tickMs", s.tickMs);
    s.refreshPeriodMs = j.value("refreshPeriodMs", s.refreshPeriodMs);
    s.monitorPeriodMs = j.value("monitorPeriodMs", s.monitorPeriodMs);
    s.consumerTerminationMs = j.value("consumerTerminationMs", s.consumerTerminationMs);
    if (j.contains("registries")) {
      const auto& r = j["registries"];
      s.registries = r.value("count", s.registries);
      s.syncPeriodMs = r.value("syncPeriodMs", s.syncPeriodMs);
      s.sweepPeriodMs = r.value("sweepPeriodMs", s.sweepPeriodMs);
    }
    if (j.contains("schema")) s.schema = j["schema"];
    const auto producers = j.value("producers", Json::array());
    for (std::size_t i = 0; i < producers.size(); ++i) s.producers.push_back(producerFromJson(producers[i], i));
    for (const auto& t : j.value("templates", Json::array())) {
      if (t.value("template", std::string()) != "typicalSite") bad("unknown template '" + t.dump() + "'");
      std::vector<ProducerType> sinks;
      for (const auto& name : t.value("sinks", std::vector<std::string>{"latest"})) {
        const auto type = producerTypeFromName(name);
        if (!type) bad("unknown sink type '" + name + "'");
        sinks.push_back(*type);
      }
      addTypicalSites(s, t.value("sites", 1), t.value("ratePerSec", 1.0), sinks, t.value("maxTuples", std::int64_t{-1}));
    }
    const auto archivers = j.value("archivers", Json::array());
    for (std::size_t i = 0; i < archivers.size(); ++i) {
      const auto& a = archivers[i];
      ArchiverPlan p;
      p.id = a.value("id", "archiver" + std::to_string(i));
      const auto& sink = a.at("sink");
      p.sink.id = sink.value("id", p.id + "-sink");
      p.sink.type = producerType(sink, "type", ProducerType::Latest);
      p.sink.table = sink.value("table", std::string());
      for (const auto& t : a.value("tables", Json::array())) {
        if (t.is_string()) {
          p.tables.emplace_back(t.get<std::string>(), "");
        } else {
          p.tables.emplace_back(t.at("table").get<std::string>(), t.value("condition", std::string()));
        }
      }
      if (p.tables.empty()) p.tables.emplace_back(p.sink.table, "");
      p.sourceClass = queryClass(a, "sourceClass", QueryClass::Continuous);
      p.startMs = a.value("startMs", p.startMs);
      p.registry = a.value("registry", p.registry);
      s.archivers.push_back(std::move(p));
    }
    const auto consumers = j.value("consumers", Json::array());
    for (std::size_t i = 0; i < consumers.size(); ++i) {
      const auto& c = consumers[i];
      ConsumerPlan p;
      p.id = c.value("id", "c" + std::to_string(i));
      p.query = c.at("query").get<std::string>();
      p.cls = queryClass(c, "class", QueryClass::Continuous);
      p.startMs = c.value("startMs", p.startMs);
      p.periodMs = c.value("periodMs", p.periodMs);
      p.registry = c.value("registry", p.registry);
      s.consumers.push_back(std::move(p));
    }
    for (const auto& f : j.value("faults", Json::array())) {
      Fault fault;
      fault.atMs = f.at("atMs").get<std::int64_t>();
      fault.action = faultAction(f.at("action").get<std::string>());
      fault.target = f.at("target").get<std::string>();
      fault.dropEvery = f.value("dropEvery", 1);
      s.faults.push_back(std::move(fault));
    }
    s.dataDir = j.value("dataDir", std::string());
  } catch (const Json::exception& e) {
    bad(std::string("malformed scenario: ") + e.what());
  }
  s.validate();
  return s;
}

Catalog Scenario::validate() const {
  if (durationMs <= 0) bad("durationMs must be positive");
  if (tickMs <= 0) bad("tickMs must be positive");
  if (registries < 1) bad("at least one registry is needed");
  if (monitorPeriodMs <= 0 || refreshPeriodMs <= 0 || syncPeriodMs <= 0 || sweepPeriodMs <= 0) {
    bad("periods must be positive");
  }
  Catalog cat;
  try {
    for (const auto& t : schema) cat.add(parseCreateTable(t.at("sql").get<std::string>(), t.value("key", std::vector<std::string>{})));
    cat.add(parseCreateTable(monitorTableSql(), {"component", "metric"}));
  } catch (const Error& e) {
    bad(std::string("schema: ") + e.what());
  }
  std::set<std::string> ids{kMonitorProducer};
  auto unique = [&](const std::string& id) {
    if (id.empty()) bad("component ids must not be empty");
    if (!ids.insert(id).second) bad("duplicate component id " + id);
  };
  auto registryIndex = [&](const std::string& id, int r) {
    if (r >= registries) bad(id + " refers to registry " + std::to_string(r) + " of " + std::to_string(registries));
  };
  std::map<std::string, std::string> kinds;
  for (const auto& p : producers) {
    unique(p.id);
    kinds[p.id] = "producer";
    registryIndex(p.id, p.registry);
    if (!isStreamType(p.type)) bad("generator producer " + p.id + " must be a stream producer");
    const auto* def = cat.find(p.table);
    if (!def) bad("producer " + p.id + " publishes undeclared table '" + p.table + "'");
    try {
      if (!p.view.empty()) parseView(p.view, *def);
    } catch (const Error& e) {
      bad("producer " + p.id + " view: " + e.what());
    }
    for (const auto& [col, vals] : p.values) {
      if (!def->columnIndex(col)) bad("producer " + p.id + " gives values for unknown column " + col);
      if (vals.empty()) bad("producer " + p.id + " has an empty value domain for " + col);
    }
    if (p.ratePerSec < 0) bad("producer " + p.id + " has a negative rate");
  }
  for (const auto& a : archivers) {
    unique(a.id);
    unique(a.sink.id);
    kinds[a.id] = "archiver";
    kinds[a.sink.id] = "sink";
    registryIndex(a.id, a.registry);
    if (!isInsertable(a.sink.type)) bad("archiver " + a.id + " needs an insertable sink");
    if (!cat.find(a.sink.table)) bad("sink " + a.sink.id + " publishes undeclared table '" + a.sink.table + "'");
    for (const auto& [t, cond] : a.tables) {
      if (!cat.find(t)) bad("archiver " + a.id + " reads undeclared table '" + t + "'");
      if (toLower(t) != toLower(a.sink.table)) bad("archiver " + a.id + " reads " + t + " but its sink holds " + a.sink.table);
    }
  }
  for (const auto& c : consumers) {
    unique(c.id);
    kinds[c.id] = "consumer";
    registryIndex(c.id, c.registry);
    try {
      classify(parseSelect(c.query, cat), c.cls);
    } catch (const Error& e) {
      bad("consumer " + c.id + ": " + e.what());
    }
  }
  for (const auto& f : faults) {
    if (f.atMs < 0 || f.atMs > durationMs) bad("fault at " + std::to_string(f.atMs) + " ms lies outside the duration");
    auto it = kinds.find(f.target);
    if (it == kinds.end()) bad("fault targets unknown component " + f.target);
    const auto& kind = it->second;
    switch (f.action) {
      case FaultAction::Kill:
      case FaultAction::Restart:
        if (kind != "producer" && kind != "archiver") bad("only producers and archivers can be killed: " + f.target);
        break;
      case FaultAction::DropLink:
      case FaultAction::RestoreLink:
        if (kind != "producer") bad("links are dropped between producers and the registry: " + f.target);
        if (f.dropEvery < 1) bad("dropEvery must be at least 1");
        break;
      case FaultAction::PauseSink:
      case FaultAction::ResumeSink:
        if (kind != "archiver") bad("pauseSink targets an archiver: " + f.target);
        break;
    }
  }
  return cat;
}

}  // namespace rgma::harness
