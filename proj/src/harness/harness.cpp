#include "harness/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <mutex>
#include <ostream>
#include <sstream>

#include "common/error.hpp"
#include "harness/backend.hpp"
#include "spdlog/spdlog.h"
#include "sql/parser.hpp"

namespace rgma::harness {

namespace {

Value fromJson(const Json& j, ColumnType type) {
  switch (type) {
    case ColumnType::Int:
    case ColumnType::Timestamp: return j.get<std::int64_t>();
    case ColumnType::Real: return j.get<double>();
    case ColumnType::String: return j.is_string() ? j.get<std::string>() : j.dump();
  }
  return std::string();
}

Json tuplesJson(const std::vector<Tuple>& tuples) {
  Json a = Json::array();
  for (const auto& t : tuples) a.push_back(rowToJson(t.values));
  return a;
}

std::string formatDouble(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return ec == std::errc() ? std::string(buf, end) : std::to_string(v);
}

class TempData {
 public:
  TempData(const Scenario& s) {
    if (!s.dataDir.empty()) {
      path_ = s.dataDir;
    } else {
      std::random_device rd;
      path_ = std::filesystem::temp_directory_path() /
              ("rgma-harness-" + s.name + "-" + std::to_string(rd()) + std::to_string(rd()));
      owned_ = true;
    }
    std::filesystem::create_directories(path_);
  }
  ~TempData() {
    std::error_code ec;
    if (owned_) std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  bool owned_ = false;
};

struct ProducerState {
  const ProducerPlan* plan = nullptr;
  std::unique_ptr<TupleGenerator> gen;
  bool started = false;
  bool linkDropped = false;
  double credit = 0;
  std::int64_t emitted = 0;
};

}  // namespace

TupleGenerator::TupleGenerator(const ProducerPlan& plan, const TableDefinition& def)
    : def_(def), fixed_(def.columns().size()), domains_(def.columns().size()), rng_(plan.seed) {
  if (!plan.view.empty()) {
    const auto view = parseView(plan.view, def);
    for (const auto& atom : view.atoms()) {
      if (auto i = def.columnIndex(atom.column)) fixed_[*i] = atom.literal;
    }
  }
  std::optional<std::size_t> keyColumn;
  for (auto k : def.definingKey()) {
    if (k != def.timestampIndex()) {
      keyColumn = k;
      break;
    }
  }
  for (std::size_t i = 0; i < def.columns().size(); ++i) {
    const auto& col = def.columns()[i];
    if (auto it = plan.values.find(col.name); it != plan.values.end()) {
      for (const auto& v : it->second) domains_[i].push_back(fromJson(v, col.type));
    } else if (keyColumn && *keyColumn == i && !plan.keys.empty()) {
      for (const auto& k : plan.keys) domains_[i].push_back(fromJson(Json(k), col.type));
    }
  }
}

Tuple TupleGenerator::next(std::int64_t timestamp) {
  std::vector<Value> values;
  for (std::size_t i = 0; i < def_.columns().size(); ++i) {
    const auto& col = def_.columns()[i];
    if (i == def_.timestampIndex()) {
      values.emplace_back(timestamp);
    } else if (fixed_[i]) {
      values.push_back(*fixed_[i]);
    } else if (!domains_[i].empty()) {
      values.push_back(domains_[i][rng_() % domains_[i].size()]);
    } else {
      switch (col.type) {
        case ColumnType::Int:
        case ColumnType::Timestamp: values.emplace_back(static_cast<std::int64_t>(rng_() % 100)); break;
        case ColumnType::Real: values.emplace_back(static_cast<double>(rng_() % 1000000) / 1000.0); break;
        case ColumnType::String: values.emplace_back(col.name + "-" + std::to_string(rng_() % 10)); break;
      }
    }
  }
  return makeTuple(def_, std::move(values));
}

Json ScenarioResult::snapshot() const {
  Json j;
  j["startMs"] = startMs;
  j["endMs"] = endMs;
  j["events"] = events;
  j["acked"] = Json::object();
  for (const auto& [id, tuples] : acked) j["acked"][id] = tuplesJson(tuples);
  j["stores"] = Json::object();
  for (const auto& [id, tables] : stores) {
    Json t = Json::object();
    for (const auto& [name, tuples] : tables) t[name] = tuplesJson(tuples);
    j["stores"][id] = t;
  }
  j["consumers"] = Json::object();
  for (const auto& [id, log] : consumers) {
    Json rows = Json::array();
    for (const auto& r : log.rows) rows.push_back(rowToJson(r));
    j["consumers"][id] = {{"class", queryClassName(log.cls)},
                          {"noProducersAtStart", log.noProducersAtStart},
                          {"startedMs", log.startedMs},
                          {"firstRowMs", log.firstRowMs},
                          {"rows", rows},
                          {"origins", log.origins},
                          {"arrivalsMs", log.arrivalsMs},
                          {"runs", log.runs}};
  }
  j["records"] = records.size();
  return j;
}

void writeRecordsCsv(std::ostream& out, const std::vector<MonitorRecord>& records) {
  out << "component,metric,value,ts\n";
  for (const auto& r : records) out << r.component << ',' << r.metric << ',' << formatDouble(r.value) << ',' << r.ts << '\n';
}

std::vector<MonitorRecord> recordsFromCsv(std::istream& in) {
  std::vector<MonitorRecord> out;
  std::string line;
  std::size_t lineNo = 0;
  while (std::getline(in, line)) {
    ++lineNo;
    if (line.empty() || (lineNo == 1 && line.rfind("component,", 0) == 0)) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 4) fail(ErrorCode::InvalidArgument, "line " + std::to_string(lineNo) + ": expected 4 fields");
    try {
      out.push_back({f[0], f[1], std::stod(f[2]), std::stoll(f[3])});
    } catch (const std::exception&) {
      fail(ErrorCode::InvalidArgument, "line " + std::to_string(lineNo) + ": bad number");
    }
  }
  return out;
}

std::vector<std::string> producerIds(const std::vector<RegistryEntry>& entries) {
  std::vector<std::string> out;
  for (const auto& e : entries) {
    if (e.isProducer()) out.push_back(e.componentId);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

ScenarioResult runScenario(const Scenario& s) {
  const auto catalog = s.validate();
  TempData data(s);
  auto backend = s.clock == ClockMode::Simulated ? makeSimBackend(s, catalog, data.path())
                                                 : makeLiveBackend(s, catalog, data.path());
  ScenarioResult result;
  const std::int64_t start = backend->now();
  result.startMs = start;
  const auto& monitorDef = catalog.get(kMonitorTable);

  std::map<std::string, ProducerState> producers;
  for (const auto& p : s.producers) {
    auto& st = producers[p.id];
    st.plan = &p;
    st.gen = std::make_unique<TupleGenerator>(p, catalog.get(p.table));
    result.acked[p.id];
  }
  std::map<std::string, bool> archiversStarted;
  std::map<std::string, std::string> sinkOf;
  for (const auto& a : s.archivers) sinkOf[a.id] = a.sink.id;

  std::mutex logMutex;
  std::map<std::string, std::int64_t> newestTs;  // continuous consumers
  std::map<std::string, std::int64_t> nextRun;
  std::map<std::string, bool> consumerUp;
  for (const auto& c : s.consumers) {
    result.consumers[c.id].cls = c.cls;
    nextRun[c.id] = -1;
  }
  std::vector<Tuple> pendingRecords;
  auto record = [&](const std::string& component, const char* metric, double value, std::int64_t ts) {
    pendingRecords.push_back(makeTuple(monitorDef, {component, std::string(metric), value, ts}));
  };
  auto event = [&](std::int64_t rel, const std::string& text) {
    result.events.push_back(std::to_string(rel) + " " + text);
    spdlog::debug("scenario {}: {} {}", s.name, rel, text);
  };

  auto faults = s.faults;
  std::stable_sort(faults.begin(), faults.end(), [](const Fault& a, const Fault& b) { return a.atMs < b.atMs; });
  std::size_t nextFault = 0;
  std::int64_t nextMonitor = 0;
  const std::int64_t end = s.durationMs + s.settleMs;

  for (std::int64_t rel = 0; rel <= end; rel += s.tickMs) {
    backend->advanceTo(start + rel);
    const std::int64_t now = backend->now();

    while (nextFault < faults.size() && faults[nextFault].atMs <= rel) {
      const auto& f = faults[nextFault++];
      try {
        switch (f.action) {
          case FaultAction::Kill:
            if (producers.count(f.target)) {
              backend->killProducer(f.target);
            } else {
              backend->killArchiver(f.target);
            }
            break;
          case FaultAction::Restart:
            if (producers.count(f.target)) {
              backend->restartProducer(f.target);
            } else {
              backend->restartArchiver(f.target);
            }
            break;
          case FaultAction::DropLink:
            producers[f.target].linkDropped = true;
            backend->setLink(f.target, f.dropEvery);
            break;
          case FaultAction::RestoreLink:
            producers[f.target].linkDropped = false;
            backend->setLink(f.target, 0);
            break;
          case FaultAction::PauseSink: backend->pauseArchiver(f.target, true); break;
          case FaultAction::ResumeSink: backend->pauseArchiver(f.target, false); break;
        }
        event(rel, faultActionName(f.action) + " " + f.target);
      } catch (const std::exception& e) {
        event(rel, faultActionName(f.action) + " " + f.target + " failed: " + e.what());
      }
    }

    for (auto& [id, st] : producers) {
      if (!st.started && st.plan->startMs <= rel) {
        backend->startProducer(*st.plan);
        st.started = true;
        event(rel, "start " + id);
      }
    }
    for (const auto& a : s.archivers) {
      if (!archiversStarted[a.id] && a.startMs <= rel) {
        backend->startArchiver(a);
        archiversStarted[a.id] = true;
        event(rel, "start " + a.id);
      }
    }
    for (const auto& c : s.consumers) {
      auto& log = result.consumers[c.id];
      if (log.startedMs >= 0 || c.startMs > rel) continue;
      log.startedMs = rel;
      if (c.cls == QueryClass::Continuous) {
        const std::string id = c.id;
        const bool none = backend->startContinuous(c, [&, id](const std::vector<Value>& row, const std::string& origin,
                                                               std::int64_t tupleTs) {
          const auto arrival = backend->now() - start;
          std::lock_guard lock(logMutex);
          auto& l = result.consumers[id];
          if (l.firstRowMs < 0) l.firstRowMs = arrival;
          l.rows.push_back(row);
          l.origins.push_back(origin);
          l.arrivalsMs.push_back(arrival);
          newestTs[id] = std::max(newestTs[id], tupleTs);
        });
        std::lock_guard lock(logMutex);
        log.noProducersAtStart = none;
        consumerUp[c.id] = true;
      } else {
        nextRun[c.id] = rel;
      }
      event(rel, "start " + c.id);
    }

    if (rel < s.durationMs) {
      for (auto& [id, st] : producers) {
        const auto& p = *st.plan;
        if (!st.started || !backend->producerUp(id)) continue;
        if (p.stopMs >= 0 && rel >= p.stopMs) continue;
        st.credit += p.ratePerSec * static_cast<double>(s.tickMs) / 1000.0;
        auto n = static_cast<std::int64_t>(std::floor(st.credit + 1e-9));
        if (p.maxTuples >= 0) n = std::min(n, p.maxTuples - st.emitted);
        if (n <= 0) continue;
        st.credit -= static_cast<double>(n);
        std::vector<Tuple> batch;
        for (std::int64_t i = 0; i < n; ++i) batch.push_back(st.gen->next(now));
        st.emitted += n;
        try {
          const auto acked = backend->publish(id, batch);
          auto& ledger = result.acked[id];
          ledger.insert(ledger.end(), batch.begin(), batch.begin() + static_cast<std::ptrdiff_t>(acked));
        } catch (const std::exception& e) {
          event(rel, "publish " + id + " failed: " + e.what());
        }
      }
    }

    for (const auto& c : s.consumers) {
      if (c.cls == QueryClass::Continuous || nextRun[c.id] < 0 || nextRun[c.id] > rel) continue;
      nextRun[c.id] = rel + c.periodMs;
      const auto t0 = std::chrono::steady_clock::now();
      const auto sim0 = backend->now();
      try {
        auto rs = backend->oneShot(c);
        const double elapsed =
            s.clock == ClockMode::Simulated
                ? static_cast<double>(backend->now() - sim0)
                : std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        std::lock_guard lock(logMutex);
        auto& log = result.consumers[c.id];
        if (log.runs == 0) log.noProducersAtStart = rs.noProducers;
        ++log.runs;
        log.lastRunRows = rs.rows.size();
        if (!rs.rows.empty() && log.firstRowMs < 0) log.firstRowMs = rel;
        log.rows = std::move(rs.rows);
        log.origins.assign(log.rows.size(), "");
        log.arrivalsMs.assign(log.rows.size(), rel);
        consumerUp[c.id] = true;
        record(c.id, "responseTimeMs", elapsed, now);
      } catch (const std::exception& e) {
        consumerUp[c.id] = false;
        event(rel, "query " + c.id + " failed: " + e.what());
      }
    }

    if (rel >= nextMonitor) {
      nextMonitor = rel + s.monitorPeriodMs;
      for (const auto& [id, st] : producers) {
        if (!st.started) continue;
        record(id, "available", backend->producerUp(id) && !st.linkDropped ? 1.0 : 0.0, now);
      }
      for (const auto& a : s.archivers) {
        if (!archiversStarted[a.id]) continue;
        const bool up = backend->archiverUp(a.id);
        record(a.id, "available", up ? 1.0 : 0.0, now);
        record(a.id, "archiverLag", static_cast<double>(backend->archiverLag(a.id).pending), now);
        std::int64_t newest = -1;
        for (const auto& [table, tuples] : backend->contents(a.sink.id)) {
          for (const auto& t : tuples) newest = std::max(newest, t.timestamp);
        }
        if (newest >= 0) record(a.sink.id, "infoAgeMs", static_cast<double>(now - newest), now);
      }
      std::lock_guard lock(logMutex);
      for (const auto& c : s.consumers) {
        if (result.consumers[c.id].startedMs < 0) continue;
        record(c.id, "available", consumerUp[c.id] ? 1.0 : 0.0, now);
        if (auto it = newestTs.find(c.id); it != newestTs.end()) {
          record(c.id, "infoAgeMs", static_cast<double>(now - it->second), now);
        }
      }
    }
    if (!pendingRecords.empty()) {
      try {
        backend->publishMonitor(pendingRecords);
      } catch (const std::exception& e) {
        event(rel, std::string("monitor publish failed: ") + e.what());
      }
      pendingRecords.clear();
    }
  }

  result.endMs = backend->now();
  const auto history = backend->monitorHistory();
  for (const auto& row : history.rows) {
    result.records.push_back({std::get<std::string>(row.at(0)), std::get<std::string>(row.at(1)),
                              std::get<double>(row.at(2)), std::get<std::int64_t>(row.at(3))});
  }
  std::sort(result.records.begin(), result.records.end(), [](const MonitorRecord& a, const MonitorRecord& b) {
    return std::tie(a.ts, a.component, a.metric, a.value) < std::tie(b.ts, b.component, b.metric, b.value);
  });
  for (const auto& p : s.producers) result.stores[p.id] = backend->contents(p.id);
  for (const auto& a : s.archivers) result.stores[a.sink.id] = backend->contents(a.sink.id);
  backend->finish();
  return result;
}

}  // namespace rgma::harness
