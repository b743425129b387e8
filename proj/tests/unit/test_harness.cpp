#include <map>
#include <random>
#include <set>
#include <sstream>

#include "doctest.h"
#include "harness/harness.hpp"
#include "harness/summary.hpp"
#include "support/helpers.hpp"

using namespace rgma;
using namespace rgma::harness;

namespace {

using rgma::testing::codeOf;

std::string uriOf(const Tuple& t) { return std::get<std::string>(t.values.at(0)); }

/// Replays acked tuples in publication order: per key, the highest timestamp, later arrival winning ties.
std::map<std::string, Tuple> latestOracle(const ScenarioResult& r) {
  std::map<std::string, Tuple> out;
  for (const auto& [id, tuples] : r.acked) {
    for (const auto& t : tuples) {
      auto it = out.find(uriOf(t));
      if (it == out.end() || t.timestamp >= it->second.timestamp) out.insert_or_assign(uriOf(t), t);
    }
  }
  return out;
}

std::multiset<std::string> rendered(const std::vector<Tuple>& tuples) {
  std::multiset<std::string> out;
  for (const auto& t : tuples) out.insert(rowToJson(t.values).dump());
  return out;
}

Scenario typicalSites(int sites, std::int64_t durationMs) {
  Scenario s;
  s.name = "typical";
  s.seed = 7;
  s.durationMs = durationMs;
  s.settleMs = 2000;
  addTypicalSites(s, sites, 20.0, {ProducerType::Latest, ProducerType::DataBase});
  return s;
}

/// Integrates a step schedule one millisecond at a time.
double bruteAvailability(const std::vector<std::pair<std::int64_t, int>>& changes, std::int64_t a, std::int64_t b,
                         std::int64_t last) {
  double up = 0, covered = 0;
  for (std::int64_t t = a; t < b && t < last; ++t) {
    const std::pair<std::int64_t, int>* cur = nullptr;
    for (const auto& c : changes) {
      if (c.first <= t) cur = &c;
    }
    if (!cur) continue;
    covered += 1;
    up += cur->second;
  }
  return covered > 0 ? up / covered : -1;
}

}  // namespace

TEST_CASE("scenario files are validated") {
  const Json ok = {{"durationMs", 1000},
                   {"producers", {{{"id", "p"}, {"table", "ServiceStatus"}, {"ratePerSec", 5}}}},
                   {"consumers", {{{"id", "c"}, {"query", "SELECT * FROM ServiceStatus"}}}}};
  CHECK_NOTHROW(Scenario::fromJson(ok));

  auto broken = [&](const std::function<void(Json&)>& edit) {
    Json j = ok;
    edit(j);
    return codeOf([&] { Scenario::fromJson(j); });
  };
  CHECK(broken([](Json& j) { j["producers"][0]["table"] = "Nope"; }) == ErrorCode::Scenario);
  CHECK(broken([](Json& j) { j["consumers"][0]["id"] = "p"; }) == ErrorCode::Scenario);
  CHECK(broken([](Json& j) { j["faults"] = {{{"atMs", 2000}, {"action", "kill"}, {"target", "p"}}}; }) ==
        ErrorCode::Scenario);
  CHECK(broken([](Json& j) { j["faults"] = {{{"atMs", 200}, {"action", "kill"}, {"target", "c"}}}; }) ==
        ErrorCode::Scenario);
  CHECK(broken([](Json& j) { j["faults"] = {{{"atMs", 200}, {"action", "explode"}, {"target", "p"}}}; }) ==
        ErrorCode::Scenario);
  CHECK(broken([](Json& j) { j["producers"][0]["view"] = "up = 'x'"; }) == ErrorCode::Scenario);
  CHECK(broken([](Json& j) { j["consumers"][0]["query"] = "SELECT * FROM"; }) == ErrorCode::Scenario);
  CHECK(broken([](Json& j) { j["producers"][0]["registry"] = 3; }) == ErrorCode::Scenario);
  CHECK(broken([](Json& j) {
          j["archivers"] = {{{"id", "a"}, {"sink", {{"type", "latest"}, {"table", "Service"}}}, {"tables", {"ServiceStatus"}}}};
        }) == ErrorCode::Scenario);
  CHECK(broken([](Json& j) { j["clock"] = "lunar"; }) == ErrorCode::Scenario);
}

TEST_CASE("generated tuples follow the producer's view and domains") {
  ProducerPlan p;
  p.id = "g";
  p.table = "Service";
  p.view = "site = 'RAL'";
  p.keys = {"a", "b"};
  p.values["servicetype"] = {Json("CE"), Json("SE")};
  p.seed = 3;
  Scenario s;
  const auto cat = s.validate();
  TupleGenerator gen(p, cat.get("service")), again(p, cat.get("service"));
  for (int i = 0; i < 50; ++i) {
    const auto t = gen.next(100 + i);
    CHECK(t == again.next(100 + i));
    CHECK(std::get<std::string>(t.values[2]) == "RAL");
    const auto uri = std::get<std::string>(t.values[0]);
    CHECK((uri == "a" || uri == "b"));
    const auto type = std::get<std::string>(t.values[1]);
    CHECK((type == "CE" || type == "SE"));
    CHECK(t.timestamp == 100 + i);
  }
}

TEST_CASE("availability of an always-up component is 1 in every window") {
  std::vector<MonitorRecord> rs;
  for (int t = 0; t <= 10000; t += 1000) rs.push_back({"p", "available", 1.0, t});
  const auto w = summarize(rs, 2500, 0);
  REQUIRE(w.size() == 4);
  for (const auto& x : w) CHECK(*x.availability == doctest::Approx(1.0));
}

TEST_CASE("a component down for half a window has availability 0.5 there") {
  std::vector<MonitorRecord> rs{{"p", "available", 1.0, 0}, {"p", "available", 0.0, 1500},
                                {"p", "available", 1.0, 2000}, {"p", "available", 1.0, 4000}};
  const auto w = summarize(rs, 1000, 0);
  REQUIRE(w.size() == 4);
  CHECK(*w[0].availability == doctest::Approx(1.0));
  CHECK(*w[1].availability == doctest::Approx(0.5));
  CHECK(*w[2].availability == doctest::Approx(1.0));
}

TEST_CASE("availability matches a millisecond integration of random schedules") {
  std::mt19937_64 rng(11);
  for (int round = 0; round < 40; ++round) {
    std::vector<std::pair<std::int64_t, int>> changes;
    std::vector<MonitorRecord> rs;
    std::int64_t t = static_cast<std::int64_t>(rng() % 500);
    const int n = 2 + static_cast<int>(rng() % 12);
    for (int i = 0; i < n; ++i) {
      const int v = static_cast<int>(rng() % 2);
      changes.emplace_back(t, v);
      rs.push_back({"x", "available", static_cast<double>(v), t});
      t += 1 + static_cast<std::int64_t>(rng() % 900);
    }
    rs.push_back({"other", "available", 1.0, 0});
    rs.push_back({"other", "available", 1.0, t});
    const std::int64_t window = 100 + static_cast<std::int64_t>(rng() % 700);
    for (const auto& w : summarize(rs, window, 0)) {
      if (w.component != "x") continue;
      const double expect = bruteAvailability(changes, w.startMs, w.endMs, t);
      if (expect < 0) {
        CHECK_FALSE(w.availability.has_value());
      } else {
        REQUIRE(w.availability.has_value());
        CHECK(*w.availability == doctest::Approx(expect).epsilon(1e-9));
      }
    }
  }
}

TEST_CASE("latency percentiles, info age and lag per window") {
  std::vector<MonitorRecord> rs;
  for (int i = 1; i <= 20; ++i) rs.push_back({"c", "responseTimeMs", static_cast<double>(i), i * 10});
  rs.push_back({"c", "infoAgeMs", 30, 50});
  rs.push_back({"c", "infoAgeMs", 70, 60});
  rs.push_back({"a", "archiverLag", 4, 100});
  const auto w = summarize(rs, 1000, 0);
  REQUIRE(w.size() == 2);
  CHECK(w[0].component == "a");
  CHECK(*w[0].maxArchiverLag == 4);
  CHECK(*w[1].p50ResponseMs == 10);
  CHECK(*w[1].p95ResponseMs == 19);
  CHECK(*w[1].maxInfoAgeMs == 70);
  CHECK(codeOf([] { summarize({}, 1000); }) == ErrorCode::InvalidArgument);

  std::stringstream csv;
  writeRecordsCsv(csv, rs);
  CHECK(recordsFromCsv(csv) == rs);
}

TEST_CASE("zero-producer scenario: NoProducers, then data once a producer starts") {
  Scenario s = Scenario::fromJson({{"durationMs", 5000},
                                   {"producers", {{{"id", "late"}, {"table", "ServiceStatus"}, {"ratePerSec", 10},
                                                   {"startMs", 2000}, {"keys", {"u1", "u2"}}}}},
                                   {"consumers", {{{"id", "watch"}, {"query", "SELECT uri, up FROM ServiceStatus"}},
                                                  {{"id", "poll"}, {"query", "SELECT uri FROM ServiceStatus"},
                                                   {"class", "history"}, {"periodMs", 500}}}}});
  const auto r = runScenario(s);
  const auto& watch = r.consumers.at("watch");
  CHECK(watch.noProducersAtStart);
  CHECK(watch.firstRowMs >= 2000);
  CHECK(watch.firstRowMs <= 2100);
  CHECK(watch.rows.size() == r.acked.at("late").size());
  CHECK(r.acked.at("late").size() == 30);
  for (const auto& o : watch.origins) CHECK(o == "late");
  CHECK(r.consumers.at("poll").noProducersAtStart);
  CHECK(r.consumers.at("poll").runs == 11);
}

TEST_CASE("typical site template: sinks match the replay oracle") {
  const auto r = runScenario(typicalSites(3, 6000));
  const auto oracle = latestOracle(r);
  std::vector<Tuple> expectLatest;
  std::vector<Tuple> everything;
  for (const auto& [k, t] : oracle) expectLatest.push_back(t);
  for (const auto& [id, tuples] : r.acked) everything.insert(everything.end(), tuples.begin(), tuples.end());
  CHECK(everything.size() == 12 * 120);
  CHECK(rendered(r.stores.at("sink-latest").at("servicestatus")) == rendered(expectLatest));
  CHECK(rendered(r.stores.at("sink-database").at("servicestatus")) == rendered(everything));

  std::set<std::string> metrics;
  for (const auto& rec : r.records) metrics.insert(rec.component + "/" + rec.metric);
  CHECK(metrics.count("site0-se/available"));
  CHECK(metrics.count("archiver-latest/archiverLag"));
  CHECK(metrics.count("sink-database/infoAgeMs"));
  for (const auto& rec : r.records) {
    if (rec.metric == "archiverLag") CHECK(rec.value <= 12 * 20 * 0.01 * 2);
  }
}

TEST_CASE("seeded simulated scenarios are bit-reproducible") {
  Scenario s = typicalSites(1, 3000);
  s.faults = {{1000, FaultAction::PauseSink, "archiver-latest", 1}, {2000, FaultAction::ResumeSink, "archiver-latest", 1}};
  s.consumers = {{"c", "SELECT * FROM ServiceStatus WHERE up = 1", QueryClass::Continuous, 0, 1000, -1},
                 {"q", "SELECT * FROM ServiceStatus", QueryClass::Latest, 500, 700, -1}};
  const auto a = runScenario(s);
  const auto b = runScenario(s);
  CHECK(a.snapshot().dump() == b.snapshot().dump());
  CHECK(a.records.size() == b.records.size());
  bool same = a.records.size() == b.records.size();
  for (std::size_t i = 0; same && i < a.records.size(); ++i) {
    same = a.records[i].component == b.records[i].component && a.records[i].metric == b.records[i].metric &&
           a.records[i].value == b.records[i].value && a.records[i].ts - a.startMs == b.records[i].ts - b.startMs;
  }
  CHECK(same);
  s.seed = 8;
  for (auto& p : s.producers) p.seed += 1;
  CHECK(runScenario(s).snapshot().dump() != a.snapshot().dump());
}

TEST_CASE("a killed resilient producer loses nothing it acknowledged") {
  Scenario s = Scenario::fromJson(
      {{"durationMs", 8000},
       {"settleMs", 2000},
       {"producers", {{{"id", "rs"}, {"type", "resilient"}, {"table", "ServiceStatus"}, {"ratePerSec", 50},
                       {"keys", {"a", "b", "c"}}}}},
       {"archivers", {{{"id", "arch"}, {"sink", {{"id", "db"}, {"type", "database"}, {"table", "ServiceStatus"}}}},
                      {{"id", "arch2"}, {"sink", {{"id", "last"}, {"type", "latest"}, {"table", "ServiceStatus"}}}}}},
       {"faults", {{{"atMs", 3000}, {"action", "kill"}, {"target", "rs"}},
                   {{"atMs", 5000}, {"action", "restart"}, {"target", "rs"}}}}});
  const auto r = runScenario(s);
  const auto& acked = r.acked.at("rs");
  CHECK(acked.size() == 300);
  std::set<std::string> stored;
  for (const auto& t : r.stores.at("db").at("servicestatus")) stored.insert(rowToJson(t.values).dump());
  for (const auto& t : acked) CHECK(stored.count(rowToJson(t.values).dump()));
  std::vector<Tuple> expect;
  for (const auto& [k, t] : latestOracle(r)) expect.push_back(t);
  CHECK(rendered(r.stores.at("last").at("servicestatus")) == rendered(expect));

  const auto w = summarize(r.records, 1000, r.startMs);
  double minAvail = 1;
  for (const auto& x : w) {
    if (x.component == "rs" && x.availability) minAvail = std::min(minAvail, *x.availability);
  }
  CHECK(minAvail == 0.0);
  CHECK(r.events.size() >= 2);
}

TEST_CASE("a dropped registry link makes a producer vanish from lookups; a lossy one does not") {
  Scenario s = Scenario::fromJson(
      {{"durationMs", 10000},
       {"producers", {{{"id", "lossy"}, {"table", "ServiceStatus"}, {"ratePerSec", 5}, {"terminationMs", 1000}},
                      {{"id", "cut"}, {"table", "ServiceStatus"}, {"ratePerSec", 5}, {"terminationMs", 1000}}}},
       {"consumers", {{{"id", "late"}, {"query", "SELECT * FROM ServiceStatus"}, {"startMs", 5000}}}},
       {"faults", {{{"atMs", 100}, {"action", "dropLink"}, {"target", "lossy"}, {"dropEvery", 2}},
                   {{"atMs", 100}, {"action", "dropLink"}, {"target", "cut"}}}}});
  const auto r = runScenario(s);
  const auto& late = r.consumers.at("late");
  CHECK_FALSE(late.noProducersAtStart);
  // ring backlog included: every tuple the lossy producer published
  CHECK(late.rows.size() == r.acked.at("lossy").size());
  CHECK(std::set<std::string>(late.origins.begin(), late.origins.end()) == std::set<std::string>{"lossy"});
}

TEST_CASE("wall-clock scenario over TCP nodes") {
  Scenario s = Scenario::fromJson({{"clock", "wall"},
                                   {"durationMs", 2500},
                                   {"settleMs", 1500},
                                   {"tickMs", 50},
                                   {"monitorPeriodMs", 500},
                                   {"refreshPeriodMs", 300},
                                   {"templates", {{{"template", "typicalSite"}, {"sites", 1}, {"ratePerSec", 20},
                                                   {"sinks", {"latest", "database"}}}}},
                                   {"consumers", {{{"id", "watch"}, {"query", "SELECT uri FROM ServiceStatus"}},
                                                  {{"id", "poll"}, {"query", "SELECT uri FROM ServiceStatus"},
                                                   {"class", "latest"}, {"periodMs", 500}}}}});
  const auto r = runScenario(s);
  std::size_t total = 0;
  for (const auto& [id, tuples] : r.acked) total += tuples.size();
  CHECK(total == 4 * 50);
  std::vector<Tuple> expect;
  for (const auto& [k, t] : latestOracle(r)) expect.push_back(t);
  CHECK(rendered(r.stores.at("sink-latest").at("servicestatus")) == rendered(expect));
  CHECK(r.stores.at("sink-database").at("servicestatus").size() == total);
  CHECK(r.consumers.at("watch").rows.size() == total);
  bool sawResponse = false;
  for (const auto& rec : r.records) sawResponse |= rec.metric == "responseTimeMs" && rec.component == "poll";
  CHECK(sawResponse);
}
