#include <algorithm>
#include <map>
#include <random>
#include <set>

#include "doctest.h"
#include "registry/registry.hpp"
#include "sql/parser.hpp"
#include "support/helpers.hpp"
#include "support/registry_gen.hpp"
#include "support/temp_dir.hpp"

using namespace rgma;
namespace tg = rgma::testing;
using tg::codeOf;

namespace {

const char* kService = "CREATE TABLE Service (uri STRING, type STRING, site STRING, ts TIMESTAMP)";

RegistryEntry producer(const std::string& id, ProducerType type, const std::string& table, ViewPredicate view,
                       std::int64_t termMs = 1000) {
  RegistryEntry e;
  e.componentId = id;
  e.endpoint = "127.0.0.1:1";
  e.producerType = type;
  e.table = table;
  e.view = std::move(view);
  e.terminationMs = termMs;
  return e;
}

RegistryEntry consumer(const std::string& id, const std::string& sql, QueryClass cls, std::int64_t termMs = 1000) {
  RegistryEntry e;
  e.role = RegistryEntry::Role::Consumer;
  e.componentId = id;
  e.endpoint = "127.0.0.1:2";
  e.query = sql;
  e.queryClass = cls;
  e.terminationMs = termMs;
  return e;
}

ViewPredicate site(const std::string& s) { return ViewPredicate::make({{"site", s}}); }

std::vector<std::string> ids(const std::vector<RegistryEntry>& entries) {
  std::vector<std::string> out;
  for (const auto& e : entries) out.push_back(e.componentId);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

void declareService(Registry& r) { r.declareTable(parseCreateTable(kService, {"uri"})); }

}  // namespace

TEST_CASE("registered producers are found by lookup") {
  ManualClock clock(1000);
  Registry reg("r1", clock);
  declareService(reg);
  reg.registerProducer(producer("P", ProducerType::Stream, "service", site("RAL")));
  const auto cat = reg.catalog();
  CHECK(ids(reg.lookup(parseSelect("SELECT * FROM Service", cat), QueryClass::Continuous)) ==
        std::vector<std::string>{"P"});
  CHECK(reg.lookup(parseSelect("SELECT * FROM Service WHERE site = 'CERN'", cat), QueryClass::Continuous).empty());
  CHECK(codeOf([&] { reg.registerProducer(producer("Q", ProducerType::Stream, "nosuch", {})); }) == ErrorCode::Schema);
  CHECK(codeOf([&] {
          reg.registerProducer(producer("Q", ProducerType::Stream, "service", ViewPredicate::make({{"colour", std::string("x")}})));
        }) == ErrorCode::Schema);
  CHECK(codeOf([&] { reg.registerProducer(producer("Q", ProducerType::Stream, "service", {}, 0)); }) ==
        ErrorCode::InvalidArgument);
}

TEST_CASE("lookup applies the capability matrix") {
  ManualClock clock(0);
  Registry reg("r1", clock);
  declareService(reg);
  reg.registerProducer(producer("S", ProducerType::Stream, "service", site("RAL")));
  reg.registerProducer(producer("L", ProducerType::Latest, "service", {}));
  reg.registerProducer(producer("D", ProducerType::DataBase, "service", {}));
  auto canon = producer("C", ProducerType::Canonical, "service", {});
  canon.classes = {QueryClass::History};
  reg.registerProducer(canon);
  const auto q = parseSelect("SELECT * FROM Service", reg.catalog());
  CHECK(ids(reg.lookup(q, QueryClass::Continuous)) == std::vector<std::string>{"S"});
  CHECK(ids(reg.lookup(q, QueryClass::Latest)) == std::vector<std::string>{"L"});
  CHECK(ids(reg.lookup(q, QueryClass::History)) == std::vector<std::string>{"C", "D"});

  auto bad = producer("X", ProducerType::Canonical, "service", {});
  bad.classes = {QueryClass::Continuous};
  CHECK(codeOf([&] { reg.registerProducer(bad); }) == ErrorCode::UnsupportedQueryClass);

  Registry empty("r2", clock);
  declareService(empty);
  CHECK(empty.lookup(parseSelect("SELECT * FROM Service", empty.catalog()), QueryClass::Latest).empty());
}

TEST_CASE("join lookup needs one producer publishing every table") {
  ManualClock clock(0);
  Registry reg("r1", clock);
  declareService(reg);
  reg.declareTable(parseCreateTable("CREATE TABLE ServiceStatus (uri STRING, up INT, ts TIMESTAMP)", {"uri"}));
  reg.registerProducer(producer("both", ProducerType::DataBase, "service", site("RAL")));
  reg.registerProducer(producer("both", ProducerType::DataBase, "servicestatus", {}));
  reg.registerProducer(producer("half", ProducerType::DataBase, "service", {}));
  const auto cat = reg.catalog();
  const auto q = parseSelect("SELECT s.uri, st.up FROM Service s, ServiceStatus st WHERE s.uri = st.uri", cat);
  const auto found = reg.lookup(q, QueryClass::History);
  CHECK(ids(found) == std::vector<std::string>{"both"});
  CHECK(found.size() == 2);
  const auto pruned = parseSelect(
      "SELECT * FROM Service s, ServiceStatus st WHERE s.uri = st.uri AND s.site = 'CERN'", cat);
  CHECK(reg.lookup(pruned, QueryClass::History).empty());
}

TEST_CASE("heartbeats refresh and expiry removes") {
  ManualClock clock(0);
  Registry reg("r1", clock);
  declareService(reg);
  reg.registerProducer(producer("P", ProducerType::Stream, "service", {}, 1000));
  clock.set(900);
  reg.heartbeat("P", 1000);
  clock.set(1500);
  CHECK(reg.expireSweep().empty());
  CHECK(reg.liveEntries().size() == 1);
  clock.set(1900);
  CHECK(reg.expireSweep().empty());
  clock.set(1901);
  CHECK(reg.expireSweep() == std::vector<std::string>{"P"});
  CHECK(reg.expireSweep().empty());
  CHECK(codeOf([&] { reg.heartbeat("P", 1000); }) == ErrorCode::UnknownComponent);
  CHECK(codeOf([&] { reg.heartbeat("never", 1000); }) == ErrorCode::UnknownComponent);
  // A heartbeat arriving exactly at the deadline is in time.
  reg.registerProducer(producer("Q", ProducerType::Stream, "service", {}, 100));
  clock.advance(100);
  reg.heartbeat("Q", 100);
  // Past the deadline but before a sweep, the entry is already dead to heartbeats.
  clock.advance(101);
  CHECK(codeOf([&] { reg.heartbeat("Q", 100); }) == ErrorCode::UnknownComponent);
}

TEST_CASE("expireSweep removes exactly the entries whose deadline has passed") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    ManualClock clock(0);
    Registry reg("r1", clock);
    declareService(reg);
    std::map<std::string, std::int64_t> deadlines;
    for (int i = 0; i < 20; ++i) {
      const std::int64_t term = 1 + static_cast<std::int64_t>(rng() % 2000);
      const std::string id = "p" + std::to_string(i);
      reg.registerProducer(producer(id, ProducerType::Stream, "service", {}, term));
      deadlines[id] = term;
    }
    const std::int64_t now = static_cast<std::int64_t>(rng() % 2000);
    clock.set(now);
    std::vector<std::string> expected;
    std::set<std::string> survivors;
    for (const auto& [id, d] : deadlines) {
      if (d < now) {
        expected.push_back(id);
      } else {
        survivors.insert(id);
      }
    }
    std::sort(expected.begin(), expected.end());
    CHECK(reg.expireSweep() == expected);
    std::set<std::string> live;
    for (const auto& e : reg.liveEntries()) live.insert(e.componentId);
    CHECK(live == survivors);
    CHECK(reg.expireSweep().empty());
  }
}

TEST_CASE("interleaved operations match a replayed reference interpreter") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    ManualClock clock(0);
    Registry reg("r1", clock);
    declareService(reg);
    std::map<std::string, std::int64_t> reference;  // component -> deadline
    for (int step = 0; step < 60; ++step) {
      const std::string id = "c" + std::to_string(rng() % 6);
      const std::int64_t term = 50 + static_cast<std::int64_t>(rng() % 200);
      const int op = static_cast<int>(rng() % 5);
      const std::int64_t now = clock.nowMs();
      auto it = reference.find(id);
      const bool alive = it != reference.end() && it->second >= now;
      if (op == 0) {
        reg.registerProducer(producer(id, ProducerType::Stream, "service", {}, term));
        reference[id] = now + term;
      } else if (op == 1) {
        if (alive) {
          reg.heartbeat(id, term);
          reference[id] = now + term;
        } else {
          CHECK(codeOf([&] { reg.heartbeat(id, term); }) == ErrorCode::UnknownComponent);
        }
      } else if (op == 2) {
        reg.unregister(id);
        reference.erase(id);
      } else if (op == 3) {
        std::vector<std::string> expired;
        for (auto r = reference.begin(); r != reference.end();) {
          if (r->second < now) {
            expired.push_back(r->first);
            r = reference.erase(r);
          } else {
            ++r;
          }
        }
        CHECK(reg.expireSweep() == expired);
      } else {
        clock.advance(static_cast<std::int64_t>(rng() % 120));
      }
      std::set<std::string> expectedLive;
      for (const auto& [rid, d] : reference) {
        if (d >= clock.nowMs()) expectedLive.insert(rid);
      }
      std::set<std::string> live;
      for (const auto& e : reg.liveEntries()) live.insert(e.componentId);
      REQUIRE(live == expectedLive);
    }
  }
}

TEST_CASE("lookup equals the brute-force relevance and capability filter") {
  const auto cols = tg::threeByThreeColumns();
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 300; ++trial) {
    ManualClock clock(0);
    Registry reg("r1", clock);
    const auto def = parseCreateTable(tg::kThreeByThreeSql, {"a"});
    reg.declareTable(def);
    const auto producers = tg::randomProducers(rng, cols, 10);
    for (const auto& p : producers) {
      reg.registerProducer(producer(p.id, p.type, "t", parseView(tg::renderViewText(p.view), def)));
    }
    const auto cond = tg::randomCondition(rng, cols, 3);
    const auto cls = static_cast<QueryClass>(rng() % 3);
    const auto q = parseSelect("SELECT * FROM t WHERE " + tg::render(cond), reg.catalog());
    auto expected = tg::oracleTargets(cols, producers, cond, cls);
    std::sort(expected.begin(), expected.end());
    CHECK(ids(reg.lookup(q, cls)) == expected);
  }
}

TEST_CASE("new producers notify matching consumers once") {
  ManualClock clock(0);
  Registry reg("r1", clock);
  declareService(reg);
  CHECK(reg.registerConsumer(consumer("C", "SELECT * FROM Service WHERE site = 'RAL'", QueryClass::Continuous)).empty());
  auto n = reg.registerProducer(producer("P1", ProducerType::Stream, "service", site("RAL")));
  REQUIRE(n.size() == 1);
  CHECK(n[0].consumer.componentId == "C");
  CHECK(n[0].producer.componentId == "P1");
  CHECK(reg.registerProducer(producer("P2", ProducerType::Stream, "service", site("CERN"))).empty());
  CHECK(reg.registerProducer(producer("P3", ProducerType::Latest, "service", site("RAL"))).empty());
  reg.heartbeat("P1", 1000);
  CHECK(codeOf([&] {
          reg.registerConsumer(consumer("J", "SELECT * FROM Service a, Service b WHERE a.uri = b.uri",
                                        QueryClass::Continuous));
        }) == ErrorCode::UnsupportedQueryClass);
  CHECK(codeOf([&] { reg.registerConsumer(consumer("J", "SELECT * FROM Nope", QueryClass::Latest)); }) ==
        ErrorCode::Schema);
}

TEST_CASE("notification fan-out equals the oracle match set") {
  const auto cols = tg::threeByThreeColumns();
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 150; ++trial) {
    ManualClock clock(0);
    Registry reg("r1", clock);
    const auto def = parseCreateTable(tg::kThreeByThreeSql, {"a"});
    reg.declareTable(def);
    std::vector<std::pair<tg::TCond, QueryClass>> consumers;
    for (int i = 0; i < 6; ++i) {
      consumers.push_back({tg::randomCondition(rng, cols, 2), static_cast<QueryClass>(rng() % 3)});
      reg.registerConsumer(consumer("c" + std::to_string(i), "SELECT * FROM t WHERE " + tg::render(consumers.back().first),
                                    consumers.back().second));
    }
    const tg::GenProducer p{"p", tg::randomInsertableType(rng), tg::randomView(rng, cols)};
    std::vector<std::string> expected;
    for (std::size_t i = 0; i < consumers.size(); ++i) {
      if (!tg::oracleTargets(cols, {p}, consumers[i].first, consumers[i].second).empty()) {
        expected.push_back("c" + std::to_string(i));
      }
    }
    std::vector<std::string> got;
    for (const auto& n : reg.registerProducer(producer(p.id, p.type, "t", parseView(tg::renderViewText(p.view), def)))) {
      got.push_back(n.consumer.componentId);
    }
    std::sort(got.begin(), got.end());
    CHECK(got == expected);
  }
}

TEST_CASE("replicas merge by master and version") {
  ManualClock clock(0);
  Registry a("A", clock);
  Registry b("B", clock);
  declareService(a);
  a.registerProducer(producer("pa", ProducerType::Stream, "service", {}));
  b.declareTable(parseCreateTable(kService, {"uri"}));
  b.registerProducer(producer("pb", ProducerType::Latest, "service", {}));
  a.replicaSync(b.snapshot());
  b.replicaSync(a.snapshot());
  CHECK(a.canonicalBytes() == b.canonicalBytes());
  CHECK(a.allEntries().size() == 2);

  const auto old = a.snapshot();
  a.heartbeat("pa", 1000);
  b.replicaSync(a.snapshot());
  const auto before = b.canonicalBytes();
  b.replicaSync(old);
  CHECK(b.canonicalBytes() == before);

  auto forged = b.snapshot();
  forged.entries.push_back(a.snapshot().entries.front());
  CHECK(codeOf([&] { a.replicaSync(forged); }) == ErrorCode::Protocol);
  CHECK(codeOf([&] { a.replicaSync(a.snapshot()); }) == ErrorCode::Protocol);

  // Heartbeats go to the master.
  CHECK(codeOf([&] { b.heartbeat("pa", 1000); }) == ErrorCode::UnknownComponent);
}

TEST_CASE("a producer learned through sync notifies local consumers") {
  ManualClock clock(0);
  Registry a("A", clock);
  Registry b("B", clock);
  declareService(a);
  b.replicaSync(a.snapshot());
  b.registerConsumer(consumer("C", "SELECT * FROM Service", QueryClass::Continuous));
  CHECK(a.registerProducer(producer("P", ProducerType::Stream, "service", {})).empty());
  auto n = b.replicaSync(a.snapshot());
  REQUIRE(n.size() == 1);
  CHECK(n[0].consumer.componentId == "C");
  a.heartbeat("P", 1000);
  CHECK(b.replicaSync(a.snapshot()).empty());
  // A consumer mastered elsewhere is notified by its own registry, not here.
  CHECK(a.replicaSync(b.snapshot()).empty());
}

TEST_CASE("tombstones replicate and are collected after ten intervals") {
  ManualClock clock(0);
  Registry a("A", clock);
  Registry b("B", clock);
  declareService(a);
  a.registerProducer(producer("P", ProducerType::Stream, "service", {}, 100));
  b.replicaSync(a.snapshot());
  clock.set(101);
  CHECK(a.expireSweep() == std::vector<std::string>{"P"});
  b.replicaSync(a.snapshot());
  CHECK(b.liveEntries().empty());
  CHECK(b.allEntries().size() == 1);
  CHECK(b.allEntries()[0].tombstone);
  clock.set(101 + 10 * 100 - 1);
  a.expireSweep();
  CHECK(a.allEntries().size() == 1);
  clock.set(101 + 10 * 100);
  a.expireSweep();
  CHECK(a.allEntries().empty());
  b.replicaSync(a.snapshot());
  CHECK(b.allEntries().empty());
  CHECK(a.canonicalBytes() == b.canonicalBytes());
}

TEST_CASE("mastered entries and the schema survive a restart") {
  tg::TempDir dir;
  ManualClock clock(0);
  std::string before;
  {
    Registry reg("r1", clock, dir.path());
    declareService(reg);
    reg.registerProducer(producer("P", ProducerType::Stream, "service", site("RAL"), 5000));
    reg.registerProducer(producer("Q", ProducerType::Latest, "service", {}, 10));
    reg.registerConsumer(consumer("C", "SELECT * FROM Service", QueryClass::Latest, 5000));
    clock.set(10);
    reg.expireSweep();
    reg.heartbeat("P", 5000);
    before = reg.canonicalBytes();
  }
  Registry again("r1", clock, dir.path());
  CHECK(again.canonicalBytes() == before);
  CHECK(again.catalog().find("service") != nullptr);
  again.heartbeat("P", 5000);
  // Versions continue from where they were.
  for (const auto& e : again.allEntries()) {
    if (e.componentId == "P") CHECK(e.version > 4);
  }
}

TEST_CASE("entries round trip through JSON") {
  auto e = producer("P", ProducerType::Canonical, "service", site("RAL"));
  e.classes = {QueryClass::Latest};
  e.master = "m";
  e.version = 9;
  e.registration = 3;
  e.deadline = 12345;
  CHECK(RegistryEntry::fromJson(Json::parse(e.toJson().dump())) == e);
  auto c = consumer("C", "SELECT * FROM Service", QueryClass::History);
  CHECK(RegistryEntry::fromJson(c.toJson()) == c);
  CHECK(codeOf([] { RegistryEntry::fromJson(Json{{"role", "x"}, {"componentId", "c"}}); }) == ErrorCode::Protocol);
}
