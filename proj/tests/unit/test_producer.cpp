#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <map>
#include <random>
#include <set>

#include "doctest.h"
#include "producer/producer.hpp"
#include "sql/parser.hpp"
#include "support/helpers.hpp"
#include "support/temp_dir.hpp"

using namespace rgma;
namespace tg = rgma::testing;
using tg::codeOf;

namespace {

TableDefinition loadTable() {
  return parseCreateTable("CREATE TABLE Load (host STRING, site STRING, load REAL, ts TIMESTAMP)", {"host"});
}

Tuple load(const TableDefinition& def, const std::string& host, double value, std::int64_t ts,
           const std::string& site = "RAL") {
  return makeTuple(def, {host, site, value, ts});
}

ProducerConfig config(ProducerType type, const TableDefinition& def, ViewPredicate view = {}) {
  ProducerConfig c;
  c.componentId = "p1";
  c.type = type;
  c.tables = {{def, std::move(view)}};
  return c;
}

Query select(const TableDefinition& def, const std::string& where = "") {
  Catalog cat;
  cat.add(def);
  return parseSelect("SELECT * FROM " + def.name() + (where.empty() ? "" : " WHERE " + where), cat);
}

struct Collector {
  std::vector<StreamItem> items;
  StreamSink sink() {
    return [this](const StreamItem& item) {
      items.push_back(item);
      return true;
    };
  }
};

}  // namespace

TEST_CASE("a latest producer keeps the newest tuple per key") {
  ManualClock clock(0);
  const auto def = loadTable();
  Producer p(config(ProducerType::Latest, def), clock);
  p.insert(load(def, "k", 0.1, 1));
  p.insert(load(def, "k", 0.2, 2));
  const auto rows = p.answer(select(def), QueryClass::Latest);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0][3] == Value{std::int64_t{2}});
  CHECK(codeOf([&] { p.answer(select(def), QueryClass::History); }) == ErrorCode::UnsupportedQueryClass);
  CHECK(codeOf([&] { p.subscribe(select(def), {}, [](const StreamItem&) { return true; }); }) ==
        ErrorCode::UnsupportedQueryClass);
}

TEST_CASE("latest contents equal a group-by-key maximum over the insert log") {
  ManualClock clock(0);
  const auto def = parseCreateTable("CREATE TABLE T (k INT, v INT, ts TIMESTAMP)", {"k"});
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 300; ++trial) {
    Producer p(config(ProducerType::Latest, def), clock);
    std::map<std::int64_t, std::pair<std::int64_t, std::int64_t>> oracle;  // key -> (ts, v)
    const int n = 1 + static_cast<int>(rng() % 50);
    for (int i = 0; i < n; ++i) {
      const std::int64_t k = static_cast<std::int64_t>(rng() % 5);
      const std::int64_t ts = static_cast<std::int64_t>(rng() % 10);
      p.insert(makeTuple(def, {k, std::int64_t{i}, ts}));
      auto it = oracle.find(k);
      if (it == oracle.end() || ts >= it->second.first) oracle[k] = {ts, i};
    }
    auto rows = p.answer(select(def), QueryClass::Latest);
    REQUIRE(rows.size() == oracle.size());
    for (const auto& row : rows) {
      const auto& expected = oracle.at(std::get<std::int64_t>(row[0]));
      CHECK(std::get<std::int64_t>(row[2]) == expected.first);
      CHECK(std::get<std::int64_t>(row[1]) == expected.second);
    }
  }
}

TEST_CASE("a stream subscription receives only matching tuples") {
  ManualClock clock(0);
  const auto def = loadTable();
  Producer p(config(ProducerType::Stream, def), clock);
  Collector c;
  p.subscribe(select(def, "load > 0.9"), {}, c.sink());
  p.insert(load(def, "h", 0.5, 1));
  CHECK(c.items.empty());
  p.insert(load(def, "h", 0.95, 2));
  REQUIRE(c.items.size() == 1);
  CHECK_FALSE(c.items[0].backlog);
}

TEST_CASE("continuous subscribers see the matching subsequence in insert order") {
  ManualClock clock(0);
  const auto def = loadTable();
  Producer p(config(ProducerType::Stream, def), clock);
  Collector c;
  p.subscribe(select(def, "host = 'a'"), {}, c.sink());
  const char* hosts[] = {"a", "b", "a", "c", "b"};
  for (int i = 0; i < 5; ++i) p.insert(load(def, hosts[i], 0.1, i));
  REQUIRE(c.items.size() == 2);
  CHECK(c.items[0].tuple.timestamp == 0);
  CHECK(c.items[1].tuple.timestamp == 2);
  CHECK(c.items[0].seq < c.items[1].seq);

  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    Producer q(config(ProducerType::Stream, def), clock);
    Collector early, late;
    q.subscribe(select(def, "load >= 0.5"), {}, early.sink());
    std::vector<Tuple> inserted;
    const int n = static_cast<int>(rng() % 40);
    const int split = n == 0 ? 0 : static_cast<int>(rng() % n);
    for (int i = 0; i < n; ++i) {
      if (i == split) q.subscribe(select(def, "load >= 0.5"), q.lastSeq() + 1, late.sink());
      inserted.push_back(load(def, "h" + std::to_string(rng() % 3), static_cast<double>(rng() % 10) / 10, i));
      q.insert(inserted.back());
    }
    std::vector<Tuple> expectEarly, expectLate;
    for (int i = 0; i < n; ++i) {
      if (std::get<double>(inserted[i].values[2]) >= 0.5) {
        expectEarly.push_back(inserted[i]);
        if (i >= split) expectLate.push_back(inserted[i]);
      }
    }
    std::vector<Tuple> gotEarly, gotLate;
    for (const auto& item : early.items) gotEarly.push_back(item.tuple);
    for (const auto& item : late.items) gotLate.push_back(item.tuple);
    CHECK(gotEarly == expectEarly);
    CHECK(gotLate == expectLate);
  }
}

TEST_CASE("new subscribers get the ring as backlog") {
  ManualClock clock(0);
  const auto def = loadTable();
  auto cfg = config(ProducerType::Stream, def);
  cfg.ringCapacity = 3;
  Producer p(cfg, clock);
  for (int i = 0; i < 5; ++i) p.insert(load(def, "h", 0.1, i));
  Collector all, tail;
  p.subscribe(select(def), {}, all.sink());
  REQUIRE(all.items.size() == 3);
  CHECK(all.items[0].tuple.timestamp == 2);
  CHECK(all.items[0].backlog);
  p.subscribe(select(def), 5, tail.sink());
  REQUIRE(tail.items.size() == 1);
  CHECK(tail.items[0].seq == 5);
  p.insert(load(def, "h", 0.1, 9));
  CHECK(all.items.size() == 4);
  CHECK_FALSE(all.items.back().backlog);
  CHECK(p.contents("load").size() == 3);
}

TEST_CASE("a sink returning false is detached") {
  ManualClock clock(0);
  const auto def = loadTable();
  Producer p(config(ProducerType::Stream, def), clock);
  int calls = 0;
  p.subscribe(select(def), {}, [&](const StreamItem&) { return ++calls < 2; });
  for (int i = 0; i < 4; ++i) p.insert(load(def, "h", 0.1, i));
  CHECK(calls == 2);
  CHECK(p.subscriptions() == 0);
}

TEST_CASE("inserts are checked against table and view") {
  ManualClock clock(0);
  const auto def = loadTable();
  Producer p(config(ProducerType::DataBase, def, ViewPredicate::make({{"site", std::string("RAL")}})), clock);
  CHECK(codeOf([&] { p.insert(load(def, "h", 0.1, 1, "CERN")); }) == ErrorCode::ViewViolation);
  p.insert(load(def, "h", 0.1, 1, "RAL"));
  const auto other = parseCreateTable("CREATE TABLE Other (k INT, ts TIMESTAMP)", {"k"});
  CHECK(codeOf([&] { p.insert(makeTuple(other, {std::int64_t{1}, std::int64_t{1}})); }) == ErrorCode::Schema);
  Tuple wrong = load(def, "h", 0.1, 1);
  wrong.values[2] = std::string("high");
  CHECK(codeOf([&] { p.insert(wrong); }) == ErrorCode::Type);

  // A bad tuple in a batch rejects the whole batch.
  std::vector<Tuple> batch = {load(def, "x", 0.1, 2), load(def, "y", 0.1, 3, "CERN")};
  CHECK(codeOf([&] { p.insert(batch); }) == ErrorCode::ViewViolation);
  CHECK(p.answer(select(def), QueryClass::History).size() == 1);
}

TEST_CASE("history queries return every retained row") {
  ManualClock clock(0);
  const auto def = loadTable();
  Producer p(config(ProducerType::DataBase, def), clock);
  for (int i = 0; i < 3; ++i) p.insert(load(def, "h", 0.1 * i, i));
  CHECK(p.answer(select(def), QueryClass::History).size() == 3);
  CHECK(p.answer(select(def, "load > 0.15"), QueryClass::History).size() == 1);
  CHECK(codeOf([&] { p.answer(select(def), QueryClass::Latest); }) == ErrorCode::UnsupportedQueryClass);
}

TEST_CASE("a database producer answers joins over its tables") {
  ManualClock clock(0);
  Catalog cat;
  const auto service = parseCreateTable("CREATE TABLE Service (uri STRING, site STRING, ts TIMESTAMP)", {"uri"});
  const auto status = parseCreateTable("CREATE TABLE ServiceStatus (uri STRING, up INT, ts TIMESTAMP)", {"uri"});
  cat.add(service);
  cat.add(status);
  ProducerConfig c;
  c.componentId = "db";
  c.type = ProducerType::DataBase;
  c.tables = {{service, {}}, {status, {}}};
  Producer p(c, clock);
  p.insert(makeTuple(service, {std::string("u1"), std::string("RAL"), std::int64_t{1}}));
  p.insert(makeTuple(service, {std::string("u2"), std::string("RAL"), std::int64_t{1}}));
  p.insert(makeTuple(status, {std::string("u1"), std::int64_t{1}, std::int64_t{2}}));
  const auto q = parseSelect("SELECT s.uri, st.up FROM Service s, ServiceStatus st WHERE s.uri = st.uri", cat);
  const auto rows = p.answer(q, QueryClass::History);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].size() == 6);
  CHECK(rows[0][0] == Value{std::string("u1")});
}

TEST_CASE("cleanup rules run on their interval") {
  ManualClock clock(0);
  const auto def = loadTable();
  Producer p(config(ProducerType::DataBase, def), clock);
  p.scheduleCleanup(CleanupRule::whereRule(def, "ts < NOW - 1000", 500));
  p.insert(load(def, "h", 0.1, 0));
  CHECK(p.runDueCleanups(400) == 0);
  clock.set(2000);
  CHECK(p.runDueCleanups(2000) == 1);
  CHECK(p.contents("load").empty());

  Producer s(config(ProducerType::Stream, def), clock);
  CHECK(codeOf([&] { s.scheduleCleanup(CleanupRule::keepNewestRule(def, 1, 100)); }) ==
        ErrorCode::UnsupportedProducerType);
  Producer r(config(ProducerType::Latest, def), clock);
  CHECK(codeOf([&] { r.scheduleCleanup(CleanupRule::whereRule(def, "ts < 0", 0)); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("two cleanup rules delete the union of their selections") {
  ManualClock clock(0);
  const auto def = parseCreateTable("CREATE TABLE T (k INT, v INT, ts TIMESTAMP)", {"k"});
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    Producer p(config(ProducerType::DataBase, def), clock);
    std::vector<Tuple> rows;
    for (int i = 0; i < 30; ++i) {
      rows.push_back(makeTuple(def, {static_cast<std::int64_t>(rng() % 5), static_cast<std::int64_t>(rng() % 10),
                                     static_cast<std::int64_t>(rng() % 100)}));
      p.insert(rows.back());
    }
    const std::int64_t a = static_cast<std::int64_t>(rng() % 10);
    const std::int64_t b = static_cast<std::int64_t>(rng() % 100);
    p.scheduleCleanup(CleanupRule::whereRule(def, "v < " + std::to_string(a), 100));
    p.scheduleCleanup(CleanupRule::whereRule(def, "ts > " + std::to_string(b), 100));
    p.runDueCleanups(100);
    std::vector<Tuple> expected;
    for (const auto& t : rows) {
      if (!(std::get<std::int64_t>(t.values[1]) < a || t.timestamp > b)) expected.push_back(t);
    }
    CHECK(p.contents("t") == expected);
  }
}

TEST_CASE("canonical producers delegate to their handler") {
  ManualClock clock(0);
  const auto def = loadTable();
  auto cfg = config(ProducerType::Canonical, def);
  cfg.classes = {QueryClass::Latest};
  int calls = 0;
  Producer p(cfg, clock, [&](const Query&, QueryClass) {
    ++calls;
    return std::vector<std::vector<Value>>{{std::string("h"), std::string("RAL"), std::int64_t{1}, std::int64_t{5}}};
  });
  const auto rows = p.answer(select(def), QueryClass::Latest);
  CHECK(calls == 1);
  REQUIRE(rows.size() == 1);
  CHECK(std::holds_alternative<double>(rows[0][2]));
  CHECK(codeOf([&] { p.answer(select(def), QueryClass::History); }) == ErrorCode::UnsupportedQueryClass);
  CHECK(codeOf([&] { p.insert(load(def, "h", 0.1, 1)); }) == ErrorCode::NotInsertable);
  cfg.classes = {QueryClass::Continuous};
  CHECK(codeOf([&] { Producer bad(cfg, clock); }) == ErrorCode::UnsupportedQueryClass);

  Producer wide(config(ProducerType::Canonical, def), clock,
                [](const Query&, QueryClass) { return std::vector<std::vector<Value>>{{std::int64_t{1}}}; });
  CHECK(codeOf([&] { wide.answer(select(def), QueryClass::History); }) == ErrorCode::Type);
}

TEST_CASE("stream and resilient stream deliver identical output") {
  tg::TempDir dir;
  ManualClock clock(0);
  const auto def = loadTable();
  Producer s(config(ProducerType::Stream, def), clock);
  auto rc = config(ProducerType::ResilientStream, def);
  rc.dataDir = dir.path();
  Producer r(rc, clock);
  Collector cs, cr;
  s.subscribe(select(def, "load > 0.3"), {}, cs.sink());
  r.subscribe(select(def, "load > 0.3"), {}, cr.sink());
  std::mt19937_64 rng(2);
  for (int i = 0; i < 200; ++i) {
    const auto t = load(def, "h" + std::to_string(rng() % 4), static_cast<double>(rng() % 10) / 10, i);
    s.insert(t);
    r.insert(t);
  }
  REQUIRE(cs.items.size() == cr.items.size());
  for (std::size_t i = 0; i < cs.items.size(); ++i) {
    CHECK(cs.items[i].tuple == cr.items[i].tuple);
    CHECK(cs.items[i].seq == cr.items[i].seq);
  }
}

TEST_CASE("resilient stream log survives restarts and compaction") {
  tg::TempDir dir;
  ManualClock clock(0);
  const auto def = loadTable();
  auto rc = config(ProducerType::ResilientStream, def);
  rc.dataDir = dir.path();
  rc.ringCapacity = 10;
  {
    Producer r(rc, clock);
    for (int i = 0; i < 200; ++i) r.insert(load(def, "h", 0.1, i));
    CHECK(r.lastSeq() == 200);
  }
  Producer again(rc, clock);
  CHECK(again.lastSeq() == 200);
  CHECK(again.epoch() == "durable");
  const auto kept = again.contents("load");
  REQUIRE(kept.size() == 10);
  CHECK(kept.front().timestamp == 190);
  CHECK(kept.back().timestamp == 199);
  again.insert(load(def, "h", 0.1, 500));
  Collector c;
  again.subscribe(select(def), 200, c.sink());
  REQUIRE(c.items.size() == 2);
  CHECK(c.items[1].seq == 201);

  auto plain = config(ProducerType::ResilientStream, def);
  CHECK(codeOf([&] { Producer bad(plain, clock); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("acknowledged resilient inserts survive kill -9") {
  tg::TempDir dir;
  const auto def = loadTable();
  auto rc = config(ProducerType::ResilientStream, def);
  rc.dataDir = dir.path();
  rc.ringCapacity = 100000;
  for (int round = 0; round < 3; ++round) {
    int fds[2];
    REQUIRE(::pipe(fds) == 0);
    const pid_t child = ::fork();
    REQUIRE(child >= 0);
    if (child == 0) {
      ::close(fds[0]);
      ManualClock clock(0);
      Producer r(rc, clock);
      for (std::int64_t i = 0;; ++i) {
        r.insert(load(def, "h" + std::to_string(round), 0.5, round * 1000000 + i));
        const std::uint64_t acked = r.lastSeq();
        if (::write(fds[1], &acked, sizeof acked) != sizeof acked) ::_exit(1);
      }
    }
    ::close(fds[1]);
    std::uint64_t acked = 0, last = 0;
    while (acked < 300 && ::read(fds[0], &last, sizeof last) == sizeof last) acked = last;
    ::kill(child, SIGKILL);
    ::waitpid(child, nullptr, 0);
    while (::read(fds[0], &last, sizeof last) == sizeof last) acked = last;
    ::close(fds[0]);

    ManualClock clock(0);
    Producer r(rc, clock);
    Collector c;
    r.subscribe(select(def), 1, c.sink());
    CHECK(r.lastSeq() >= acked);
    std::set<std::uint64_t> seqs;
    for (const auto& item : c.items) seqs.insert(item.seq);
    bool all = true;
    for (std::uint64_t s = 1; s <= acked; ++s) all = all && seqs.count(s);
    CHECK(all);
  }
}

TEST_CASE("latest and history stores persist in the data directory") {
  tg::TempDir dir;
  ManualClock clock(0);
  const auto def = loadTable();
  for (auto type : {ProducerType::Latest, ProducerType::DataBase}) {
    auto cfg = config(type, def);
    cfg.componentId = std::string(producerTypeName(type));
    cfg.dataDir = dir.path();
    {
      Producer p(cfg, clock);
      p.insert(load(def, "a", 0.1, 1));
      p.insert(load(def, "a", 0.2, 2));
    }
    Producer p(cfg, clock);
    CHECK(p.contents("load").size() == (type == ProducerType::Latest ? 1u : 2u));
  }
}
