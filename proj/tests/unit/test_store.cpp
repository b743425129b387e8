#include <algorithm>
#include <fstream>
#include <map>
#include <random>
#include <set>

#include "doctest.h"
#include "sql/evaluate.hpp"
#include "sql/parser.hpp"
#include "store/stores.hpp"
#include "support/condition_gen.hpp"
#include "support/helpers.hpp"
#include "support/temp_dir.hpp"

using namespace rgma;
namespace tg = rgma::testing;
using tg::codeOf;
using tg::toValue;

namespace {

TableDefinition hostLoad() {
  return parseCreateTable("CREATE TABLE hostload (host STRING, load REAL, ts TIMESTAMP)", {"host"});
}

Tuple hl(const std::string& host, double load, std::int64_t ts) {
  return makeTuple(hostLoad(), {host, load, ts});
}

Catalog serviceCatalog() {
  Catalog cat;
  cat.add(parseCreateTable("CREATE TABLE Service (uri STRING, type STRING, site STRING, ts TIMESTAMP)", {"uri"}));
  cat.add(parseCreateTable("CREATE TABLE ServiceStatus (uri STRING, up INT, load REAL, ts TIMESTAMP)", {"uri"}));
  return cat;
}

}  // namespace

TEST_CASE("latestMerge keeps the newer tuple and replaces on equal timestamps") {
  const auto def = hostLoad();
  CHECK(latestMerge(def, std::nullopt, hl("a", 1, 5)) == hl("a", 1, 5));
  CHECK(latestMerge(def, hl("a", 1, 10), hl("a", 2, 10)) == hl("a", 2, 10));
  CHECK(latestMerge(def, hl("a", 1, 10), hl("a", 2, 9)) == hl("a", 1, 10));
  CHECK(latestMerge(def, hl("a", 1, 10), hl("a", 1, 10)) == hl("a", 1, 10));
  CHECK(codeOf([&] { latestMerge(def, hl("a", 1, 1), hl("b", 1, 2)); }) == ErrorCode::KeyMismatch);
}

TEST_CASE("latestMerge over every permutation of five distinct timestamps yields the maximum") {
  const auto def = hostLoad();
  std::vector<Tuple> tuples;
  for (std::int64_t ts : {7, 3, 11, 1, 5}) tuples.push_back(hl("k", double(ts) / 2, ts));
  const auto expected = *std::max_element(tuples.begin(), tuples.end(),
                                          [](const Tuple& a, const Tuple& b) { return a.timestamp < b.timestamp; });
  std::vector<int> order{0, 1, 2, 3, 4};
  int permutations = 0;
  do {
    std::optional<Tuple> acc;
    for (int i : order) acc = latestMerge(def, acc, tuples[i]);
    CHECK(*acc == expected);
    ++permutations;
  } while (std::next_permutation(order.begin(), order.end()));
  CHECK(permutations == 120);
}

TEST_CASE("LatestStore holds one row per key with the maximum timestamp, last arrival among ties") {
  const auto def = hostLoad();
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 300; ++trial) {
    LatestStore store(def);
    std::map<std::string, Tuple> oracle;
    const int n = 1 + static_cast<int>(rng() % 50);
    for (int i = 0; i < n; ++i) {
      const auto t = hl("h" + std::to_string(rng() % 5), double(i), static_cast<std::int64_t>(rng() % 8));
      store.insert(t);
      auto it = oracle.find(std::get<std::string>(t.values[0]));
      if (it == oracle.end() || t.timestamp >= it->second.timestamp) oracle[std::get<std::string>(t.values[0])] = t;
    }
    std::vector<Tuple> expected;
    for (const auto& [k, t] : oracle) expected.push_back(t);
    CHECK(store.rows() == expected);
  }
}

TEST_CASE("cleanup deletes rows older than a week") {
  const auto def = hostLoad();
  const std::int64_t day = 86400000;
  const std::int64_t now = 100 * day;
  std::vector<Tuple> rows{hl("a", 1, now - day), hl("b", 1, now - 8 * day)};
  const auto rule = CleanupRule::whereRule(def, "NOW - ts > 604800000", day);
  CHECK(applyCleanup(rows, rule, now) == 1);
  REQUIRE(rows.size() == 1);
  CHECK(std::get<std::string>(rows[0].values[0]) == "a");
  CHECK(applyCleanup(rows, rule, now) == 0);

  std::vector<Tuple> more{hl("a", 1, 5), hl("b", 2, 6)};
  CHECK(applyCleanup(more, CleanupRule::whereRule(def, "ts < 0 AND ts > 0", 1000), now) == 0);
  CHECK(more.size() == 2);

  CHECK(codeOf([&] { CleanupRule::whereRule(def, "ts < 0", 0); }) == ErrorCode::InvalidArgument);
  CHECK(codeOf([&] { CleanupRule::whereRule(def, "nosuch > 1", 10); }) == ErrorCode::Schema);
}

TEST_CASE("cleanup survivors equal an independent filter by the negated condition") {
  const auto cols = tg::threeByThreeColumns();
  const auto def = parseCreateTable(tg::kThreeByThreeSql, {"a"});
  std::vector<tg::TRow> domain;
  tg::enumerateRows(cols, [&](const tg::TRow& r) { domain.push_back(r); });
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const auto cond = tg::randomCondition(rng, cols, 3);
    std::vector<Tuple> rows;
    std::vector<tg::TRow> picked;
    for (int i = 0; i < 40; ++i) {
      const auto& r = domain[rng() % domain.size()];
      picked.push_back(r);
      rows.push_back(makeTuple(def, {toValue(r.at("a")), toValue(r.at("b")), toValue(r.at("c")),
                                     std::int64_t{i}}));
    }
    std::vector<Tuple> expected;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (!tg::eval(cond, picked[i])) expected.push_back(rows[i]);
    }
    const auto rule = CleanupRule::whereRule(def, tg::render(cond), 1000);
    const std::size_t removed = applyCleanup(rows, rule, 0);
    CHECK(rows == expected);
    CHECK(removed == 40 - expected.size());
  }
}

TEST_CASE("two cleanup rules delete the union of their selections in either order") {
  const auto cols = tg::threeByThreeColumns();
  const auto def = parseCreateTable(tg::kThreeByThreeSql, {"a"});
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Tuple> rows;
    for (int i = 0; i < 30; ++i) {
      rows.push_back(makeTuple(def, {std::int64_t(rng() % 5), std::string(1, char('w' + rng() % 4)),
                                     double(rng() % 4) + 0.5, std::int64_t(i)}));
    }
    const auto r1 = CleanupRule::whereRule(def, tg::render(tg::randomCondition(rng, cols, 2)), 10);
    const auto r2 = CleanupRule::whereRule(def, tg::render(tg::randomCondition(rng, cols, 2)), 20);
    auto ab = rows;
    auto ba = rows;
    applyCleanup(ab, r1, 0);
    applyCleanup(ab, r2, 0);
    applyCleanup(ba, r2, 0);
    applyCleanup(ba, r1, 0);
    CHECK(ab == ba);
    std::vector<Tuple> expected;
    for (const auto& t : rows) {
      if (!evaluate(r1.where, t, 0) && !evaluate(r2.where, t, 0)) expected.push_back(t);
    }
    CHECK(ab == expected);
  }
}

TEST_CASE("keep-newest retention keeps the most recent rows") {
  const auto def = hostLoad();
  std::vector<Tuple> rows{hl("a", 1, 5), hl("b", 1, 9), hl("c", 1, 1), hl("d", 1, 9), hl("e", 1, 7)};
  CHECK(applyCleanup(rows, CleanupRule::keepNewestRule(def, 3, 10), 0) == 2);
  std::set<std::string> hosts;
  for (const auto& t : rows) hosts.insert(std::get<std::string>(t.values[0]));
  CHECK(hosts == std::set<std::string>{"b", "d", "e"});
  CHECK(applyCleanup(rows, CleanupRule::keepNewestRule(def, 3, 10), 0) == 0);
}

TEST_CASE("history keeps every row and single-table queries filter") {
  const auto cat = serviceCatalog();
  HistoryStore store(cat.get("service"));
  store.append(makeTuple(cat.get("service"), {std::string("u1"), std::string("CE"), std::string("RAL"), std::int64_t{1}}));
  store.append(makeTuple(cat.get("service"), {std::string("u1"), std::string("CE"), std::string("RAL"), std::int64_t{2}}));
  store.append(makeTuple(cat.get("service"), {std::string("u2"), std::string("SE"), std::string("RAL"), std::int64_t{2}}));
  const auto all = parseSelect("SELECT * FROM Service", cat);
  const std::vector<Tuple>* src[] = {&store.rows()};
  CHECK(selectRows(all, src).size() == 3);
  const auto ce = parseSelect("SELECT * FROM Service WHERE type = 'CE'", cat);
  CHECK(selectRows(ce, src).size() == 2);
}

TEST_CASE("equi-join of Service and ServiceStatus") {
  const auto cat = serviceCatalog();
  std::vector<Tuple> svc{
      makeTuple(cat.get("service"), {std::string("u1"), std::string("CE"), std::string("RAL"), std::int64_t{1}}),
      makeTuple(cat.get("service"), {std::string("u2"), std::string("SE"), std::string("CERN"), std::int64_t{1}})};
  std::vector<Tuple> st{makeTuple(cat.get("servicestatus"), {std::string("u1"), std::int64_t{1}, 0.5, std::int64_t{3}})};
  const auto q = parseSelect("SELECT s.uri, st.up FROM Service s, ServiceStatus st WHERE s.uri = st.uri", cat);
  const std::vector<Tuple>* src[] = {&svc, &st};
  const auto rows = selectRows(q, src);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].size() == 8);
  CHECK(std::get<std::string>(rows[0][0]) == "u1");
  CHECK(std::get<std::int64_t>(rows[0][5]) == 1);
}

TEST_CASE("random joins equal a nested-loop oracle") {
  Catalog cat;
  cat.add(parseCreateTable("CREATE TABLE l (k INT, s STRING, x REAL, ts TIMESTAMP)", {"k"}));
  cat.add(parseCreateTable("CREATE TABLE r (k INT, s STRING, y INT, ts TIMESTAMP)", {"k"}));
  std::mt19937_64 rng(21);
  const char* conds[] = {"l.k = r.k", "l.k = r.k AND l.s = r.s", "l.s = r.s AND r.y > 1",
                         "l.k = r.y AND (l.x < 1.5 OR r.s = 'b')", "l.k = r.k AND l.x = r.y", "r.y <> 2"};
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Tuple> left;
    std::vector<Tuple> right;
    for (int i = 0; i < 1 + int(rng() % 12); ++i) {
      left.push_back(makeTuple(cat.get("l"), {std::int64_t(rng() % 4), std::string(1, char('a' + rng() % 3)),
                                              double(rng() % 3) * 0.75, std::int64_t(i)}));
    }
    for (int i = 0; i < 1 + int(rng() % 12); ++i) {
      right.push_back(makeTuple(cat.get("r"), {std::int64_t(rng() % 4), std::string(1, char('a' + rng() % 3)),
                                               std::int64_t(rng() % 4), std::int64_t(i)}));
    }
    const std::string where = conds[trial % 6];
    const auto q = parseSelect("SELECT * FROM l, r WHERE " + where, cat);
    const std::vector<Tuple>* src[] = {&left, &right};
    auto got = selectRows(q, src);

    // Oracle: every pair, predicate evaluated by hand.
    std::vector<std::vector<Value>> expected;
    for (const auto& a : left) {
      for (const auto& b : right) {
        const auto lk = std::get<std::int64_t>(a.values[0]);
        const auto& ls = std::get<std::string>(a.values[1]);
        const double lx = std::get<double>(a.values[2]);
        const auto rk = std::get<std::int64_t>(b.values[0]);
        const auto& rs = std::get<std::string>(b.values[1]);
        const auto ry = std::get<std::int64_t>(b.values[2]);
        bool ok = false;
        switch (trial % 6) {
          case 0: ok = lk == rk; break;
          case 1: ok = lk == rk && ls == rs; break;
          case 2: ok = ls == rs && ry > 1; break;
          case 3: ok = lk == ry && (lx < 1.5 || rs == "b"); break;
          case 4: ok = lk == rk && lx == double(ry); break;
          case 5: ok = ry != 2; break;
        }
        if (!ok) continue;
        std::vector<Value> row = a.values;
        row.insert(row.end(), b.values.begin(), b.values.end());
        expected.push_back(row);
      }
    }
    std::sort(got.begin(), got.end(), ValueLess{});
    std::sort(expected.begin(), expected.end(), ValueLess{});
    CHECK_MESSAGE(got == expected, where);
  }
}

TEST_CASE("tuple encoding round trips") {
  const auto def = parseCreateTable("CREATE TABLE t (a INT, b STRING, c REAL, ts TIMESTAMP)", {"a"});
  const std::vector<Tuple> samples{
      makeTuple(def, {std::int64_t{-1}, std::string(""), -0.0, std::int64_t{0}}),
      makeTuple(def, {std::numeric_limits<std::int64_t>::min(), std::string("x\0y", 3), 1e300,
                      std::numeric_limits<std::int64_t>::max()}),
      makeTuple(def, {std::int64_t{42}, std::string("caf\xc3\xa9"), 0.1, std::int64_t{1700000000000}})};
  for (const auto& t : samples) CHECK(decodeTuple(def, encodeTuple(def, t)) == t);
  CHECK(codeOf([&] { decodeTuple(def, encodeTuple(def, samples[0]).substr(3)); }) == ErrorCode::Storage);
}

TEST_CASE("record log recovers records and truncates a torn tail at every cut point") {
  tg::TempDir dir;
  const auto path = dir / "t.tbl";
  std::vector<std::string> payloads{"alpha", "", std::string(300, 'z'), "omega"};
  {
    auto log = RecordLog::open(path, 77, nullptr, true);
    log.append(std::span<const std::string>(payloads));
  }
  const auto full = std::filesystem::file_size(path);
  std::string bytes;
  {
    std::ifstream in(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  // Record boundaries: header, then 8 + len per record.
  std::vector<std::size_t> ends{RecordLog::kHeaderSize};
  for (const auto& p : payloads) ends.push_back(ends.back() + 8 + p.size());
  CHECK(ends.back() == full);

  for (std::size_t cut = RecordLog::kHeaderSize; cut <= full; ++cut) {
    {
      std::ofstream out(path, std::ios::binary | std::ios::trunc);
      out.write(bytes.data(), static_cast<std::streamsize>(cut));
    }
    std::vector<std::string> got;
    auto log = RecordLog::open(path, 77, &got, false);
    std::size_t whole = 0;
    while (whole + 1 < ends.size() && ends[whole + 1] <= cut) ++whole;
    REQUIRE(got.size() == whole);
    for (std::size_t i = 0; i < whole; ++i) CHECK(got[i] == payloads[i]);
    CHECK(std::filesystem::file_size(path) == ends[whole]);
    log.append("next");
    log.close();
    std::vector<std::string> again;
    RecordLog::open(path, 77, &again, false);
    CHECK(again.size() == whole + 1);
    CHECK(again.back() == "next");
  }
}

TEST_CASE("record log rejects a corrupted record, foreign files and schema changes") {
  tg::TempDir dir;
  const auto path = dir / "t.tbl";
  {
    auto log = RecordLog::open(path, 5, nullptr, false);
    log.append("first");
    log.append("second");
  }
  {
    std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
    f.seekp(static_cast<std::streamoff>(RecordLog::kHeaderSize + 8 + 5 + 8 + 2));
    f.put('X');
  }
  std::vector<std::string> got;
  RecordLog::open(path, 5, &got, false);
  CHECK(got == std::vector<std::string>{"first"});
  CHECK(codeOf([&] { RecordLog::open(path, 6, nullptr, false); }) == ErrorCode::Storage);
  {
    std::ofstream out(dir / "junk", std::ios::binary);
    out << "this is not a table file at all";
  }
  CHECK(codeOf([&] { RecordLog::open(dir / "junk", 5, nullptr, false); }) == ErrorCode::Storage);
}

TEST_CASE("persistent stores reload their content") {
  tg::TempDir dir;
  const auto def = hostLoad();
  std::mt19937_64 rng(3);
  std::vector<Tuple> inserted;
  {
    LatestStore latest(def);
    latest.attach(dir / "latest.tbl", false);
    HistoryStore history(def);
    history.attach(dir / "history.tbl", false);
    for (int i = 0; i < 500; ++i) {
      const auto t = hl("h" + std::to_string(rng() % 7), double(i), std::int64_t(rng() % 100));
      latest.insert(t);
      history.append(t);
      inserted.push_back(t);
    }
    history.cleanup(CleanupRule::whereRule(def, "ts < 10", 100), 0);
    latest.cleanup(CleanupRule::whereRule(def, "host = 'h0'", 100), 0);

    LatestStore latest2(def);
    latest2.attach(dir / "latest.tbl", false);
    CHECK(latest2.rows() == latest.rows());
    HistoryStore history2(def);
    history2.attach(dir / "history.tbl", false);
    CHECK(history2.rows() == history.rows());
  }
  std::size_t kept = 0;
  for (const auto& t : inserted) kept += t.timestamp >= 10;
  HistoryStore reopened(def);
  reopened.attach(dir / "history.tbl", false);
  CHECK(reopened.size() == kept);
}
