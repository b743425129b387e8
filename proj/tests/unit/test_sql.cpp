#include <limits>
#include <random>

#include "doctest.h"
#include "common/error.hpp"
#include "sql/evaluate.hpp"
#include "sql/parser.hpp"
#include "sql/relevance.hpp"
#include "support/condition_gen.hpp"
#include "support/helpers.hpp"

using namespace rgma;
namespace tg = rgma::testing;
using tg::codeOf;
using tg::toValue;

namespace {

Catalog demoCatalog() {
  Catalog cat;
  cat.add(parseCreateTable("CREATE TABLE Service (uri STRING, type STRING, site STRING, ts TIMESTAMP)", {"uri"}));
  cat.add(parseCreateTable("CREATE TABLE ServiceStatus (uri STRING, up INT, load REAL, ts TIMESTAMP)", {"uri"}));
  return cat;
}

TableDefinition threeByThree() { return parseCreateTable(tg::kThreeByThreeSql, {"a"}); }

Tuple rowToTuple(const TableDefinition& def, const tg::TRow& row) {
  return makeTuple(def, {toValue(row.at("a")), toValue(row.at("b")), toValue(row.at("c")), std::int64_t{0}});
}

}  // namespace

TEST_CASE("CREATE TABLE builds canonical definitions") {
  auto svc = parseCreateTable("CREATE TABLE Service (uri STRING, type STRING, ts TIMESTAMP)", {"uri"});
  CHECK(svc.name() == "service");
  REQUIRE(svc.columns().size() == 3);
  CHECK(svc.columns()[0] == Column{"uri", ColumnType::String});
  CHECK(svc.definingKeyNames() == std::vector<std::string>{"uri"});
  CHECK(svc.timestampIndex() == 2);

  auto t = parseCreateTable("create table T (A int, Ts timestamp);", {"a"});
  CHECK(t.columns().size() == 2);
  CHECK(t.columns()[0].name == "a");

  auto v = parseCreateTable("CREATE TABLE v (name VARCHAR(64), load DOUBLE, ts TIMESTAMP)", {"NAME"});
  CHECK(v.columns()[0].type == ColumnType::String);
  CHECK(v.columns()[1].type == ColumnType::Real);
}

TEST_CASE("CREATE TABLE rejects schema violations") {
  CHECK(codeOf([] { parseCreateTable("CREATE TABLE T (a INT, b INT)", {"a"}); }) == ErrorCode::Schema);
  CHECK(codeOf([] { parseCreateTable("CREATE TABLE T (a INT, t1 TIMESTAMP, t2 TIMESTAMP)", {"a"}); }) ==
        ErrorCode::Schema);
  CHECK(codeOf([] { parseCreateTable("CREATE TABLE T (a INT, A STRING, ts TIMESTAMP)", {"a"}); }) ==
        ErrorCode::Schema);
  CHECK(codeOf([] { parseCreateTable("CREATE TABLE T (a INT, ts TIMESTAMP)", {"ts"}); }) == ErrorCode::Schema);
  CHECK(codeOf([] { parseCreateTable("CREATE TABLE T (a INT, ts TIMESTAMP)", {"b"}); }) == ErrorCode::Schema);
  CHECK(codeOf([] { parseCreateTable("CREATE TABLE T (a INT, ts TIMESTAMP)", {}); }) == ErrorCode::Schema);
  CHECK(codeOf([] { parseCreateTable("CREATE TABLE T (a INT ts TIMESTAMP)", {"a"}); }) == ErrorCode::Syntax);
  CHECK(codeOf([] { parseCreateTable("CREATE TABLE T (a BLOB, ts TIMESTAMP)", {"a"}); }) == ErrorCode::Syntax);
  CHECK(codeOf([] { parseCreateTable("CREATE TABLE T (a INT PRIMARY KEY, ts TIMESTAMP)", {"a"}); }) ==
        ErrorCode::UnsupportedFeature);
}

TEST_CASE("INSERT binds every column") {
  auto t = parseCreateTable("CREATE TABLE T (a INT, ts TIMESTAMP)", {"a"});
  auto tuple = parseInsert("INSERT INTO T (a, ts) VALUES (1, 100)", t);
  CHECK(tuple.table == "t");
  CHECK(tuple.values == std::vector<Value>{std::int64_t{1}, std::int64_t{100}});
  CHECK(tuple.timestamp == 100);

  CHECK(codeOf([&] { parseInsert("INSERT INTO T (a) VALUES (1)", t); }) == ErrorCode::Schema);
  CHECK(codeOf([&] { parseInsert("INSERT INTO T (ts) VALUES (1)", t); }) == ErrorCode::Schema);
  CHECK(codeOf([&] { parseInsert("INSERT INTO T (a, ts) VALUES ('x', 1)", t); }) == ErrorCode::Type);
  CHECK(codeOf([&] { parseInsert("INSERT INTO T (a, ts) VALUES (1.5, 1)", t); }) == ErrorCode::Type);
  CHECK(codeOf([&] { parseInsert("INSERT INTO T (a, zz) VALUES (1, 1)", t); }) == ErrorCode::Schema);
  CHECK(codeOf([&] { parseInsert("INSERT INTO T (a, ts) VALUES (1)", t); }) == ErrorCode::Syntax);
  CHECK(codeOf([&] { parseInsert("INSERT INTO U (a, ts) VALUES (1, 1)", t); }) == ErrorCode::Schema);
  CHECK(codeOf([&] { parseInsert("INSERT INTO T (a, ts) VALUES (NULL, 1)", t); }) == ErrorCode::UnsupportedFeature);
  CHECK(insertTargetTable("insert into Service (uri) values ('x')") == "service");
}

TEST_CASE("INSERT render/reparse round-trips exhaustively over a small literal domain") {
  auto def = parseCreateTable("CREATE TABLE r (a INT, b STRING, c REAL, ts TIMESTAMP)", {"a", "b"});
  const std::vector<Value> as = {std::int64_t{-1}, std::int64_t{0}, std::int64_t{7},
                                 std::numeric_limits<std::int64_t>::min(),
                                 std::numeric_limits<std::int64_t>::max()};
  const std::vector<Value> bs = {std::string(), std::string("it's"), std::string("x y -- z")};
  const std::vector<Value> cs = {0.0, -2.5, 1e300, 0.1, -0.0, 5e-324};
  const std::vector<Value> tss = {std::int64_t{0}, std::int64_t{1700000000000}};
  int checked = 0;
  for (const auto& a : as)
    for (const auto& b : bs)
      for (const auto& c : cs)
        for (const auto& ts : tss) {
          Tuple t = makeTuple(def, {a, b, c, ts});
          const std::string text = renderInsert(def, t);
          CHECK_MESSAGE(parseInsert(text, def) == t, text);
          ++checked;
        }
  CHECK(checked == 5 * 3 * 6 * 2);
}

TEST_CASE("SELECT parsing") {
  const Catalog cat = demoCatalog();
  auto q = parseSelect("SELECT * FROM Service WHERE type = 'CE'", cat);
  CHECK(q.tables.size() == 1);
  CHECK(q.selectAll);
  CHECK(q.condition.kind == Condition::Kind::Compare);
  CHECK(q.joinEqualities.empty());

  auto j = parseSelect("SELECT s.uri, st.up FROM Service s, ServiceStatus st WHERE s.uri = st.uri", cat);
  CHECK(j.tables.size() == 2);
  REQUIRE(j.joinEqualities.size() == 1);
  CHECK(j.joinEqualities[0].first == ColumnRef{0, 0});
  CHECK(j.joinEqualities[0].second == ColumnRef{1, 0});
  CHECK(j.condition.isTrue());
  CHECK(j.projection == std::vector<ColumnRef>{{0, 0}, {1, 1}});

  auto mixed = parseSelect(
      "SELECT * FROM Service s, ServiceStatus st WHERE s.uri = st.uri AND st.up = 1 AND s.type = 'SE'", cat);
  CHECK(mixed.joinEqualities.size() == 1);
  CHECK(mixed.condition.kind == Condition::Kind::And);
}

TEST_CASE("SELECT rejects what lies outside the subset") {
  const Catalog cat = demoCatalog();
  auto t = parseCreateTable("CREATE TABLE T (a INT, ts TIMESTAMP)", {"a"});
  Catalog withT = cat;
  withT.add(t);
  CHECK(codeOf([&] { parseSelect("SELECT count(*) FROM T", withT); }) == ErrorCode::UnsupportedFeature);
  CHECK(codeOf([&] { parseSelect("SELECT * FROM T ORDER BY a", withT); }) == ErrorCode::UnsupportedFeature);
  CHECK(codeOf([&] { parseSelect("SELECT * FROM T LIMIT 3", withT); }) == ErrorCode::UnsupportedFeature);
  CHECK(codeOf([&] { parseSelect("SELECT DISTINCT a FROM T", withT); }) == ErrorCode::UnsupportedFeature);
  CHECK(codeOf([&] { parseSelect("SELECT * FROM T WHERE a IN (1, 2)", withT); }) == ErrorCode::UnsupportedFeature);
  CHECK(codeOf([&] { parseSelect("SELECT * FROM T WHERE a = (SELECT a FROM T)", withT); }) ==
        ErrorCode::UnsupportedFeature);
  CHECK(codeOf([&] { parseSelect("SELECT * FROM T WHERE a IS NULL", withT); }) == ErrorCode::UnsupportedFeature);
  CHECK(codeOf([&] { parseSelect("SELECT * FROM Nope", withT); }) == ErrorCode::Schema);
  CHECK(codeOf([&] { parseSelect("SELECT zz FROM T", withT); }) == ErrorCode::Schema);
  CHECK(codeOf([&] { parseSelect("SELECT uri FROM Service, ServiceStatus", withT); }) == ErrorCode::Schema);
  CHECK(codeOf([&] { parseSelect("SELECT * FROM T WHERE a = 'x'", withT); }) == ErrorCode::Type);
  CHECK(codeOf([&] { parseSelect("SELECT * FROM T WHERE NOW > 1", withT); }) == ErrorCode::Schema);
  CHECK(codeOf([&] { parseSelect("SELECT * FROM T WHERE", withT); }) == ErrorCode::Syntax);
  CHECK(codeOf([&] { parseSelect("SELECT * FROM T WHERE a > 1 )", withT); }) == ErrorCode::Syntax);
}

TEST_CASE("CREATE TABLE render/reparse is identity") {
  auto def = parseCreateTable("CREATE TABLE x (k STRING, n INT, r REAL, ts TIMESTAMP)", {"n", "k"});
  CHECK(parseCreateTable(renderCreateTable(def), def.definingKeyNames()) == def);
}

TEST_CASE("SELECT render/reparse is identity over generated queries") {
  std::mt19937_64 rng(11);
  const auto cols = tg::threeByThreeColumns();
  Catalog cat;
  cat.add(threeByThree());
  cat.add(parseCreateTable("CREATE TABLE u (a INT, d STRING, ts TIMESTAMP)", {"a"}));
  for (int i = 0; i < 400; ++i) {
    const tg::TCond cond = tg::randomCondition(rng, cols, 3);
    std::string text;
    switch (i % 3) {
      case 0: text = "SELECT * FROM t WHERE " + tg::render(cond); break;
      case 1: text = "SELECT b, a FROM t WHERE " + tg::render(cond); break;
      default:
        text = "SELECT x.a, y.d FROM t x, u y WHERE x.a = y.a AND (" + tg::render(cond, "x.") + ")";
    }
    Query first = parseSelect(text, cat);
    const std::string rendered = renderSelect(first);
    Query second = parseSelect(rendered, cat);
    CHECK_MESSAGE(first == second, text << "  =>  " << rendered);
  }
}

TEST_CASE("evaluate") {
  auto def = parseCreateTable("CREATE TABLE t (a INT, ts TIMESTAMP)", {"a"});
  auto tuple = makeTuple(def, {std::int64_t{5}, std::int64_t{0}});
  CHECK(evaluate(parseCondition("a > 3", def, false), tuple));
  CHECK_FALSE(evaluate(parseCondition("a > 5", def, false), tuple));
  CHECK(evaluate(Condition::alwaysTrue(), tuple));
  CHECK(evaluate(parseCondition("", def, false), tuple));

  auto cleanup = parseCondition("NOW - ts > 604800000", def, true);
  CHECK(evaluate(cleanup, tuple, std::int64_t{604800001}));
  CHECK_FALSE(evaluate(cleanup, tuple, std::int64_t{604800000}));
  CHECK(codeOf([&] { evaluate(cleanup, tuple); }) == ErrorCode::Type);

  Tuple unbound;
  CHECK(codeOf([&] { evaluate(parseCondition("a > 3", def, false), unbound); }) == ErrorCode::Type);
}

TEST_CASE("evaluate agrees with a brute-force truth evaluator") {
  std::mt19937_64 rng(5);
  const auto cols = tg::threeByThreeColumns();
  const auto def = threeByThree();
  for (int i = 0; i < 300; ++i) {
    const tg::TCond cond = tg::randomCondition(rng, cols, 3);
    const Condition parsed = parseCondition(tg::render(cond), def, false);
    tg::enumerateRows(cols, [&](const tg::TRow& row) {
      REQUIRE(evaluate(parsed, rowToTuple(def, row)) == tg::eval(cond, row));
    });
  }
}

TEST_CASE("view parsing") {
  const Catalog cat = demoCatalog();
  const auto& svc = cat.get("service");
  auto v = parseView("WHERE (site = 'RAL' AND type = 'CE')", svc);
  REQUIRE(v.atoms().size() == 2);
  CHECK(v.atoms()[0].column == "site");
  CHECK(parseView("", svc).universal());
  CHECK(codeOf([&] { parseView("site = 'RAL' AND site = 'CERN'", svc); }) == ErrorCode::Schema);
  CHECK(codeOf([&] { parseView("site = 'RAL' OR type = 'CE'", svc); }) == ErrorCode::UnsupportedFeature);
  CHECK(codeOf([&] { parseView("nosuch = 1", svc); }) == ErrorCode::Schema);
  CHECK(codeOf([] { ViewPredicate::make({{"a", std::int64_t{1}}, {"A", std::int64_t{2}}}); }) == ErrorCode::Schema);
  CHECK(parseView(renderView(v), svc) == v);
}

TEST_CASE("relevant: view pruning examples") {
  Catalog cat;
  cat.add(parseCreateTable("CREATE TABLE host (site STRING, name STRING, load REAL, ts TIMESTAMP)", {"site", "name"}));
  const auto& def = cat.get("host");
  const auto ral = parseView("site = 'RAL'", def);
  CHECK(relevant(ral, parseSelect("SELECT * FROM host WHERE site = 'RAL' AND load > 0.5", cat), "host"));
  CHECK_FALSE(relevant(ral, parseSelect("SELECT * FROM host WHERE site = 'CERN'", cat), "host"));
  CHECK(relevant(ral, parseSelect("SELECT * FROM host", cat), "host"));
  CHECK(relevant(ViewPredicate{}, parseSelect("SELECT * FROM host WHERE site = 'CERN'", cat), "host"));
  CHECK_FALSE(relevant(ral, parseSelect("SELECT * FROM host WHERE NOT (site = 'RAL')", cat), "host"));
  CHECK_FALSE(relevant(ral, parseSelect("SELECT * FROM host WHERE site > 'RAL' OR site < 'RAL'", cat), "host"));
  CHECK(relevant(ral, parseSelect("SELECT * FROM host WHERE site >= 'RAL' AND load > 1.0 AND load < 1.5", cat), "host"));
  CHECK_FALSE(relevant(ral, parseSelect("SELECT * FROM host WHERE load > 2.0 AND load < 1.5", cat), "host"));
  CHECK(codeOf([&] { relevant(parseView("site = 'RAL'", def), parseSelect("SELECT * FROM host", cat), "other"); }) ==
        ErrorCode::Schema);
}

TEST_CASE("relevant: integer reasoning is exact") {
  Catalog cat;
  cat.add(parseCreateTable("CREATE TABLE n (k INT, v INT, ts TIMESTAMP)", {"k"}));
  const auto& def = cat.get("n");
  ViewPredicate any;
  CHECK_FALSE(relevant(any, parseSelect("SELECT * FROM n WHERE v > 3 AND v < 4", cat), "n"));
  CHECK_FALSE(relevant(any, parseSelect("SELECT * FROM n WHERE v >= 1 AND v <= 2 AND v <> 1 AND v <> 2", cat), "n"));
  CHECK(relevant(any, parseSelect("SELECT * FROM n WHERE v >= 1 AND v <= 3 AND v <> 1 AND v <> 2", cat), "n"));
  CHECK_FALSE(relevant(parseView("k = 1", def), parseSelect("SELECT * FROM n WHERE k = v AND v = 2", cat), "n"));
  CHECK(relevant(parseView("k = 2", def), parseSelect("SELECT * FROM n WHERE k = v AND v = 2", cat), "n"));
  // Arithmetic over columns is outside the solver's fragment: conservatively relevant.
  CHECK(relevant(any, parseSelect("SELECT * FROM n WHERE v + 1 > 5 AND v < 0", cat), "n"));
  // ...unless substitution makes it constant.
  CHECK_FALSE(relevant(parseView("v = 1", def), parseSelect("SELECT * FROM n WHERE v + 1 > 5", cat), "n"));
}

TEST_CASE("relevant matches exhaustive enumeration on random conjunctive views") {
  std::mt19937_64 rng(2024);
  const auto cols = tg::threeByThreeColumns();
  Catalog cat;
  cat.add(threeByThree());
  const auto& def = cat.get("t");
  int relevantCount = 0;
  for (int i = 0; i < 1500; ++i) {
    const auto viewAtoms = tg::randomView(rng, cols);
    const tg::TCond cond = tg::randomCondition(rng, cols, 3);
    const auto view = parseView(tg::renderViewText(viewAtoms), def);
    const auto query = parseSelect("SELECT * FROM t WHERE " + tg::render(cond), cat);
    const bool oracle = tg::witnessExists(cols, viewAtoms, cond);
    const bool got = relevant(view, query, "t");
    // Soundness is mandatory; on this domain the solver is also complete.
    REQUIRE_MESSAGE(got == oracle, "view: " << tg::renderViewText(viewAtoms) << " cond: " << tg::render(cond));
    relevantCount += got;
  }
  // Both outcomes are exercised.
  CHECK(relevantCount > 100);
  CHECK(relevantCount < 1400);
}

TEST_CASE("residual condition equals the original on view-consistent tuples") {
  std::mt19937_64 rng(77);
  const auto cols = tg::threeByThreeColumns();
  Catalog cat;
  cat.add(threeByThree());
  const auto& def = cat.get("t");
  for (int i = 0; i < 300; ++i) {
    const auto viewAtoms = tg::randomView(rng, cols);
    const tg::TCond cond = tg::randomCondition(rng, cols, 3);
    const auto view = parseView(tg::renderViewText(viewAtoms), def);
    const auto query = parseSelect("SELECT * FROM t WHERE " + tg::render(cond), cat);
    const auto bindings = viewBindings(query, "t", view);
    const Condition residual = residualCondition(query, bindings);
    tg::enumerateRows(cols, [&](const tg::TRow& row) {
      const Tuple t = rowToTuple(def, row);
      if (!view.admits(def, t)) return;
      REQUIRE(evaluate(residual, t) == evaluate(query.condition, t));
    });
  }
}

TEST_CASE("simplify folds constants") {
  auto def = parseCreateTable("CREATE TABLE t (a INT, ts TIMESTAMP)", {"a"});
  CHECK(simplify(parseCondition("1 = 1 AND a > 2", def, false)) == parseCondition("a > 2", def, false));
  CHECK(simplify(parseCondition("1 = 2 AND a > 2", def, false)).isFalse());
  CHECK(simplify(parseCondition("1 = 2 OR a > 2", def, false)) == parseCondition("a > 2", def, false));
  CHECK(simplify(parseCondition("NOT (NOT (a > 2))", def, false)) == parseCondition("a > 2", def, false));
  CHECK(simplify(parseCondition("ts < 0 AND ts > 0", def, false)) == parseCondition("ts < 0 AND ts > 0", def, false));
  CHECK_FALSE(maybeSatisfiable(parseCondition("ts < 0 AND ts > 0", def, false),
                               [](ColumnRef) { return ColumnType::Timestamp; }));
}
