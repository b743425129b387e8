#include "sql/parser.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <optional>
#include <set>

#include "common/error.hpp"

namespace rgma {

namespace {

enum class Tok { Ident, Int, Real, String, Symbol, End };

struct Token {
  Tok kind = Tok::End;
  std::string text;  // identifier/number text, string value, or symbol
  std::size_t pos = 0;
};

std::vector<Token> tokenize(std::string_view sql) {
  std::vector<Token> out;
  std::size_t i = 0;
  auto isIdentStart = [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_';
  };
  auto isDigit = [](char c) { return c >= '0' && c <= '9'; };
  while (i < sql.size()) {
    const char c = sql[i];
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
      ++i;
      continue;
    }
    if (c == '-' && i + 1 < sql.size() && sql[i + 1] == '-') {  // line comment
      while (i < sql.size() && sql[i] != '\n') ++i;
      continue;
    }
    Token t;
    t.pos = i;
    if (isIdentStart(c)) {
      std::size_t j = i;
      while (j < sql.size() && (isIdentStart(sql[j]) || isDigit(sql[j]))) ++j;
      t.kind = Tok::Ident;
      t.text = std::string(sql.substr(i, j - i));
      i = j;
    } else if (isDigit(c) || (c == '.' && i + 1 < sql.size() && isDigit(sql[i + 1]))) {
      std::size_t j = i;
      bool real = false;
      while (j < sql.size() && isDigit(sql[j])) ++j;
      if (j < sql.size() && sql[j] == '.') {
        real = true;
        ++j;
        while (j < sql.size() && isDigit(sql[j])) ++j;
      }
      if (j < sql.size() && (sql[j] == 'e' || sql[j] == 'E')) {
        std::size_t k = j + 1;
        if (k < sql.size() && (sql[k] == '+' || sql[k] == '-')) ++k;
        if (k < sql.size() && isDigit(sql[k])) {
          real = true;
          j = k;
          while (j < sql.size() && isDigit(sql[j])) ++j;
        }
      }
      if (j < sql.size() && isIdentStart(sql[j])) {
        fail(ErrorCode::Syntax, "malformed number at offset " + std::to_string(i));
      }
      t.kind = real ? Tok::Real : Tok::Int;
      t.text = std::string(sql.substr(i, j - i));
      i = j;
    } else if (c == '\'') {
      std::string value;
      std::size_t j = i + 1;
      bool closed = false;
      while (j < sql.size()) {
        if (sql[j] == '\'') {
          if (j + 1 < sql.size() && sql[j + 1] == '\'') {
            value += '\'';
            j += 2;
            continue;
          }
          closed = true;
          ++j;
          break;
        }
        value += sql[j++];
      }
      if (!closed) fail(ErrorCode::Syntax, "unterminated string literal at offset " + std::to_string(i));
      t.kind = Tok::String;
      t.text = std::move(value);
      i = j;
    } else {
      static const std::string_view kTwo[] = {"<>", "!=", "<=", ">="};
      t.kind = Tok::Symbol;
      bool matched = false;
      for (auto two : kTwo) {
        if (sql.substr(i, 2) == two) {
          t.text = two == "!=" ? "<>" : std::string(two);
          i += 2;
          matched = true;
          break;
        }
      }
      if (!matched) {
        static const std::string_view kOne = "(),.*=<>+-;";
        if (kOne.find(c) == std::string_view::npos) {
          fail(ErrorCode::Syntax, std::string("unexpected character '") + c + "' at offset " +
                                      std::to_string(i));
        }
        t.text = std::string(1, c);
        ++i;
      }
    }
    out.push_back(std::move(t));
  }
  Token end;
  end.pos = sql.size();
  out.push_back(end);
  return out;
}

const std::set<std::string>& reservedWords() {
  static const std::set<std::string> words = {
      "select", "from",  "where", "and",    "or",     "not",   "insert", "into",
      "values", "create", "table", "true",  "false",  "now",   "as",     "order",
      "group",  "by",    "limit", "having", "distinct", "null", "is",    "in",
      "like",   "between", "join", "union", "exists", "on",    "primary", "key"};
  return words;
}

const std::set<std::string>& unsupportedWords() {
  static const std::set<std::string> words = {"order", "group",  "limit", "having", "distinct",
                                              "null",  "is",     "in",    "like",   "between",
                                              "join",  "union",  "exists", "on",    "primary",
                                              "key",   "unique", "default", "references",
                                              "offset", "inner", "left",  "right", "outer"};
  return words;
}

struct RawColumn {
  std::string qualifier;  // empty when unqualified
  std::string name;
  std::size_t pos = 0;
};

struct Scope {
  const std::vector<TableRef>* tables = nullptr;
  bool allowNow = false;
};

class Parser {
 public:
  explicit Parser(std::string_view text) : toks_(tokenize(text)) {}

  // ---- token helpers ----
  const Token& peek(std::size_t ahead = 0) const {
    return toks_[std::min(pos_ + ahead, toks_.size() - 1)];
  }
  bool atEnd() const { return peek().kind == Tok::End; }
  bool isKeyword(std::string_view kw, std::size_t ahead = 0) const {
    const auto& t = peek(ahead);
    return t.kind == Tok::Ident && iequals(t.text, kw);
  }
  bool isSymbol(std::string_view s, std::size_t ahead = 0) const {
    const auto& t = peek(ahead);
    return t.kind == Tok::Symbol && t.text == s;
  }
  bool acceptKeyword(std::string_view kw) {
    if (!isKeyword(kw)) return false;
    ++pos_;
    return true;
  }
  bool acceptSymbol(std::string_view s) {
    if (!isSymbol(s)) return false;
    ++pos_;
    return true;
  }
  [[noreturn]] void syntaxError(const std::string& what) const {
    const auto& t = peek();
    std::string found = t.kind == Tok::End ? "end of input" : "'" + t.text + "'";
    fail(ErrorCode::Syntax, what + " at offset " + std::to_string(t.pos) + ", found " + found);
  }
  void expectKeyword(std::string_view kw) {
    if (!acceptKeyword(kw)) syntaxError("expected " + toUpper(kw));
  }
  void expectSymbol(std::string_view s) {
    if (!acceptSymbol(s)) syntaxError("expected '" + std::string(s) + "'");
  }
  static std::string toUpper(std::string_view s) {
    std::string out(s);
    for (auto& c : out) {
      if (c >= 'a' && c <= 'z') c = static_cast<char>(c - 'a' + 'A');
    }
    return out;
  }
  void rejectUnsupported() const {
    const auto& t = peek();
    if (t.kind == Tok::Ident && unsupportedWords().count(toLower(t.text))) {
      fail(ErrorCode::UnsupportedFeature, toUpper(t.text) + " is outside the supported SQL subset");
    }
  }
  std::string identifier(const char* what) {
    rejectUnsupported();
    const auto& t = peek();
    if (t.kind != Tok::Ident || reservedWords().count(toLower(t.text))) {
      syntaxError(std::string("expected ") + what);
    }
    ++pos_;
    return toLower(t.text);
  }
  void finish() {
    rejectUnsupported();
    acceptSymbol(";");
    if (!atEnd()) syntaxError("unexpected trailing input");
  }

  // ---- literals ----
  std::optional<Value> tryLiteral() {
    const std::size_t save = pos_;
    bool negative = false;
    if (isSymbol("-") && (peek(1).kind == Tok::Int || peek(1).kind == Tok::Real)) {
      negative = true;
      ++pos_;
    }
    const auto& t = peek();
    if (t.kind == Tok::String && !negative) {
      ++pos_;
      return Value{t.text};
    }
    if (t.kind == Tok::Int) {
      ++pos_;
      const std::string digits = (negative ? "-" : "") + t.text;
      std::int64_t v = 0;
      auto [p, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), v);
      if (ec != std::errc() || p != digits.data() + digits.size()) {
        fail(ErrorCode::Syntax, "integer literal out of range: " + digits);
      }
      return Value{v};
    }
    if (t.kind == Tok::Real) {
      ++pos_;
      const std::string text = (negative ? "-" : "") + t.text;
      const double d = std::strtod(text.c_str(), nullptr);
      if (!std::isfinite(d)) fail(ErrorCode::Syntax, "real literal out of range: " + text);
      return Value{d};
    }
    pos_ = save;
    return std::nullopt;
  }

  Value literal() {
    if (isKeyword("null")) fail(ErrorCode::UnsupportedFeature, "NULL is outside the supported SQL subset");
    auto v = tryLiteral();
    if (!v) syntaxError("expected a literal");
    return *v;
  }

  // ---- CREATE TABLE ----
  TableDefinition createTable(const std::vector<std::string>& key) {
    expectKeyword("create");
    expectKeyword("table");
    std::string name = identifier("table name");
    expectSymbol("(");
    std::vector<Column> cols;
    do {
      Column col;
      col.name = identifier("column name");
      const auto& t = peek();
      if (t.kind != Tok::Ident) syntaxError("expected a column type");
      auto type = columnTypeFromName(t.text);
      if (!type) {
        fail(ErrorCode::Syntax, "unknown column type '" + t.text + "' at offset " + std::to_string(t.pos));
      }
      ++pos_;
      if (*type == ColumnType::String && acceptSymbol("(")) {
        if (peek().kind != Tok::Int) syntaxError("expected a length");
        ++pos_;
        expectSymbol(")");
      }
      col.type = *type;
      rejectUnsupported();
      if (isKeyword("not")) fail(ErrorCode::UnsupportedFeature, "column constraints are outside the supported SQL subset");
      cols.push_back(col);
    } while (acceptSymbol(","));
    expectSymbol(")");
    finish();
    return TableDefinition::make(name, std::move(cols), key);
  }

  // ---- INSERT ----
  std::string insertHead() {
    expectKeyword("insert");
    expectKeyword("into");
    return identifier("table name");
  }

  Tuple insert(const TableDefinition& schema) {
    const std::string table = insertHead();
    if (table != schema.name()) {
      fail(ErrorCode::Schema, "INSERT targets table '" + table + "' but the schema is '" + schema.name() + "'");
    }
    std::vector<std::string> names;
    if (acceptSymbol("(")) {
      do {
        names.push_back(identifier("column name"));
      } while (acceptSymbol(","));
      expectSymbol(")");
    } else {
      for (const auto& c : schema.columns()) names.push_back(c.name);
    }
    expectKeyword("values");
    expectSymbol("(");
    std::vector<Value> lits;
    do {
      lits.push_back(literal());
    } while (acceptSymbol(","));
    expectSymbol(")");
    finish();
    if (lits.size() != names.size()) {
      fail(ErrorCode::Syntax, "INSERT lists " + std::to_string(names.size()) + " columns but " +
                                  std::to_string(lits.size()) + " values");
    }
    std::vector<std::optional<Value>> bound(schema.columns().size());
    for (std::size_t i = 0; i < names.size(); ++i) {
      auto idx = schema.columnIndex(names[i]);
      if (!idx) fail(ErrorCode::Schema, "unknown column '" + names[i] + "' in table " + schema.name());
      if (bound[*idx]) fail(ErrorCode::Schema, "column '" + names[i] + "' bound twice");
      bound[*idx] = coerceTo(lits[i], schema.columns()[*idx].type);
    }
    std::vector<Value> values;
    for (std::size_t i = 0; i < bound.size(); ++i) {
      if (!bound[i]) {
        const auto& col = schema.columns()[i].name;
        if (i == schema.timestampIndex()) fail(ErrorCode::Schema, "timestamp column '" + col + "' is not bound");
        fail(ErrorCode::Schema, "column '" + col + "' is not bound");
      }
      values.push_back(std::move(*bound[i]));
    }
    return makeTuple(schema, std::move(values));
  }

  // ---- SELECT ----
  Query select(const Catalog& catalog) {
    expectKeyword("select");
    if (isKeyword("distinct")) rejectUnsupported();
    Query q;
    std::vector<RawColumn> raw;
    if (acceptSymbol("*")) {
      q.selectAll = true;
    } else {
      q.selectAll = false;
      do {
        raw.push_back(rawColumn(true));
      } while (acceptSymbol(","));
    }
    expectKeyword("from");
    do {
      if (isSymbol("(")) fail(ErrorCode::UnsupportedFeature, "subqueries are outside the supported SQL subset");
      std::string table = identifier("table name");
      TableRef ref;
      const TableDefinition* def = catalog.find(table);
      if (!def) fail(ErrorCode::Schema, "unknown table '" + table + "'");
      ref.def = *def;
      ref.alias = table;
      if (acceptKeyword("as")) {
        ref.alias = identifier("alias");
      } else if (peek().kind == Tok::Ident && !reservedWords().count(toLower(peek().text))) {
        ref.alias = identifier("alias");
      }
      for (const auto& existing : q.tables) {
        if (existing.alias == ref.alias) fail(ErrorCode::Schema, "duplicate table alias '" + ref.alias + "'");
      }
      q.tables.push_back(std::move(ref));
    } while (acceptSymbol(","));

    Scope scope{&q.tables, false};
    for (const auto& r : raw) q.projection.push_back(resolve(r, scope));

    Condition where;
    if (acceptKeyword("where")) where = condition(scope);
    finish();

    if (q.tables.size() > 1) {
      extractJoins(q, std::move(where));
    } else {
      q.condition = std::move(where);
    }
    return q;
  }

  static void flattenAnd(Condition c, std::vector<Condition>& out) {
    if (c.kind == Condition::Kind::And) {
      for (auto& child : c.children) flattenAnd(std::move(child), out);
    } else if (!c.isTrue()) {
      out.push_back(std::move(c));
    }
  }

  static void extractJoins(Query& q, Condition where) {
    std::vector<Condition> parts;
    flattenAnd(std::move(where), parts);
    std::vector<Condition> residual;
    for (auto& p : parts) {
      if (p.kind == Condition::Kind::Compare && p.op == CompareOp::Eq &&
          p.sides[0].kind == Expr::Kind::Column && p.sides[1].kind == Expr::Kind::Column &&
          p.sides[0].column.table != p.sides[1].column.table) {
        q.joinEqualities.emplace_back(p.sides[0].column, p.sides[1].column);
      } else {
        residual.push_back(std::move(p));
      }
    }
    q.condition = Condition::conj(std::move(residual));
  }

  RawColumn rawColumn(bool inSelectList) {
    RawColumn r;
    r.pos = peek().pos;
    if (inSelectList && peek().kind == Tok::Ident && isSymbol("(", 1)) {
      fail(ErrorCode::UnsupportedFeature, "function '" + peek().text + "' is outside the supported SQL subset");
    }
    std::string first = identifier("column name");
    if (acceptSymbol(".")) {
      if (isSymbol("*")) fail(ErrorCode::UnsupportedFeature, "qualified * is outside the supported SQL subset");
      r.qualifier = first;
      r.name = identifier("column name");
    } else {
      r.name = first;
    }
    return r;
  }

  static ColumnRef resolve(const RawColumn& r, const Scope& scope) {
    const auto& tables = *scope.tables;
    std::optional<ColumnRef> found;
    for (std::size_t t = 0; t < tables.size(); ++t) {
      if (!r.qualifier.empty() && tables[t].alias != r.qualifier) continue;
      if (auto idx = tables[t].def.columnIndex(r.name)) {
        if (found) fail(ErrorCode::Schema, "column reference '" + r.name + "' is ambiguous");
        found = ColumnRef{t, *idx};
      }
    }
    if (!found) {
      if (!r.qualifier.empty()) {
        bool known = std::any_of(tables.begin(), tables.end(),
                                 [&](const TableRef& t) { return t.alias == r.qualifier; });
        if (!known) fail(ErrorCode::Schema, "unknown table or alias '" + r.qualifier + "'");
        fail(ErrorCode::Schema, "unknown column '" + r.qualifier + "." + r.name + "'");
      }
      fail(ErrorCode::Schema, "unknown column '" + r.name + "'");
    }
    return *found;
  }

  // ---- conditions ----
  Condition condition(const Scope& scope) {
    std::vector<Condition> parts;
    parts.push_back(conjunction(scope));
    while (acceptKeyword("or")) parts.push_back(conjunction(scope));
    return Condition::disj(std::move(parts));
  }

  Condition conjunction(const Scope& scope) {
    std::vector<Condition> parts;
    parts.push_back(negationTerm(scope));
    while (acceptKeyword("and")) parts.push_back(negationTerm(scope));
    return Condition::conj(std::move(parts));
  }

  Condition negationTerm(const Scope& scope) {
    if (acceptKeyword("not")) {
      if (isKeyword("exists")) rejectUnsupported();
      return Condition::negation(negationTerm(scope));
    }
    return primaryCondition(scope);
  }

  Condition primaryCondition(const Scope& scope) {
    rejectUnsupported();
    if (isSymbol("(")) {
      if (isKeyword("select", 1)) fail(ErrorCode::UnsupportedFeature, "subqueries are outside the supported SQL subset");
      const std::size_t save = pos_;
      try {
        ++pos_;
        Condition inner = condition(scope);
        expectSymbol(")");
        if (!isComparisonAhead() && !isSymbol("+") && !isSymbol("-")) return inner;
      } catch (const Error& e) {
        if (e.code() != ErrorCode::Syntax) throw;
      }
      pos_ = save;
    }
    if (acceptKeyword("true")) return Condition::alwaysTrue();
    if (acceptKeyword("false")) return Condition::alwaysFalse();
    return comparison(scope);
  }

  bool isComparisonAhead() const {
    static const std::string_view ops[] = {"=", "<>", "<", "<=", ">", ">="};
    for (auto op : ops) {
      if (isSymbol(op)) return true;
    }
    return false;
  }

  struct Typed {
    Expr expr;
    bool isString = false;
    bool isReal = false;
  };

  Condition comparison(const Scope& scope) {
    Typed lhs = expression(scope);
    rejectUnsupported();
    CompareOp op;
    if (acceptSymbol("=")) op = CompareOp::Eq;
    else if (acceptSymbol("<>")) op = CompareOp::Ne;
    else if (acceptSymbol("<=")) op = CompareOp::Le;
    else if (acceptSymbol(">=")) op = CompareOp::Ge;
    else if (acceptSymbol("<")) op = CompareOp::Lt;
    else if (acceptSymbol(">")) op = CompareOp::Gt;
    else syntaxError("expected a comparison operator");
    Typed rhs = expression(scope);
    if (lhs.isString != rhs.isString) fail(ErrorCode::Type, "comparison between a string and a number");
    // A bare literal compared with a bare column takes the column's type.
    auto coerceSide = [&](Typed& lit, const Typed& col) {
      if (lit.expr.kind == Expr::Kind::Literal && col.expr.kind == Expr::Kind::Column) {
        const auto& tables = *scope.tables;
        const auto type = tables[col.expr.column.table].def.columns()[col.expr.column.column].type;
        lit.expr.literal = coerceTo(lit.expr.literal, type);
      }
    };
    coerceSide(rhs, lhs);
    coerceSide(lhs, rhs);
    return Condition::compare(op, std::move(lhs.expr), std::move(rhs.expr));
  }

  Typed expression(const Scope& scope) {
    Typed acc = operand(scope);
    while (isSymbol("+") || isSymbol("-")) {
      const bool add = isSymbol("+");
      ++pos_;
      Typed rhs = operand(scope);
      if (acc.isString || rhs.isString) fail(ErrorCode::Type, "arithmetic on a string");
      acc.expr = Expr::binary(add ? Expr::Kind::Add : Expr::Kind::Sub, std::move(acc.expr), std::move(rhs.expr));
      acc.isReal = acc.isReal || rhs.isReal;
    }
    return acc;
  }

  Typed operand(const Scope& scope) {
    rejectUnsupported();
    if (auto lit = tryLiteral()) {
      Typed t;
      t.isString = isString(*lit);
      t.isReal = std::holds_alternative<double>(*lit);
      t.expr = Expr::lit(std::move(*lit));
      return t;
    }
    if (acceptSymbol("(")) {
      if (isKeyword("select")) fail(ErrorCode::UnsupportedFeature, "subqueries are outside the supported SQL subset");
      Typed inner = expression(scope);
      expectSymbol(")");
      return inner;
    }
    if (isKeyword("now")) {
      if (!scope.allowNow) fail(ErrorCode::Schema, "NOW is only available in cleanup conditions");
      ++pos_;
      Typed t;
      t.expr = Expr::now();
      return t;
    }
    if (peek().kind == Tok::Ident && isSymbol("(", 1)) {
      fail(ErrorCode::UnsupportedFeature, "function '" + peek().text + "' is outside the supported SQL subset");
    }
    if (peek().kind != Tok::Ident) syntaxError("expected an operand");
    RawColumn raw = rawColumn(false);
    ColumnRef ref = resolve(raw, scope);
    const auto type = (*scope.tables)[ref.table].def.columns()[ref.column].type;
    Typed t;
    t.expr = Expr::col(ref);
    t.isString = type == ColumnType::String;
    t.isReal = type == ColumnType::Real;
    return t;
  }

  Condition standaloneCondition(const TableDefinition& def, bool allowNow) {
    std::vector<TableRef> tables{TableRef{def, def.name()}};
    Scope scope{&tables, allowNow};
    if (atEnd()) return Condition::alwaysTrue();
    acceptKeyword("where");
    Condition c = condition(scope);
    finish();
    return c;
  }

 private:
  std::vector<Token> toks_;
  std::size_t pos_ = 0;
};

// ---- rendering ----

std::string columnName(const Query& q, ColumnRef ref) {
  const auto& col = q.columnOf(ref);
  if (q.tables.size() == 1) return col.name;
  return q.tables[ref.table].alias + "." + col.name;
}

std::string renderExpr(const Expr& e, const Query& q) {
  switch (e.kind) {
    case Expr::Kind::Column: return columnName(q, e.column);
    case Expr::Kind::Literal: return renderLiteral(e.literal);
    case Expr::Kind::Now: return "NOW";
    case Expr::Kind::Add:
    case Expr::Kind::Sub: {
      std::string rhs = renderExpr(e.operands[1], q);
      const auto rk = e.operands[1].kind;
      if (rk == Expr::Kind::Add || rk == Expr::Kind::Sub) rhs = "(" + rhs + ")";
      return renderExpr(e.operands[0], q) + (e.kind == Expr::Kind::Add ? " + " : " - ") + rhs;
    }
  }
  return {};
}

std::string renderCond(const Condition& c, const Query& q) {
  auto child = [&](const Condition& ch) {
    std::string s = renderCond(ch, q);
    if (ch.kind == Condition::Kind::And || ch.kind == Condition::Kind::Or ||
        ch.kind == Condition::Kind::Not) {
      return "(" + s + ")";
    }
    return s;
  };
  switch (c.kind) {
    case Condition::Kind::True: return "TRUE";
    case Condition::Kind::False: return "FALSE";
    case Condition::Kind::Compare: {
      // A leading parenthesised expression would read as a nested condition.
      std::string lhs = renderExpr(c.sides[0], q);
      if (c.sides[0].kind == Expr::Kind::Add || c.sides[0].kind == Expr::Kind::Sub) {
        lhs = "(" + lhs + ")";
      }
      return lhs + " " + std::string(opSymbol(c.op)) + " " + renderExpr(c.sides[1], q);
    }
    case Condition::Kind::And:
    case Condition::Kind::Or: {
      std::string out;
      const char* sep = c.kind == Condition::Kind::And ? " AND " : " OR ";
      for (std::size_t i = 0; i < c.children.size(); ++i) {
        if (i) out += sep;
        out += child(c.children[i]);
      }
      return out;
    }
    case Condition::Kind::Not: return "NOT " + child(c.children[0]);
  }
  return {};
}

}  // namespace

TableDefinition parseCreateTable(std::string_view text, const std::vector<std::string>& definingKey) {
  return Parser(text).createTable(definingKey);
}

Tuple parseInsert(std::string_view text, const TableDefinition& schema) {
  return Parser(text).insert(schema);
}

std::string insertTargetTable(std::string_view text) { return Parser(text).insertHead(); }

Query parseSelect(std::string_view text, const Catalog& catalog) {
  return Parser(text).select(catalog);
}

Condition parseCondition(std::string_view text, const TableDefinition& schema, bool allowNow) {
  return Parser(text).standaloneCondition(schema, allowNow);
}

ViewPredicate parseView(std::string_view text, const TableDefinition& schema) {
  Condition c = parseCondition(text, schema, false);
  std::vector<ViewAtom> atoms;
  std::vector<const Condition*> stack{&c};
  while (!stack.empty()) {
    const Condition* cur = stack.back();
    stack.pop_back();
    if (cur->isTrue()) continue;
    if (cur->kind == Condition::Kind::And) {
      for (auto it = cur->children.rbegin(); it != cur->children.rend(); ++it) stack.push_back(&*it);
      continue;
    }
    if (cur->kind == Condition::Kind::Compare && cur->op == CompareOp::Eq) {
      const Expr* col = nullptr;
      const Expr* lit = nullptr;
      for (const auto& side : cur->sides) {
        if (side.kind == Expr::Kind::Column) col = &side;
        if (side.kind == Expr::Kind::Literal) lit = &side;
      }
      if (col && lit) {
        atoms.push_back({schema.columns()[col->column.column].name, lit->literal});
        continue;
      }
    }
    fail(ErrorCode::UnsupportedFeature,
         "a producer view must be a conjunction of column = literal atoms");
  }
  return ViewPredicate::make(std::move(atoms)).validated(schema);
}

std::string renderCreateTable(const TableDefinition& def) {
  std::string out = "CREATE TABLE " + def.name() + " (";
  for (std::size_t i = 0; i < def.columns().size(); ++i) {
    if (i) out += ", ";
    out += def.columns()[i].name + " " + std::string(typeName(def.columns()[i].type));
  }
  return out + ")";
}

std::string renderInsert(const TableDefinition& def, const Tuple& tuple) {
  std::string cols;
  std::string vals;
  for (std::size_t i = 0; i < def.columns().size(); ++i) {
    if (i) {
      cols += ", ";
      vals += ", ";
    }
    cols += def.columns()[i].name;
    vals += renderLiteral(tuple.values.at(i));
  }
  return "INSERT INTO " + def.name() + " (" + cols + ") VALUES (" + vals + ")";
}

std::string renderSelect(const Query& q) {
  std::string out = "SELECT ";
  if (q.selectAll) {
    out += "*";
  } else {
    for (std::size_t i = 0; i < q.projection.size(); ++i) {
      if (i) out += ", ";
      out += columnName(q, q.projection[i]);
    }
  }
  out += " FROM ";
  for (std::size_t i = 0; i < q.tables.size(); ++i) {
    if (i) out += ", ";
    out += q.tables[i].def.name();
    if (q.tables[i].alias != q.tables[i].def.name()) out += " " + q.tables[i].alias;
  }
  const Condition full = q.fullCondition();
  if (!full.isTrue()) out += " WHERE " + renderCond(full, q);
  return out;
}

std::string renderCondition(const Condition& cond, const Query& query) {
  return renderCond(cond, query);
}

std::string renderView(const ViewPredicate& view) {
  std::string out;
  for (std::size_t i = 0; i < view.atoms().size(); ++i) {
    if (i) out += " AND ";
    out += view.atoms()[i].column + " = " + renderLiteral(view.atoms()[i].literal);
  }
  return out;
}

Query singleTableQuery(const TableDefinition& def, Condition condition) {
  Query q;
  q.tables.push_back(TableRef{def, def.name()});
  q.condition = std::move(condition);
  return q;
}

}  // namespace rgma
