#include "sql/relevance.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include "common/error.hpp"
#include "sql/evaluate.hpp"

namespace rgma {

namespace {

Expr substituteExpr(const Expr& e, std::span<const Binding> bindings) {
  if (e.kind == Expr::Kind::Column) {
    for (const auto& b : bindings) {
      if (b.column == e.column) return Expr::lit(b.value);
    }
    return e;
  }
  if (e.kind == Expr::Kind::Add || e.kind == Expr::Kind::Sub) {
    return Expr::binary(e.kind, substituteExpr(e.operands[0], bindings),
                        substituteExpr(e.operands[1], bindings));
  }
  return e;
}

Expr foldExpr(const Expr& e) {
  if (e.kind != Expr::Kind::Add && e.kind != Expr::Kind::Sub) return e;
  Expr folded = Expr::binary(e.kind, foldExpr(e.operands[0]), foldExpr(e.operands[1]));
  if (folded.isConstant()) {
    try {
      return Expr::lit(evaluateExpr(folded, {}));
    } catch (const Error&) {
      return folded;  // overflow: leave for runtime evaluation
    }
  }
  return folded;
}

}  // namespace

Condition substitute(const Condition& cond, std::span<const Binding> bindings) {
  Condition out = cond;
  if (cond.kind == Condition::Kind::Compare) {
    out.sides = {substituteExpr(cond.sides[0], bindings), substituteExpr(cond.sides[1], bindings)};
  } else {
    for (auto& c : out.children) c = substitute(c, bindings);
  }
  return out;
}

Condition simplify(const Condition& cond) {
  switch (cond.kind) {
    case Condition::Kind::True:
    case Condition::Kind::False: return cond;
    case Condition::Kind::Compare: {
      Expr lhs = foldExpr(cond.sides[0]);
      Expr rhs = foldExpr(cond.sides[1]);
      if (lhs.kind == Expr::Kind::Literal && rhs.kind == Expr::Kind::Literal) {
        return compareWith(cond.op, lhs.literal, rhs.literal) ? Condition::alwaysTrue()
                                                              : Condition::alwaysFalse();
      }
      return Condition::compare(cond.op, std::move(lhs), std::move(rhs));
    }
    case Condition::Kind::And:
    case Condition::Kind::Or: {
      const bool isAnd = cond.kind == Condition::Kind::And;
      std::vector<Condition> parts;
      for (const auto& child : cond.children) {
        Condition s = simplify(child);
        if (isAnd ? s.isTrue() : s.isFalse()) continue;
        if (isAnd ? s.isFalse() : s.isTrue()) return s;
        if (s.kind == cond.kind) {
          for (auto& g : s.children) parts.push_back(std::move(g));
        } else {
          parts.push_back(std::move(s));
        }
      }
      return isAnd ? Condition::conj(std::move(parts)) : Condition::disj(std::move(parts));
    }
    case Condition::Kind::Not: {
      Condition inner = simplify(cond.children[0]);
      if (inner.isTrue()) return Condition::alwaysFalse();
      if (inner.isFalse()) return Condition::alwaysTrue();
      if (inner.kind == Condition::Kind::Not) return std::move(inner.children[0]);
      return Condition::negation(std::move(inner));
    }
  }
  return cond;
}

namespace {

// Negation normal form: NOT only ever disappears into comparison operators.
Condition toNnf(const Condition& c, bool negated) {
  switch (c.kind) {
    case Condition::Kind::True: return negated ? Condition::alwaysFalse() : c;
    case Condition::Kind::False: return negated ? Condition::alwaysTrue() : c;
    case Condition::Kind::Compare: {
      Condition out = c;
      if (negated) out.op = negate(c.op);
      return out;
    }
    case Condition::Kind::Not: return toNnf(c.children[0], !negated);
    case Condition::Kind::And:
    case Condition::Kind::Or: {
      std::vector<Condition> parts;
      for (const auto& ch : c.children) parts.push_back(toNnf(ch, negated));
      const bool isAnd = (c.kind == Condition::Kind::And) != negated;
      Condition out;
      out.kind = isAnd ? Condition::Kind::And : Condition::Kind::Or;
      out.children = std::move(parts);
      return out;
    }
  }
  return c;
}

struct Atom {
  enum class Kind { Bound, ColumnEq, False };
  Kind kind = Kind::Bound;
  ColumnRef column;
  ColumnRef other;
  CompareOp op = CompareOp::Eq;
  Value value;
};

// Normalizes a comparison into something the solver understands, or nullopt when
// the atom is outside its fragment (and therefore ignored, i.e. assumed satisfiable).
std::optional<Atom> normalize(const Condition& c) {
  const Expr lhs = foldExpr(c.sides[0]);
  const Expr rhs = foldExpr(c.sides[1]);
  const bool lc = lhs.kind == Expr::Kind::Column;
  const bool rc = rhs.kind == Expr::Kind::Column;
  const bool ll = lhs.kind == Expr::Kind::Literal;
  const bool rl = rhs.kind == Expr::Kind::Literal;
  if (ll && rl) {
    Atom a;
    if (!compareWith(c.op, lhs.literal, rhs.literal)) {
      a.kind = Atom::Kind::False;
      return a;
    }
    return std::nullopt;  // constant true
  }
  if (lc && rl) return Atom{Atom::Kind::Bound, lhs.column, {}, c.op, rhs.literal};
  if (ll && rc) return Atom{Atom::Kind::Bound, rhs.column, {}, mirror(c.op), lhs.literal};
  if (lc && rc) {
    if (lhs.column == rhs.column) {
      const bool holds = c.op == CompareOp::Eq || c.op == CompareOp::Le || c.op == CompareOp::Ge;
      if (!holds) return Atom{Atom::Kind::False, {}, {}, c.op, {}};
      return std::nullopt;
    }
    if (c.op == CompareOp::Eq) return Atom{Atom::Kind::ColumnEq, lhs.column, rhs.column, c.op, {}};
  }
  return std::nullopt;
}

class Solver {
 public:
  Solver(const std::function<ColumnType(ColumnRef)>& typeOf, std::size_t budget)
      : typeOf_(typeOf), budget_(budget) {}

  bool satisfiable(const Condition& nnf) {
    std::vector<const Condition*> pending{&nnf};
    std::vector<Atom> atoms;
    return search(std::move(pending), std::move(atoms));
  }

 private:
  bool search(std::vector<const Condition*> pending, std::vector<Atom> atoms) {
    while (!pending.empty()) {
      const Condition* c = pending.back();
      pending.pop_back();
      switch (c->kind) {
        case Condition::Kind::True: break;
        case Condition::Kind::False: return false;
        case Condition::Kind::And:
          for (const auto& ch : c->children) pending.push_back(&ch);
          break;
        case Condition::Kind::Compare: {
          auto atom = normalize(*c);
          if (!atom) break;
          if (atom->kind == Atom::Kind::False) return false;
          atoms.push_back(std::move(*atom));
          if (!consistent(atoms)) return false;
          break;
        }
        case Condition::Kind::Or: {
          for (const auto& ch : c->children) {
            if (budget_ == 0) return true;
            --budget_;
            auto branch = pending;
            branch.push_back(&ch);
            if (search(std::move(branch), atoms)) return true;
          }
          return false;
        }
        case Condition::Kind::Not:
          return true;  // not reachable after NNF
      }
    }
    return true;
  }

  struct Bound {
    Value value;
    bool inclusive = true;
  };

  struct ClassState {
    bool integral = false;
    bool stringy = false;
    std::optional<Value> eq;
    std::optional<Bound> lo;
    std::optional<Bound> hi;
    std::vector<Value> neq;
    bool contradiction = false;
  };

  static std::optional<std::int64_t> ceilToInt(const Value& v) {
    if (const auto* i = std::get_if<std::int64_t>(&v)) return *i;
    const double c = std::ceil(std::get<double>(v));
    if (c >= 9223372036854775808.0) return std::nullopt;
    if (c < -9223372036854775808.0) return std::numeric_limits<std::int64_t>::min();
    return static_cast<std::int64_t>(c);
  }
  static std::optional<std::int64_t> floorToInt(const Value& v) {
    if (const auto* i = std::get_if<std::int64_t>(&v)) return *i;
    const double f = std::floor(std::get<double>(v));
    if (f >= 9223372036854775808.0) return std::numeric_limits<std::int64_t>::max();
    if (f < -9223372036854775808.0) return std::nullopt;
    return static_cast<std::int64_t>(f);
  }

  static void tightenLower(ClassState& s, const Value& v, bool inclusive) {
    if (s.integral) {
      // x > v  ==>  x >= floor(v) + 1 ;  x >= v  ==>  x >= ceil(v)
      std::optional<std::int64_t> b;
      if (inclusive) {
        b = ceilToInt(v);
      } else {
        auto f = floorToInt(v);
        if (!f || *f == std::numeric_limits<std::int64_t>::max()) {
          s.contradiction = true;
          return;
        }
        b = *f + 1;
      }
      if (!b) {
        s.contradiction = true;
        return;
      }
      if (!s.lo || compareValues(Value{*b}, s.lo->value) > 0) s.lo = Bound{Value{*b}, true};
      return;
    }
    if (!s.lo) {
      s.lo = Bound{v, inclusive};
      return;
    }
    const auto ord = compareValues(v, s.lo->value);
    if (ord > 0 || (ord == 0 && !inclusive)) s.lo = Bound{v, inclusive};
  }

  static void tightenUpper(ClassState& s, const Value& v, bool inclusive) {
    if (s.integral) {
      std::optional<std::int64_t> b;
      if (inclusive) {
        b = floorToInt(v);
      } else {
        auto c = ceilToInt(v);
        if (!c || *c == std::numeric_limits<std::int64_t>::min()) {
          s.contradiction = true;
          return;
        }
        b = *c - 1;
      }
      if (!b) {
        s.contradiction = true;
        return;
      }
      if (!s.hi || compareValues(Value{*b}, s.hi->value) < 0) s.hi = Bound{Value{*b}, true};
      return;
    }
    if (!s.hi) {
      s.hi = Bound{v, inclusive};
      return;
    }
    const auto ord = compareValues(v, s.hi->value);
    if (ord < 0 || (ord == 0 && !inclusive)) s.hi = Bound{v, inclusive};
  }

  static bool withinBounds(const ClassState& s, const Value& v) {
    if (s.lo) {
      const auto ord = compareValues(v, s.lo->value);
      if (ord < 0 || (ord == 0 && !s.lo->inclusive)) return false;
    }
    if (s.hi) {
      const auto ord = compareValues(v, s.hi->value);
      if (ord > 0 || (ord == 0 && !s.hi->inclusive)) return false;
    }
    return true;
  }

  static bool excluded(const ClassState& s, const Value& v) {
    return std::any_of(s.neq.begin(), s.neq.end(), [&](const Value& n) { return valuesEqual(n, v); });
  }

  static bool isWhole(const Value& v) {
    if (std::holds_alternative<std::int64_t>(v)) return true;
    const double d = std::get<double>(v);
    return std::floor(d) == d && std::abs(d) < 9.2e18;
  }

  static bool classSatisfiable(ClassState& s) {
    if (s.contradiction) return false;
    if (s.stringy && s.hi && std::get<std::string>(s.hi->value).empty()) {
      // Nothing sorts below the empty string.
      if (!s.hi->inclusive) return false;
      if (s.eq && !valuesEqual(*s.eq, s.hi->value)) return false;
      s.eq = Value{std::string()};
    }
    if (s.eq) {
      if (s.integral && !isWhole(*s.eq)) return false;
      return withinBounds(s, *s.eq) && !excluded(s, *s.eq);
    }
    if (s.lo && s.hi) {
      const auto ord = compareValues(s.lo->value, s.hi->value);
      if (ord > 0) return false;
      if (ord == 0) {
        if (!s.lo->inclusive || !s.hi->inclusive) return false;
        return !excluded(s, s.lo->value);
      }
      if (s.integral) {
        const auto lo = std::get<std::int64_t>(s.lo->value);
        const auto hi = std::get<std::int64_t>(s.hi->value);
        // Finite integer range: satisfiable unless every point is excluded.
        const auto width = static_cast<unsigned long long>(hi) - static_cast<unsigned long long>(lo);
        if (width < s.neq.size()) {
          for (std::int64_t x = lo;; ++x) {
            if (!excluded(s, Value{x})) return true;
            if (x == hi) break;
          }
          return false;
        }
      }
    }
    return true;
  }

  bool consistent(const std::vector<Atom>& atoms) const {
    // Union-find over the columns mentioned.
    std::vector<ColumnRef> cols;
    auto indexOf = [&](ColumnRef r) {
      auto it = std::find(cols.begin(), cols.end(), r);
      if (it != cols.end()) return static_cast<std::size_t>(it - cols.begin());
      cols.push_back(r);
      return cols.size() - 1;
    };
    for (const auto& a : atoms) {
      indexOf(a.column);
      if (a.kind == Atom::Kind::ColumnEq) indexOf(a.other);
    }
    std::vector<std::size_t> parent(cols.size());
    for (std::size_t i = 0; i < parent.size(); ++i) parent[i] = i;
    auto find = [&](std::size_t x) {
      while (parent[x] != x) x = parent[x] = parent[parent[x]];
      return x;
    };
    for (const auto& a : atoms) {
      if (a.kind == Atom::Kind::ColumnEq) parent[find(indexOf(a.column))] = find(indexOf(a.other));
    }
    std::vector<ClassState> states(cols.size());
    for (std::size_t i = 0; i < cols.size(); ++i) {
      const auto type = typeOf_(cols[i]);
      auto& s = states[find(i)];
      s.integral = s.integral || isIntegral(type);
      s.stringy = s.stringy || type == ColumnType::String;
    }
    for (const auto& a : atoms) {
      if (a.kind != Atom::Kind::Bound) continue;
      auto& s = states[find(indexOf(a.column))];
      if (s.stringy != isString(a.value)) return false;  // ill-typed; cannot hold
      switch (a.op) {
        case CompareOp::Eq:
          if (s.eq && !valuesEqual(*s.eq, a.value)) return false;
          s.eq = a.value;
          break;
        case CompareOp::Ne: s.neq.push_back(a.value); break;
        case CompareOp::Lt: tightenUpper(s, a.value, false); break;
        case CompareOp::Le: tightenUpper(s, a.value, true); break;
        case CompareOp::Gt: tightenLower(s, a.value, false); break;
        case CompareOp::Ge: tightenLower(s, a.value, true); break;
      }
    }
    for (std::size_t i = 0; i < cols.size(); ++i) {
      if (find(i) == i && !classSatisfiable(states[i])) return false;
    }
    return true;
  }

  const std::function<ColumnType(ColumnRef)>& typeOf_;
  std::size_t budget_;
};

}  // namespace

bool maybeSatisfiable(const Condition& cond, const std::function<ColumnType(ColumnRef)>& typeOf,
                      std::size_t branchBudget) {
  const Condition nnf = toNnf(simplify(cond), false);
  Solver solver(typeOf, branchBudget);
  return solver.satisfiable(nnf);
}

std::vector<Binding> viewBindings(const Query& query, std::string_view table, const ViewPredicate& view) {
  std::vector<Binding> out;
  const std::string name = toLower(table);
  for (std::size_t t = 0; t < query.tables.size(); ++t) {
    const auto& def = query.tables[t].def;
    if (def.name() != name) continue;
    const ViewPredicate checked = view.validated(def);
    for (const auto& atom : checked.atoms()) {
      out.push_back({ColumnRef{t, *def.columnIndex(atom.column)}, atom.literal});
    }
  }
  return out;
}

Condition residualCondition(const Query& query, std::span<const Binding> bindings) {
  return simplify(substitute(query.fullCondition(), bindings));
}

bool relevant(const ViewPredicate& view, const Query& query, std::string_view table) {
  const std::string name = toLower(table);
  const bool present = std::any_of(query.tables.begin(), query.tables.end(),
                                   [&](const TableRef& t) { return t.def.name() == name; });
  if (!present) fail(ErrorCode::Schema, "table " + name + " does not appear in the query");
  const auto bindings = viewBindings(query, name, view);
  const Condition residual = residualCondition(query, bindings);
  return maybeSatisfiable(residual, [&](ColumnRef r) { return query.typeOf(r); });
}

bool relevantAll(const std::map<std::string, ViewPredicate>& views, const Query& query) {
  std::vector<Binding> bindings;
  for (const auto& t : query.tables) {
    auto it = views.find(t.def.name());
    if (it == views.end()) return false;
  }
  for (const auto& [table, view] : views) {
    auto b = viewBindings(query, table, view);
    bindings.insert(bindings.end(), b.begin(), b.end());
  }
  const Condition residual = residualCondition(query, bindings);
  return maybeSatisfiable(residual, [&](ColumnRef r) { return query.typeOf(r); });
}

}  // namespace rgma
