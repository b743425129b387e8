#include "sql/ast.hpp"

#include <algorithm>

#include "common/error.hpp"

namespace rgma {

Expr Expr::col(ColumnRef ref) {
  Expr e;
  e.kind = Kind::Column;
  e.column = ref;
  return e;
}

Expr Expr::lit(Value v) {
  Expr e;
  e.kind = Kind::Literal;
  e.literal = std::move(v);
  return e;
}

Expr Expr::now() {
  Expr e;
  e.kind = Kind::Now;
  return e;
}

Expr Expr::binary(Kind kind, Expr lhs, Expr rhs) {
  Expr e;
  e.kind = kind;
  e.operands.push_back(std::move(lhs));
  e.operands.push_back(std::move(rhs));
  return e;
}

bool Expr::isConstant() const {
  switch (kind) {
    case Kind::Literal: return true;
    case Kind::Column:
    case Kind::Now: return false;
    case Kind::Add:
    case Kind::Sub:
      return std::all_of(operands.begin(), operands.end(),
                         [](const Expr& e) { return e.isConstant(); });
  }
  return false;
}

std::string_view opSymbol(CompareOp op) {
  switch (op) {
    case CompareOp::Eq: return "=";
    case CompareOp::Ne: return "<>";
    case CompareOp::Lt: return "<";
    case CompareOp::Le: return "<=";
    case CompareOp::Gt: return ">";
    case CompareOp::Ge: return ">=";
  }
  return "=";
}

CompareOp negate(CompareOp op) {
  switch (op) {
    case CompareOp::Eq: return CompareOp::Ne;
    case CompareOp::Ne: return CompareOp::Eq;
    case CompareOp::Lt: return CompareOp::Ge;
    case CompareOp::Le: return CompareOp::Gt;
    case CompareOp::Gt: return CompareOp::Le;
    case CompareOp::Ge: return CompareOp::Lt;
  }
  return op;
}

CompareOp mirror(CompareOp op) {
  switch (op) {
    case CompareOp::Lt: return CompareOp::Gt;
    case CompareOp::Le: return CompareOp::Ge;
    case CompareOp::Gt: return CompareOp::Lt;
    case CompareOp::Ge: return CompareOp::Le;
    default: return op;
  }
}

Condition Condition::alwaysFalse() {
  Condition c;
  c.kind = Kind::False;
  return c;
}

Condition Condition::compare(CompareOp op, Expr lhs, Expr rhs) {
  Condition c;
  c.kind = Kind::Compare;
  c.op = op;
  c.sides.push_back(std::move(lhs));
  c.sides.push_back(std::move(rhs));
  return c;
}

Condition Condition::conj(std::vector<Condition> parts) {
  if (parts.empty()) return alwaysTrue();
  if (parts.size() == 1) return std::move(parts.front());
  Condition c;
  c.kind = Kind::And;
  c.children = std::move(parts);
  return c;
}

Condition Condition::disj(std::vector<Condition> parts) {
  if (parts.empty()) return alwaysFalse();
  if (parts.size() == 1) return std::move(parts.front());
  Condition c;
  c.kind = Kind::Or;
  c.children = std::move(parts);
  return c;
}

Condition Condition::negation(Condition inner) {
  Condition c;
  c.kind = Kind::Not;
  c.children.push_back(std::move(inner));
  return c;
}

ColumnType Query::typeOf(ColumnRef ref) const { return columnOf(ref).type; }

const Column& Query::columnOf(ColumnRef ref) const {
  return tables.at(ref.table).def.columns().at(ref.column);
}

std::vector<ColumnRef> Query::outputColumns() const {
  if (!selectAll) return projection;
  std::vector<ColumnRef> out;
  for (std::size_t t = 0; t < tables.size(); ++t) {
    for (std::size_t c = 0; c < tables[t].def.columns().size(); ++c) out.push_back({t, c});
  }
  return out;
}

Condition Query::fullCondition() const {
  if (joinEqualities.empty()) return condition;
  std::vector<Condition> parts;
  for (const auto& [l, r] : joinEqualities) {
    parts.push_back(Condition::compare(CompareOp::Eq, Expr::col(l), Expr::col(r)));
  }
  if (!condition.isTrue()) parts.push_back(condition);
  return Condition::conj(std::move(parts));
}

void Catalog::add(const TableDefinition& def) {
  auto [it, inserted] = tables_.emplace(def.name(), def);
  if (!inserted && !(it->second == def)) {
    fail(ErrorCode::Schema, "table " + def.name() + " is already declared with a different definition");
  }
}

const TableDefinition* Catalog::find(std::string_view name) const {
  auto it = tables_.find(toLower(name));
  return it == tables_.end() ? nullptr : &it->second;
}

const TableDefinition& Catalog::get(std::string_view name) const {
  const auto* def = find(name);
  if (!def) fail(ErrorCode::Schema, "unknown table '" + std::string(name) + "'");
  return *def;
}

std::vector<std::string> Catalog::names() const {
  std::vector<std::string> out;
  for (const auto& [name, def] : tables_) out.push_back(name);
  return out;
}

ViewPredicate ViewPredicate::make(std::vector<ViewAtom> atoms) {
  for (auto& a : atoms) a.column = toLower(a.column);
  std::sort(atoms.begin(), atoms.end(),
            [](const ViewAtom& a, const ViewAtom& b) { return a.column < b.column; });
  for (std::size_t i = 1; i < atoms.size(); ++i) {
    if (atoms[i].column == atoms[i - 1].column) {
      fail(ErrorCode::Schema, "view constrains column '" + atoms[i].column + "' twice");
    }
  }
  ViewPredicate v;
  v.atoms_ = std::move(atoms);
  return v;
}

ViewPredicate ViewPredicate::validated(const TableDefinition& def) const {
  std::vector<ViewAtom> out;
  for (const auto& a : atoms_) {
    auto idx = def.columnIndex(a.column);
    if (!idx) fail(ErrorCode::Schema, "view column '" + a.column + "' is not in table " + def.name());
    out.push_back({a.column, coerceTo(a.literal, def.columns()[*idx].type)});
  }
  return make(std::move(out));
}

bool ViewPredicate::admits(const TableDefinition& def, const Tuple& tuple) const {
  for (const auto& a : atoms_) {
    auto idx = def.columnIndex(a.column);
    if (!idx || !valuesEqual(tuple.values.at(*idx), a.literal)) return false;
  }
  return true;
}

}  // namespace rgma
