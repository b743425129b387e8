#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sql/types.hpp"

namespace rgma {

/// A column resolved to (position in FROM list, column index in that table).
struct ColumnRef {
  std::size_t table = 0;
  std::size_t column = 0;

  auto operator<=>(const ColumnRef&) const = default;
};

/// Scalar expression: column, literal, the NOW pseudo-value, or +/- of two operands.
struct Expr {
  enum class Kind { Column, Literal, Now, Add, Sub };

  Kind kind = Kind::Literal;
  ColumnRef column;
  Value literal = std::int64_t{0};
  std::vector<Expr> operands;

  static Expr col(ColumnRef ref);
  static Expr lit(Value v);
  static Expr now();
  static Expr binary(Kind kind, Expr lhs, Expr rhs);

  bool isConstant() const;  // no column references and no NOW
  bool operator==(const Expr&) const = default;
};

enum class CompareOp { Eq, Ne, Lt, Le, Gt, Ge };

std::string_view opSymbol(CompareOp op);
CompareOp negate(CompareOp op);
CompareOp mirror(CompareOp op);  // a op b  <=>  b mirror(op) a

struct Condition {
  enum class Kind { True, False, Compare, And, Or, Not };

  Kind kind = Kind::True;
  CompareOp op = CompareOp::Eq;
  std::vector<Expr> sides;            // exactly two for Compare
  std::vector<Condition> children;    // And/Or: two or more, Not: one

  static Condition alwaysTrue() { return {}; }
  static Condition alwaysFalse();
  static Condition compare(CompareOp op, Expr lhs, Expr rhs);
  static Condition conj(std::vector<Condition> parts);
  static Condition disj(std::vector<Condition> parts);
  static Condition negation(Condition inner);

  bool isTrue() const { return kind == Kind::True; }
  bool isFalse() const { return kind == Kind::False; }
  bool operator==(const Condition&) const = default;
};

struct TableRef {
  TableDefinition def;
  std::string alias;  // lower case; equals the table name when no alias was given

  bool operator==(const TableRef&) const = default;
};

struct Query {
  std::vector<TableRef> tables;
  bool selectAll = true;
  std::vector<ColumnRef> projection;
  Condition condition;
  std::vector<std::pair<ColumnRef, ColumnRef>> joinEqualities;

  bool isJoin() const { return tables.size() > 1; }
  ColumnType typeOf(ColumnRef ref) const;
  const Column& columnOf(ColumnRef ref) const;
  /// Every column reference the projection produces, in output order.
  std::vector<ColumnRef> outputColumns() const;
  /// Join equalities folded into the condition.
  Condition fullCondition() const;

  bool operator==(const Query&) const = default;
};

/// The set of declared tables.
class Catalog {
 public:
  /// Adds a table; redeclaring an identical definition is a no-op,
  /// a conflicting one is a SchemaError.
  void add(const TableDefinition& def);
  const TableDefinition* find(std::string_view name) const;
  const TableDefinition& get(std::string_view name) const;
  std::vector<std::string> names() const;
  const std::map<std::string, TableDefinition>& tables() const { return tables_; }

 private:
  std::map<std::string, TableDefinition> tables_;
};

struct ViewAtom {
  std::string column;
  Value literal;

  bool operator==(const ViewAtom&) const = default;
};

/// Conjunction of column = literal atoms; empty means the whole table.
class ViewPredicate {
 public:
  ViewPredicate() = default;

  /// Throws SchemaError when two atoms constrain the same column.
  static ViewPredicate make(std::vector<ViewAtom> atoms);

  const std::vector<ViewAtom>& atoms() const { return atoms_; }
  bool universal() const { return atoms_.empty(); }

  /// Resolves column names and coerces literals to the column types.
  ViewPredicate validated(const TableDefinition& def) const;
  bool admits(const TableDefinition& def, const Tuple& tuple) const;

  bool operator==(const ViewPredicate&) const = default;

 private:
  std::vector<ViewAtom> atoms_;  // sorted by column name
};

}  // namespace rgma
