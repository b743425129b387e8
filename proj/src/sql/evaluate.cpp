#include "sql/evaluate.hpp"

#include <cmath>

#include "common/error.hpp"

namespace rgma {

namespace {

double asDouble(const Value& v) {
  if (const auto* i = std::get_if<std::int64_t>(&v)) return static_cast<double>(*i);
  return std::get<double>(v);
}

}  // namespace

Value evaluateExpr(const Expr& expr, RowBinding rows, std::optional<std::int64_t> now) {
  switch (expr.kind) {
    case Expr::Kind::Literal: return expr.literal;
    case Expr::Kind::Now:
      if (!now) fail(ErrorCode::Type, "NOW is not bound in this context");
      return *now;
    case Expr::Kind::Column: {
      if (expr.column.table >= rows.size() || rows[expr.column.table] == nullptr ||
          expr.column.column >= rows[expr.column.table]->size()) {
        fail(ErrorCode::Type, "column reference is not bound");
      }
      return (*rows[expr.column.table])[expr.column.column];
    }
    case Expr::Kind::Add:
    case Expr::Kind::Sub: {
      const Value a = evaluateExpr(expr.operands[0], rows, now);
      const Value b = evaluateExpr(expr.operands[1], rows, now);
      if (isString(a) || isString(b)) fail(ErrorCode::Type, "arithmetic on a string");
      const bool add = expr.kind == Expr::Kind::Add;
      const auto* ai = std::get_if<std::int64_t>(&a);
      const auto* bi = std::get_if<std::int64_t>(&b);
      if (ai && bi) {
        std::int64_t r = 0;
        const bool overflow = add ? __builtin_add_overflow(*ai, *bi, &r) : __builtin_sub_overflow(*ai, *bi, &r);
        if (overflow) fail(ErrorCode::Type, "integer overflow in arithmetic");
        return r;
      }
      const double r = add ? asDouble(a) + asDouble(b) : asDouble(a) - asDouble(b);
      if (!std::isfinite(r)) fail(ErrorCode::Type, "real overflow in arithmetic");
      return r;
    }
  }
  fail(ErrorCode::Internal, "unknown expression kind");
}

bool compareWith(CompareOp op, const Value& lhs, const Value& rhs) {
  const auto ord = compareValues(lhs, rhs);
  switch (op) {
    case CompareOp::Eq: return ord == 0;
    case CompareOp::Ne: return ord != 0;
    case CompareOp::Lt: return ord < 0;
    case CompareOp::Le: return ord <= 0;
    case CompareOp::Gt: return ord > 0;
    case CompareOp::Ge: return ord >= 0;
  }
  return false;
}

bool evaluate(const Condition& cond, RowBinding rows, std::optional<std::int64_t> now) {
  switch (cond.kind) {
    case Condition::Kind::True: return true;
    case Condition::Kind::False: return false;
    case Condition::Kind::Compare:
      return compareWith(cond.op, evaluateExpr(cond.sides[0], rows, now),
                         evaluateExpr(cond.sides[1], rows, now));
    case Condition::Kind::And:
      for (const auto& c : cond.children) {
        if (!evaluate(c, rows, now)) return false;
      }
      return true;
    case Condition::Kind::Or:
      for (const auto& c : cond.children) {
        if (evaluate(c, rows, now)) return true;
      }
      return false;
    case Condition::Kind::Not: return !evaluate(cond.children[0], rows, now);
  }
  return false;
}

bool evaluate(const Condition& cond, const Tuple& tuple, std::optional<std::int64_t> now) {
  const std::vector<Value>* rows[] = {&tuple.values};
  return evaluate(cond, RowBinding(rows), now);
}

}  // namespace rgma
