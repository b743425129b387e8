#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "sql/ast.hpp"

namespace rgma {

/// Row values for each table of a query, in FROM order.
using RowBinding = std::span<const std::vector<Value>* const>;

Value evaluateExpr(const Expr& expr, RowBinding rows, std::optional<std::int64_t> now = {});

/// Boolean value of `cond`. Throws TypeError when a referenced column is unbound
/// or NOW is used without a bound time.
bool evaluate(const Condition& cond, RowBinding rows, std::optional<std::int64_t> now = {});
bool evaluate(const Condition& cond, const Tuple& tuple, std::optional<std::int64_t> now = {});

bool compareWith(CompareOp op, const Value& lhs, const Value& rhs);

}  // namespace rgma
