#pragma once

#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sql/ast.hpp"

namespace rgma {

/// A column fixed to a value, e.g. by a producer's view.
struct Binding {
  ColumnRef column;
  Value value;
};

Condition substitute(const Condition& cond, std::span<const Binding> bindings);

/// Folds constant comparisons and flattens/prunes AND, OR and NOT.
Condition simplify(const Condition& cond);

/// False only when no assignment of column values can satisfy `cond`.
/// Uses equality propagation and per-column interval reasoning; anything it
/// cannot decide (arithmetic over columns, NOW, exhausted branch budget)
/// is treated as satisfiable.
bool maybeSatisfiable(const Condition& cond, const std::function<ColumnType(ColumnRef)>& typeOf,
                      std::size_t branchBudget = 4096);

/// Bindings a producer view imposes on every occurrence of `table` in the query.
std::vector<Binding> viewBindings(const Query& query, std::string_view table, const ViewPredicate& view);

/// The query condition (join equalities included) simplified under the bindings.
Condition residualCondition(const Query& query, std::span<const Binding> bindings);

/// Whether a producer publishing `table` under `view` can hold data the query wants.
bool relevant(const ViewPredicate& view, const Query& query, std::string_view table);

/// Joint relevance for a producer publishing every table of the query,
/// with one view per table name.
bool relevantAll(const std::map<std::string, ViewPredicate>& views, const Query& query);

}  // namespace rgma
