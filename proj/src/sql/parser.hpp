#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "sql/ast.hpp"

namespace rgma {

/// CREATE TABLE in the supported subset. The defining key travels alongside
/// the statement rather than inside it.
TableDefinition parseCreateTable(std::string_view text, const std::vector<std::string>& definingKey);

/// INSERT INTO t (cols) VALUES (literals). Every column must be bound.
Tuple parseInsert(std::string_view text, const TableDefinition& schema);

/// Table named by an INSERT statement, without validating the rest.
std::string insertTargetTable(std::string_view text);

Query parseSelect(std::string_view text, const Catalog& catalog);

/// `WHERE (c1 = v1 AND c2 = v2 ...)`; the WHERE keyword and parentheses are optional.
ViewPredicate parseView(std::string_view text, const TableDefinition& schema);

/// A boolean condition over one table. `allowNow` enables the NOW pseudo-value.
Condition parseCondition(std::string_view text, const TableDefinition& schema, bool allowNow);

std::string renderCreateTable(const TableDefinition& def);
std::string renderInsert(const TableDefinition& def, const Tuple& tuple);
std::string renderSelect(const Query& query);
std::string renderCondition(const Condition& cond, const Query& query);
std::string renderView(const ViewPredicate& view);

/// Single-table query wrapper used when a condition must be rendered or evaluated alone.
Query singleTableQuery(const TableDefinition& def, Condition condition = {});

}  // namespace rgma
