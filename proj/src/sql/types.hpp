#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace rgma {

enum class ColumnType { Int, Real, String, Timestamp };

std::string_view typeName(ColumnType type);
std::optional<ColumnType> columnTypeFromName(std::string_view name);

inline bool isNumeric(ColumnType t) { return t != ColumnType::String; }
inline bool isIntegral(ColumnType t) { return t == ColumnType::Int || t == ColumnType::Timestamp; }

/// A typed scalar. INT and TIMESTAMP hold int64, REAL holds double.
using Value = std::variant<std::int64_t, double, std::string>;

bool isString(const Value& v);
bool isNumber(const Value& v);

/// Numeric values compare by magnitude across int/real; strings by bytes.
/// Comparing a string with a number is a TypeError.
std::strong_ordering compareValues(const Value& a, const Value& b);
bool valuesEqual(const Value& a, const Value& b);

/// Coerces a literal into the storage representation of `type`.
/// Throws TypeError if the literal is incompatible.
Value coerceTo(const Value& literal, ColumnType type);

/// SQL literal text for a value: quoted strings, round-trippable reals.
std::string renderLiteral(const Value& v);
/// Plain text form (no quotes) used by tabular output.
std::string displayValue(const Value& v);

/// Strict weak ordering on values of the same representation, used for map keys.
struct ValueLess {
  bool operator()(const Value& a, const Value& b) const;
  bool operator()(const std::vector<Value>& a, const std::vector<Value>& b) const;
};

struct Column {
  std::string name;
  ColumnType type = ColumnType::Int;

  bool operator==(const Column&) const = default;
};

/// A table of the virtual schema. Names are canonical lower case.
class TableDefinition {
 public:
  TableDefinition() = default;

  /// Validates and canonicalizes. Throws SchemaError on any invariant violation.
  static TableDefinition make(std::string name, std::vector<Column> columns,
                              const std::vector<std::string>& definingKey);

  const std::string& name() const { return name_; }
  const std::vector<Column>& columns() const { return columns_; }
  const std::vector<std::size_t>& definingKey() const { return key_; }
  std::size_t timestampIndex() const { return timestamp_; }
  std::optional<std::size_t> columnIndex(std::string_view name) const;
  std::vector<std::string> definingKeyNames() const;

  /// 64-bit FNV-1a over the canonical text; identifies the schema in file headers.
  std::uint64_t schemaHash() const;
  std::string canonicalText() const;

  bool operator==(const TableDefinition&) const = default;

 private:
  std::string name_;
  std::vector<Column> columns_;
  std::vector<std::size_t> key_;
  std::size_t timestamp_ = 0;
};

/// One timestamped row. `values` follows the table's column order.
struct Tuple {
  std::string table;
  std::vector<Value> values;
  std::int64_t timestamp = 0;

  bool operator==(const Tuple& other) const;
};

/// Builds a tuple, checking arity and types against the definition.
Tuple makeTuple(const TableDefinition& def, std::vector<Value> values);

struct DefiningKeyValue {
  std::string table;
  std::vector<Value> keyValues;

  bool operator==(const DefiningKeyValue& other) const;
  bool operator<(const DefiningKeyValue& other) const;
};

DefiningKeyValue definingKeyOf(const TableDefinition& def, const Tuple& tuple);

std::string toLower(std::string_view s);
bool iequals(std::string_view a, std::string_view b);

}  // namespace rgma
