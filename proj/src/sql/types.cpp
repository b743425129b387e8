#include "sql/types.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <set>

#include "common/error.hpp"

namespace rgma {

std::string_view typeName(ColumnType type) {
  switch (type) {
    case ColumnType::Int: return "INT";
    case ColumnType::Real: return "REAL";
    case ColumnType::String: return "STRING";
    case ColumnType::Timestamp: return "TIMESTAMP";
  }
  return "INT";
}

std::optional<ColumnType> columnTypeFromName(std::string_view name) {
  const std::string n = toLower(name);
  if (n == "int" || n == "integer" || n == "bigint") return ColumnType::Int;
  if (n == "real" || n == "double" || n == "float") return ColumnType::Real;
  if (n == "string" || n == "varchar" || n == "char" || n == "text") return ColumnType::String;
  if (n == "timestamp") return ColumnType::Timestamp;
  return std::nullopt;
}

bool isString(const Value& v) { return std::holds_alternative<std::string>(v); }
bool isNumber(const Value& v) { return !isString(v); }

namespace {

std::strong_ordering compareDoubles(double a, double b) {
  if (a < b) return std::strong_ordering::less;
  if (a > b) return std::strong_ordering::greater;
  return std::strong_ordering::equal;
}

// Exact comparison of an int64 against a finite double.
std::strong_ordering compareIntDouble(std::int64_t i, double d) {
  constexpr double kTwo63 = 9223372036854775808.0;
  if (d >= kTwo63) return std::strong_ordering::less;
  if (d < -kTwo63) return std::strong_ordering::greater;
  const double fl = std::floor(d);
  const auto whole = static_cast<std::int64_t>(fl);
  if (i < whole) return std::strong_ordering::less;
  if (i > whole) return std::strong_ordering::greater;
  return fl == d ? std::strong_ordering::equal : std::strong_ordering::less;
}

}  // namespace

std::strong_ordering compareValues(const Value& a, const Value& b) {
  if (isString(a) != isString(b)) {
    fail(ErrorCode::Type, "cannot compare a string with a number");
  }
  if (isString(a)) {
    const int c = std::get<std::string>(a).compare(std::get<std::string>(b));
    return c < 0 ? std::strong_ordering::less
                 : (c > 0 ? std::strong_ordering::greater : std::strong_ordering::equal);
  }
  const auto* ai = std::get_if<std::int64_t>(&a);
  const auto* bi = std::get_if<std::int64_t>(&b);
  if (ai && bi) return *ai <=> *bi;
  if (ai) return compareIntDouble(*ai, std::get<double>(b));
  if (bi) return 0 <=> compareIntDouble(*bi, std::get<double>(a));
  return compareDoubles(std::get<double>(a), std::get<double>(b));
}

bool valuesEqual(const Value& a, const Value& b) {
  if (isString(a) != isString(b)) return false;
  return compareValues(a, b) == std::strong_ordering::equal;
}

Value coerceTo(const Value& literal, ColumnType type) {
  switch (type) {
    case ColumnType::String:
      if (!isString(literal)) fail(ErrorCode::Type, "expected a string literal");
      return literal;
    case ColumnType::Real:
      if (const auto* i = std::get_if<std::int64_t>(&literal)) return static_cast<double>(*i);
      if (const auto* d = std::get_if<double>(&literal)) {
        if (!std::isfinite(*d)) fail(ErrorCode::Type, "REAL values must be finite");
        return *d;
      }
      fail(ErrorCode::Type, "expected a numeric literal");
    case ColumnType::Int:
    case ColumnType::Timestamp:
      if (const auto* i = std::get_if<std::int64_t>(&literal)) return *i;
      fail(ErrorCode::Type, std::string("expected an integer literal for ") +
                                std::string(typeName(type)));
  }
  fail(ErrorCode::Internal, "unreachable column type");
}

std::string renderLiteral(const Value& v) {
  if (const auto* s = std::get_if<std::string>(&v)) {
    std::string out = "'";
    for (char c : *s) {
      if (c == '\'') out += '\'';
      out += c;
    }
    out += '\'';
    return out;
  }
  if (const auto* i = std::get_if<std::int64_t>(&v)) return std::to_string(*i);
  std::array<char, 64> buf{};
  const double d = std::get<double>(v);
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), d);
  std::string out(buf.data(), end);
  if (out.find_first_of(".eE") == std::string::npos) out += ".0";
  return out;
}

std::string displayValue(const Value& v) {
  if (const auto* s = std::get_if<std::string>(&v)) return *s;
  return renderLiteral(v);
}

bool ValueLess::operator()(const Value& a, const Value& b) const {
  if (a.index() != b.index()) return a.index() < b.index();
  if (const auto* d = std::get_if<double>(&a)) {
    const double e = std::get<double>(b);
    return *d < e;
  }
  return a < b;
}

bool ValueLess::operator()(const std::vector<Value>& a, const std::vector<Value>& b) const {
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end(), ValueLess{});
}

TableDefinition TableDefinition::make(std::string name, std::vector<Column> columns,
                                      const std::vector<std::string>& definingKey) {
  TableDefinition def;
  def.name_ = toLower(name);
  if (def.name_.empty()) fail(ErrorCode::Schema, "table name is empty");
  if (columns.empty()) fail(ErrorCode::Schema, "table " + def.name_ + " has no columns");

  std::set<std::string> seen;
  std::optional<std::size_t> ts;
  for (std::size_t i = 0; i < columns.size(); ++i) {
    auto& col = columns[i];
    col.name = toLower(col.name);
    if (!seen.insert(col.name).second) {
      fail(ErrorCode::Schema, "duplicate column '" + col.name + "' in table " + def.name_);
    }
    if (col.type == ColumnType::Timestamp) {
      if (ts) fail(ErrorCode::Schema, "table " + def.name_ + " has more than one TIMESTAMP column");
      ts = i;
    }
  }
  if (!ts) fail(ErrorCode::Schema, "table " + def.name_ + " has no TIMESTAMP column");
  def.columns_ = std::move(columns);
  def.timestamp_ = *ts;

  if (definingKey.empty()) fail(ErrorCode::Schema, "defining key of " + def.name_ + " is empty");
  std::set<std::size_t> keySeen;
  for (const auto& k : definingKey) {
    auto idx = def.columnIndex(k);
    if (!idx) fail(ErrorCode::Schema, "defining key column '" + k + "' is not a column of " + def.name_);
    if (*idx == def.timestamp_) {
      fail(ErrorCode::Schema, "defining key of " + def.name_ + " may not include the timestamp");
    }
    if (!keySeen.insert(*idx).second) {
      fail(ErrorCode::Schema, "defining key column '" + k + "' listed twice");
    }
  }
  // Key columns are kept in schema order.
  def.key_.assign(keySeen.begin(), keySeen.end());
  return def;
}

std::optional<std::size_t> TableDefinition::columnIndex(std::string_view name) const {
  const std::string n = toLower(name);
  for (std::size_t i = 0; i < columns_.size(); ++i) {
    if (columns_[i].name == n) return i;
  }
  return std::nullopt;
}

std::vector<std::string> TableDefinition::definingKeyNames() const {
  std::vector<std::string> out;
  for (auto i : key_) out.push_back(columns_[i].name);
  return out;
}

std::string TableDefinition::canonicalText() const {
  std::string out = name_ + "(";
  for (std::size_t i = 0; i < columns_.size(); ++i) {
    if (i) out += ",";
    out += columns_[i].name + " " + std::string(typeName(columns_[i].type));
  }
  out += ")key(";
  for (std::size_t i = 0; i < key_.size(); ++i) {
    if (i) out += ",";
    out += columns_[key_[i]].name;
  }
  out += ")";
  return out;
}

std::uint64_t TableDefinition::schemaHash() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : canonicalText()) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

bool Tuple::operator==(const Tuple& other) const {
  if (table != other.table || values.size() != other.values.size()) return false;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i].index() != other.values[i].index()) return false;
    if (const auto* d = std::get_if<double>(&values[i])) {
      // Bitwise-equal reals, so 0.0 and -0.0 stay distinguishable after republishing.
      if (std::signbit(*d) != std::signbit(std::get<double>(other.values[i])) ||
          *d != std::get<double>(other.values[i])) {
        return false;
      }
    } else if (values[i] != other.values[i]) {
      return false;
    }
  }
  return timestamp == other.timestamp;
}

Tuple makeTuple(const TableDefinition& def, std::vector<Value> values) {
  if (values.size() != def.columns().size()) {
    fail(ErrorCode::Schema, "tuple for " + def.name() + " has " + std::to_string(values.size()) +
                                " values, expected " + std::to_string(def.columns().size()));
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    values[i] = coerceTo(values[i], def.columns()[i].type);
  }
  Tuple t;
  t.table = def.name();
  t.timestamp = std::get<std::int64_t>(values[def.timestampIndex()]);
  t.values = std::move(values);
  return t;
}

bool DefiningKeyValue::operator==(const DefiningKeyValue& other) const {
  if (table != other.table || keyValues.size() != other.keyValues.size()) return false;
  for (std::size_t i = 0; i < keyValues.size(); ++i) {
    if (!valuesEqual(keyValues[i], other.keyValues[i])) return false;
  }
  return true;
}

bool DefiningKeyValue::operator<(const DefiningKeyValue& other) const {
  if (table != other.table) return table < other.table;
  return ValueLess{}(keyValues, other.keyValues);
}

DefiningKeyValue definingKeyOf(const TableDefinition& def, const Tuple& tuple) {
  DefiningKeyValue k;
  k.table = def.name();
  for (auto idx : def.definingKey()) k.keyValues.push_back(tuple.values.at(idx));
  return k;
}

std::string toLower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() && toLower(a) == toLower(b);
}

}  // namespace rgma
