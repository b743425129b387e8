#include "wire/codec.hpp"

#include <cmath>

#include "sql/parser.hpp"

namespace rgma {

Json valueToJson(const Value& v) {
  if (const auto* i = std::get_if<std::int64_t>(&v)) return *i;
  if (const auto* d = std::get_if<double>(&v)) return *d;
  return std::get<std::string>(v);
}

Value valueFromJson(const Json& j) {
  if (j.is_number_integer()) {
    if (j.is_number_unsigned() && j.get<std::uint64_t>() > static_cast<std::uint64_t>(INT64_MAX)) {
      fail(ErrorCode::Protocol, "integer out of range");
    }
    return j.get<std::int64_t>();
  }
  if (j.is_number_float()) {
    const double d = j.get<double>();
    if (!std::isfinite(d)) fail(ErrorCode::Protocol, "non-finite real");
    return d;
  }
  if (j.is_string()) return j.get<std::string>();
  fail(ErrorCode::Protocol, "value must be a number or a string");
}

Json rowToJson(const std::vector<Value>& values) {
  Json a = Json::array();
  for (const auto& v : values) a.push_back(valueToJson(v));
  return a;
}

std::vector<Value> rowFromJson(const Json& j) {
  if (!j.is_array()) fail(ErrorCode::Protocol, "row must be an array");
  std::vector<Value> out;
  out.reserve(j.size());
  for (const auto& v : j) out.push_back(valueFromJson(v));
  return out;
}

Tuple tupleFromJson(const TableDefinition& def, const Json& j) { return makeTuple(def, rowFromJson(j)); }

Json tableToJson(const TableDefinition& def) {
  return {{"name", def.name()}, {"sql", renderCreateTable(def)}, {"key", def.definingKeyNames()}};
}

TableDefinition tableFromJson(const Json& j) {
  const auto& key = member(j, "key");
  if (!key.is_array()) fail(ErrorCode::Protocol, "table key must be an array");
  std::vector<std::string> names;
  for (const auto& k : key) {
    if (!k.is_string()) fail(ErrorCode::Protocol, "key column names must be strings");
    names.push_back(k.get<std::string>());
  }
  return parseCreateTable(stringMember(j, "sql"), names);
}

Json viewToJson(const ViewPredicate& view) {
  Json a = Json::array();
  for (const auto& atom : view.atoms()) a.push_back(Json::array({atom.column, valueToJson(atom.literal)}));
  return a;
}

ViewPredicate viewFromJson(const Json& j) {
  if (!j.is_array()) fail(ErrorCode::Protocol, "view must be an array of [column, value] pairs");
  std::vector<ViewAtom> atoms;
  for (const auto& a : j) {
    if (!a.is_array() || a.size() != 2 || !a[0].is_string()) fail(ErrorCode::Protocol, "malformed view atom");
    atoms.push_back({toLower(a[0].get<std::string>()), valueFromJson(a[1])});
  }
  return ViewPredicate::make(std::move(atoms));
}

const Json& member(const Json& body, const char* name) {
  if (!body.is_object() || !body.contains(name)) fail(ErrorCode::Protocol, std::string("missing field '") + name + "'");
  return body[name];
}

std::string stringMember(const Json& body, const char* name) {
  const auto& m = member(body, name);
  if (!m.is_string()) fail(ErrorCode::Protocol, std::string("field '") + name + "' must be a string");
  return m.get<std::string>();
}

std::int64_t intMember(const Json& body, const char* name) {
  const auto& m = member(body, name);
  if (!m.is_number_integer()) fail(ErrorCode::Protocol, std::string("field '") + name + "' must be an integer");
  return m.get<std::int64_t>();
}

}  // namespace rgma
