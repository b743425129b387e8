#pragma once

#include <vector>

#include "sql/ast.hpp"
#include "wire/message.hpp"

namespace rgma {

// JSON forms of the data model used in message bodies. Decoders throw
// ProtocolError on structurally wrong input and the usual SQL errors on
// content that fails schema validation.

Json valueToJson(const Value& v);
Value valueFromJson(const Json& j);

Json rowToJson(const std::vector<Value>& values);
std::vector<Value> rowFromJson(const Json& j);

/// A row decoded and type-checked against a table.
Tuple tupleFromJson(const TableDefinition& def, const Json& j);

Json tableToJson(const TableDefinition& def);
TableDefinition tableFromJson(const Json& j);

Json viewToJson(const ViewPredicate& view);
ViewPredicate viewFromJson(const Json& j);

/// Reads a required member, raising ProtocolError if absent or of the wrong type.
const Json& member(const Json& body, const char* name);
std::string stringMember(const Json& body, const char* name);
std::int64_t intMember(const Json& body, const char* name);

}  // namespace rgma
