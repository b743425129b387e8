#pragma once

#include <optional>
#include <string_view>

namespace rgma {

enum class ProducerType { Stream, ResilientStream, DataBase, Latest, Canonical };
enum class QueryClass { Continuous, Latest, History };

std::string_view producerTypeName(ProducerType type);
std::optional<ProducerType> producerTypeFromName(std::string_view name);
std::string_view queryClassName(QueryClass cls);
std::optional<QueryClass> queryClassFromName(std::string_view name);

/// The capability matrix: Continuous from stream producers, Latest from Latest
/// and Canonical, History from DataBase and Canonical.
bool answers(ProducerType type, QueryClass cls);

inline bool isStreamType(ProducerType t) { return t == ProducerType::Stream || t == ProducerType::ResilientStream; }
inline bool isInsertable(ProducerType t) { return t != ProducerType::Canonical; }

}  // namespace rgma
