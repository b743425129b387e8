#include "common/kinds.hpp"

#include "sql/types.hpp"

namespace rgma {

std::string_view producerTypeName(ProducerType type) {
  switch (type) {
    case ProducerType::Stream: return "Stream";
    case ProducerType::ResilientStream: return "ResilientStream";
    case ProducerType::DataBase: return "DataBase";
    case ProducerType::Latest: return "Latest";
    case ProducerType::Canonical: return "Canonical";
  }
  return "Stream";
}

std::optional<ProducerType> producerTypeFromName(std::string_view name) {
  const std::string n = toLower(name);
  if (n == "stream") return ProducerType::Stream;
  if (n == "resilientstream" || n == "resilient") return ProducerType::ResilientStream;
  if (n == "database" || n == "db") return ProducerType::DataBase;
  if (n == "latest") return ProducerType::Latest;
  if (n == "canonical") return ProducerType::Canonical;
  return std::nullopt;
}

std::string_view queryClassName(QueryClass cls) {
  switch (cls) {
    case QueryClass::Continuous: return "Continuous";
    case QueryClass::Latest: return "Latest";
    case QueryClass::History: return "History";
  }
  return "Continuous";
}

std::optional<QueryClass> queryClassFromName(std::string_view name) {
  const std::string n = toLower(name);
  if (n == "continuous" || n == "c") return QueryClass::Continuous;
  if (n == "latest" || n == "l") return QueryClass::Latest;
  if (n == "history" || n == "h") return QueryClass::History;
  return std::nullopt;
}

bool answers(ProducerType type, QueryClass cls) {
  switch (cls) {
    case QueryClass::Continuous: return isStreamType(type);
    case QueryClass::Latest: return type == ProducerType::Latest || type == ProducerType::Canonical;
    case QueryClass::History: return type == ProducerType::DataBase || type == ProducerType::Canonical;
  }
  return false;
}

}  // namespace rgma
