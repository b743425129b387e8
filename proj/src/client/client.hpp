#pragma once

#include <memory>
#include <string>
#include <vector>

#include "mediator/mediator.hpp"
#include "wire/connection.hpp"

namespace rgma {

struct ResultSet {
  std::vector<std::string> columns;
  std::vector<std::vector<Value>> rows;
  bool noProducers = false;
  std::vector<TargetFailure> failures;
};

struct StreamRow {
  std::vector<Value> values;
  std::string origin;  // producer the row came from
};

/// A continuous query running at a node's consumer service.
class ContinuousQuery {
 public:
  ContinuousQuery(std::shared_ptr<Connection> conn, std::string requestId, const Json& first);
  ~ContinuousQuery();

  const std::vector<std::string>& columns() const { return columns_; }
  bool noProducers() const { return noProducers_; }
  const std::string& consumerId() const { return consumerId_; }

  /// Rows that arrived within the timeout; empty when none did. Throws the
  /// error the service ended the stream with.
  std::vector<StreamRow> next(int timeoutMs);
  bool finished() const { return finished_; }
  void close();

 private:
  std::shared_ptr<Connection> conn_;
  std::string requestId_;
  std::vector<std::string> columns_;
  bool noProducers_ = false;
  std::string consumerId_;
  bool finished_ = false;
};

/// Blocking client for one node. Each call uses its own short-lived connection,
/// so a Client may be shared between threads.
class Client {
 public:
  Client(HostPort endpoint, int timeoutMs) : endpoint_(std::move(endpoint)), timeoutMs_(timeoutMs) {}

  const HostPort& endpoint() const { return endpoint_; }
  Json call(MessageKind kind, Json body);

  void declareTable(const std::string& createSql, const std::vector<std::string>& definingKey);
  std::vector<TableDefinition> tables();
  /// {name, sql, key, timestamp, columns: [{name, type}]}
  Json describe(const std::string& table);

  std::string createProducer(const Json& spec);
  std::string createArchiver(const Json& spec);
  std::size_t insert(const Json& body);
  /// Removes a producer or archiver hosted by the node.
  bool close(const std::string& componentId);

  ResultSet query(const std::string& sql, QueryClass cls);
  std::unique_ptr<ContinuousQuery> subscribe(const std::string& sql);
  std::vector<RegistryEntry> entries();

 private:
  HostPort endpoint_;
  int timeoutMs_;
};

}  // namespace rgma
