#pragma once

#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "mediator/mediator.hpp"
#include "registry/registry.hpp"
#include "wire/connection.hpp"

namespace rgma {

/// What components need from a registry, whether it lives in-process or behind TCP.
class RegistryApi {
 public:
  virtual ~RegistryApi() = default;
  virtual void declareTable(const TableDefinition& def) = 0;
  virtual Catalog catalog() = 0;
  virtual void registerProducer(const RegistryEntry& entry) = 0;
  virtual std::vector<RegistryEntry> registerConsumer(const RegistryEntry& entry) = 0;
  virtual void heartbeat(const std::string& componentId, std::int64_t terminationMs) = 0;
  virtual void unregister(const std::string& componentId) = 0;
  virtual std::vector<RegistryEntry> lookup(const Query& query, QueryClass cls) = 0;
  virtual std::vector<RegistryEntry> entries() = 0;
};

/// Talks to a registry service over one lazily (re)opened connection.
class RemoteRegistry : public RegistryApi {
 public:
  RemoteRegistry(HostPort endpoint, int timeoutMs) : endpoint_(std::move(endpoint)), timeoutMs_(timeoutMs) {}

  void declareTable(const TableDefinition& def) override;
  Catalog catalog() override;
  void registerProducer(const RegistryEntry& entry) override;
  std::vector<RegistryEntry> registerConsumer(const RegistryEntry& entry) override;
  void heartbeat(const std::string& componentId, std::int64_t terminationMs) override;
  void unregister(const std::string& componentId) override;
  std::vector<RegistryEntry> lookup(const Query& query, QueryClass cls) override;
  std::vector<RegistryEntry> entries() override;

 private:
  Message call(MessageKind kind, Json body);

  HostPort endpoint_;
  int timeoutMs_;
  std::mutex mutex_;
  std::shared_ptr<Connection> conn_;
};

Json entriesToJson(const std::vector<RegistryEntry>& entries);
std::vector<RegistryEntry> entriesFromJson(const Json& j);
Json catalogToJson(const Catalog& catalog);
Catalog catalogFromJson(const Json& j);

/// One-shot and continuous queries against producer services over TCP.
class RemoteProducers {
 public:
  explicit RemoteProducers(int timeoutMs) : timeoutMs_(timeoutMs) {}
  FetchFn fetcher() const;
  SubscribeFn subscriber() const;

 private:
  int timeoutMs_;
};

}  // namespace rgma
