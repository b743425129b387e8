#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "archiver/archiver.hpp"
#include "node/remote.hpp"

namespace rgma {

struct NodeConfig {
  std::string nodeId;  // defaults to one derived from the endpoint
  std::string listen = "127.0.0.1:0";
  std::string advertise;  // defaults to the bound listen address
  std::filesystem::path dataDir;

  bool hostRegistry = false;
  std::string registryId;  // defaults to nodeId
  std::vector<std::string> peers;
  std::int64_t syncPeriodMs = 1000;
  std::int64_t sweepPeriodMs = 100;
  std::string registryEndpoint;  // used when not hosting

  Json schema = Json::array();     // [{sql, key}]
  Json producers = Json::array();  // producer specs, created at start
  Json archivers = Json::array();  // archiver specs, created at start

  std::string httpListen;  // empty: no HTTP gateway
  std::filesystem::path httpRoot;

  std::int64_t refreshPeriodMs = 1000;
  std::int64_t consumerTerminationMs = 30000;
  int timeoutMs = 5000;
  std::size_t streamQueueLimit = 200000;

  static NodeConfig fromJson(const Json& j);
};

/// Handle on a continuous query opened by this node's consumer service.
struct ContinuousHandle {
  std::string consumerId;
  std::vector<std::string> columns;
  bool noProducers = false;
  std::shared_ptr<ContinuousSession> session;
};

/// One process-level R-GMA node: optionally a registry, plus producer and
/// consumer services, all on one TCP port; optionally the HTTP gateway.
class Node {
 public:
  explicit Node(NodeConfig config, const Clock& clock = defaultClock());
  ~Node();
  Node(const Node&) = delete;
  Node& operator=(const Node&) = delete;

  static const Clock& defaultClock();

  void start();
  /// With `unregister`, hosted components leave the registry at once; without,
  /// they linger until their termination interval runs out, as after a crash.
  void stop(bool unregister = true);

  const NodeConfig& config() const { return config_; }
  std::uint16_t port() const;
  std::string endpoint() const { return endpoint_; }
  std::uint16_t httpPort() const { return httpPort_; }
  RegistryApi& registry() { return *registryApi_; }
  Registry* hostedRegistry() { return registry_.get(); }

  /// Producer spec: {componentId?, type, tables: [{table, view?}] | table + view?,
  /// terminationMs?, ringCapacity?, classes?, cleanup?}. Returns the component id.
  std::string createProducer(const Json& spec, const std::string& session = "");
  /// Archiver spec: {componentId?, sink, tables: [{table, condition?}]}.
  std::string createArchiver(const Json& spec, const std::string& session = "");
  /// Drops a hosted producer or archiver and its registrations.
  bool removeComponent(const std::string& componentId);
  /// Insert body: {producer | session [type]} with {sql} or {table, rows}. Returns tuples inserted.
  std::size_t insert(const Json& body);

  std::shared_ptr<Producer> producer(const std::string& componentId) const;
  std::shared_ptr<Archiver> archiver(const std::string& componentId) const;
  std::vector<std::string> producerIds() const;

  RowSet query(const std::string& sql, QueryClass cls);
  ContinuousHandle openContinuous(const std::string& sql, DeliverySink sink);
  void closeContinuous(const ContinuousHandle& handle);

  /// Stops (or resumes) heartbeating, as if the link to the registry were down.
  void setHeartbeatsPaused(bool paused) { heartbeatsPaused_ = paused; }

 private:
  struct Registration {
    std::vector<RegistryEntry> entries;
    std::int64_t terminationMs = 0;
    std::int64_t nextBeatMs = 0;
    bool consumer = false;
  };
  struct Session {
    std::map<ProducerType, std::string> producers;
    std::string archiver;
  };
  struct HttpQuery;
  class LocalRegistryApi;

  void serve(const std::shared_ptr<Connection>& conn);
  bool dispatch(const std::shared_ptr<Connection>& conn, const Message& m);
  bool serveProducerQuery(const std::shared_ptr<Connection>& conn, const Message& m);
  bool serveConsumerQuery(const std::shared_ptr<Connection>& conn, const Message& m);
  void notifyLocal(const std::string& consumerId, const RegistryEntry& producer);

  void addRegistration(const std::string& id, Registration reg);
  void dropRegistration(const std::string& id);
  void publishEntries(const std::vector<RegistryEntry>& entries, bool consumer);
  void onSinkView(const std::string& sinkId, const std::string& table, const ViewPredicate& view);

  void spawn(std::int64_t periodMs, std::function<void()> fn);
  void heartbeatTick();
  void refreshTick();
  void housekeepingTick();
  void syncTick();
  void notifierLoop();
  void enqueueNotifications(std::vector<Notification> ns);

  void startHttp();
  std::string createHttpQuery(const std::string& sql, QueryClass cls);
  Json httpQueryInfo(const std::string& id);
  Json nextHttpRows(const std::string& id, int waitMs);
  bool deleteHttpQuery(const std::string& id);

  Catalog catalog();
  std::string newIdLocked(const std::string& stem);

  NodeConfig config_;
  const Clock& clock_;
  std::string endpoint_;
  std::unique_ptr<Registry> registry_;
  std::unique_ptr<RegistryApi> registryApi_;
  RemoteProducers remote_;
  std::unique_ptr<TcpServer> server_;

  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<Producer>> producers_;
  std::map<std::string, std::shared_ptr<Archiver>> archivers_;
  std::map<std::string, std::vector<std::string>> archiverConsumers_;
  std::map<std::string, Session> sessions_;
  std::map<std::string, std::function<void(const RegistryEntry&)>> notifyTargets_;
  std::map<std::string, std::function<void()>> refreshers_;
  std::uint64_t counter_ = 0;

  std::mutex regMutex_;
  std::map<std::string, Registration> registrations_;
  std::atomic<bool> heartbeatsPaused_{false};

  std::mutex notifyMutex_;
  std::condition_variable notifyCv_;
  std::deque<Notification> notifications_;

  std::mutex httpMutex_;
  std::map<std::string, std::shared_ptr<HttpQuery>> httpQueries_;
  std::shared_ptr<void> http_;
  std::uint16_t httpPort_ = 0;
  std::thread httpThread_;

  std::mutex stopMutex_;
  std::condition_variable stopCv_;
  std::atomic<bool> stopping_{false};
  bool ready_ = false;
  bool started_ = false;
  std::vector<std::thread> threads_;
};

}  // namespace rgma
