#include <chrono>
#include <map>
#include <thread>

#include "client/client.hpp"
#include "common/error.hpp"
#include "harness/backend.hpp"
#include "node/node.hpp"

namespace rgma::harness {

namespace {

/// Components as TCP nodes in this process under the wall clock: one node per
/// registry, per producer and per archiver (with its sink). Consumers and the
/// monitoring producer live on the registry nodes.
class LiveBackend final : public Backend {
 public:
  LiveBackend(const Scenario& s, const Catalog& catalog, std::filesystem::path dataDir)
      : s_(s), catalog_(catalog), dataDir_(std::move(dataDir)) {
    Json schema = Json::array();
    for (const auto& t : s.schema) schema.push_back(t);
    schema.push_back({{"sql", monitorTableSql()}, {"key", {"component", "metric"}}});
    std::vector<std::string> peers;
    for (int i = 0; i < s.registries; ++i) {
      NodeConfig c;
      c.nodeId = "r" + std::to_string(i);
      c.hostRegistry = true;
      c.registryId = c.nodeId;
      c.peers = peers;
      c.syncPeriodMs = s.syncPeriodMs;
      c.sweepPeriodMs = s.sweepPeriodMs;
      c.schema = schema;
      c.refreshPeriodMs = s.refreshPeriodMs;
      c.consumerTerminationMs = s.consumerTerminationMs;
      auto n = std::make_unique<Node>(c);
      n->start();
      peers.push_back(n->endpoint());
      registries_.push_back(std::move(n));
    }
    registries_[0]->createProducer(
        {{"componentId", kMonitorProducer}, {"type", "database"}, {"table", kMonitorTable}, {"terminationMs", 60000}});
  }

  ~LiveBackend() override { finish(); }

  std::int64_t now() const override { return clock_.nowMs(); }

  void advanceTo(std::int64_t t) override {
    const auto wait = t - clock_.nowMs();
    if (wait > 0) std::this_thread::sleep_for(std::chrono::milliseconds(wait));
  }

  void startProducer(const ProducerPlan& plan) override {
    auto& p = producers_[plan.id];
    p.plan = plan;
    p.registry = pickRegistry(plan.registry);
    p.spec = {{"componentId", plan.id},
              {"type", std::string(producerTypeName(plan.type))},
              {"table", plan.table},
              {"terminationMs", plan.terminationMs},
              {"ringCapacity", plan.ringCapacity}};
    if (!plan.view.empty()) p.spec["view"] = plan.view;
    bring(p);
  }

  void killProducer(const std::string& id) override {
    auto& p = producer(id);
    if (!p.node) return;
    p.node->stop(false);
    p.node.reset();
    p.client.reset();
  }

  void restartProducer(const std::string& id) override {
    auto& p = producer(id);
    if (!p.node) bring(p);
  }

  bool producerUp(const std::string& id) const override {
    auto it = producers_.find(id);
    return it != producers_.end() && it->second.node != nullptr;
  }

  std::size_t publish(const std::string& id, const std::vector<Tuple>& tuples) override {
    auto& p = producer(id);
    if (!p.client) fail(ErrorCode::Connection, "producer " + id + " is down");
    Json rows = Json::array();
    for (const auto& t : tuples) rows.push_back(rowToJson(t.values));
    return p.client->insert({{"producer", id}, {"table", p.plan.table}, {"rows", rows}});
  }

  void setLink(const std::string& id, int dropEvery) override {
    auto& p = producer(id);
    p.dropped = dropEvery > 0;
    if (p.node) p.node->setHeartbeatsPaused(p.dropped);
  }

  std::vector<std::string> registeredProducers(int registry) const override {
    return producerIds(registries_.at(static_cast<std::size_t>(registry))->hostedRegistry()->liveEntries());
  }

  void startArchiver(const ArchiverPlan& plan) override {
    auto& a = archivers_[plan.id];
    a.plan = plan;
    NodeConfig c = nodeConfig(plan.id + "-node", pickRegistry(plan.registry));
    a.node = std::make_unique<Node>(c);
    a.node->start();
    a.node->createProducer({{"componentId", plan.sink.id},
                            {"type", std::string(producerTypeName(plan.sink.type))},
                            {"table", plan.sink.table},
                            {"terminationMs", s_.consumerTerminationMs},
                            {"ringCapacity", 1 << 20}});
    Json tables = Json::array();
    for (const auto& [t, cond] : plan.tables) tables.push_back({{"table", t}, {"condition", cond}});
    a.spec = {{"componentId", plan.id},
              {"sink", plan.sink.id},
              {"tables", tables},
              {"sourceClass", std::string(queryClassName(plan.sourceClass))}};
    a.node->createArchiver(a.spec);
    a.up = true;
  }

  void killArchiver(const std::string& id) override {
    auto& a = archiver(id);
    if (!a.up) return;
    a.node->removeComponent(id);
    a.up = false;
  }

  void restartArchiver(const std::string& id) override {
    auto& a = archiver(id);
    if (a.up) return;
    a.node->createArchiver(a.spec);
    a.up = true;
    if (a.paused) pauseArchiver(id, true);
  }

  bool archiverUp(const std::string& id) const override {
    auto it = archivers_.find(id);
    return it != archivers_.end() && it->second.up;
  }

  void pauseArchiver(const std::string& id, bool paused) override {
    auto& a = archiver(id);
    a.paused = paused;
    if (auto x = a.node->archiver(id)) x->setPaused(paused);
  }

  ArchiverLag archiverLag(const std::string& id) const override {
    auto it = archivers_.find(id);
    if (it == archivers_.end() || !it->second.up) return {};
    auto x = it->second.node->archiver(id);
    return x ? x->totalLag() : ArchiverLag{};
  }

  bool startContinuous(const ConsumerPlan& plan, RowFn onRow) override {
    auto& node = *registries_[static_cast<std::size_t>(pickRegistry(plan.registry))];
    auto h = node.openContinuous(plan.query, [onRow](const Delivery& d) { onRow(d.row, d.producerId, d.tuple.timestamp); });
    const bool none = h.noProducers;
    continuous_.emplace_back(&node, std::move(h));
    return none;
  }

  RowSet oneShot(const ConsumerPlan& plan) override {
    return registries_[static_cast<std::size_t>(pickRegistry(plan.registry))]->query(plan.query, plan.cls);
  }

  void publishMonitor(const std::vector<Tuple>& records) override {
    registries_[0]->producer(kMonitorProducer)->insert(records);
  }

  RowSet monitorHistory() override {
    return registries_[0]->query(std::string("SELECT * FROM ") + kMonitorTable, QueryClass::History);
  }

  std::map<std::string, std::vector<Tuple>> contents(const std::string& id) override {
    std::shared_ptr<Producer> p;
    if (auto it = producers_.find(id); it != producers_.end() && it->second.node) p = it->second.node->producer(id);
    for (const auto& [aid, a] : archivers_) {
      if (a.plan.sink.id == id) p = a.node->producer(id);
    }
    std::map<std::string, std::vector<Tuple>> out;
    if (!p) return out;
    for (const auto& t : p->config().tables) out[t.def.name()] = p->contents(t.def.name());
    return out;
  }

  void finish() override {
    for (auto& [node, h] : continuous_) node->closeContinuous(h);
    continuous_.clear();
    for (auto& [id, a] : archivers_) {
      if (a.node) a.node->stop();
    }
    for (auto& [id, p] : producers_) {
      if (p.node) p.node->stop();
    }
    for (auto& r : registries_) r->stop();
  }

 private:
  struct LiveProducer {
    ProducerPlan plan;
    Json spec;
    int registry = 0;
    bool dropped = false;
    std::unique_ptr<Node> node;
    std::unique_ptr<Client> client;
  };
  struct LiveArchiver {
    ArchiverPlan plan;
    Json spec;
    std::unique_ptr<Node> node;
    bool up = false;
    bool paused = false;
  };

  int pickRegistry(int requested) {
    if (requested >= 0) return requested;
    return static_cast<int>(roundRobin_++ % registries_.size());
  }

  NodeConfig nodeConfig(const std::string& nodeId, int registry) const {
    NodeConfig c;
    c.nodeId = nodeId;
    c.registryEndpoint = registries_[static_cast<std::size_t>(registry)]->endpoint();
    c.dataDir = dataDir_ / nodeId;
    c.refreshPeriodMs = s_.refreshPeriodMs;
    c.consumerTerminationMs = s_.consumerTerminationMs;
    c.sweepPeriodMs = s_.sweepPeriodMs;
    return c;
  }

  LiveProducer& producer(const std::string& id) {
    auto it = producers_.find(id);
    if (it == producers_.end()) fail(ErrorCode::UnknownComponent, "no producer " + id);
    return it->second;
  }

  LiveArchiver& archiver(const std::string& id) {
    auto it = archivers_.find(id);
    if (it == archivers_.end()) fail(ErrorCode::UnknownComponent, "no archiver " + id);
    return it->second;
  }

  void bring(LiveProducer& p) {
    p.node = std::make_unique<Node>(nodeConfig(p.plan.id, p.registry));
    p.node->start();
    p.node->setHeartbeatsPaused(p.dropped);
    p.node->createProducer(p.spec);
    p.client = std::make_unique<Client>(HostPort::parse(p.node->endpoint()), 5000);
  }

  const Scenario& s_;
  Catalog catalog_;
  std::filesystem::path dataDir_;
  SystemClock clock_;
  std::vector<std::unique_ptr<Node>> registries_;
  std::map<std::string, LiveProducer> producers_;
  std::map<std::string, LiveArchiver> archivers_;
  std::vector<std::pair<Node*, ContinuousHandle>> continuous_;
  std::size_t roundRobin_ = 0;
};

}  // namespace

std::unique_ptr<Backend> makeLiveBackend(const Scenario& s, const Catalog& catalog, const std::filesystem::path& dataDir) {
  return std::make_unique<LiveBackend>(s, catalog, dataDir);
}

}  // namespace rgma::harness
