#include <map>

#include "common/error.hpp"
#include "harness/backend.hpp"
#include "mediator/local.hpp"
#include "sql/parser.hpp"
#include "wire/message.hpp"

namespace rgma::harness {

namespace {

constexpr std::int64_t kEpochMs = 1'000'000'000;

/// Everything in one thread: producers, archivers and sessions wired through
/// LocalProducers, registries as plain objects, heartbeats, sweeps and syncs
/// run from advanceTo.
class SimBackend final : public Backend {
 public:
  SimBackend(const Scenario& s, const Catalog& catalog, std::filesystem::path dataDir)
      : s_(s), catalog_(catalog), dataDir_(std::move(dataDir)), clock_(kEpochMs) {
    for (int i = 0; i < s.registries; ++i) {
      registries_.push_back(std::make_unique<Registry>("r" + std::to_string(i), clock_));
      for (const auto& [name, def] : catalog_.tables()) registries_.back()->declareTable(def);
    }
    nextSweep_ = nextSync_ = nextRefresh_ = clock_.nowMs();
    ProducerConfig mc;
    mc.componentId = kMonitorProducer;
    mc.type = ProducerType::DataBase;
    mc.tables = {{catalog_.get(kMonitorTable), {}}};
    mc.terminationMs = 60000;
    monitor_ = std::make_shared<Producer>(mc, clock_);
    local_.add(monitor_);
    registerProducer(monitor_, 0);
  }

  ~SimBackend() override { finish(); }

  std::int64_t now() const override { return clock_.nowMs(); }

  void advanceTo(std::int64_t t) override {
    clock_.set(t);
    heartbeats();
    if (t >= nextSweep_) {
      nextSweep_ = t + s_.sweepPeriodMs;
      for (auto& r : registries_) r->expireSweep();
    }
    if (registries_.size() > 1 && t >= nextSync_) {
      nextSync_ = t + s_.syncPeriodMs;
      for (std::size_t i = 0; i < registries_.size(); ++i) {
        for (std::size_t j = i + 1; j < registries_.size(); ++j) {
          deliver(registries_[i]->replicaSync(registries_[j]->snapshot()));
          deliver(registries_[j]->replicaSync(registries_[i]->snapshot()));
        }
      }
    }
    if (t >= nextRefresh_) {
      nextRefresh_ = t + s_.refreshPeriodMs;
      for (auto& [id, a] : archivers_) {
        if (a.archiver) a.archiver->refresh();
      }
      for (auto& [id, c] : sessions_) c->refresh();
    }
    for (auto& [id, a] : archivers_) {
      if (a.archiver) a.archiver->drain();
    }
  }

  void startProducer(const ProducerPlan& plan) override {
    auto& p = producers_[plan.id];
    p.plan = plan;
    p.registry = pickRegistry(plan.registry);
    ProducerConfig c;
    c.componentId = plan.id;
    c.type = plan.type;
    const auto& def = catalog_.get(plan.table);
    c.tables = {{def, plan.view.empty() ? ViewPredicate() : parseView(plan.view, def)}};
    c.ringCapacity = plan.ringCapacity;
    c.terminationMs = plan.terminationMs;
    c.dataDir = dataDir_ / "producers";
    p.config = c;
    bring(p);
  }

  void killProducer(const std::string& id) override {
    auto& p = producer(id);
    if (!p.instance) return;
    local_.remove(id);
    p.instance.reset();
    regs_[id].alive = false;
  }

  void restartProducer(const std::string& id) override {
    auto& p = producer(id);
    if (!p.instance) bring(p);
  }

  bool producerUp(const std::string& id) const override {
    auto it = producers_.find(id);
    return it != producers_.end() && it->second.instance != nullptr;
  }

  std::size_t publish(const std::string& id, const std::vector<Tuple>& tuples) override {
    auto& p = producer(id);
    if (!p.instance) fail(ErrorCode::Connection, "producer " + id + " is down");
    p.instance->insert(tuples);
    return tuples.size();
  }

  void setLink(const std::string& id, int dropEvery) override { regs_[id].dropEvery = dropEvery; }

  std::vector<std::string> registeredProducers(int registry) const override {
    return producerIds(registries_.at(static_cast<std::size_t>(registry))->liveEntries());
  }

  void startArchiver(const ArchiverPlan& plan) override {
    auto& a = archivers_[plan.id];
    a.plan = plan;
    a.registry = pickRegistry(plan.registry);
    ProducerConfig c;
    c.componentId = plan.sink.id;
    c.type = plan.sink.type;
    c.tables = {{catalog_.get(plan.sink.table), {}}};
    c.terminationMs = s_.consumerTerminationMs;
    c.ringCapacity = 1 << 20;
    a.sink = std::make_shared<Producer>(c, clock_);
    local_.add(a.sink);
    registerProducer(a.sink, a.registry);
    bringArchiver(a);
  }

  void killArchiver(const std::string& id) override {
    auto& a = archiver(id);
    if (!a.archiver) return;
    a.archiver->stop();
    a.archiver.reset();
    for (const auto& [table, cond] : a.plan.tables) {
      const auto cid = consumerId(id, table);
      regs_[cid].alive = false;
      notify_.erase(cid);
    }
  }

  void restartArchiver(const std::string& id) override {
    auto& a = archiver(id);
    if (!a.archiver) bringArchiver(a);
  }

  bool archiverUp(const std::string& id) const override {
    auto it = archivers_.find(id);
    return it != archivers_.end() && it->second.archiver != nullptr;
  }

  void pauseArchiver(const std::string& id, bool paused) override {
    auto& a = archiver(id);
    a.paused = paused;
    if (a.archiver) a.archiver->setPaused(paused);
  }

  ArchiverLag archiverLag(const std::string& id) const override {
    auto it = archivers_.find(id);
    if (it == archivers_.end() || !it->second.archiver) return {};
    return it->second.archiver->totalLag();
  }

  bool startContinuous(const ConsumerPlan& plan, RowFn onRow) override {
    const int reg = pickRegistry(plan.registry);
    auto session = std::make_unique<ContinuousSession>(
        parseSelect(plan.query, catalog_), lookupAt(reg), local_.subscriber(),
        [onRow](const Delivery& d) { onRow(d.row, d.producerId, d.tuple.timestamp); });
    auto* raw = session.get();
    sessions_[plan.id] = std::move(session);
    notify_[plan.id] = [raw](const RegistryEntry& p) { raw->onNotification(p); };
    RegistryEntry e;
    e.role = RegistryEntry::Role::Consumer;
    e.componentId = plan.id;
    e.query = plan.query;
    e.queryClass = QueryClass::Continuous;
    e.terminationMs = s_.consumerTerminationMs;
    addRegistration(plan.id, reg, {e}, true);
    return !raw->start();
  }

  RowSet oneShot(const ConsumerPlan& plan) override {
    const auto q = parseSelect(plan.query, catalog_);
    const auto cls = classify(q, plan.cls);
    const int reg = pickRegistry(plan.registry);
    return execute(rgma::plan(q, cls, registries_[static_cast<std::size_t>(reg)]->lookup(q, cls)), local_.fetcher());
  }

  void publishMonitor(const std::vector<Tuple>& records) override { monitor_->insert(records); }

  RowSet monitorHistory() override {
    const auto q = parseSelect(std::string("SELECT * FROM ") + kMonitorTable, catalog_);
    return execute(plan(q, QueryClass::History, registries_[0]->lookup(q, QueryClass::History)), local_.fetcher());
  }

  std::map<std::string, std::vector<Tuple>> contents(const std::string& id) override {
    std::shared_ptr<Producer> p;
    if (auto it = producers_.find(id); it != producers_.end()) p = it->second.instance;
    for (const auto& [aid, a] : archivers_) {
      if (a.plan.sink.id == id) p = a.sink;
    }
    std::map<std::string, std::vector<Tuple>> out;
    if (!p) return out;
    for (const auto& t : p->config().tables) out[t.def.name()] = p->contents(t.def.name());
    return out;
  }

  void finish() override {
    for (auto& [id, c] : sessions_) c->close();
    for (auto& [id, a] : archivers_) {
      if (a.archiver) a.archiver->stop();
    }
    sessions_.clear();
    archivers_.clear();
  }

 private:
  struct Reg {
    int registry = 0;
    std::vector<RegistryEntry> entries;
    std::int64_t terminationMs = 0;
    std::int64_t nextBeat = 0;
    bool consumer = false;
    bool alive = true;
    int dropEvery = 0;
    std::uint64_t beats = 0;
  };
  struct SimProducer {
    ProducerPlan plan;
    ProducerConfig config;
    int registry = 0;
    std::shared_ptr<Producer> instance;
  };
  struct SimArchiver {
    ArchiverPlan plan;
    int registry = 0;
    std::shared_ptr<Producer> sink;
    std::unique_ptr<Archiver> archiver;
    bool paused = false;
  };

  static std::string consumerId(const std::string& archiver, const std::string& table) {
    return archiver + "." + toLower(table);
  }

  int pickRegistry(int requested) {
    if (requested >= 0) return requested;
    return static_cast<int>(roundRobin_++ % registries_.size());
  }

  LookupFn lookupAt(int reg) {
    auto* r = registries_[static_cast<std::size_t>(reg)].get();
    return [r](const Query& q, QueryClass c) { return r->lookup(q, c); };
  }

  SimProducer& producer(const std::string& id) {
    auto it = producers_.find(id);
    if (it == producers_.end()) fail(ErrorCode::UnknownComponent, "no producer " + id);
    return it->second;
  }

  SimArchiver& archiver(const std::string& id) {
    auto it = archivers_.find(id);
    if (it == archivers_.end()) fail(ErrorCode::UnknownComponent, "no archiver " + id);
    return it->second;
  }

  void bring(SimProducer& p) {
    p.instance = std::make_shared<Producer>(p.config, clock_);
    local_.add(p.instance);
    registerProducer(p.instance, p.registry);
  }

  void bringArchiver(SimArchiver& a) {
    ArchiverSpec spec;
    spec.componentId = a.plan.id;
    for (const auto& [t, cond] : a.plan.tables) spec.tables.push_back({t, cond});
    spec.sourceClass = a.plan.sourceClass;
    a.archiver = std::make_unique<Archiver>(spec, a.sink, catalog_, lookupAt(a.registry), local_.subscriber(), clock_, false);
    const std::string sinkId = a.sink->id();
    a.archiver->setViewListener([this, sinkId](const std::string& table, const ViewPredicate& view) {
      auto& reg = regs_[sinkId];
      for (auto& e : reg.entries) {
        if (e.table == table) {
          e.view = view;
          deliver(registries_[static_cast<std::size_t>(reg.registry)]->registerProducer(e));
        }
      }
    });
    auto* raw = a.archiver.get();
    for (const auto& [table, cond] : a.plan.tables) {
      RegistryEntry e;
      e.role = RegistryEntry::Role::Consumer;
      e.componentId = consumerId(a.plan.id, table);
      e.query = "SELECT * FROM " + table + (cond.empty() ? "" : " WHERE " + cond);
      e.queryClass = QueryClass::Continuous;
      e.terminationMs = s_.consumerTerminationMs;
      notify_[e.componentId] = [raw](const RegistryEntry& p) { raw->onNotification(p); };
      addRegistration(e.componentId, a.registry, {e}, true);
    }
    a.archiver->setPaused(a.paused);
    a.archiver->start();
  }

  void registerProducer(const std::shared_ptr<Producer>& p, int reg) {
    std::vector<RegistryEntry> entries;
    for (const auto& t : p->config().tables) {
      RegistryEntry e;
      e.componentId = p->id();
      e.producerType = p->type();
      e.table = t.def.name();
      e.view = t.view;
      e.terminationMs = p->config().terminationMs;
      entries.push_back(e);
    }
    addRegistration(p->id(), reg, std::move(entries), false);
  }

  void addRegistration(const std::string& id, int reg, std::vector<RegistryEntry> entries, bool consumer) {
    auto& r = regs_[id];
    const int dropEvery = r.dropEvery;
    r = Reg{};
    r.registry = reg;
    r.entries = std::move(entries);
    r.terminationMs = r.entries.front().terminationMs;
    r.consumer = consumer;
    r.dropEvery = dropEvery;
    r.nextBeat = clock_.nowMs() + heartbeatSchedule(r.terminationMs);
    publish(r);
  }

  void publish(const Reg& r) {
    auto& registry = *registries_[static_cast<std::size_t>(r.registry)];
    for (const auto& e : r.entries) {
      if (r.consumer) {
        registry.registerConsumer(e);
      } else {
        deliver(registry.registerProducer(e));
      }
    }
  }

  void heartbeats() {
    const auto now = clock_.nowMs();
    for (auto& [id, r] : regs_) {
      if (!r.alive) continue;
      while (now >= r.nextBeat) {
        r.nextBeat += heartbeatSchedule(r.terminationMs);
        ++r.beats;
        if (r.dropEvery > 0 && r.beats % static_cast<std::uint64_t>(r.dropEvery) == 0) continue;
        try {
          registries_[static_cast<std::size_t>(r.registry)]->heartbeat(id, r.terminationMs);
        } catch (const Error& e) {
          if (e.code() != ErrorCode::UnknownComponent) throw;
          publish(r);
        }
      }
    }
  }

  void deliver(const std::vector<Notification>& ns) {
    for (const auto& n : ns) {
      if (auto it = notify_.find(n.consumer.componentId); it != notify_.end()) it->second(n.producer);
    }
  }

  const Scenario& s_;
  Catalog catalog_;
  std::filesystem::path dataDir_;
  ManualClock clock_;
  std::vector<std::unique_ptr<Registry>> registries_;
  LocalProducers local_;
  std::shared_ptr<Producer> monitor_;
  std::map<std::string, Reg> regs_;
  std::map<std::string, SimProducer> producers_;
  std::map<std::string, SimArchiver> archivers_;
  std::map<std::string, std::unique_ptr<ContinuousSession>> sessions_;
  std::map<std::string, std::function<void(const RegistryEntry&)>> notify_;
  std::size_t roundRobin_ = 0;
  std::int64_t nextSweep_ = 0;
  std::int64_t nextSync_ = 0;
  std::int64_t nextRefresh_ = 0;
};

}  // namespace

std::unique_ptr<Backend> makeSimBackend(const Scenario& s, const Catalog& catalog, const std::filesystem::path& dataDir) {
  return std::make_unique<SimBackend>(s, catalog, dataDir);
}

}  // namespace rgma::harness
