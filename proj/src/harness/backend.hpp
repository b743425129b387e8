#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "archiver/archiver.hpp"
#include "harness/harness.hpp"

namespace rgma::harness {

/// Row arriving at a continuous consumer.
using RowFn = std::function<void(const std::vector<Value>& row, const std::string& origin, std::int64_t tupleTs)>;

/// Hosts the scenario's components, in one process under a simulated clock or
/// as TCP nodes under the wall clock.
class Backend {
 public:
  virtual ~Backend() = default;

  virtual std::int64_t now() const = 0;
  /// Moves time forward to `t`, running whatever periodic work falls due.
  virtual void advanceTo(std::int64_t t) = 0;

  virtual void startProducer(const ProducerPlan& plan) = 0;
  virtual void killProducer(const std::string& id) = 0;
  virtual void restartProducer(const std::string& id) = 0;
  virtual bool producerUp(const std::string& id) const = 0;
  /// Returns the number of tuples the producer acknowledged; throws on rejection.
  virtual std::size_t publish(const std::string& id, const std::vector<Tuple>& tuples) = 0;
  /// dropEvery 0 restores the link; n loses every n-th heartbeat.
  virtual void setLink(const std::string& id, int dropEvery) = 0;
  /// Producer ids registry `registry` currently holds live entries for, sorted.
  virtual std::vector<std::string> registeredProducers(int registry) const = 0;

  virtual void startArchiver(const ArchiverPlan& plan) = 0;
  virtual void killArchiver(const std::string& id) = 0;
  virtual void restartArchiver(const std::string& id) = 0;
  virtual bool archiverUp(const std::string& id) const = 0;
  virtual void pauseArchiver(const std::string& id, bool paused) = 0;
  virtual ArchiverLag archiverLag(const std::string& id) const = 0;

  /// Opens a continuous query; returns whether it started with no producers.
  virtual bool startContinuous(const ConsumerPlan& plan, RowFn onRow) = 0;
  virtual RowSet oneShot(const ConsumerPlan& plan) = 0;

  virtual void publishMonitor(const std::vector<Tuple>& records) = 0;
  virtual RowSet monitorHistory() = 0;
  virtual std::map<std::string, std::vector<Tuple>> contents(const std::string& id) = 0;
  virtual void finish() = 0;
};

std::vector<std::string> producerIds(const std::vector<RegistryEntry>& entries);

std::unique_ptr<Backend> makeSimBackend(const Scenario& s, const Catalog& catalog, const std::filesystem::path& dataDir);
std::unique_ptr<Backend> makeLiveBackend(const Scenario& s, const Catalog& catalog, const std::filesystem::path& dataDir);

}  // namespace rgma::harness
