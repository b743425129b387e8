#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "common/kinds.hpp"
#include "sql/ast.hpp"
#include "wire/codec.hpp"

namespace rgma::harness {

inline constexpr const char* kMonitorTable = "rgma_monitor";
inline constexpr const char* kMonitorProducer = "monitor";
const char* monitorTableSql();

/// The Service / ServiceStatus pair, as [{sql, key}].
Json demoSchema();

enum class ClockMode { Simulated, Wall };

struct ProducerPlan {
  std::string id;
  ProducerType type = ProducerType::Stream;
  std::string table;
  std::string view;  // WHERE-style text, empty for none
  double ratePerSec = 1.0;
  std::uint64_t seed = 0;
  std::vector<std::string> keys;                          // values for a single-column defining key
  std::map<std::string, std::vector<Json>> values;        // fixed domains per column
  std::int64_t startMs = 0;
  std::int64_t stopMs = -1;  // -1: publishes until the end
  std::int64_t maxTuples = -1;
  std::int64_t terminationMs = 5000;
  std::size_t ringCapacity = 100000;
  int registry = -1;  // index; -1 spreads components round robin
};

struct SinkPlan {
  std::string id;
  ProducerType type = ProducerType::Latest;
  std::string table;
};

struct ArchiverPlan {
  std::string id;
  SinkPlan sink;
  std::vector<std::pair<std::string, std::string>> tables;  // table, condition
  QueryClass sourceClass = QueryClass::Continuous;
  std::int64_t startMs = 0;
  int registry = -1;
};

struct ConsumerPlan {
  std::string id;
  std::string query;
  QueryClass cls = QueryClass::Continuous;
  std::int64_t startMs = 0;
  std::int64_t periodMs = 1000;  // one-shot consumers repeat at this period
  int registry = -1;
};

enum class FaultAction { Kill, Restart, DropLink, RestoreLink, PauseSink, ResumeSink };

struct Fault {
  std::int64_t atMs = 0;
  FaultAction action = FaultAction::Kill;
  std::string target;
  int dropEvery = 1;  // DropLink: lose every n-th heartbeat (1 = all)
};

struct Scenario {
  std::string name = "scenario";
  ClockMode clock = ClockMode::Simulated;
  std::uint64_t seed = 1;
  std::int64_t durationMs = 10000;
  std::int64_t settleMs = 0;  // extra time after the duration with publishing stopped
  std::int64_t tickMs = 10;
  int registries = 1;
  std::int64_t syncPeriodMs = 1000;
  std::int64_t sweepPeriodMs = 100;
  std::int64_t refreshPeriodMs = 1000;
  std::int64_t monitorPeriodMs = 1000;
  std::int64_t consumerTerminationMs = 30000;
  Json schema = demoSchema();
  std::vector<ProducerPlan> producers;
  std::vector<ArchiverPlan> archivers;
  std::vector<ConsumerPlan> consumers;
  std::vector<Fault> faults;
  std::filesystem::path dataDir;  // empty: a temporary directory removed afterwards

  /// Parses the scenario file format, expanding templates. ScenarioError on bad input.
  static Scenario fromJson(const Json& j);
  /// Checks wiring against the declared schema. Returns the catalog it was checked against.
  Catalog validate() const;
};

/// Expands the "typical site" topology: `sites` × (1 SE + 3 CE) stream producers
/// of ServiceStatus, one archiver per requested sink type.
void addTypicalSites(Scenario& s, int sites, double ratePerSec, const std::vector<ProducerType>& sinks,
                     std::int64_t maxTuplesPerProducer = -1);

std::string faultActionName(FaultAction a);

}  // namespace rgma::harness
