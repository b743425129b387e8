#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "harness/scenario.hpp"
#include "mediator/mediator.hpp"

namespace rgma::harness {

struct MonitorRecord {
  std::string component;
  std::string metric;  // responseTimeMs, available, infoAgeMs, archiverLag
  double value = 0;
  std::int64_t ts = 0;

  bool operator==(const MonitorRecord&) const = default;
};

struct ConsumerLog {
  QueryClass cls = QueryClass::Continuous;
  bool noProducersAtStart = false;
  std::int64_t startedMs = -1;   // scenario-relative
  std::int64_t firstRowMs = -1;  // scenario-relative arrival of the first row
  std::vector<std::vector<Value>> rows;
  std::vector<std::string> origins;
  std::vector<std::int64_t> arrivalsMs;
  std::size_t runs = 0;  // one-shot executions
  std::size_t lastRunRows = 0;
};

struct ScenarioResult {
  std::int64_t startMs = 0;  // clock reading at scenario time zero
  std::int64_t endMs = 0;
  /// Read back from the monitoring table through an ordinary History query.
  std::vector<MonitorRecord> records;
  /// Tuples each generator producer acknowledged, in publication order.
  std::map<std::string, std::vector<Tuple>> acked;
  /// Final contents of every producer and sink, by component then table.
  std::map<std::string, std::map<std::string, std::vector<Tuple>>> stores;
  std::map<std::string, ConsumerLog> consumers;
  std::vector<std::string> events;  // applied faults and failures, in order

  Json snapshot() const;
};

/// Makes tuples for one producer from its seed: key columns from `keys`, view
/// columns fixed, listed domains sampled, other columns drawn per type.
class TupleGenerator {
 public:
  TupleGenerator(const ProducerPlan& plan, const TableDefinition& def);
  Tuple next(std::int64_t timestamp);

 private:
  TableDefinition def_;
  std::vector<std::optional<Value>> fixed_;
  std::vector<std::vector<Value>> domains_;
  std::mt19937_64 rng_;
};

ScenarioResult runScenario(const Scenario& scenario);

std::vector<MonitorRecord> recordsFromCsv(std::istream& in);
void writeRecordsCsv(std::ostream& out, const std::vector<MonitorRecord>& records);

}  // namespace rgma::harness
