#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "harness/harness.hpp"

namespace rgma::harness {

struct WindowSummary {
  std::string component;
  std::int64_t startMs = 0;
  std::int64_t endMs = 0;
  /// Time-weighted fraction of the window the component was available, reading
  /// each `available` sample as holding until the component's next one.
  std::optional<double> availability;
  std::optional<double> p50ResponseMs;
  std::optional<double> p95ResponseMs;
  std::optional<double> maxInfoAgeMs;
  std::optional<double> maxArchiverLag;
};

/// Cuts the archive into windows of `windowMs` starting at `originMs` (default:
/// the earliest record) and ending at the latest record. InvalidArgument when
/// the archive is empty or the window is not positive.
std::vector<WindowSummary> summarize(const std::vector<MonitorRecord>& records, std::int64_t windowMs,
                                     std::optional<std::int64_t> originMs = std::nullopt);

/// Nearest-rank percentile of a non-empty sample.
double percentile(std::vector<double> values, double p);

void writeSummaryCsv(std::ostream& out, const std::vector<WindowSummary>& rows);

}  // namespace rgma::harness
