#include "harness/summary.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>

#include "common/error.hpp"

namespace rgma::harness {

namespace {

struct Series {
  std::vector<std::pair<std::int64_t, double>> available;
  std::vector<std::pair<std::int64_t, double>> response;
  std::vector<std::pair<std::int64_t, double>> age;
  std::vector<std::pair<std::int64_t, double>> lag;
};

std::vector<double> within(const std::vector<std::pair<std::int64_t, double>>& s, std::int64_t a, std::int64_t b) {
  std::vector<double> out;
  for (const auto& [ts, v] : s) {
    if (ts >= a && ts < b) out.push_back(v);
  }
  return out;
}

std::string cell(const std::optional<double>& v) {
  if (!v) return "";
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, *v);
  return ec == std::errc() ? std::string(buf, end) : std::to_string(*v);
}

}  // namespace

double percentile(std::vector<double> values, double p) {
  if (values.empty()) fail(ErrorCode::InvalidArgument, "percentile of an empty sample");
  std::sort(values.begin(), values.end());
  const auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * static_cast<double>(values.size())));
  return values[std::clamp<std::size_t>(rank, 1, values.size()) - 1];
}

std::vector<WindowSummary> summarize(const std::vector<MonitorRecord>& records, std::int64_t windowMs,
                                     std::optional<std::int64_t> originMs) {
  if (records.empty()) fail(ErrorCode::InvalidArgument, "the metrics archive is empty");
  if (windowMs <= 0) fail(ErrorCode::InvalidArgument, "the window must be positive");
  std::int64_t first = records.front().ts;
  std::int64_t last = records.front().ts;
  std::map<std::string, Series> series;
  for (const auto& r : records) {
    first = std::min(first, r.ts);
    last = std::max(last, r.ts);
    auto& s = series[r.component];
    if (r.metric == "available") {
      s.available.emplace_back(r.ts, r.value);
    } else if (r.metric == "responseTimeMs") {
      s.response.emplace_back(r.ts, r.value);
    } else if (r.metric == "infoAgeMs") {
      s.age.emplace_back(r.ts, r.value);
    } else if (r.metric == "archiverLag") {
      s.lag.emplace_back(r.ts, r.value);
    }
  }
  const std::int64_t origin = originMs.value_or(first);
  std::vector<WindowSummary> out;
  for (auto& [component, s] : series) {
    std::stable_sort(s.available.begin(), s.available.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    for (std::int64_t a = origin; a < last || a == origin; a += windowMs) {
      const std::int64_t b = a + windowMs;
      WindowSummary w{component, a, b, {}, {}, {}, {}, {}};
      double up = 0;
      double covered = 0;
      for (std::size_t i = 0; i < s.available.size(); ++i) {
        const auto from = std::max(a, s.available[i].first);
        const auto to = std::min(b, i + 1 < s.available.size() ? s.available[i + 1].first : last);
        if (to <= from) continue;
        covered += static_cast<double>(to - from);
        up += static_cast<double>(to - from) * s.available[i].second;
      }
      if (covered > 0) w.availability = up / covered;
      if (auto v = within(s.response, a, b); !v.empty()) {
        w.p50ResponseMs = percentile(v, 50);
        w.p95ResponseMs = percentile(v, 95);
      }
      if (auto v = within(s.age, a, b); !v.empty()) w.maxInfoAgeMs = *std::max_element(v.begin(), v.end());
      if (auto v = within(s.lag, a, b); !v.empty()) w.maxArchiverLag = *std::max_element(v.begin(), v.end());
      if (w.availability || w.p50ResponseMs || w.maxInfoAgeMs || w.maxArchiverLag) out.push_back(std::move(w));
      if (b >= last) break;
    }
  }
  return out;
}

void writeSummaryCsv(std::ostream& out, const std::vector<WindowSummary>& rows) {
  out << "component,windowStartMs,windowEndMs,availability,p50ResponseMs,p95ResponseMs,maxInfoAgeMs,maxArchiverLag\n";
  for (const auto& w : rows) {
    out << w.component << ',' << w.startMs << ',' << w.endMs << ',' << cell(w.availability) << ','
        << cell(w.p50ResponseMs) << ',' << cell(w.p95ResponseMs) << ',' << cell(w.maxInfoAgeMs) << ','
        << cell(w.maxArchiverLag) << '\n';
  }
}

}  // namespace rgma::harness
