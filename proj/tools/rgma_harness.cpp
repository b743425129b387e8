// rgma-harness: runs scenario files and summarizes monitoring archives.
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "common/error.hpp"
#include "harness/harness.hpp"
#include "harness/summary.hpp"
#include "spdlog/spdlog.h"

namespace fs = std::filesystem;
using namespace rgma;
using namespace rgma::harness;

namespace {

int runCommand(const fs::path& scenarioPath, const fs::path& outDir, std::int64_t windowMs, bool printSummary) {
  std::ifstream in(scenarioPath);
  if (!in) {
    std::cerr << "rgma-harness: cannot open " << scenarioPath << '\n';
    return 2;
  }
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::exception& e) {
    std::cerr << "rgma-harness: " << scenarioPath.string() << ": " << e.what() << '\n';
    return 2;
  }
  auto scenario = Scenario::fromJson(j);
  if (scenario.schema.is_string()) {
    std::ifstream sin(scenarioPath.parent_path() / scenario.schema.get<std::string>());
    scenario.schema = Json::parse(sin);
  }
  const auto result = runScenario(scenario);

  fs::create_directories(outDir);
  {
    std::ofstream out(outDir / "monitor.csv");
    writeRecordsCsv(out, result.records);
  }
  {
    std::ofstream out(outDir / "snapshot.json");
    out << result.snapshot().dump(1) << '\n';
  }
  if (!result.records.empty()) {
    const auto rows = summarize(result.records, windowMs, result.startMs);
    std::ofstream out(outDir / "summary.csv");
    writeSummaryCsv(out, rows);
    if (printSummary) writeSummaryCsv(std::cout, rows);
  }
  std::size_t acked = 0;
  for (const auto& [id, t] : result.acked) acked += t.size();
  std::cerr << scenario.name << ": " << acked << " tuple(s) acked, " << result.records.size()
            << " monitoring record(s), " << result.events.size() << " event(s) -> " << outDir.string() << '\n';
  return 0;
}

int summarizeCommand(const fs::path& csv, std::int64_t windowMs) {
  std::ifstream in(csv);
  if (!in) {
    std::cerr << "rgma-harness: cannot open " << csv << '\n';
    return 2;
  }
  writeSummaryCsv(std::cout, summarize(recordsFromCsv(in), windowMs));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"R-GMA scenario harness"};
  app.require_subcommand(1);
  std::string logLevel = "warn";
  app.add_option("--log-level", logLevel)->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));

  auto* run = app.add_subcommand("run", "run a scenario file");
  std::string scenarioPath, outDir = "harness-out";
  std::int64_t runWindow = 10000;
  bool print = false;
  run->add_option("scenario", scenarioPath, "scenario file (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--out", outDir, "output directory");
  run->add_option("--window", runWindow, "summary window in ms")->check(CLI::PositiveNumber);
  run->add_flag("--print-summary", print, "also write the summary to stdout");

  auto* sum = app.add_subcommand("summarize", "summarize a monitor.csv archive");
  std::string csvPath;
  std::int64_t window = 10000;
  sum->add_option("archive", csvPath, "monitor.csv")->required()->check(CLI::ExistingFile);
  sum->add_option("--window", window, "window in ms")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  spdlog::set_level(spdlog::level::from_str(logLevel));

  try {
    if (*run) return runCommand(scenarioPath, outDir, runWindow, print);
    return summarizeCommand(csvPath, window);
  } catch (const Error& e) {
    std::cerr << "rgma-harness: " << errorName(e.code()) << ": " << e.what() << '\n';
    return e.code() == ErrorCode::Scenario || e.code() == ErrorCode::InvalidArgument ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "rgma-harness: " << e.what() << '\n';
    return 1;
  }
}
