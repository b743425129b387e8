// rgmad: runs one node from a JSON config until SIGINT/SIGTERM.
#include <atomic>
#include <chrono>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "rgma/rgma.h"

namespace {
std::atomic<bool> stopping{false};
}

int main(int argc, char** argv) {
  CLI::App app{"R-GMA node daemon"};
  std::string configPath, listen, dataDir, endpointFile, logLevel = "info";
  app.add_option("config", configPath, "node config file (JSON)")->required()->check(CLI::ExistingFile);
  app.add_option("--listen", listen, "override the listen address");
  app.add_option("--data-dir", dataDir, "override the data directory");
  app.add_option("--endpoint-file", endpointFile, "write the bound endpoint here once serving");
  app.add_option("--log-level", logLevel)->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  nlohmann::json config;
  try {
    std::ifstream in(configPath);
    config = nlohmann::json::parse(in);
  } catch (const std::exception& e) {
    std::cerr << "rgmad: cannot read " << configPath << ": " << e.what() << '\n';
    return 2;
  }
  if (config.contains("schema") && config["schema"].is_string()) {
    auto path = std::filesystem::path(config["schema"].get<std::string>());
    if (path.is_relative()) path = std::filesystem::path(configPath).parent_path() / path;
    try {
      std::ifstream in(path);
      config["schema"] = nlohmann::json::parse(in);
    } catch (const std::exception& e) {
      std::cerr << "rgmad: cannot read schema " << path << ": " << e.what() << '\n';
      return 2;
    }
  }
  if (!listen.empty()) config["listen"] = listen;
  if (!dataDir.empty()) config["dataDir"] = dataDir;

  rgma_set_log_level(logLevel.c_str());
  std::signal(SIGINT, [](int) { stopping = true; });
  std::signal(SIGTERM, [](int) { stopping = true; });

  rgma_node* node = nullptr;
  if (rgma_node_start(config.dump().c_str(), &node) != RGMA_OK) {
    std::cerr << "rgmad: " << rgma_last_error() << '\n';
    return 1;
  }
  const std::string endpoint = rgma_node_endpoint(node);
  std::cout << "listening " << endpoint;
  if (rgma_node_http_port(node) > 0) std::cout << " http " << rgma_node_http_port(node);
  std::cout << std::endl;
  if (!endpointFile.empty()) {
    const auto tmp = endpointFile + ".tmp";
    std::ofstream(tmp) << endpoint << '\n';
    std::rename(tmp.c_str(), endpointFile.c_str());
  }
  while (!stopping) std::this_thread::sleep_for(std::chrono::milliseconds(50));
  rgma_node_stop(node, 1);
  rgma_node_free(node);
  return 0;
}
