#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "topobench/harness.hpp"
#include "topobench/metrics.hpp"
#include "topobench/solver.hpp"

namespace topobench {

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DatasetConfig {
  int rows = 10;
  int cols = 10;
  std::uint64_t seed = 2024;
  std::vector<int> widths;  // empty = standard placement table
  int stride = 1;           // used with explicit widths
  int concurrency = 0;      // 0 = hardware default
};

// Top-level run configuration; every section is optional and falls back to
// defaults. Unknown keys anywhere are rejected.
struct Config {
  SolverConfig solver;
  DatasetConfig dataset;
  MetricConfig metrics;
  RunSpec harness;
  std::string dataset_path = "dataset.jsonl";
};

Config parse_config(const std::string& json_text);
Config load_config(const std::string& path);

}  // namespace topobench
