#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "topobench/metrics.hpp"
#include "topobench/scenario.hpp"
#include "topobench/task.hpp"

namespace topobench {

class HarnessError : public std::runtime_error {
 public:
  explicit HarnessError(const std::string& msg) : std::runtime_error(msg) {}
};

// Talks OpenAI-style chat completions: POST {model, messages, temperature},
// read choices[0].message.content. kind selects either the HTTP client or
// one of the offline mocks used for smoke tests and oracles:
//   mock-echo   returns the rendered ground truth
//   mock-zeros  returns the input with every V filled with 0
//   mock-noise  returns the ground truth with each masked cell flipped with
//               probability noise_p (Easy grids), seeded per (seed, id, cell)
struct EndpointConfig {
  std::string kind = "http";
  std::string base_url;
  std::string path = "/v1/chat/completions";
  std::string model;
  std::string auth_env;  // name of the env var holding the bearer token
  double temperature = 0.0;
  int timeout_ms = 60000;
  int max_retries = 3;
  double retry_base_ms = 250.0;
  double noise_p = 0.0;
  std::uint64_t noise_seed = 0;

  std::string id() const;  // stable identifier used in cache keys and records
};

struct HttpResponse {
  int status = 0;
  std::string body;
  std::string error;  // transport-level failure, body invalid when set
};

// Seam for tests: the real implementation wraps cpp-httplib.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual HttpResponse post(const EndpointConfig& ep, const std::string& body) = 0;
};

std::unique_ptr<Transport> make_http_transport();

// One completion request with bearer auth, bounded exponential-backoff retry
// on transport errors and 429/5xx statuses. Throws HarnessError on auth
// problems, exhausted retries, or malformed payloads.
std::string call_model(const EndpointConfig& ep, const std::string& prompt, Transport& transport,
                       const std::function<void(int)>& sleep_ms = {});

// Content-addressed completion cache: key(endpoint id, prompt) -> file.
std::string cache_key(const std::string& endpoint_id, const std::string& prompt);

class CompletionCache {
 public:
  explicit CompletionCache(std::filesystem::path dir);
  std::optional<std::string> get(const std::string& key) const;
  void put(const std::string& key, const std::string& completion) const;

 private:
  std::filesystem::path dir_;
};

struct RunSpec {
  std::vector<Subject> subjects;          // empty = all eight
  std::vector<Difficulty> difficulties;   // empty = both
  int sample_count = 100;                 // per stratum, capped at stratum size
  std::uint64_t seed = 7;
  PromptStyle style = PromptStyle::Base;
  int shots = 0;  // 0, 1 or 3
  int rotation = 0;
  int concurrency = 4;
  std::string cache_dir;  // empty disables the cache
  EndpointConfig endpoint;
};

// Deterministic per-stratum sample: uniform without replacement, seeded by
// (seed, subject, difficulty), returned in dataset order. Throws
// HarnessError("InsufficientInstances ...") if the stratum is empty.
std::vector<const TaskInstance*> sample_instances(const std::vector<TaskInstance>& dataset,
                                                  Subject subject, Difficulty difficulty,
                                                  int count, std::uint64_t seed);

struct RunRecord {
  std::string id;
  Subject subject = Subject::Cells1;
  Difficulty difficulty = Difficulty::Easy;
  int rotation = 0;
  std::string endpoint;
  std::string style;
  int shots = 0;
  std::string prompt;
  std::string completion;
  std::string error;  // per-instance harness failure (record kept, run continues)
  MetricReport report;
  std::string completed_at;  // ISO 8601; excluded from determinism comparisons
};

// Full pipeline over the sampled instances: render prompt, obtain completion
// (cache first), parse, evaluate, collect. Instances run on a bounded worker
// pool; records come back ordered by instance id regardless of completion
// order. `transport` may be null for mock endpoints.
std::vector<RunRecord> run(const std::vector<TaskInstance>& dataset, const RunSpec& spec,
                           const MetricConfig& metrics, Transport* transport);

std::string record_to_json(const RunRecord& rec);
RunRecord record_from_json(const std::string& line);
void write_records(std::ostream& out, const std::vector<RunRecord>& records);
std::vector<RunRecord> read_records(std::istream& in);

// Per-(subject, difficulty) aggregate in percent (ratios and booleans) or raw
// means (islands, dwcs). Ratio means skip records whose ratios are undefined
// (parse failures, shape mismatches); percentage denominators count every
// record.
struct AggregateRow {
  Subject subject = Subject::Cells1;
  Difficulty difficulty = Difficulty::Easy;
  int n = 0;
  double exact = 0.0;
  std::optional<double> diff_ratio;
  std::optional<double> rel_diff_ratio;
  std::optional<double> pen_diff_ratio;
  std::optional<double> dw_diff_ratio;
  std::optional<double> dw_rel_diff_ratio;
  double dwcs = 0.0;
  double valid = 0.0;
  double ls_conn = 0.0;
  double dir_ls_conn = 0.0;
  std::optional<double> islands;
  std::optional<double> fpceff;
};

struct AggregateTable {
  std::vector<AggregateRow> rows;          // stratum rows in canonical order
  std::vector<AggregateRow> averages;      // one per difficulty, simple mean over subjects
};

// Throws HarnessError("EmptyGroup") when records is empty.
AggregateTable aggregate(const std::vector<RunRecord>& records);

std::string format_table(const AggregateTable& table);       // plain text
std::string table_to_records(const AggregateTable& table);   // line-delimited JSON

}  // namespace topobench
