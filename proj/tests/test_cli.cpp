#include "doctest.h"

#include <fcntl.h>
#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "topobench/cli.hpp"
#include "topobench/config.hpp"
#include "topobench/harness.hpp"

using namespace topobench;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

struct CliResult {
  int rc = -1;
  std::string out;
  std::string err;
};

// Runs the CLI in-process with stdout and stderr redirected to temp files so
// subcommand output can be asserted on instead of cluttering the test log.
CliResult run_cli_captured(const std::vector<std::string>& args) {
  fs::path out_path = fs::temp_directory_path() / "topobench-cli-stdout.txt";
  fs::path err_path = fs::temp_directory_path() / "topobench-cli-stderr.txt";
  std::fflush(stdout);
  std::fflush(stderr);
  int saved_out = dup(1);
  int saved_err = dup(2);
  int out_fd = open(out_path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0600);
  int err_fd = open(err_path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0600);
  dup2(out_fd, 1);
  dup2(err_fd, 2);
  close(out_fd);
  close(err_fd);

  CliResult res;
  res.rc = run_cli(args);

  std::fflush(stdout);
  std::fflush(stderr);
  dup2(saved_out, 1);
  dup2(saved_err, 2);
  close(saved_out);
  close(saved_err);
  res.out = slurp(out_path);
  res.err = slurp(err_path);
  return res;
}

fs::path work_dir() {
  static fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / "topobench-test-cli";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

// Two load spans and two support spans keep the fixture dataset small: four
// scenarios, 64 instances.
const std::string& config_path() {
  static std::string path = [] {
    fs::path p = work_dir() / "config.json";
    atomic_write_file(p.string(),
                      "{\n"
                      "  \"dataset\": {\"widths\": [3], \"stride\": 4},\n"
                      "  \"harness\": {\"sample_count\": 2, \"concurrency\": 2,\n"
                      "               \"endpoint\": {\"kind\": \"mock-echo\"}}\n"
                      "}\n");
    return p.string();
  }();
  return path;
}

const std::string& dataset_path() {
  static std::string path = [] {
    fs::path p = work_dir() / "dataset.jsonl";
    CliResult res = run_cli_captured({"generate", "--config", config_path(), "--out", p.string()});
    if (res.rc != 0) throw std::runtime_error("fixture generate failed: " + res.err);
    return p.string();
  }();
  return path;
}

}  // namespace

TEST_CASE("parse_config applies overrides on top of defaults") {
  Config def = parse_config("{}");
  CHECK(def.dataset.rows == 10);
  CHECK(def.dataset.seed == 2024);
  CHECK(def.solver.target_density == 0.1);
  CHECK(def.solver.iterations == 10);
  CHECK(def.metrics.penalty_weight == 3.0);
  CHECK(def.harness.sample_count == 100);
  CHECK(def.dataset_path == "dataset.jsonl");

  Config cfg = parse_config(
      "{\n"
      "  \"solver\": {\"iterations\": 5, \"target_density\": 0.2},\n"
      "  \"dataset\": {\"rows\": 12, \"cols\": 12, \"widths\": [3, 4], \"stride\": 2,\n"
      "              \"seed\": 7},\n"
      "  \"metrics\": {\"penalty_weight\": 5.0, \"clip_fpceff\": false},\n"
      "  \"harness\": {\"subjects\": [\"cell1\", \"full\"], \"difficulties\": [\"hard\"],\n"
      "              \"style\": \"physics_enhanced\", \"shots\": 3,\n"
      "              \"endpoint\": {\"kind\": \"mock-noise\", \"noise_p\": 0.5}},\n"
      "  \"dataset_path\": \"alt.jsonl\"\n"
      "}");
  CHECK(cfg.solver.iterations == 5);
  CHECK(cfg.solver.target_density == 0.2);
  CHECK(cfg.dataset.rows == 12);
  CHECK(cfg.dataset.widths == std::vector<int>{3, 4});
  CHECK(cfg.dataset.seed == 7);
  CHECK_FALSE(cfg.metrics.clip_fpceff);
  REQUIRE(cfg.harness.subjects.size() == 2);
  CHECK(cfg.harness.subjects[1] == Subject::Full);
  REQUIRE(cfg.harness.difficulties.size() == 1);
  CHECK(cfg.harness.difficulties[0] == Difficulty::Hard);
  CHECK(cfg.harness.style == PromptStyle::PhysicsEnhanced);
  CHECK(cfg.harness.shots == 3);
  CHECK(cfg.harness.endpoint.kind == "mock-noise");
  CHECK(cfg.harness.endpoint.noise_p == 0.5);
  CHECK(cfg.dataset_path == "alt.jsonl");
}

TEST_CASE("parse_config rejects unknown keys and bad values") {
  CHECK_THROWS_WITH_AS(parse_config("{\"solver\": {\"bogus\": 1}}"),
                       doctest::Contains("UnknownKey: solver.bogus"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config("{\"volume\": 0.1}"),
                       doctest::Contains("UnknownKey: config.volume"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config("not json"), doctest::Contains("BadJson"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config("{\"solver\": {\"iterations\": \"many\"}}"),
                       doctest::Contains("BadValue"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config("{\"harness\": {\"style\": \"verbose\"}}"),
                       doctest::Contains("BadValue"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config("{\"solver\": []}"), doctest::Contains("BadSection"),
                       ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ConfigError);
}

TEST_CASE("atomic_write_file creates parents and replaces contents") {
  fs::path target = work_dir() / "nested" / "out.txt";
  atomic_write_file(target.string(), "hello");
  CHECK(slurp(target) == "hello");
  atomic_write_file(target.string(), "world");
  CHECK(slurp(target) == "world");
  CHECK_FALSE(fs::exists(target.string() + ".tmp"));
}

TEST_CASE("generate writes a deterministic dataset") {
  auto dataset = load_dataset(dataset_path());
  CHECK(dataset.size() == 64);
  CHECK(dataset.front().id == "s000-cell1-easy");
  CHECK(dataset.back().id == "s003-full-hard");

  fs::path again = work_dir() / "dataset-again.jsonl";
  CliResult res =
      run_cli_captured({"generate", "--config", config_path(), "--out", again.string()});
  REQUIRE(res.rc == 0);
  CHECK(res.out.find("wrote 64 instances") != std::string::npos);
  CHECK(slurp(again) == slurp(dataset_path()));

  fs::path other = work_dir() / "dataset-other-seed.jsonl";
  res = run_cli_captured({"generate", "--config", config_path(), "--seed", "9",
                          "--out", other.string()});
  REQUIRE(res.rc == 0);
  CHECK(slurp(other) != slurp(dataset_path()));
}

TEST_CASE("mask prints the masked input grid") {
  auto dataset = load_dataset(dataset_path());
  const TaskInstance* inst = nullptr;
  for (const TaskInstance& cand : dataset) {
    if (cand.id == "s000-full-easy") inst = &cand;
  }
  REQUIRE(inst != nullptr);

  CliResult res =
      run_cli_captured({"mask", "--dataset", dataset_path(), "--id", "s000-full-easy"});
  REQUIRE(res.rc == 0);
  CHECK(res.out == render_grid(inst->input, inst->difficulty) + "\n");

  res = run_cli_captured({"mask", "--dataset", dataset_path(), "--id", "s999-full-easy"});
  CHECK(res.rc != 0);
  CHECK(res.err.find("UnknownInstance: s999-full-easy") != std::string::npos);
}

TEST_CASE("render prints the prompt for an instance") {
  CliResult res = run_cli_captured({"render", "--dataset", dataset_path(), "--id",
                                    "s000-cell1-easy", "--style", "physics_enhanced"});
  REQUIRE(res.rc == 0);
  CHECK(res.out.find("Stress follows the shortest stiff path") != std::string::npos);
  std::string footer = "Return only the completed grid without any additional explanation.\n";
  CHECK(res.out.rfind(footer) == res.out.size() - footer.size());

  res = run_cli_captured({"render", "--dataset", dataset_path(), "--id", "s000-cell1-easy",
                          "--shots", "1"});
  REQUIRE(res.rc == 0);
  CHECK(res.out.find("Example input grid with masked regions:") != std::string::npos);
}

TEST_CASE("eval runs a mock endpoint end to end") {
  fs::path rec_path = work_dir() / "records.jsonl";
  CliResult res = run_cli_captured({"eval", "--config", config_path(), "--dataset",
                                    dataset_path(), "--out", rec_path.string(), "--subjects",
                                    "cell1", "--difficulty", "easy", "--sample-count", "2"});
  REQUIRE(res.rc == 0);
  CHECK(res.out.find("subject") != std::string::npos);  // table header
  CHECK(res.out.find("cell1") != std::string::npos);
  CHECK(res.out.find("wrote 2 records to") != std::string::npos);

  std::ifstream in(rec_path);
  auto records = read_records(in);
  REQUIRE(records.size() == 2);
  for (const RunRecord& rec : records) {
    CHECK(rec.report.exact);
    CHECK(rec.endpoint == "mock-echo");
  }

  res = run_cli_captured({"eval", "--config", config_path(), "--dataset", dataset_path(),
                          "--out", rec_path.string(), "--subjects", "cell1", "--difficulty",
                          "easy", "--sample-count", "2", "--format", "records"});
  REQUIRE(res.rc == 0);
  std::istringstream lines(res.out);
  std::string line;
  int json_rows = 0;
  while (std::getline(lines, line)) {
    if (line.empty() || line[0] != '{') continue;
    json row = json::parse(line);
    CHECK(row.at("exact_match") == 100.0);
    json_rows++;
  }
  CHECK(json_rows == 2);  // the cell1/easy row plus the easy average
}

TEST_CASE("eval rejects bad strata and endpoints") {
  CliResult res = run_cli_captured({"eval", "--dataset", dataset_path(), "--subjects", "cell1",
                                    "--difficulty", "medium"});
  CHECK(res.rc != 0);

  res = run_cli_captured({"eval", "--dataset", dataset_path(), "--subjects", "cell1",
                          "--difficulty", "easy", "--endpoint", "mock-telepathy"});
  CHECK(res.rc != 0);
  CHECK(res.err.find("UnknownEndpointKind") != std::string::npos);
}

TEST_CASE("score evaluates stored completions offline") {
  auto dataset = load_dataset(dataset_path());
  std::ostringstream completions;
  int written = 0;
  for (const TaskInstance& inst : dataset) {
    if (inst.subject != Subject::Cells5 || inst.difficulty != Difficulty::Easy) continue;
    json line;
    line["id"] = inst.id;
    line["completion"] = render_grid(inst.ground_truth, inst.difficulty);
    completions << line.dump() << '\n';
    written++;
  }
  REQUIRE(written == 4);
  fs::path comp_path = work_dir() / "completions.jsonl";
  atomic_write_file(comp_path.string(), completions.str());

  fs::path rep_path = work_dir() / "reports.jsonl";
  CliResult res = run_cli_captured({"score", "--dataset", dataset_path(), "--completions",
                                    comp_path.string(), "--out", rep_path.string()});
  REQUIRE(res.rc == 0);
  CHECK(res.out.find("scored 4 completions") != std::string::npos);
  std::ifstream in(rep_path);
  auto records = read_records(in);
  REQUIRE(records.size() == 4);
  for (const RunRecord& rec : records) {
    CHECK(rec.report.exact);
    CHECK(rec.endpoint == "offline");
  }

  atomic_write_file(comp_path.string(),
                    "{\"id\": \"s999-cell1-easy\", \"completion\": \"0\"}\n");
  res = run_cli_captured({"score", "--dataset", dataset_path(), "--completions",
                          comp_path.string(), "--out", rep_path.string()});
  CHECK(res.rc != 0);
  CHECK(res.err.find("UnknownInstance: s999-cell1-easy") != std::string::npos);
}

TEST_CASE("report aggregates stored records") {
  fs::path rec_path = work_dir() / "report-input.jsonl";
  CliResult res = run_cli_captured({"eval", "--config", config_path(), "--dataset",
                                    dataset_path(), "--out", rec_path.string(), "--subjects",
                                    "cell1", "--difficulty", "easy", "--sample-count", "2"});
  REQUIRE(res.rc == 0);

  res = run_cli_captured({"report", "--records", rec_path.string()});
  REQUIRE(res.rc == 0);
  CHECK(res.out.find("cell1") != std::string::npos);
  CHECK(res.out.find("average") != std::string::npos);

  res = run_cli_captured({"report", "--records", rec_path.string(), "--format", "records"});
  REQUIRE(res.rc == 0);
  json first = json::parse(res.out.substr(0, res.out.find('\n')));
  CHECK(first.at("subject") == "cell1");

  res = run_cli_captured({"report", "--records", "/nonexistent/records.jsonl"});
  CHECK(res.rc != 0);
  CHECK(res.err.find("CannotRead") != std::string::npos);
}

TEST_CASE("bad invocations exit nonzero") {
  CHECK(run_cli_captured({}).rc != 0);
  CHECK(run_cli_captured({"generate", "--bogus"}).rc != 0);
  CHECK(run_cli_captured({"mask", "--dataset", dataset_path()}).rc != 0);  // missing --id

  CliResult res = run_cli_captured({"generate", "--config", "/nonexistent/config.json"});
  CHECK(res.rc != 0);
  CHECK(res.err.find("CannotRead") != std::string::npos);
}
