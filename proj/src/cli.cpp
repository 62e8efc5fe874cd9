#include "topobench/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "topobench/config.hpp"
#include "topobench/harness.hpp"
#include "topobench/solver.hpp"

namespace topobench {

void atomic_write_file(const std::string& path, const std::string& contents) {
  namespace fs = std::filesystem;
  fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << contents;
    if (!out) throw std::runtime_error("WriteFailed: " + tmp.string());
  }
  fs::rename(tmp, target);
}

namespace {

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

const TaskInstance& find_instance(const std::vector<TaskInstance>& dataset,
                                  const std::string& id) {
  for (const TaskInstance& inst : dataset) {
    if (inst.id == id) return inst;
  }
  throw std::runtime_error("UnknownInstance: " + id);
}

std::vector<Scenario> scenarios_from_config(const DatasetConfig& dc) {
  if (dc.widths.empty()) return standard_scenarios(dc.rows, dc.cols);
  return enumerate_scenarios(dc.rows, dc.cols, dc.widths, dc.stride);
}

// Flag values shared across the subcommands. Each entry only overrides its
// config key when the flag was actually given.
struct Flags {
  std::string config;
  std::string dataset;
  std::string out;
  std::string id;
  std::string completions;
  std::string records;
  std::string subjects;
  std::string difficulty;
  std::string style;
  std::string endpoint;
  std::string model;
  std::string base_url;
  std::string cache_dir;
  std::string format = "table";
  std::uint64_t seed = 0;
  int shots = 0;
  int rotate = 0;
  int sample_count = 0;
  int concurrency = 0;
  double noise_p = 0.0;
  std::uint64_t noise_seed = 0;
};

Config config_from(const Flags& f) {
  return f.config.empty() ? Config{} : load_config(f.config);
}

std::string iso_now() {
  std::time_t now = std::time(nullptr);
  std::tm tm_utc{};
  gmtime_r(&now, &tm_utc);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return buf;
}

int cmd_generate(const Flags& f, bool seed_set) {
  Config cfg = config_from(f);
  if (seed_set) cfg.dataset.seed = f.seed;
  if (!f.out.empty()) cfg.dataset_path = f.out;
  if (f.concurrency > 0) cfg.dataset.concurrency = f.concurrency;
  auto scenarios = scenarios_from_config(cfg.dataset);
  auto dataset = build_dataset(scenarios, cfg.solver, cfg.dataset.seed, cfg.dataset.concurrency);
  std::ostringstream buf;
  write_dataset(buf, dataset);
  atomic_write_file(cfg.dataset_path, buf.str());
  std::printf("wrote %zu instances to %s\n", dataset.size(), cfg.dataset_path.c_str());
  return 0;
}

int cmd_mask(const Flags& f) {
  Config cfg = config_from(f);
  auto dataset = load_dataset(f.dataset.empty() ? cfg.dataset_path : f.dataset);
  TaskInstance inst = rotate_instance(find_instance(dataset, f.id), f.rotate);
  std::printf("%s\n", render_grid(inst.input, inst.difficulty).c_str());
  return 0;
}

int cmd_render(const Flags& f, bool seed_set) {
  Config cfg = config_from(f);
  if (seed_set) cfg.harness.seed = f.seed;
  if (!f.style.empty()) cfg.harness.style = parse_prompt_style(f.style);
  auto dataset = load_dataset(f.dataset.empty() ? cfg.dataset_path : f.dataset);
  TaskInstance inst = rotate_instance(find_instance(dataset, f.id), f.rotate);
  std::vector<const TaskInstance*> examples;
  std::vector<TaskInstance> rotated;
  if (f.shots > 0) {
    examples = pick_examples(dataset, inst, f.shots, cfg.harness.seed);
    if (f.rotate != 0) {
      rotated.reserve(examples.size());
      for (const TaskInstance* ex : examples) rotated.push_back(rotate_instance(*ex, f.rotate));
      examples.clear();
      for (const TaskInstance& ex : rotated) examples.push_back(&ex);
    }
  }
  std::printf("%s\n", render_prompt(inst, cfg.harness.style, examples).c_str());
  return 0;
}

void apply_harness_flags(const Flags& f, bool seed_set, bool shots_set, bool rotate_set,
                         bool sample_set, bool noise_p_set, bool noise_seed_set, Config& cfg) {
  if (!f.subjects.empty()) {
    cfg.harness.subjects.clear();
    for (const std::string& slug : split_csv(f.subjects)) {
      cfg.harness.subjects.push_back(parse_subject(slug));
    }
  }
  if (!f.difficulty.empty()) {
    cfg.harness.difficulties.clear();
    for (const std::string& name : split_csv(f.difficulty)) {
      cfg.harness.difficulties.push_back(parse_difficulty(name));
    }
  }
  if (seed_set) cfg.harness.seed = f.seed;
  if (shots_set) cfg.harness.shots = f.shots;
  if (rotate_set) cfg.harness.rotation = f.rotate;
  if (sample_set) cfg.harness.sample_count = f.sample_count;
  if (!f.style.empty()) cfg.harness.style = parse_prompt_style(f.style);
  if (!f.endpoint.empty()) cfg.harness.endpoint.kind = f.endpoint;
  if (!f.model.empty()) cfg.harness.endpoint.model = f.model;
  if (!f.base_url.empty()) cfg.harness.endpoint.base_url = f.base_url;
  if (!f.cache_dir.empty()) cfg.harness.cache_dir = f.cache_dir;
  if (f.concurrency > 0) cfg.harness.concurrency = f.concurrency;
  if (noise_p_set) cfg.harness.endpoint.noise_p = f.noise_p;
  if (noise_seed_set) cfg.harness.endpoint.noise_seed = f.noise_seed;
}

int cmd_eval(const Flags& f, bool seed_set, bool shots_set, bool rotate_set, bool sample_set,
             bool noise_p_set, bool noise_seed_set) {
  Config cfg = config_from(f);
  apply_harness_flags(f, seed_set, shots_set, rotate_set, sample_set, noise_p_set,
                      noise_seed_set, cfg);
  auto dataset = load_dataset(f.dataset.empty() ? cfg.dataset_path : f.dataset);
  std::unique_ptr<Transport> transport;
  if (cfg.harness.endpoint.kind == "http") transport = make_http_transport();
  auto records = run(dataset, cfg.harness, cfg.metrics, transport.get());
  std::string out_path = f.out.empty() ? "records.jsonl" : f.out;
  std::ostringstream buf;
  write_records(buf, records);
  atomic_write_file(out_path, buf.str());
  auto table = aggregate(records);
  if (f.format == "records") {
    std::fputs(table_to_records(table).c_str(), stdout);
  } else {
    std::fputs(format_table(table).c_str(), stdout);
  }
  std::printf("wrote %zu records to %s\n", records.size(), out_path.c_str());
  return 0;
}

int cmd_score(const Flags& f) {
  Config cfg = config_from(f);
  auto dataset = load_dataset(f.dataset.empty() ? cfg.dataset_path : f.dataset);
  std::ifstream in(f.completions, std::ios::binary);
  if (!in) throw std::runtime_error("CannotRead: " + f.completions);
  std::vector<RunRecord> records;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line);
    std::string id = j.at("id").get<std::string>();
    std::string completion = j.at("completion").get<std::string>();
    const TaskInstance& inst = find_instance(dataset, id);
    RunRecord rec;
    rec.id = inst.id;
    rec.subject = inst.subject;
    rec.difficulty = inst.difficulty;
    rec.rotation = inst.rotation;
    rec.endpoint = "offline";
    rec.style = "";
    rec.completion = completion;
    rec.report = evaluate(inst, parse_completion(completion), cfg.metrics);
    rec.completed_at = iso_now();
    records.push_back(std::move(rec));
  }
  std::string out_path = f.out.empty() ? "reports.jsonl" : f.out;
  std::ostringstream buf;
  write_records(buf, records);
  atomic_write_file(out_path, buf.str());
  std::printf("scored %zu completions to %s\n", records.size(), out_path.c_str());
  return 0;
}

int cmd_report(const Flags& f) {
  std::ifstream in(f.records, std::ios::binary);
  if (!in) throw std::runtime_error("CannotRead: " + f.records);
  auto records = read_records(in);
  auto table = aggregate(records);
  if (f.format == "records") {
    std::fputs(table_to_records(table).c_str(), stdout);
  } else {
    std::fputs(format_table(table).c_str(), stdout);
  }
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"topology benchmark toolkit"};
  app.require_subcommand(1);
  Flags f;
  int rc = 0;

  auto* gen = app.add_subcommand("generate", "solve scenarios and write the dataset");
  gen->add_option("--config", f.config, "run configuration file");
  auto* gen_seed = gen->add_option("--seed", f.seed, "dataset seed");
  gen->add_option("--out", f.out, "dataset output path");
  gen->add_option("--concurrency", f.concurrency, "solver worker threads");
  gen->callback([&] { rc = cmd_generate(f, gen_seed->count() > 0); });

  auto* mask = app.add_subcommand("mask", "print the masked input grid of an instance");
  mask->add_option("--config", f.config, "run configuration file");
  mask->add_option("--dataset", f.dataset, "dataset path");
  mask->add_option("--id", f.id, "instance id")->required();
  mask->add_option("--rotate", f.rotate, "clockwise quarter-turns");
  mask->callback([&] { rc = cmd_mask(f); });

  auto* render = app.add_subcommand("render", "print the prompt for an instance");
  render->add_option("--config", f.config, "run configuration file");
  render->add_option("--dataset", f.dataset, "dataset path");
  render->add_option("--id", f.id, "instance id")->required();
  render->add_option("--style", f.style, "prompt style");
  render->add_option("--shots", f.shots, "few-shot example count");
  auto* render_seed = render->add_option("--seed", f.seed, "example sampling seed");
  render->add_option("--rotate", f.rotate, "clockwise quarter-turns");
  render->callback([&] { rc = cmd_render(f, render_seed->count() > 0); });

  auto* eval = app.add_subcommand("eval", "run an endpoint over sampled instances");
  eval->add_option("--config", f.config, "run configuration file");
  eval->add_option("--dataset", f.dataset, "dataset path");
  eval->add_option("--out", f.out, "records output path");
  eval->add_option("--subjects", f.subjects, "comma-separated subject slugs");
  eval->add_option("--difficulty", f.difficulty, "easy, hard or both (comma-separated)");
  auto* eval_sample = eval->add_option("--sample-count", f.sample_count, "instances per stratum");
  auto* eval_seed = eval->add_option("--seed", f.seed, "sampling seed");
  eval->add_option("--style", f.style, "prompt style");
  auto* eval_shots = eval->add_option("--shots", f.shots, "few-shot example count");
  auto* eval_rotate = eval->add_option("--rotate", f.rotate, "clockwise quarter-turns");
  eval->add_option("--endpoint", f.endpoint, "endpoint kind (http or a mock)");
  eval->add_option("--model", f.model, "model name");
  eval->add_option("--base-url", f.base_url, "endpoint base url");
  eval->add_option("--cache-dir", f.cache_dir, "completion cache directory");
  eval->add_option("--concurrency", f.concurrency, "request workers");
  auto* eval_noise_p = eval->add_option("--noise-p", f.noise_p, "mock-noise flip probability");
  auto* eval_noise_seed = eval->add_option("--noise-seed", f.noise_seed, "mock-noise seed");
  eval->add_option("--format", f.format, "table or records");
  eval->callback([&] {
    rc = cmd_eval(f, eval_seed->count() > 0, eval_shots->count() > 0, eval_rotate->count() > 0,
                  eval_sample->count() > 0, eval_noise_p->count() > 0,
                  eval_noise_seed->count() > 0);
  });

  auto* score = app.add_subcommand("score", "evaluate stored completions offline");
  score->add_option("--config", f.config, "run configuration file");
  score->add_option("--dataset", f.dataset, "dataset path");
  score->add_option("--completions", f.completions, "completions file (id, completion lines)")
      ->required();
  score->add_option("--out", f.out, "reports output path");
  score->callback([&] { rc = cmd_score(f); });

  auto* report = app.add_subcommand("report", "aggregate records into a table");
  report->add_option("--records", f.records, "records file")->required();
  report->add_option("--format", f.format, "table or records");
  report->callback([&] { rc = cmd_report(f); });

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return rc;
}

}  // namespace topobench
