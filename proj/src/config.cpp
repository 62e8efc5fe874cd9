#include "topobench/config.hpp"

#include <fstream>
#include <initializer_list>
#include <sstream>

#include "json.hpp"

namespace topobench {

using nlohmann::json;

namespace {

void check_keys(const json& j, const char* section,
                std::initializer_list<const char*> allowed) {
  if (!j.is_object()) {
    throw ConfigError(std::string("BadSection: ") + section + " must be a JSON object");
  }
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* key : allowed) {
      if (it.key() == key) {
        known = true;
        break;
      }
    }
    if (!known) {
      throw ConfigError(std::string("UnknownKey: ") + section + "." + it.key());
    }
  }
}

template <typename T>
void get_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void parse_solver(const json& j, SolverConfig& out) {
  check_keys(j, "solver",
             {"target_density", "penalization", "iterations", "smoothing", "min_density",
              "delete_threshold", "self_weight", "move_limit", "young_modulus",
              "poisson_ratio"});
  get_if(j, "target_density", out.target_density);
  get_if(j, "penalization", out.penalization);
  get_if(j, "iterations", out.iterations);
  get_if(j, "smoothing", out.smoothing);
  get_if(j, "min_density", out.min_density);
  get_if(j, "delete_threshold", out.delete_threshold);
  get_if(j, "self_weight", out.self_weight);
  get_if(j, "move_limit", out.move_limit);
  get_if(j, "young_modulus", out.young_modulus);
  get_if(j, "poisson_ratio", out.poisson_ratio);
}

void parse_dataset(const json& j, DatasetConfig& out) {
  check_keys(j, "dataset", {"rows", "cols", "seed", "widths", "stride", "concurrency"});
  get_if(j, "rows", out.rows);
  get_if(j, "cols", out.cols);
  get_if(j, "seed", out.seed);
  get_if(j, "widths", out.widths);
  get_if(j, "stride", out.stride);
  get_if(j, "concurrency", out.concurrency);
}

void parse_metrics(const json& j, MetricConfig& out) {
  check_keys(j, "metrics", {"penalty_weight", "cmax", "clip_fpceff", "solid_threshold"});
  get_if(j, "penalty_weight", out.penalty_weight);
  get_if(j, "cmax", out.cmax);
  get_if(j, "clip_fpceff", out.clip_fpceff);
  get_if(j, "solid_threshold", out.solid_threshold);
}

void parse_endpoint(const json& j, EndpointConfig& out) {
  check_keys(j, "harness.endpoint",
             {"kind", "base_url", "path", "model", "auth_env", "temperature", "timeout_ms",
              "max_retries", "retry_base_ms", "noise_p", "noise_seed"});
  get_if(j, "kind", out.kind);
  get_if(j, "base_url", out.base_url);
  get_if(j, "path", out.path);
  get_if(j, "model", out.model);
  get_if(j, "auth_env", out.auth_env);
  get_if(j, "temperature", out.temperature);
  get_if(j, "timeout_ms", out.timeout_ms);
  get_if(j, "max_retries", out.max_retries);
  get_if(j, "retry_base_ms", out.retry_base_ms);
  get_if(j, "noise_p", out.noise_p);
  get_if(j, "noise_seed", out.noise_seed);
}

void parse_harness(const json& j, RunSpec& out) {
  check_keys(j, "harness",
             {"subjects", "difficulties", "sample_count", "seed", "style", "shots", "rotation",
              "concurrency", "cache_dir", "endpoint"});
  if (j.contains("subjects")) {
    out.subjects.clear();
    for (const auto& v : j.at("subjects")) {
      out.subjects.push_back(parse_subject(v.get<std::string>()));
    }
  }
  if (j.contains("difficulties")) {
    out.difficulties.clear();
    for (const auto& v : j.at("difficulties")) {
      out.difficulties.push_back(parse_difficulty(v.get<std::string>()));
    }
  }
  get_if(j, "sample_count", out.sample_count);
  get_if(j, "seed", out.seed);
  if (j.contains("style")) out.style = parse_prompt_style(j.at("style").get<std::string>());
  get_if(j, "shots", out.shots);
  get_if(j, "rotation", out.rotation);
  get_if(j, "concurrency", out.concurrency);
  get_if(j, "cache_dir", out.cache_dir);
  if (j.contains("endpoint")) parse_endpoint(j.at("endpoint"), out.endpoint);
}

}  // namespace

Config parse_config(const std::string& json_text) {
  json j = json::parse(json_text, nullptr, false);
  if (j.is_discarded()) throw ConfigError("BadJson: configuration is not valid JSON");
  Config cfg;
  try {
    check_keys(j, "config", {"solver", "dataset", "metrics", "harness", "dataset_path"});
    if (j.contains("solver")) parse_solver(j.at("solver"), cfg.solver);
    if (j.contains("dataset")) parse_dataset(j.at("dataset"), cfg.dataset);
    if (j.contains("metrics")) parse_metrics(j.at("metrics"), cfg.metrics);
    if (j.contains("harness")) parse_harness(j.at("harness"), cfg.harness);
    get_if(j, "dataset_path", cfg.dataset_path);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("BadValue: ") + e.what());
  } catch (const GridError& e) {
    throw ConfigError(std::string("BadValue: ") + e.what());
  } catch (const ScenarioError& e) {
    throw ConfigError(std::string("BadValue: ") + e.what());
  } catch (const TaskError& e) {
    throw ConfigError(std::string("BadValue: ") + e.what());
  }
  return cfg;
}

Config load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("CannotRead: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

}  // namespace topobench
