#include "topobench/scenario.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <istream>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "topobench/rng.hpp"
#include "topobench/solver.hpp"
#include "topobench/task.hpp"

namespace topobench {

std::string scenario_id(int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "s%03d", index);
  return buf;
}

std::vector<Span> uniform_spans(int cols, const std::vector<int>& widths, int stride) {
  if (stride < 1) throw ScenarioError("stride must be >= 1");
  std::vector<int> ws = widths;
  std::sort(ws.begin(), ws.end());
  std::vector<Span> spans;
  for (int w : ws) {
    if (w < 1 || w > cols) continue;
    for (int start = 0; start + w <= cols; start += stride) spans.push_back({start, w});
  }
  return spans;
}

std::vector<Span> standard_spans(int cols) {
  if (cols != 10) {
    throw ScenarioError(
        "standard placement table is defined for 10 columns; give explicit widths and "
        "stride for other domains");
  }
  // Nine placements per edge; any (load, support) pair covers at most seven
  // columns, so three or more columns always stay marker-free.
  return {
      {1, 3}, {3, 3}, {5, 3},
      {2, 4}, {3, 4}, {4, 4},
      {2, 5}, {3, 5},
      {2, 6},
  };
}

std::vector<Scenario> enumerate_scenarios(int rows, int cols, const std::vector<Span>& spans) {
  if (spans.empty()) {
    throw ScenarioError("EmptyEnumeration: no span placement fits the domain");
  }
  std::vector<Span> ordered = spans;
  std::stable_sort(ordered.begin(), ordered.end(), [](const Span& a, const Span& b) {
    return a.width != b.width ? a.width < b.width : a.start < b.start;
  });
  std::vector<Scenario> out;
  out.reserve(ordered.size() * ordered.size());
  int index = 0;
  for (const Span& load : ordered) {
    for (const Span& support : ordered) {
      Scenario sc;
      sc.rows = rows;
      sc.cols = cols;
      sc.load = load;
      sc.support = support;
      sc.index = index++;
      out.push_back(sc);
    }
  }
  return out;
}

std::vector<Scenario> enumerate_scenarios(int rows, int cols, const std::vector<int>& widths,
                                          int stride) {
  return enumerate_scenarios(rows, cols, uniform_spans(cols, widths, stride));
}

std::vector<Scenario> standard_scenarios(int rows, int cols) {
  return enumerate_scenarios(rows, cols, standard_spans(cols));
}

const char* subject_slug(Subject s) {
  switch (s) {
    case Subject::Cells1: return "cell1";
    case Subject::Cells5: return "cell5";
    case Subject::Cells10: return "cell10";
    case Subject::Rows1: return "row1";
    case Subject::Rows3: return "row3";
    case Subject::Cols1: return "col1";
    case Subject::Cols3: return "col3";
    case Subject::Full: return "full";
  }
  return "?";
}

const char* subject_display(Subject s) {
  switch (s) {
    case Subject::Cells1: return "1 Random Cell";
    case Subject::Cells5: return "5 Random Cells";
    case Subject::Cells10: return "10 Random Cells";
    case Subject::Rows1: return "1 Random Row";
    case Subject::Rows3: return "3 Random Rows";
    case Subject::Cols1: return "1 Random Column";
    case Subject::Cols3: return "3 Random Columns";
    case Subject::Full: return "Full";
  }
  return "?";
}

Subject parse_subject(const std::string& slug) {
  for (Subject s : kAllSubjects) {
    if (slug == subject_slug(s)) return s;
  }
  throw ScenarioError("unknown subject: " + slug);
}

std::string instance_id(int scenario_index, Subject s, Difficulty d) {
  return scenario_id(scenario_index) + "-" + subject_slug(s) + "-" + difficulty_name(d);
}

std::vector<TaskInstance> build_dataset(const std::vector<Scenario>& scenarios,
                                        const SolverConfig& solver, std::uint64_t seed,
                                        int concurrency) {
  std::vector<std::vector<TaskInstance>> per_scenario(scenarios.size());

  auto build_one = [&](size_t i) {
    const Scenario& sc = scenarios[i];
    int idx = sc.index >= 0 ? sc.index : static_cast<int>(i);
    OptimizeResult opt = optimize(sc, solver);
    std::vector<TaskInstance>& out = per_scenario[i];
    for (Subject subject : kAllSubjects) {
      for (Difficulty difficulty : {Difficulty::Easy, Difficulty::Hard}) {
        const Grid& gt = difficulty == Difficulty::Easy ? opt.easy : opt.hard;
        SplitMix64 rng(mask_seed(seed, idx, subject, difficulty));
        MaskResult masked = apply_mask(gt, subject, rng);
        TaskInstance inst;
        inst.id = instance_id(idx, subject, difficulty);
        inst.subject = subject;
        inst.difficulty = difficulty;
        inst.rotation = 0;
        inst.gravity = GravityDir{1, 0};
        inst.input = std::move(masked.input);
        inst.ground_truth = gt;
        inst.mask = std::move(masked.mask);
        out.push_back(std::move(inst));
      }
    }
  };

  unsigned workers = concurrency > 0 ? static_cast<unsigned>(concurrency)
                                     : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min<unsigned>(workers, static_cast<unsigned>(scenarios.size()) + 1);
  if (workers <= 1 || scenarios.size() < 2) {
    for (size_t i = 0; i < scenarios.size(); i++) build_one(i);
  } else {
    std::atomic<size_t> next{0};
    std::vector<std::thread> pool;
    std::exception_ptr failure;
    std::mutex failure_mu;
    for (unsigned w = 0; w < workers; w++) {
      pool.emplace_back([&] {
        for (;;) {
          size_t i = next.fetch_add(1);
          if (i >= scenarios.size()) return;
          try {
            build_one(i);
          } catch (...) {
            std::lock_guard<std::mutex> lock(failure_mu);
            if (!failure) failure = std::current_exception();
            return;
          }
        }
      });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
  }

  std::vector<TaskInstance> dataset;
  dataset.reserve(scenarios.size() * 16);
  for (auto& group : per_scenario) {
    for (auto& inst : group) dataset.push_back(std::move(inst));
  }
  return dataset;
}

namespace {

using nlohmann::ordered_json;

}  // namespace

std::string instance_to_json(const TaskInstance& inst) {
  ordered_json j;
  j["id"] = inst.id;
  j["subject"] = subject_slug(inst.subject);
  j["difficulty"] = difficulty_name(inst.difficulty);
  j["rotation"] = inst.rotation;
  j["gravity"] = ordered_json::array({inst.gravity.dr, inst.gravity.dc});
  j["input_grid"] = render_grid(inst.input, inst.difficulty);
  j["gt_grid"] = render_grid(inst.ground_truth, inst.difficulty);
  ordered_json mask = ordered_json::array();
  for (const auto& [r, c] : inst.mask) mask.push_back(ordered_json::array({r, c}));
  j["mask_cells"] = mask;
  return j.dump();
}

TaskInstance instance_from_json(const std::string& line) {
  ordered_json j = ordered_json::parse(line);
  TaskInstance inst;
  inst.id = j.at("id").get<std::string>();
  inst.subject = parse_subject(j.at("subject").get<std::string>());
  inst.difficulty = parse_difficulty(j.at("difficulty").get<std::string>());
  inst.rotation = j.at("rotation").get<int>();
  inst.gravity = GravityDir{j.at("gravity").at(0).get<int>(), j.at("gravity").at(1).get<int>()};
  inst.input = parse_grid(j.at("input_grid").get<std::string>(), inst.difficulty);
  inst.ground_truth = parse_grid(j.at("gt_grid").get<std::string>(), inst.difficulty);
  for (const auto& cell : j.at("mask_cells")) {
    inst.mask.push_back({cell.at(0).get<int>(), cell.at(1).get<int>()});
  }
  return inst;
}

void write_dataset(std::ostream& out, const std::vector<TaskInstance>& instances) {
  for (const TaskInstance& inst : instances) out << instance_to_json(inst) << '\n';
}

std::vector<TaskInstance> read_dataset(std::istream& in) {
  std::vector<TaskInstance> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(instance_from_json(line));
  }
  return out;
}

std::vector<TaskInstance> load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError("cannot open dataset: " + path);
  return read_dataset(in);
}

}  // namespace topobench
