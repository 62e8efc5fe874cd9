// Release gate: every criterion prints one PASS/FAIL line and the process
// exits nonzero when any of them fail. Tolerances are pinned here on purpose;
// loosening them is a behavior change, not a cleanup.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "topobench/harness.hpp"
#include "topobench/metrics.hpp"
#include "topobench/rng.hpp"
#include "topobench/solver.hpp"
#include "topobench/task.hpp"

using namespace topobench;

namespace {

const GravityDir kDown{1, 0};

Grid easy(const std::string& text) { return parse_grid(text, Difficulty::Easy); }
Grid hard(const std::string& text) { return parse_grid(text, Difficulty::Hard); }

struct Criterion {
  std::vector<std::string> failures;

  void check(bool ok, const std::string& label) {
    if (!ok) failures.push_back(label);
  }

  void near(double got, double want, double tol, const std::string& label) {
    if (!(std::fabs(got - want) <= tol)) {
      char buf[192];
      std::snprintf(buf, sizeof buf, "%s: got %.6g, want %.6g +/- %g", label.c_str(), got,
                    want, tol);
      failures.push_back(buf);
    }
  }
};

int count_occurrences(const std::string& haystack, const std::string& needle) {
  int n = 0;
  for (size_t pos = haystack.find(needle); pos != std::string::npos;
       pos = haystack.find(needle, pos + needle.size())) {
    n++;
  }
  return n;
}

// Exhaustive simple-path minimum used as the oracle for the Dijkstra cost.
double brute_load_cost(const Grid& g, int load_r, int load_c, GravityDir gravity,
                       const MetricConfig& cfg) {
  double best = std::numeric_limits<double>::infinity();
  std::vector<char> visited(g.cells.size(), 0);
  auto dfs = [&](auto&& self, int r, int c, double cost) -> void {
    if (cost >= best) return;
    if (g.at(r, c).kind == CellKind::Support) {
      best = cost;
      return;
    }
    visited[static_cast<size_t>(r) * g.cols + c] = 1;
    for (int dr = -1; dr <= 1; dr++) {
      for (int dc = -1; dc <= 1; dc++) {
        if (dr == 0 && dc == 0) continue;
        if (!move_allowed(dr, dc, gravity)) continue;
        int nr = r + dr;
        int nc = c + dc;
        if (!g.in_bounds(nr, nc)) continue;
        if (visited[static_cast<size_t>(nr) * g.cols + nc]) continue;
        if (!g.at(nr, nc).is_solid(cfg.solid_threshold)) continue;
        self(self, nr, nc, cost + move_cost(r, c, nr, nc, load_r, load_c, gravity));
      }
    }
    visited[static_cast<size_t>(r) * g.cols + c] = 0;
  };
  dfs(dfs, load_r, load_c, 0.0);
  return std::isinf(best) ? cfg.cmax : best;
}

std::optional<double> brute_mean_path_cost(const Grid& g, GravityDir gravity,
                                           const MetricConfig& cfg) {
  double total = 0.0;
  int loads = 0;
  for (int r = 0; r < g.rows; r++) {
    for (int c = 0; c < g.cols; c++) {
      if (g.at(r, c).kind != CellKind::Load) continue;
      total += brute_load_cost(g, r, c, gravity, cfg);
      loads++;
    }
  }
  if (loads == 0) return std::nullopt;
  return total / loads;
}

Grid random_small_grid(SplitMix64& rng) {
  int rows = 2 + static_cast<int>(rng.next_below(3));
  int cols = 2 + static_cast<int>(rng.next_below(3));
  Grid g(rows, cols);
  for (Cell& cell : g.cells) {
    switch (rng.next_below(8)) {
      case 0: cell = Cell::load(); break;
      case 1: cell = Cell::support(); break;
      case 2:
      case 3:
      case 4: cell = Cell::of(1.0); break;
      default: cell = Cell::of(0.0); break;
    }
  }
  return g;
}

bool span_mirrored(const Span& s, int cols) { return cols - s.start - s.width == s.start; }

void criterion_metric_fixtures(Criterion& c) {
  MetricConfig cfg;

  Grid em_gt = easy("0 L 0\n0 1 0\n0 S 0");
  c.check(exact_match(em_gt, easy("0 L 0\n0 1 0\n0 S 0")), "exact match on identical grids");
  c.check(!exact_match(em_gt, easy("1 L 0\n1 1 0\n0 S 0")), "exact match catches differences");

  Grid rel_gt2 = easy("0 L 0\n1 1 1\n0 S 0");
  Grid rel_pred2 = easy("0 L 0\n0 1 0\n0 S 0");
  c.near(diff_ratios(rel_gt2, rel_pred2, cfg).rel, 0.333, 1e-3, "rel diff, two missing cells");
  Grid rel_gt3 = hard("0.0 L 0.0\n0.8 1.0 0.8\n0.0 S 0.0");
  Grid rel_pred3 = hard("0.0 L 0.0\n0.4 0.5 0.4\n0.0 S 0.0");
  c.near(diff_ratios(rel_gt3, rel_pred3, cfg).rel, 0.500, 1e-3, "rel diff, halved densities");
  Grid rel_pred4 = rel_gt3;
  rel_pred4.at(1, 0) = Cell::of(0.4);
  rel_pred4.at(1, 1) = Cell::of(2.0);
  rel_pred4.at(1, 2) = Cell::of(0.4);
  c.near(diff_ratios(rel_gt3, rel_pred4, cfg).rel, 0.308, 1e-3, "rel diff, out-of-range value");

  auto completion_valid = [&](const std::string& raw) {
    ParsedCompletion parsed = parse_completion(raw);
    if (!parsed.grid) return false;
    return valid_grid(*parsed.grid, em_gt, Difficulty::Easy);
  };
  c.check(completion_valid("0 L 0\n0 1 0\n0 S 0"), "validity accepts a well-formed grid");
  c.check(!completion_valid("0 X 0\n0 1 0\n0 S 0"), "validity rejects unknown letters");
  c.check(!completion_valid("0 L 0\n0 1 0\n0 P 0"), "validity rejects stray markers");
  c.check(!completion_valid("0 L 0\n0 -1 0\n0 S 0"), "validity rejects negative densities");
  c.check(!completion_valid("0 L 0\n0 2 0\n0 S 0"), "validity rejects densities above one");
  c.check(!completion_valid("0 L 0\n0 1\n0 S 0"), "validity rejects ragged rows");

  auto conn = [&](const std::string& text, bool directional) {
    return ls_connectivity(easy(text), kDown, directional, cfg).connected;
  };
  c.check(conn("0 L 0\n0 1 0\n0 S 0", false), "connectivity, straight column");
  c.check(conn("0 L 0\n0 1 0\n0 S 0", true), "directional connectivity, straight column");
  c.check(conn("0 L 0\n1 1 0\n0 S S", false), "connectivity, diagonal step");
  c.check(conn("0 L L\n0 1 0\n0 S 0", false), "connectivity, two loads");
  c.check(conn("0 L L\n1 0 0\n0 S 0", false), "connectivity, incomplete bridge (8-neighbor)");
  c.check(!conn("0 L L\n1 0 0\n0 S 0", true), "directional rejects the incomplete bridge");
  c.check(!conn("0 0 L\n1 0 0\n0 S 0", false), "connectivity, disconnected load");
  const std::string multi =
      "1 1 1 0 1 L\n"
      "1 0 1 0 1 0\n"
      "1 0 1 1 1 0\n"
      "1 0 0 0 0 0\n"
      "S 0 0 0 0 0";
  c.check(conn(multi, false), "connectivity, winding path");
  c.check(!conn(multi, true), "directional rejects the winding path");

  c.check(isolated_clusters(easy("L 0 0 0 0 0\n"
                                 "1 0 0 0 0 0\n"
                                 "1 0 1 0 0 0\n"
                                 "1 0 0 0 0 0\n"
                                 "1 0 0 0 0 0\n"
                                 "S 0 0 0 0 0"),
                            cfg) == 1,
          "clusters, single stray cell");
  c.check(isolated_clusters(easy("L 0 0 0 0 0\n"
                                 "1 0 0 0 0 0\n"
                                 "1 0 1 1 0 0\n"
                                 "1 0 0 1 0 0\n"
                                 "1 0 0 0 0 0\n"
                                 "S 0 0 0 0 0"),
                            cfg) == 1,
          "clusters, connected blob counts once");
  c.check(isolated_clusters(easy("L 0 0 0 0 1\n"
                                 "1 0 0 0 0 1\n"
                                 "1 0 1 1 0 1\n"
                                 "1 0 0 1 0 0\n"
                                 "1 0 0 0 0 0\n"
                                 "S 0 0 0 0 0"),
                            cfg) == 2,
          "clusters, two islands");
  c.check(isolated_clusters(easy("L 0 0 1 0 0\n"
                                 "1 0 0 0 0 0\n"
                                 "1 0 1 1 0 0\n"
                                 "1 0 0 1 0 1\n"
                                 "1 0 0 0 0 0\n"
                                 "S 0 0 0 0 0"),
                            cfg) == 3,
          "clusters, three islands");

  Grid fpc_gt1 = easy("0 L 0\n0 1 0\n0 S 0");
  c.near(*fpc_efficiency(fpc_gt1, fpc_gt1, kDown, cfg), 1.000, 1e-4, "fpceff, identical grids");
  Grid fpc_pred2 = easy("0 L 0\n1 1 0\n0 S 0");
  c.near(*fpc_efficiency(fpc_gt1, fpc_pred2, kDown, cfg), 1.000, 1e-4,
         "fpceff, extra material on the path");
  Grid fpc_gt5 = easy("0 0 L\n0 1 0\nS 0 0");
  Grid fpc_pred5 = easy("0 1 L\n1 0 0\nS 0 0");
  c.near(*fpc_efficiency(fpc_gt5, fpc_pred5, kDown, cfg), 0.7724, 1e-4,
         "fpceff, costlier detour");
}

void criterion_divergence_pins(Criterion& c) {
  MetricConfig cfg;

  // Ratios are not floored at zero: spurious material can push them negative.
  Grid gt = easy("0 L 0\n0 1 0\n0 S 0");
  Grid noisy = easy("1 L 0\n1 1 0\n0 S 0");
  c.near(diff_ratios(gt, noisy, cfg).diff, -1.0, 1e-9, "diff ratio goes negative");

  // Overwritten marker plus two spurious solids on a mass of one.
  Grid clobbered = easy("0 1 0\n1 1 1\n0 S 0");
  DiffRatios r = diff_ratios(gt, clobbered, cfg);
  c.near(r.rel, -2.0, 1e-9, "rel ratio with a clobbered marker");
  c.near(r.pen, -4.0, 1e-9, "penalized ratio under the 3x weight");

  // Predictions that route cheaper than the ground truth clip to one.
  Grid fpc_gt = easy("0 L 0\n0 1 0\nS 0 0");
  Grid fpc_pred3 = easy("0 L 0\n1 1 0\nS 0 0");
  Grid fpc_pred4 = easy("0 L 0\n1 0 0\nS 0 0");
  c.near(*fpc_efficiency(fpc_gt, fpc_pred3, kDown, cfg), 1.0, 1e-9, "fpceff clipped, wider path");
  c.near(*fpc_efficiency(fpc_gt, fpc_pred4, kDown, cfg), 1.0, 1e-9, "fpceff clipped, shortcut");
}

void criterion_path_cost_oracle(Criterion& c) {
  MetricConfig cfg;
  SplitMix64 rng(99);
  const GravityDir dirs[4] = {{1, 0}, {0, -1}, {-1, 0}, {0, 1}};
  for (int trial = 0; trial < 200; trial++) {
    Grid g = random_small_grid(rng);
    GravityDir gravity = dirs[rng.next_below(4)];
    auto fast = mean_path_cost(g, gravity, cfg);
    auto slow = brute_mean_path_cost(g, gravity, cfg);
    if (fast.has_value() != slow.has_value()) {
      c.check(false, "trial " + std::to_string(trial) + ": presence mismatch");
      continue;
    }
    if (fast && std::fabs(*fast - *slow) > 1e-9) {
      char buf[128];
      std::snprintf(buf, sizeof buf, "trial %d: dijkstra %.12g vs oracle %.12g", trial, *fast,
                    *slow);
      c.check(false, buf);
    }
  }
}

void criterion_generator_invariants(Criterion& c) {
  SolverConfig solver;
  MetricConfig metrics;
  auto scenarios = standard_scenarios(10, 10);
  c.check(scenarios.size() == 81, "81 standard scenarios");

  for (const Scenario& sc : scenarios) {
    OptimizeResult opt = optimize(sc, solver);
    std::string tag = scenario_id(sc.index);

    c.near(opt.densities.mean(), solver.target_density, 1e-3, tag + ": volume fraction");

    for (size_t i = 1; i < opt.compliance_history.size(); i++) {
      if (opt.compliance_history[i] > opt.compliance_history[i - 1] * (1.0 + 1e-9)) {
        c.check(false, tag + ": compliance rose at iteration " + std::to_string(i));
        break;
      }
    }

    if (span_mirrored(sc.load, sc.cols) && span_mirrored(sc.support, sc.cols)) {
      double worst = 0.0;
      for (int r = 0; r < sc.rows; r++) {
        for (int col = 0; col < sc.cols; col++) {
          worst = std::max(worst,
                           std::fabs(opt.densities(r, col) - opt.densities(r, sc.cols - 1 - col)));
        }
      }
      c.near(worst, 0.0, 1e-6, tag + ": mirror symmetry");
    }

    c.check(ls_connectivity(opt.easy, kDown, false, metrics).connected,
            tag + ": easy grid connects loads to supports");
    c.check(ls_connectivity(opt.easy, kDown, true, metrics).connected,
            tag + ": easy grid connects directionally");
  }
}

void criterion_dataset_determinism(Criterion& c, std::vector<TaskInstance>& dataset_out) {
  SolverConfig solver;
  auto scenarios = standard_scenarios(10, 10);
  auto first = build_dataset(scenarios, solver, 2024);
  auto second = build_dataset(scenarios, solver, 2024);
  c.check(first.size() == 1296, "dataset holds 1296 instances, got " +
                                    std::to_string(first.size()));
  std::ostringstream a, b;
  write_dataset(a, first);
  write_dataset(b, second);
  c.check(a.str() == b.str(), "two same-seed builds serialize byte-identically");
  dataset_out = std::move(first);
}

void criterion_echo_round_trip(Criterion& c, const std::vector<TaskInstance>& dataset) {
  if (dataset.empty()) {
    c.check(false, "dataset unavailable");
    return;
  }
  MetricConfig metrics;
  RunSpec spec;
  spec.endpoint.kind = "mock-echo";
  auto records = run(dataset, spec, metrics, nullptr);
  c.check(records.size() == 1296, "echo run covers all 1296 instances, got " +
                                      std::to_string(records.size()));
  AggregateTable table = aggregate(records);

  auto check_row = [&](const AggregateRow& row, const std::string& label) {
    c.near(row.exact, 100.0, 1e-9, label + ": exact match rate");
    c.near(row.valid, 100.0, 1e-9, label + ": validity rate");
    c.near(row.ls_conn, 100.0, 1e-9, label + ": connectivity rate");
    c.near(row.dir_ls_conn, 100.0, 1e-9, label + ": directional connectivity rate");
    c.near(row.diff_ratio.value_or(-1), 100.0, 1e-9, label + ": diff ratio mean");
    c.near(row.rel_diff_ratio.value_or(-1), 100.0, 1e-9, label + ": rel diff ratio mean");
    c.near(row.pen_diff_ratio.value_or(-1), 100.0, 1e-9, label + ": pen diff ratio mean");
    c.near(row.dw_diff_ratio.value_or(-1), 100.0, 1e-9, label + ": weighted diff ratio mean");
    c.near(row.dw_rel_diff_ratio.value_or(-1), 100.0, 1e-9,
           label + ": weighted rel diff ratio mean");
    c.near(row.islands.value_or(-1), 0.0, 1e-9, label + ": island mean");
    c.near(row.fpceff.value_or(-1), 100.0, 1e-9, label + ": fpceff mean");
  };
  c.check(table.rows.size() == 16, "sixteen strata rows");
  for (const AggregateRow& row : table.rows) {
    check_row(row, std::string(subject_slug(row.subject)) + "/" +
                       difficulty_name(row.difficulty));
  }
  for (const AggregateRow& row : table.averages) {
    check_row(row, std::string("average/") + difficulty_name(row.difficulty));
  }
}

void criterion_noise_monotonicity(Criterion& c, const std::vector<TaskInstance>& dataset) {
  if (dataset.empty()) {
    c.check(false, "dataset unavailable");
    return;
  }
  MetricConfig metrics;
  auto mean_diff_ratio = [&](double p) {
    RunSpec spec;
    spec.subjects = {Subject::Cells1, Subject::Cells5, Subject::Cells10};
    spec.difficulties = {Difficulty::Easy};
    spec.endpoint.kind = "mock-noise";
    spec.endpoint.noise_p = p;
    spec.endpoint.noise_seed = 11;
    auto records = run(dataset, spec, metrics, nullptr);
    double sum = 0.0;
    int n = 0;
    for (const RunRecord& rec : records) {
      if (rec.report.diff_ratio) {
        sum += *rec.report.diff_ratio;
        n++;
      }
    }
    c.check(n == static_cast<int>(records.size()), "every noise record has a defined ratio");
    return n > 0 ? sum / n : std::numeric_limits<double>::quiet_NaN();
  };

  double at_p[4];
  const double ps[4] = {0.0, 0.2, 0.5, 1.0};
  for (int i = 0; i < 4; i++) at_p[i] = mean_diff_ratio(ps[i]);
  for (int i = 1; i < 4; i++) {
    if (!(at_p[i] <= at_p[i - 1])) {
      char buf[128];
      std::snprintf(buf, sizeof buf, "mean diff ratio rose from %.6f to %.6f between p=%g and p=%g",
                    at_p[i - 1], at_p[i], ps[i - 1], ps[i]);
      c.check(false, buf);
    }
  }
  c.check(at_p[0] > at_p[3], "strict decrease between p=0 and p=1");
  c.near(at_p[0], 1.0, 1e-9, "p=0 reproduces the ground truth");
}

void criterion_prompt_framing(Criterion& c, const std::vector<TaskInstance>& dataset) {
  if (dataset.empty()) {
    c.check(false, "dataset unavailable");
    return;
  }
  const TaskInstance& inst = dataset.front();

  std::string base = render_prompt(inst, PromptStyle::Base, {});
  c.check(base.find("The goal is to predict the correct material distribution") !=
              std::string::npos,
          "base prompt states the goal");
  c.check(base.find("Return only the completed grid without any additional explanation.") !=
              std::string::npos,
          "base prompt pins the output format");

  std::string enhanced = render_prompt(inst, PromptStyle::PhysicsEnhanced, {});
  c.check(enhanced.find("Stress follows the shortest stiff path") != std::string::npos,
          "enhanced prompt carries the stress hint");

  std::string neutral = render_prompt(inst, PromptStyle::PhysicsNeutral, {});
  c.check(neutral.find("'L' indicates a special marker.") != std::string::npos,
          "neutral prompt hides the marker semantics");

  auto examples = pick_examples(dataset, inst, 3, 7);
  std::string few_shot = render_prompt(inst, PromptStyle::Base, examples);
  c.check(count_occurrences(few_shot, "Example input grid with masked regions:") == 3,
          "three-shot prompt shows three examples");
}

}  // namespace

int main() {
  using clock = std::chrono::steady_clock;
  int failed = 0;

  auto run_criterion = [&](int number, const char* title, double limit_s,
                           const std::function<void(Criterion&)>& body) {
    Criterion c;
    auto t0 = clock::now();
    try {
      body(c);
    } catch (const std::exception& e) {
      c.failures.push_back(std::string("exception: ") + e.what());
    }
    double secs = std::chrono::duration<double>(clock::now() - t0).count();
    if (limit_s > 0 && secs > limit_s) {
      char buf[96];
      std::snprintf(buf, sizeof buf, "took %.2fs, limit %.0fs", secs, limit_s);
      c.failures.push_back(buf);
    }
    if (c.failures.empty()) {
      std::printf("criterion %d: %-28s PASS (%.2fs)\n", number, title, secs);
    } else {
      failed++;
      std::string detail = c.failures.front();
      if (c.failures.size() > 1) {
        detail += " (+" + std::to_string(c.failures.size() - 1) + " more)";
      }
      std::printf("criterion %d: %-28s FAIL (%.2fs) %s\n", number, title, secs, detail.c_str());
    }
  };

  std::vector<TaskInstance> dataset;

  run_criterion(1, "metric fixtures", 1.0, criterion_metric_fixtures);
  run_criterion(2, "documented metric pins", 0.0, criterion_divergence_pins);
  run_criterion(3, "path cost oracle", 10.0, criterion_path_cost_oracle);
  run_criterion(4, "generator invariants", 60.0, criterion_generator_invariants);
  run_criterion(5, "dataset determinism", 0.0,
                [&](Criterion& c) { criterion_dataset_determinism(c, dataset); });
  run_criterion(6, "echo endpoint round trip", 30.0,
                [&](Criterion& c) { criterion_echo_round_trip(c, dataset); });
  run_criterion(7, "noise endpoint monotonicity", 0.0,
                [&](Criterion& c) { criterion_noise_monotonicity(c, dataset); });
  run_criterion(8, "prompt framing", 0.0,
                [&](Criterion& c) { criterion_prompt_framing(c, dataset); });

  if (failed > 0) {
    std::printf("%d of 8 criteria failed\n", failed);
    return 1;
  }
  std::printf("all 8 criteria passed\n");
  return 0;
}
