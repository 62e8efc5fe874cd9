#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "topobench/grid.hpp"
#include "topobench/scenario.hpp"
#include "topobench/task.hpp"

namespace topobench {

enum class DwcsStrategy { DistinctCategories };

struct MetricConfig {
  double penalty_weight = 3.0;  // categorical (marker) mismatch multiplier
  double cmax = 1e6;            // path cost for loads that reach no support
  bool clip_fpceff = true;
  double solid_threshold = 0.0;  // densities above this count as solid
  DwcsStrategy dwcs_strategy = DwcsStrategy::DistinctCategories;
};

// Difference-ratio family. All three share the denominator M = sum of the
// ground truth's numeric cell values (markers excluded) and are NOT floored:
// predictions that add lots of spurious material score below zero.
//   diff: every mismatched cell costs 1.
//   rel:  numeric mismatches cost |gt - pred|, categorical mismatches cost 1.
//   pen:  rel with categorical costs multiplied by penalty_weight.
struct DiffRatios {
  double diff = 1.0;
  double rel = 1.0;
  double pen = 1.0;
  bool zero_mass = false;  // M == 0 with D > 0: ratios meaningless, excluded upstream
};

bool exact_match(const Grid& ground_truth, const Grid& predicted);

DiffRatios diff_ratios(const Grid& ground_truth, const Grid& predicted,
                       const MetricConfig& cfg);

// Per-masked-cell difficulty weight in {1,2,3}: the number of distinct cell
// categories (empty / solid / marker) among the in-bounds 8-neighbors of the
// cell in the ground truth.
int cell_difficulty(const Grid& ground_truth, int r, int c, const MetricConfig& cfg);
std::vector<int> difficulty_map(const Grid& ground_truth,
                                const std::vector<std::pair<int, int>>& mask,
                                const MetricConfig& cfg);

// diff/rel recomputed with each masked cell's error term and mass
// contribution scaled by its difficulty weight; unmasked cells weigh 1.
DiffRatios weighted_diff_ratios(const Grid& ground_truth, const Grid& predicted,
                                const std::vector<std::pair<int, int>>& mask,
                                const MetricConfig& cfg);

// Syntactic validity of a completion against the expected shape: same
// dimensions, no V cells, numeric values admissible for the difficulty
// (Easy: exactly 0 or 1; Hard: anywhere in [0,1]). Marker positions are not
// compared.
bool valid_grid(const Grid& predicted, const Grid& ground_truth, Difficulty difficulty);

enum class ConnReason { Connected, NotConnected, NoLoads, NoSupports };

struct ConnResult {
  bool connected = false;
  ConnReason reason = ConnReason::NotConnected;
  operator bool() const { return connected; }
};

// True when some load cell reaches some support cell through solid cells.
// Non-directional search uses the 8-neighborhood; directional search only
// steps along gravity or laterally (perpendicular axis moves), diagonals and
// against-gravity moves excluded.
ConnResult ls_connectivity(const Grid& g, GravityDir gravity, bool directional,
                           const MetricConfig& cfg);

// Number of 4-connected solid components with no member 4-adjacent to a load
// or support marker.
int isolated_clusters(const Grid& g, const MetricConfig& cfg);

// Force-path cost model: Dijkstra over solid cells with 8-neighbor moves.
// A move d relative to unit gravity g costs
//   w(angle(d, g)) * (1 + 0.05 * depth)
// where depth is the absolute displacement of the target cell from the load
// along the gravity axis, and w is 1.0 below 15 degrees, 1.2 below 45, 1.5
// below 100, 3.0 otherwise. Moves with normalized d . g < -0.5 are forbidden.
// Loads that reach no support cost cmax; the grid cost is the mean over loads.
double move_cost(int from_r, int from_c, int to_r, int to_c, int load_r, int load_c,
                 GravityDir gravity);
bool move_allowed(int dr, int dc, GravityDir gravity);
std::optional<double> mean_path_cost(const Grid& g, GravityDir gravity,
                                     const MetricConfig& cfg);  // empty if no loads

// mean_path_cost(ground truth) / mean_path_cost(predicted), clipped to [0,1]
// when cfg.clip_fpceff. Empty when either grid has no loads.
std::optional<double> fpc_efficiency(const Grid& ground_truth, const Grid& predicted,
                                     GravityDir gravity, const MetricConfig& cfg);

struct MetricReport {
  bool parse_ok = false;
  bool exact = false;
  bool valid = false;
  std::optional<double> diff_ratio;
  std::optional<double> rel_diff_ratio;
  std::optional<double> pen_diff_ratio;
  std::optional<double> dw_diff_ratio;
  std::optional<double> dw_rel_diff_ratio;
  double dwcs = 0.0;  // instance-intrinsic, defined even on parse failure
  std::optional<bool> ls_conn;
  std::optional<bool> dir_ls_conn;
  std::optional<int> islands;
  std::optional<double> fpceff;
  std::optional<double> gt_path_cost;
  std::optional<double> pred_path_cost;
  std::vector<std::pair<std::pair<int, int>, int>> difficulty_weights;
  bool zero_mass = false;
};

// Composes every metric for one instance/completion pair. Ratio metrics need
// matching shapes; topology metrics need a parsed grid; DWCS only needs the
// instance.
MetricReport evaluate(const TaskInstance& inst, const ParsedCompletion& completion,
                      const MetricConfig& cfg);

std::string report_to_json(const MetricReport& r);
MetricReport report_from_json(const std::string& json_text);

}  // namespace topobench
