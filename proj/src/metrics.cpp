#include "topobench/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <deque>
#include <queue>
#include <set>

#include <nlohmann/json.hpp>

namespace topobench {

namespace {

constexpr double kPi = 3.14159265358979323846;

bool is_empty_value(const Cell& c, const MetricConfig& cfg) {
  return c.kind == CellKind::Value && c.value <= cfg.solid_threshold;
}

}  // namespace

bool exact_match(const Grid& ground_truth, const Grid& predicted) {
  return ground_truth == predicted;
}

DiffRatios diff_ratios(const Grid& ground_truth, const Grid& predicted,
                       const MetricConfig& cfg) {
  double mass = 0.0;
  double d_count = 0.0;
  double d_rel = 0.0;
  double d_pen = 0.0;
  for (size_t i = 0; i < ground_truth.cells.size(); i++) {
    const Cell& gt = ground_truth.cells[i];
    const Cell& pred = predicted.cells[i];
    if (gt.is_value()) mass += gt.value;
    if (gt == pred) continue;
    d_count += 1.0;
    if (gt.is_value() && pred.is_value()) {
      d_rel += std::abs(gt.value - pred.value);
      d_pen += std::abs(gt.value - pred.value);
    } else {
      d_rel += 1.0;
      d_pen += cfg.penalty_weight;
    }
  }
  DiffRatios out;
  if (mass == 0.0) {
    out.zero_mass = d_count > 0.0;
    out.diff = out.rel = out.pen = d_count > 0.0 ? 0.0 : 1.0;
    return out;
  }
  out.diff = 1.0 - d_count / mass;
  out.rel = 1.0 - d_rel / mass;
  out.pen = 1.0 - d_pen / mass;
  return out;
}

int cell_difficulty(const Grid& ground_truth, int r, int c, const MetricConfig& cfg) {
  (void)cfg.dwcs_strategy;  // single strategy for now, seam kept in the config
  bool has_empty = false;
  bool has_solid = false;
  bool has_marker = false;
  for (int dr = -1; dr <= 1; dr++) {
    for (int dc = -1; dc <= 1; dc++) {
      if (dr == 0 && dc == 0) continue;
      int nr = r + dr;
      int nc = c + dc;
      if (!ground_truth.in_bounds(nr, nc)) continue;
      const Cell& n = ground_truth.at(nr, nc);
      if (n.is_marker()) {
        has_marker = true;
      } else if (is_empty_value(n, cfg)) {
        has_empty = true;
      } else {
        has_solid = true;
      }
    }
  }
  int categories = (has_empty ? 1 : 0) + (has_solid ? 1 : 0) + (has_marker ? 1 : 0);
  return std::max(1, categories);
}

std::vector<int> difficulty_map(const Grid& ground_truth,
                                const std::vector<std::pair<int, int>>& mask,
                                const MetricConfig& cfg) {
  std::vector<int> weights;
  weights.reserve(mask.size());
  for (const auto& [r, c] : mask) weights.push_back(cell_difficulty(ground_truth, r, c, cfg));
  return weights;
}

DiffRatios weighted_diff_ratios(const Grid& ground_truth, const Grid& predicted,
                                const std::vector<std::pair<int, int>>& mask,
                                const MetricConfig& cfg) {
  std::vector<double> weight(ground_truth.cells.size(), 1.0);
  for (const auto& [r, c] : mask) {
    weight[static_cast<size_t>(r) * ground_truth.cols + c] =
        cell_difficulty(ground_truth, r, c, cfg);
  }
  double mass = 0.0;
  double d_count = 0.0;
  double d_rel = 0.0;
  for (size_t i = 0; i < ground_truth.cells.size(); i++) {
    const Cell& gt = ground_truth.cells[i];
    const Cell& pred = predicted.cells[i];
    if (gt.is_value()) mass += weight[i] * gt.value;
    if (gt == pred) continue;
    d_count += weight[i];
    if (gt.is_value() && pred.is_value()) {
      d_rel += weight[i] * std::abs(gt.value - pred.value);
    } else {
      d_rel += weight[i];
    }
  }
  DiffRatios out;
  if (mass == 0.0) {
    out.zero_mass = d_count > 0.0;
    out.diff = out.rel = out.pen = d_count > 0.0 ? 0.0 : 1.0;
    return out;
  }
  out.diff = 1.0 - d_count / mass;
  out.rel = 1.0 - d_rel / mass;
  out.pen = out.rel;
  return out;
}

bool valid_grid(const Grid& predicted, const Grid& ground_truth, Difficulty difficulty) {
  if (!predicted.same_shape(ground_truth)) return false;
  for (const Cell& cell : predicted.cells) {
    switch (cell.kind) {
      case CellKind::Void:
        return false;
      case CellKind::Value:
        if (difficulty == Difficulty::Easy) {
          if (cell.value != 0.0 && cell.value != 1.0) return false;
        } else {
          if (cell.value < 0.0 || cell.value > 1.0) return false;
        }
        break;
      default:
        break;
    }
  }
  return true;
}

ConnResult ls_connectivity(const Grid& g, GravityDir gravity, bool directional,
                           const MetricConfig& cfg) {
  std::vector<std::pair<int, int>> moves;
  if (directional) {
    moves.push_back({gravity.dr, gravity.dc});
    moves.push_back({gravity.dc, -gravity.dr});
    moves.push_back({-gravity.dc, gravity.dr});
  } else {
    for (int dr = -1; dr <= 1; dr++)
      for (int dc = -1; dc <= 1; dc++)
        if (dr != 0 || dc != 0) moves.push_back({dr, dc});
  }

  std::deque<int> frontier;
  std::vector<char> seen(g.cells.size(), 0);
  bool any_load = false;
  bool any_support = false;
  for (int r = 0; r < g.rows; r++) {
    for (int c = 0; c < g.cols; c++) {
      const Cell& cell = g.at(r, c);
      if (cell.kind == CellKind::Load) {
        any_load = true;
        frontier.push_back(r * g.cols + c);
        seen[static_cast<size_t>(r) * g.cols + c] = 1;
      } else if (cell.kind == CellKind::Support) {
        any_support = true;
      }
    }
  }
  if (!any_load) return {false, ConnReason::NoLoads};
  if (!any_support) return {false, ConnReason::NoSupports};

  while (!frontier.empty()) {
    int idx = frontier.front();
    frontier.pop_front();
    int r = idx / g.cols;
    int c = idx % g.cols;
    if (g.cells[static_cast<size_t>(idx)].kind == CellKind::Support) {
      return {true, ConnReason::Connected};
    }
    for (const auto& [dr, dc] : moves) {
      int nr = r + dr;
      int nc = c + dc;
      if (!g.in_bounds(nr, nc)) continue;
      size_t nidx = static_cast<size_t>(nr) * g.cols + nc;
      if (seen[nidx]) continue;
      if (!g.cells[nidx].is_solid(cfg.solid_threshold)) continue;
      seen[nidx] = 1;
      frontier.push_back(static_cast<int>(nidx));
    }
  }
  return {false, ConnReason::NotConnected};
}

int isolated_clusters(const Grid& g, const MetricConfig& cfg) {
  auto solid_value = [&](int r, int c) {
    const Cell& cell = g.at(r, c);
    return cell.kind == CellKind::Value && cell.value > cfg.solid_threshold;
  };
  const int dr4[] = {-1, 1, 0, 0};
  const int dc4[] = {0, 0, -1, 1};
  std::vector<char> seen(g.cells.size(), 0);
  int isolated = 0;
  for (int r = 0; r < g.rows; r++) {
    for (int c = 0; c < g.cols; c++) {
      if (!solid_value(r, c) || seen[static_cast<size_t>(r) * g.cols + c]) continue;
      bool touches_marker = false;
      std::deque<std::pair<int, int>> frontier{{r, c}};
      seen[static_cast<size_t>(r) * g.cols + c] = 1;
      while (!frontier.empty()) {
        auto [cr, cc] = frontier.front();
        frontier.pop_front();
        for (int k = 0; k < 4; k++) {
          int nr = cr + dr4[k];
          int nc = cc + dc4[k];
          if (!g.in_bounds(nr, nc)) continue;
          if (g.at(nr, nc).is_marker()) touches_marker = true;
          size_t nidx = static_cast<size_t>(nr) * g.cols + nc;
          if (!seen[nidx] && solid_value(nr, nc)) {
            seen[nidx] = 1;
            frontier.push_back({nr, nc});
          }
        }
      }
      if (!touches_marker) isolated++;
    }
  }
  return isolated;
}

bool move_allowed(int dr, int dc, GravityDir gravity) {
  int dot = dr * gravity.dr + dc * gravity.dc;
  if (dot >= 0) return true;
  int len2 = dr * dr + dc * dc;
  // Forbidden when normalized d . g < -0.5, i.e. dot < 0 and 4 dot^2 > |d|^2.
  return 4 * dot * dot <= len2;
}

double move_cost(int from_r, int from_c, int to_r, int to_c, int load_r, int load_c,
                 GravityDir gravity) {
  int dr = to_r - from_r;
  int dc = to_c - from_c;
  int dot = dr * gravity.dr + dc * gravity.dc;
  int len2 = dr * dr + dc * dc;
  double cosang = dot / std::sqrt(static_cast<double>(len2));
  double deg = std::acos(std::clamp(cosang, -1.0, 1.0)) * 180.0 / kPi;
  double w;
  if (deg < 15.0 - 1e-9) {
    w = 1.0;
  } else if (deg < 45.0 - 1e-9) {
    w = 1.2;
  } else if (deg < 100.0 - 1e-9) {
    w = 1.5;
  } else {
    w = 3.0;
  }
  int depth = std::abs((to_r - load_r) * gravity.dr + (to_c - load_c) * gravity.dc);
  return w * (1.0 + 0.05 * depth);
}

namespace {

// Least-cost route from one load to any support. Edge costs depend on the
// load's position (the depth term), so the search runs once per load.
double load_path_cost(const Grid& g, int load_r, int load_c, GravityDir gravity,
                      const MetricConfig& cfg) {
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> dist(g.cells.size(), inf);
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<Item>> heap;
  dist[static_cast<size_t>(load_r) * g.cols + load_c] = 0.0;
  heap.push({0.0, load_r * g.cols + load_c});
  while (!heap.empty()) {
    auto [d, idx] = heap.top();
    heap.pop();
    if (d > dist[static_cast<size_t>(idx)]) continue;
    int r = idx / g.cols;
    int c = idx % g.cols;
    if (g.cells[static_cast<size_t>(idx)].kind == CellKind::Support) return d;
    for (int dr = -1; dr <= 1; dr++) {
      for (int dc = -1; dc <= 1; dc++) {
        if (dr == 0 && dc == 0) continue;
        if (!move_allowed(dr, dc, gravity)) continue;
        int nr = r + dr;
        int nc = c + dc;
        if (!g.in_bounds(nr, nc)) continue;
        size_t nidx = static_cast<size_t>(nr) * g.cols + nc;
        if (!g.cells[nidx].is_solid(cfg.solid_threshold)) continue;
        double nd = d + move_cost(r, c, nr, nc, load_r, load_c, gravity);
        if (nd < dist[nidx]) {
          dist[nidx] = nd;
          heap.push({nd, static_cast<int>(nidx)});
        }
      }
    }
  }
  return cfg.cmax;
}

}  // namespace

std::optional<double> mean_path_cost(const Grid& g, GravityDir gravity,
                                     const MetricConfig& cfg) {
  double total = 0.0;
  int loads = 0;
  for (int r = 0; r < g.rows; r++) {
    for (int c = 0; c < g.cols; c++) {
      if (g.at(r, c).kind != CellKind::Load) continue;
      total += load_path_cost(g, r, c, gravity, cfg);
      loads++;
    }
  }
  if (loads == 0) return std::nullopt;
  return total / loads;
}

std::optional<double> fpc_efficiency(const Grid& ground_truth, const Grid& predicted,
                                     GravityDir gravity, const MetricConfig& cfg) {
  auto gt_cost = mean_path_cost(ground_truth, gravity, cfg);
  auto pred_cost = mean_path_cost(predicted, gravity, cfg);
  if (!gt_cost || !pred_cost) return std::nullopt;
  double ratio = *gt_cost / *pred_cost;
  if (cfg.clip_fpceff) ratio = std::clamp(ratio, 0.0, 1.0);
  return ratio;
}

MetricReport evaluate(const TaskInstance& inst, const ParsedCompletion& completion,
                      const MetricConfig& cfg) {
  MetricReport rep;
  std::vector<int> weights = difficulty_map(inst.ground_truth, inst.mask, cfg);
  double wsum = 0.0;
  for (size_t i = 0; i < weights.size(); i++) {
    rep.difficulty_weights.push_back({inst.mask[i], weights[i]});
    wsum += weights[i];
  }
  rep.dwcs = weights.empty() ? 0.0 : wsum / static_cast<double>(weights.size());

  if (!completion.grid) return rep;
  const Grid& pred = *completion.grid;
  rep.parse_ok = true;
  rep.exact = exact_match(inst.ground_truth, pred);
  rep.valid = valid_grid(pred, inst.ground_truth, inst.difficulty);

  if (pred.same_shape(inst.ground_truth)) {
    DiffRatios plain = diff_ratios(inst.ground_truth, pred, cfg);
    DiffRatios weighted = weighted_diff_ratios(inst.ground_truth, pred, inst.mask, cfg);
    rep.zero_mass = plain.zero_mass;
    if (!plain.zero_mass) {
      rep.diff_ratio = plain.diff;
      rep.rel_diff_ratio = plain.rel;
      rep.pen_diff_ratio = plain.pen;
    }
    if (!weighted.zero_mass) {
      rep.dw_diff_ratio = weighted.diff;
      rep.dw_rel_diff_ratio = weighted.rel;
    }
  }

  rep.ls_conn = static_cast<bool>(ls_connectivity(pred, inst.gravity, false, cfg));
  rep.dir_ls_conn = static_cast<bool>(ls_connectivity(pred, inst.gravity, true, cfg));
  rep.islands = isolated_clusters(pred, cfg);

  rep.gt_path_cost = mean_path_cost(inst.ground_truth, inst.gravity, cfg);
  rep.pred_path_cost = mean_path_cost(pred, inst.gravity, cfg);
  if (rep.gt_path_cost && rep.pred_path_cost) {
    double ratio = *rep.gt_path_cost / *rep.pred_path_cost;
    if (cfg.clip_fpceff) ratio = std::clamp(ratio, 0.0, 1.0);
    rep.fpceff = ratio;
  }
  return rep;
}

namespace {

using nlohmann::ordered_json;

template <typename T>
void put_opt(ordered_json& j, const char* key, const std::optional<T>& v) {
  if (v) j[key] = *v;
}

template <typename T>
void get_opt(const ordered_json& j, const char* key, std::optional<T>& v) {
  if (j.contains(key)) v = j.at(key).get<T>();
}

}  // namespace

std::string report_to_json(const MetricReport& r) {
  ordered_json j;
  j["parse_ok"] = r.parse_ok;
  j["exact_match"] = r.exact;
  j["valid_grid"] = r.valid;
  put_opt(j, "diff_ratio", r.diff_ratio);
  put_opt(j, "rel_diff_ratio", r.rel_diff_ratio);
  put_opt(j, "pen_diff_ratio", r.pen_diff_ratio);
  put_opt(j, "dw_diff_ratio", r.dw_diff_ratio);
  put_opt(j, "dw_rel_diff_ratio", r.dw_rel_diff_ratio);
  j["dwcs"] = r.dwcs;
  put_opt(j, "ls_conn", r.ls_conn);
  put_opt(j, "dir_ls_conn", r.dir_ls_conn);
  put_opt(j, "islands", r.islands);
  put_opt(j, "fpceff", r.fpceff);
  put_opt(j, "gt_path_cost", r.gt_path_cost);
  put_opt(j, "pred_path_cost", r.pred_path_cost);
  if (r.zero_mass) j["zero_mass"] = true;
  ordered_json weights = ordered_json::array();
  for (const auto& [cell, w] : r.difficulty_weights) {
    weights.push_back(ordered_json::array({cell.first, cell.second, w}));
  }
  j["difficulty_weights"] = weights;
  return j.dump();
}

MetricReport report_from_json(const std::string& json_text) {
  ordered_json j = ordered_json::parse(json_text);
  MetricReport r;
  r.parse_ok = j.at("parse_ok").get<bool>();
  r.exact = j.at("exact_match").get<bool>();
  r.valid = j.at("valid_grid").get<bool>();
  get_opt(j, "diff_ratio", r.diff_ratio);
  get_opt(j, "rel_diff_ratio", r.rel_diff_ratio);
  get_opt(j, "pen_diff_ratio", r.pen_diff_ratio);
  get_opt(j, "dw_diff_ratio", r.dw_diff_ratio);
  get_opt(j, "dw_rel_diff_ratio", r.dw_rel_diff_ratio);
  r.dwcs = j.at("dwcs").get<double>();
  get_opt(j, "ls_conn", r.ls_conn);
  get_opt(j, "dir_ls_conn", r.dir_ls_conn);
  get_opt(j, "islands", r.islands);
  get_opt(j, "fpceff", r.fpceff);
  get_opt(j, "gt_path_cost", r.gt_path_cost);
  get_opt(j, "pred_path_cost", r.pred_path_cost);
  if (j.contains("zero_mass")) r.zero_mass = j.at("zero_mass").get<bool>();
  for (const auto& entry : j.at("difficulty_weights")) {
    r.difficulty_weights.push_back(
        {{entry.at(0).get<int>(), entry.at(1).get<int>()}, entry.at(2).get<int>()});
  }
  return r;
}

}  // namespace topobench
