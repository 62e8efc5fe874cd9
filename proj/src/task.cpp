#include "topobench/task.hpp"

#include <algorithm>
#include <cstdlib>
#include <sstream>

namespace topobench {

namespace {

int subject_cell_count(Subject s) {
  switch (s) {
    case Subject::Cells1: return 1;
    case Subject::Cells5: return 5;
    case Subject::Cells10: return 10;
    default: return 0;
  }
}

int subject_line_count(Subject s) {
  switch (s) {
    case Subject::Rows1: return 1;
    case Subject::Rows3: return 3;
    case Subject::Cols1: return 1;
    case Subject::Cols3: return 3;
    default: return 0;
  }
}

bool row_has_marker(const Grid& g, int r) {
  for (int c = 0; c < g.cols; c++) {
    if (g.at(r, c).is_marker()) return true;
  }
  return false;
}

bool col_has_marker(const Grid& g, int c) {
  for (int r = 0; r < g.rows; r++) {
    if (g.at(r, c).is_marker()) return true;
  }
  return false;
}

}  // namespace

MaskResult apply_mask(const Grid& ground_truth, Subject subject, SplitMix64& rng) {
  const Grid& g = ground_truth;
  std::vector<std::pair<int, int>> mask;

  if (subject == Subject::Cells1 || subject == Subject::Cells5 || subject == Subject::Cells10) {
    std::vector<std::pair<int, int>> candidates;
    for (int r = 0; r < g.rows; r++) {
      for (int c = 0; c < g.cols; c++) {
        if (!g.at(r, c).is_marker()) candidates.emplace_back(r, c);
      }
    }
    int want = subject_cell_count(subject);
    if (static_cast<int>(candidates.size()) < want) {
      throw TaskError("NotEnoughMaskable: grid has " + std::to_string(candidates.size()) +
                      " non-marker cells, subject needs " + std::to_string(want));
    }
    for (int i : sample_without_replacement(static_cast<int>(candidates.size()), want, rng)) {
      mask.push_back(candidates[static_cast<size_t>(i)]);
    }
  } else if (subject == Subject::Rows1 || subject == Subject::Rows3) {
    std::vector<int> candidates;
    for (int r = 0; r < g.rows; r++) {
      if (!row_has_marker(g, r)) candidates.push_back(r);
    }
    int want = subject_line_count(subject);
    if (static_cast<int>(candidates.size()) < want) {
      throw TaskError("NotEnoughMaskable: grid has " + std::to_string(candidates.size()) +
                      " marker-free rows, subject needs " + std::to_string(want));
    }
    for (int i : sample_without_replacement(static_cast<int>(candidates.size()), want, rng)) {
      int r = candidates[static_cast<size_t>(i)];
      for (int c = 0; c < g.cols; c++) mask.emplace_back(r, c);
    }
  } else if (subject == Subject::Cols1 || subject == Subject::Cols3) {
    std::vector<int> candidates;
    for (int c = 0; c < g.cols; c++) {
      if (!col_has_marker(g, c)) candidates.push_back(c);
    }
    int want = subject_line_count(subject);
    if (static_cast<int>(candidates.size()) < want) {
      throw TaskError("NotEnoughMaskable: grid has " + std::to_string(candidates.size()) +
                      " marker-free columns, subject needs " + std::to_string(want));
    }
    for (int i : sample_without_replacement(static_cast<int>(candidates.size()), want, rng)) {
      int c = candidates[static_cast<size_t>(i)];
      for (int r = 0; r < g.rows; r++) mask.emplace_back(r, c);
    }
  } else {
    // Full: every cell of every marker-free row. Rows carrying markers stay
    // visible in their entirety so the anchors keep their context.
    bool any = false;
    for (int r = 0; r < g.rows; r++) {
      if (row_has_marker(g, r)) continue;
      any = true;
      for (int c = 0; c < g.cols; c++) mask.emplace_back(r, c);
    }
    if (!any) throw TaskError("NotEnoughMaskable: grid has no marker-free rows");
  }

  std::sort(mask.begin(), mask.end());
  MaskResult out;
  out.input = g;
  for (const auto& [r, c] : mask) out.input.at(r, c) = Cell::voided();
  out.mask = std::move(mask);
  return out;
}

std::uint64_t mask_seed(std::uint64_t dataset_seed, int scenario_index, Subject subject,
                        Difficulty difficulty) {
  std::uint64_t h = mix64(dataset_seed, static_cast<std::uint64_t>(scenario_index));
  h = mix64(h, fnv1a64(subject_slug(subject)));
  h = mix64(h, fnv1a64(difficulty_name(difficulty)));
  return h;
}

TaskInstance rotate_instance(const TaskInstance& inst, int k) {
  k = ((k % 4) + 4) % 4;
  TaskInstance out = inst;
  if (k == 0) return out;
  out.input = rotate90(inst.input, k);
  out.ground_truth = rotate90(inst.ground_truth, k);
  out.gravity = rotate_gravity(inst.gravity, k);
  out.rotation = (inst.rotation + k) % 4;
  out.mask.clear();
  out.mask.reserve(inst.mask.size());
  for (const auto& [r, c] : inst.mask) {
    out.mask.push_back(rotate_cell(r, c, inst.input.rows, inst.input.cols, k));
  }
  std::sort(out.mask.begin(), out.mask.end());
  return out;
}

const char* prompt_style_name(PromptStyle s) {
  switch (s) {
    case PromptStyle::Base: return "base";
    case PromptStyle::PhysicsEnhanced: return "physics_enhanced";
    case PromptStyle::PhysicsNeutral: return "physics_neutral";
  }
  return "base";
}

PromptStyle parse_prompt_style(const std::string& name) {
  if (name == "base") return PromptStyle::Base;
  if (name == "physics_enhanced") return PromptStyle::PhysicsEnhanced;
  if (name == "physics_neutral") return PromptStyle::PhysicsNeutral;
  throw TaskError("UnknownPromptStyle: " + name);
}

const char kPromptTemplateVersion[] = "1";

namespace {

const char kStructuralPreamble[] =
    "You are given a structural material distribution represented as a grid. Each cell can "
    "have one of the following states:\n"
    "- 'L' indicates applied load.\n"
    "- 'V' indicates void.\n"
    "- 'S' indicates support.";

const char kNeutralPreamble[] =
    "You are given a grid of cells. Each cell can have one of the following states:\n"
    "- 'L' indicates a special marker.\n"
    "- 'V' indicates an empty cell.\n"
    "- 'S' indicates a fixed marker.";

const char kBaseKnowledge[] =
    "Important: The completed structure should use as little material as possible while "
    "remaining stable and plausible for carrying the applied forces. Minimize material usage "
    "unless necessary for structural support.";

const char kEnhancedKnowledge[] =
    "Relevant physical knowledge for reasoning:\n"
    "- Loads ('L') create forces that must be transferred through continuous material paths "
    "to supports ('S').\n"
    "- Stress follows the shortest stiff path from loads to supports.\n"
    "- Any material cell that is disconnected from both loads and supports does not carry "
    "force and should be avoided.\n"
    "- Structures should satisfy equilibrium: all loads must eventually be resisted by at "
    "least one support.\n"
    "- Use as little material as possible while still maintaining at least one valid load "
    "path.";

const char kNeutralKnowledge[] =
    "Relevant rules for reasoning:\n"
    "- Filled cells should form continuous connections between relevant markers when "
    "necessary.\n"
    "- Avoid placing isolated filled cells that are not connected to anything meaningful.\n"
    "- Minimize the number of filled cells while maintaining a coherent and connected "
    "structure.";

const char* fill_clause(Difficulty d) {
  if (d == Difficulty::Easy) return "either '1' (solid) or '0' (empty)";
  return "a floating point number between 0 and 1, with one decimal place (e.g., 0.0, 0.1, "
         "0.2, ..., 1.0)";
}

}  // namespace

std::string render_prompt(const TaskInstance& inst, PromptStyle style,
                          const std::vector<const TaskInstance*>& examples) {
  const char* clause = fill_clause(inst.difficulty);
  std::ostringstream out;

  out << (style == PromptStyle::PhysicsNeutral ? kNeutralPreamble : kStructuralPreamble);
  out << "\n\n";

  if (style == PromptStyle::PhysicsNeutral) {
    out << "The goal is to predict the correct grid configuration by filling in all 'V' "
           "cells with "
        << clause << ", based on the surrounding structure and general consistency rules.";
  } else {
    out << "The goal is to predict the correct material distribution by filling in all 'V' "
           "cells with "
        << clause
        << ", based on the surrounding structure and implicit physical reasoning (such as "
           "load paths, supports, and forces).";
  }
  out << "\n\n";

  for (const TaskInstance* ex : examples) {
    out << "Example input grid with masked regions:\n\n"
        << render_grid(ex->input, ex->difficulty) << "\n\n"
        << "Corresponding completed output grid:\n\n"
        << render_grid(ex->ground_truth, ex->difficulty) << "\n\n";
  }

  switch (style) {
    case PromptStyle::Base: out << kBaseKnowledge; break;
    case PromptStyle::PhysicsEnhanced: out << kEnhancedKnowledge; break;
    case PromptStyle::PhysicsNeutral: out << kNeutralKnowledge; break;
  }
  out << "\n\n";

  out << "Below is the input grid with masked regions:\n\n"
      << render_grid(inst.input, inst.difficulty) << "\n\n";

  out << "Please output the completed grid by replacing all 'V' cells with " << clause
      << ".\n"
      << "Maintain the same format as the input: one row per line, cells separated by "
         "spaces, and the total number of rows and columns unchanged.\n"
      << "Return only the completed grid without any additional explanation.";

  return out.str();
}

std::vector<const TaskInstance*> pick_examples(const std::vector<TaskInstance>& dataset,
                                               const TaskInstance& inst, int shots,
                                               std::uint64_t seed) {
  if (shots <= 0) return {};
  std::vector<const TaskInstance*> pool;
  for (const TaskInstance& cand : dataset) {
    if (cand.subject != inst.subject || cand.difficulty != inst.difficulty) continue;
    if (cand.id == inst.id) continue;
    pool.push_back(&cand);
  }
  if (pool.empty()) {
    throw TaskError("EmptyPool: no few-shot candidates share subject and difficulty with " +
                    inst.id);
  }
  SplitMix64 rng(mix64(seed, fnv1a64(inst.id)));
  int k = std::min<int>(shots, static_cast<int>(pool.size()));
  std::vector<const TaskInstance*> out;
  out.reserve(static_cast<size_t>(k));
  for (int i : sample_without_replacement(static_cast<int>(pool.size()), k, rng)) {
    out.push_back(pool[static_cast<size_t>(i)]);
  }
  return out;
}

namespace {

// Tokenizes one completion line. Returns false when any token is neither a
// marker letter nor a numeric literal, meaning the line cannot be a grid row.
bool lenient_row(const std::string& line, std::vector<Cell>& out) {
  out.clear();
  std::istringstream in(line);
  std::string tok;
  while (in >> tok) {
    if (tok == "L") {
      out.push_back(Cell::load());
    } else if (tok == "S") {
      out.push_back(Cell::support());
    } else if (tok == "V") {
      out.push_back(Cell::voided());
    } else {
      const char* begin = tok.c_str();
      char* end = nullptr;
      double v = std::strtod(begin, &end);
      if (end == begin || *end != '\0') return false;
      out.push_back(Cell::of(v));
    }
  }
  return !out.empty();
}

}  // namespace

ParsedCompletion parse_completion(const std::string& raw) {
  std::vector<std::vector<Cell>> rows;
  std::vector<std::vector<Cell>> last_block;

  std::istringstream in(raw);
  std::string line;
  std::vector<Cell> cells;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (lenient_row(line, cells)) {
      rows.push_back(cells);
      continue;
    }
    // Prose, blank lines and code fences end the current block.
    if (!rows.empty()) last_block = std::move(rows);
    rows.clear();
  }
  if (!rows.empty()) last_block = std::move(rows);

  ParsedCompletion out;
  if (last_block.empty()) {
    out.failure = "ParseFailure: completion contains no grid lines";
    return out;
  }

  // Keep the longest suffix of the block whose rows agree with the bottom
  // row's width; a stray numbered sentence above the grid drops out here.
  size_t width = last_block.back().size();
  size_t first = last_block.size();
  while (first > 0 && last_block[first - 1].size() == width) first--;

  Grid g(static_cast<int>(last_block.size() - first), static_cast<int>(width));
  for (size_t r = first; r < last_block.size(); r++) {
    for (size_t c = 0; c < width; c++) {
      g.at(static_cast<int>(r - first), static_cast<int>(c)) = last_block[r][c];
    }
  }
  out.grid = std::move(g);
  return out;
}

}  // namespace topobench
