#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "topobench/grid.hpp"
#include "topobench/rng.hpp"
#include "topobench/scenario.hpp"

namespace topobench {

class TaskError : public std::runtime_error {
 public:
  explicit TaskError(const std::string& msg) : std::runtime_error(msg) {}
};

struct MaskResult {
  Grid input;                             // ground truth with mask cells set to V
  std::vector<std::pair<int, int>> mask;  // sorted row-major
};

// Replaces cells of the ground truth with V according to the subject:
// Cells(n) picks n random non-marker cells, Rows(n)/Cols(n) pick n random
// marker-free lines and mask them whole, Full masks every marker-free row.
// Markers are never masked. Throws TaskError("NotEnoughMaskable ...") when
// the subject needs more candidates than the grid offers.
MaskResult apply_mask(const Grid& ground_truth, Subject subject, SplitMix64& rng);

// Deterministic mask stream key for one instance of a dataset.
std::uint64_t mask_seed(std::uint64_t dataset_seed, int scenario_index, Subject subject,
                        Difficulty difficulty);

// Rotates everything an instance carries (grids, mask coordinates, gravity)
// by k clockwise quarter-turns.
TaskInstance rotate_instance(const TaskInstance& inst, int k);

enum class PromptStyle { Base, PhysicsEnhanced, PhysicsNeutral };

const char* prompt_style_name(PromptStyle s);
PromptStyle parse_prompt_style(const std::string& name);

extern const char kPromptTemplateVersion[];

// Builds the instruction prompt for an instance. `examples` supplies the
// few-shot pairs (their count is the shot count) and must come from the same
// subject and difficulty, never the instance itself; that pool discipline is
// the caller's job. Output is byte-stable for fixed inputs.
std::string render_prompt(const TaskInstance& inst, PromptStyle style,
                          const std::vector<const TaskInstance*>& examples);

// Picks `shots` few-shot examples for `inst` from the dataset (same subject
// and difficulty, excluding the instance), seeded by (seed, instance id).
// Throws TaskError("EmptyPool ...") if shots > 0 and no candidate exists.
std::vector<const TaskInstance*> pick_examples(const std::vector<TaskInstance>& dataset,
                                               const TaskInstance& inst, int shots,
                                               std::uint64_t seed);

// Completion parsing never throws: a completion that contains no grid-shaped
// block is a ParseFailure, reported through the empty optional.
struct ParsedCompletion {
  std::optional<Grid> grid;
  std::string failure;  // set when grid is empty
};

// Extracts the last contiguous block of grid-shaped lines from a raw model
// completion (prose and code fences around it are tolerated) and parses it
// leniently: L/S/V markers plus any numeric literal, including out-of-range
// values. Range and admissibility are judged later by the validity metric.
ParsedCompletion parse_completion(const std::string& raw);

}  // namespace topobench
