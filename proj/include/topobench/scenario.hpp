#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "topobench/grid.hpp"

namespace topobench {

// Contiguous run of cells along the load or support edge.
struct Span {
  int start = 0;
  int width = 0;
  bool operator==(const Span& o) const { return start == o.start && width == o.width; }
};

// Boundary-condition layout in the canonical frame: loads occupy `load`
// columns of the top row, supports occupy `support` columns of the bottom row,
// gravity pulls down. Enumerated scenarios use widths 3..6; the type itself
// only requires spans to fit the domain so ad-hoc layouts can be wider.
struct Scenario {
  int rows = 10;
  int cols = 10;
  Span load;
  Span support;
  int index = -1;  // position within an enumeration, -1 for ad-hoc scenarios

  bool operator==(const Scenario& o) const {
    return rows == o.rows && cols == o.cols && load == o.load && support == o.support;
  }
};

std::string scenario_id(int index);  // "s000", "s001", ...

class ScenarioError : public std::runtime_error {
 public:
  explicit ScenarioError(const std::string& msg) : std::runtime_error(msg) {}
};

// All valid placements of the given widths at starts 0, stride, 2*stride, ...
std::vector<Span> uniform_spans(int cols, const std::vector<int>& widths, int stride);

// Fixed placement table for the standard 10-column domain: width 3 at starts
// {1,3,5}, width 4 at {2,3,4}, width 5 at {2,3}, width 6 at {2}. Nine
// placements per edge, chosen so any load/support pair leaves at least three
// marker-free columns (the Columns(3) subject needs them).
std::vector<Span> standard_spans(int cols);

// Cross product of load and support placements in lexicographic order of
// (load.width, load.start, support.width, support.start). Throws
// ScenarioError("EmptyEnumeration ...") when no placement fits.
std::vector<Scenario> enumerate_scenarios(int rows, int cols, const std::vector<Span>& spans);
std::vector<Scenario> enumerate_scenarios(int rows, int cols, const std::vector<int>& widths,
                                          int stride);
std::vector<Scenario> standard_scenarios(int rows, int cols);

// Masking subjects, in canonical stratum order.
enum class Subject {
  Cells1,
  Cells5,
  Cells10,
  Rows1,
  Rows3,
  Cols1,
  Cols3,
  Full,
};

inline constexpr Subject kAllSubjects[] = {
    Subject::Cells1, Subject::Cells5, Subject::Cells10, Subject::Rows1,
    Subject::Rows3,  Subject::Cols1,  Subject::Cols3,   Subject::Full,
};

const char* subject_slug(Subject s);       // "cell1", "row3", "full", ...
const char* subject_display(Subject s);    // "1 Random Cell", ...
Subject parse_subject(const std::string& slug);

// One benchmark sample: a masked input grid, its ground truth, and where the
// mask sits. rotation counts clockwise quarter-turns already applied; gravity
// is the pull direction in this instance's own frame.
struct TaskInstance {
  std::string id;
  Subject subject = Subject::Cells1;
  Difficulty difficulty = Difficulty::Easy;
  int rotation = 0;
  GravityDir gravity;
  Grid input;
  Grid ground_truth;
  std::vector<std::pair<int, int>> mask;  // sorted row-major
};

std::string instance_id(int scenario_index, Subject s, Difficulty d);

struct SolverConfig;  // solver.hpp

// Optimizes each scenario once and derives one instance per subject x
// difficulty. Masks are drawn from a stream keyed by (seed, scenario index,
// subject, difficulty) so any instance can be regenerated in isolation.
// Output order: scenario index, then subject, then difficulty.
std::vector<TaskInstance> build_dataset(const std::vector<Scenario>& scenarios,
                                        const SolverConfig& solver, std::uint64_t seed,
                                        int concurrency = 0);

// Line-delimited JSON persistence.
std::string instance_to_json(const TaskInstance& inst);
TaskInstance instance_from_json(const std::string& line);
void write_dataset(std::ostream& out, const std::vector<TaskInstance>& instances);
std::vector<TaskInstance> read_dataset(std::istream& in);
std::vector<TaskInstance> load_dataset(const std::string& path);

}  // namespace topobench
