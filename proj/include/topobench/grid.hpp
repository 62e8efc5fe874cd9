#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace topobench {

// Cell of a material-distribution grid. Markers are load anchors (L),
// support anchors (S) and masked cells (V); everything else is a numeric
// density. The [0,1] density range is enforced by strict parsing and by the
// generator, not by this type: metric evaluation must be able to hold
// out-of-range values coming from lenient completion parsing.
enum class CellKind : std::uint8_t { Value, Load, Support, Void };

struct Cell {
  CellKind kind = CellKind::Value;
  double value = 0.0;

  static Cell load() { return {CellKind::Load, 0.0}; }
  static Cell support() { return {CellKind::Support, 0.0}; }
  static Cell voided() { return {CellKind::Void, 0.0}; }
  static Cell of(double v) { return {CellKind::Value, v}; }

  bool is_marker() const { return kind == CellKind::Load || kind == CellKind::Support; }
  bool is_value() const { return kind == CellKind::Value; }
  // Solid cells carry force: any density above the threshold, or an L/S marker.
  bool is_solid(double threshold = 0.0) const {
    return is_marker() || (kind == CellKind::Value && value > threshold);
  }

  bool operator==(const Cell& o) const {
    if (kind != o.kind) return false;
    return kind != CellKind::Value || value == o.value;
  }
  bool operator!=(const Cell& o) const { return !(*this == o); }
};

enum class Difficulty { Easy, Hard };

const char* difficulty_name(Difficulty d);
Difficulty parse_difficulty(const std::string& name);

struct Grid {
  int rows = 0;
  int cols = 0;
  std::vector<Cell> cells;  // row-major

  Grid() = default;
  Grid(int r, int c) : rows(r), cols(c), cells(static_cast<size_t>(r) * c) {}

  Cell& at(int r, int c) { return cells[static_cast<size_t>(r) * cols + c]; }
  const Cell& at(int r, int c) const { return cells[static_cast<size_t>(r) * cols + c]; }
  bool in_bounds(int r, int c) const { return r >= 0 && r < rows && c >= 0 && c < cols; }
  bool same_shape(const Grid& o) const { return rows == o.rows && cols == o.cols; }

  bool operator==(const Grid& o) const {
    return rows == o.rows && cols == o.cols && cells == o.cells;
  }
  bool operator!=(const Grid& o) const { return !(*this == o); }
};

enum class GridErrorKind { RaggedRows, BadToken, OutOfRange, VoidPresent };

class GridError : public std::runtime_error {
 public:
  GridError(GridErrorKind kind, const std::string& msg)
      : std::runtime_error(msg), kind_(kind) {}
  GridErrorKind kind() const { return kind_; }

 private:
  GridErrorKind kind_;
};

// Strict text-format parser: rows separated by newlines, cells by spaces.
// Easy accepts tokens {0,1,L,S,V}; Hard additionally accepts one-decimal
// literals 0.0 .. 1.0. Numeric tokens outside [0,1] raise OutOfRange, other
// unrecognized tokens raise BadToken, uneven row lengths raise RaggedRows.
Grid parse_grid(const std::string& text, Difficulty difficulty);

// Inverse of parse_grid: Easy renders densities as 0/1, Hard normalizes to one
// decimal place. No trailing newline.
std::string render_grid(const Grid& g, Difficulty difficulty);

// Thresholds every density to 0/1 (value >= threshold becomes 1). Markers are
// preserved; Void cells raise VoidPresent.
Grid binarize(const Grid& g, double threshold);

// Rotates the grid k quarter-turns clockwise (k may be any integer).
Grid rotate90(const Grid& g, int k);

// Unit lattice vector giving the direction gravity pulls, (dr, dc). The
// canonical generator frame uses (1, 0): loads on the top row fall toward
// supports on the bottom row.
struct GravityDir {
  int dr = 1;
  int dc = 0;
  bool operator==(const GravityDir& o) const { return dr == o.dr && dc == o.dc; }
};

// Co-rotates a gravity vector with a clockwise grid rotation: one quarter-turn
// maps (dr, dc) to (dc, -dr).
GravityDir rotate_gravity(GravityDir g, int k);

// Image of cell (r, c) of a rows x cols grid under rotate90(..., k).
std::pair<int, int> rotate_cell(int r, int c, int rows, int cols, int k);

}  // namespace topobench
