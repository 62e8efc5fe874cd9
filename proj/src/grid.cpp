#include "topobench/grid.hpp"

#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <sstream>

namespace topobench {

const char* difficulty_name(Difficulty d) {
  return d == Difficulty::Easy ? "easy" : "hard";
}

Difficulty parse_difficulty(const std::string& name) {
  if (name == "easy") return Difficulty::Easy;
  if (name == "hard") return Difficulty::Hard;
  throw GridError(GridErrorKind::BadToken, "unknown difficulty: " + name);
}

namespace {

// Admissible numeric literals, by difficulty. Easy allows bare 0/1; Hard also
// allows the one-decimal forms 0.0 .. 1.0. Bare 0/1 stay accepted on Hard
// because model outputs drop the decimal point often enough to matter.
bool admissible_literal(const std::string& tok, Difficulty d) {
  if (tok == "0" || tok == "1") return true;
  if (d == Difficulty::Easy) return false;
  if (tok.size() != 3 || tok[1] != '.') return false;
  if (!std::isdigit(static_cast<unsigned char>(tok[0])) ||
      !std::isdigit(static_cast<unsigned char>(tok[2]))) {
    return false;
  }
  return tok == "1.0" || tok[0] == '0';
}

bool parse_number(const std::string& tok, double* out) {
  const char* begin = tok.c_str();
  char* end = nullptr;
  double v = std::strtod(begin, &end);
  if (end != begin + tok.size() || tok.empty()) return false;
  *out = v;
  return true;
}

Cell parse_token(const std::string& tok, Difficulty d, int row) {
  if (tok == "L") return Cell::load();
  if (tok == "S") return Cell::support();
  if (tok == "V") return Cell::voided();
  double v = 0.0;
  if (parse_number(tok, &v)) {
    if (v < 0.0 || v > 1.0) {
      throw GridError(GridErrorKind::OutOfRange,
                      "value out of range in row " + std::to_string(row) + ": " + tok);
    }
    if (!admissible_literal(tok, d)) {
      throw GridError(GridErrorKind::BadToken,
                      "inadmissible numeric literal in row " + std::to_string(row) + ": " + tok);
    }
    return Cell::of(v);
  }
  throw GridError(GridErrorKind::BadToken,
                  "unrecognized token in row " + std::to_string(row) + ": " + tok);
}

}  // namespace

Grid parse_grid(const std::string& text, Difficulty difficulty) {
  std::vector<std::vector<Cell>> rows;
  std::istringstream lines(text);
  std::string line;
  int row_index = 0;
  while (std::getline(lines, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream toks(line);
    std::vector<Cell> row;
    std::string tok;
    while (toks >> tok) row.push_back(parse_token(tok, difficulty, row_index));
    if (row.empty()) {
      throw GridError(GridErrorKind::RaggedRows,
                      "empty row " + std::to_string(row_index));
    }
    rows.push_back(std::move(row));
    row_index++;
  }
  if (rows.empty()) throw GridError(GridErrorKind::RaggedRows, "empty grid");
  size_t cols = rows[0].size();
  for (size_t r = 1; r < rows.size(); r++) {
    if (rows[r].size() != cols) {
      throw GridError(GridErrorKind::RaggedRows,
                      "row " + std::to_string(r) + " has " + std::to_string(rows[r].size()) +
                          " cells, expected " + std::to_string(cols));
    }
  }
  Grid g(static_cast<int>(rows.size()), static_cast<int>(cols));
  for (int r = 0; r < g.rows; r++)
    for (int c = 0; c < g.cols; c++) g.at(r, c) = rows[r][c];
  return g;
}

std::string render_grid(const Grid& g, Difficulty difficulty) {
  std::string out;
  out.reserve(static_cast<size_t>(g.rows) * g.cols * 4);
  for (int r = 0; r < g.rows; r++) {
    for (int c = 0; c < g.cols; c++) {
      if (c > 0) out += ' ';
      const Cell& cell = g.at(r, c);
      switch (cell.kind) {
        case CellKind::Load: out += 'L'; break;
        case CellKind::Support: out += 'S'; break;
        case CellKind::Void: out += 'V'; break;
        case CellKind::Value: {
          if (difficulty == Difficulty::Easy && (cell.value == 0.0 || cell.value == 1.0)) {
            out += (cell.value == 1.0 ? '1' : '0');
          } else {
            char buf[32];
            std::snprintf(buf, sizeof(buf), "%.1f", cell.value);
            out += buf;
          }
          break;
        }
      }
    }
    if (r + 1 < g.rows) out += '\n';
  }
  return out;
}

Grid binarize(const Grid& g, double threshold) {
  Grid out = g;
  for (Cell& cell : out.cells) {
    if (cell.kind == CellKind::Void) {
      throw GridError(GridErrorKind::VoidPresent, "cannot binarize a grid with V cells");
    }
    if (cell.kind == CellKind::Value) {
      cell.value = cell.value >= threshold ? 1.0 : 0.0;
    }
  }
  return out;
}

std::pair<int, int> rotate_cell(int r, int c, int rows, int cols, int k) {
  k = ((k % 4) + 4) % 4;
  for (int i = 0; i < k; i++) {
    int nr = c;
    int nc = rows - 1 - r;
    r = nr;
    c = nc;
    std::swap(rows, cols);
  }
  return {r, c};
}

Grid rotate90(const Grid& g, int k) {
  k = ((k % 4) + 4) % 4;
  Grid cur = g;
  for (int i = 0; i < k; i++) {
    Grid next(cur.cols, cur.rows);
    for (int r = 0; r < cur.rows; r++)
      for (int c = 0; c < cur.cols; c++) next.at(c, cur.rows - 1 - r) = cur.at(r, c);
    cur = std::move(next);
  }
  return cur;
}

GravityDir rotate_gravity(GravityDir g, int k) {
  k = ((k % 4) + 4) % 4;
  for (int i = 0; i < k; i++) g = {g.dc, -g.dr};
  return g;
}

}  // namespace topobench
