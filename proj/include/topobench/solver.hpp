#pragma once

#include <Eigen/Core>
#include <Eigen/Sparse>
#include <stdexcept>
#include <vector>

#include "topobench/grid.hpp"
#include "topobench/scenario.hpp"

namespace topobench {

// Density-based minimum-compliance optimizer on a regular grid of bilinear
// quadrilateral plane-stress elements (the classic 99-line formulation).
// Element (r, c) of the grid maps to the unit square with corner nodes
// (r,c), (r,c+1), (r+1,c+1), (r+1,c); element stiffness scales as
// E(x) = x^p * E0.

struct SolverConfig {
  double target_density = 0.1;
  double penalization = 3.0;
  int iterations = 10;
  double smoothing = 0.1;       // filter radius = max(1, smoothing * max(rows, cols))
  double min_density = 0.001;
  double delete_threshold = 0.5;
  double self_weight = 0.0;
  double move_limit = 0.2;
  double young_modulus = 1.0;
  double poisson_ratio = 0.3;
};

class SolverError : public std::runtime_error {
 public:
  explicit SolverError(const std::string& msg) : std::runtime_error(msg) {}
};

using DensityField = Eigen::ArrayXXd;  // (rows, cols), row index first

// 8x8 stiffness of a unit square element with unit Young's modulus.
Eigen::Matrix<double, 8, 8> element_stiffness(double poisson_ratio);

// Discretized boundary conditions: unit downward nodal forces on the top
// corners of every load cell, all four corner nodes of every support cell
// fully fixed.
struct FEProblem {
  int rows = 0;
  int cols = 0;
  std::vector<int> load_cells;     // element index r * cols + c
  std::vector<int> support_cells;
  double young_modulus = 1.0;
  double poisson_ratio = 0.3;
  double self_weight = 0.0;
};

FEProblem make_problem(const Scenario& sc, const SolverConfig& cfg);

struct SolveResult {
  Eigen::VectorXd displacements;  // full dof vector, fixed dofs zero
  double compliance = 0.0;
};

// Assembles K(x) and solves K u = f. Throws SolverError("SingularSystem ...")
// when the system has no supports or the factorization fails.
SolveResult assemble_and_solve(const FEProblem& p, const DensityField& x, double penalization);

// dC/dx_e = -p x^(p-1) E0 u_e^T k0 u_e, evaluated from a solved displacement
// field. All entries are <= 0.
DensityField compliance_sensitivity(const FEProblem& p, const DensityField& x,
                                    double penalization, const Eigen::VectorXd& u);

// Convex neighborhood average with squared hat weights
// max(0, 1 + radius - dist)^2 over Euclidean element distance. radius <= 0 is
// the identity.
DensityField sensitivity_filter(const DensityField& dc, double radius);

// Optimality-criteria step: x * sqrt(-dc / lambda) clamped by the move limit
// and [min_density, 1], with lambda bisected until the mean density hits
// `target` (within 1e-4). Throws SolverError("BisectionFailure ...") when the
// target volume is outside what the clamps allow.
DensityField oc_update(const DensityField& x, const DensityField& dc, double target,
                       double move_limit, double min_density);

struct OptimizeResult {
  DensityField densities;                  // raw field after the final update
  std::vector<double> compliance_history;  // one entry per iteration
  Grid hard;                               // one-decimal densities, L/S re-inscribed
  Grid easy;                               // hard binarized at delete_threshold
};

// Fixed-iteration SIMP loop from a uniform initial field. The hard grid is
// the field rounded (half away from zero) to one decimal with markers
// re-inscribed, then tidied for printing: the strongest gravity-and-lateral
// load route is brought up to delete_threshold (mirrored for symmetric
// scenarios) and floating material is swept away, so the published grids
// always carry a connected load path and no stranded clusters. The easy grid
// is the hard grid binarized at delete_threshold.
OptimizeResult optimize(const Scenario& sc, const SolverConfig& cfg);

double filter_radius(const SolverConfig& cfg, int rows, int cols);

}  // namespace topobench
