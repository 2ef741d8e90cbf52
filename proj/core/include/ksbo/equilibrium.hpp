#pragma once

#include "ksbo/common.hpp"
#include "ksbo/pareto.hpp"

#include <cstdint>
#include <memory>
#include <vector>

namespace ksbo {

enum class EquilibriumKind { KS, KSpref, CKS };

struct EquilibriumResult {
  int index = -1;        // row index into the candidate matrix
  Vector values;         // objective vector of the selected row
  Vector ratios;         // per-objective ratios (KS) or ranks (CKS)
  double min_ratio = 0;  // the maximized minimum
  EquilibriumKind kind = EquilibriumKind::KS;
  bool degenerate = false;        // guarded fallback was needed (reporting only)
  bool disagreement_warn = false; // d not dominated by u on some coordinate
};

// Upper preference bounds c_i on the disagreement point; +inf keeps the
// estimated nadir coordinate.
struct PreferenceSpec {
  Vector bounds;
};

// d~_i = min(nadir_i, c_i).
Vector apply_preferences(const Vector& nadir, const PreferenceSpec& prefs);

// Kalai-Smorodinsky selection: maximizes min_i (d_i - s_i)/(d_i - u_i) over
// the nondominated rows of `objectives`.  Ties go to the lowest row index.
// Throws DegenerateRange when d_i == u_i for some i.
EquilibriumResult ks_solution(const Matrix& objectives, const Vector& d, const Vector& u);

// Empirical-rank table over an auxiliary sample: rank(col, v) is the
// fraction of auxiliary rows with value >= v in that column (the indicator
// counts weakly worse points, so smaller objective values rank higher).
struct RankTable {
  std::vector<std::vector<double>> sorted_cols;
  int n_aux = 0;

  double rank(int col, double value) const {
    const auto& column = sorted_cols[static_cast<std::size_t>(col)];
    const auto it = std::lower_bound(column.begin(), column.end(), value);
    return static_cast<double>(column.end() - it) / static_cast<double>(n_aux);
  }
};

RankTable make_rank_table(const Matrix& aux);

// Copula-KS selection: maximizes min_i rank_i(s) over the nondominated rows.
EquilibriumResult cks_solution(const Matrix& objectives, const RankTable& ranks);
EquilibriumResult cks_solution(const Matrix& objectives, const Matrix& aux);

// Per-row rank transform of `objectives` against the auxiliary sample.
Matrix rank_transform(const Matrix& objectives, const Matrix& aux);

// Frozen description of a true equilibrium, sufficient to score estimates:
// the achieved optimum of the min-ratio (or min-rank) plus whatever defines
// the ratios.
struct ReferenceEquilibrium {
  EquilibriumKind kind = EquilibriumKind::KS;
  double min_ratio = 0.0;           // optimum of the maxmin
  Vector d;                         // KS/KSpref disagreement point
  Vector u;                         // KS/KSpref utopia point
  std::shared_ptr<const RankTable> ranks;  // CKS rank table
};

// Nonnegative optimality gap of an estimated solution's objective vector.
double optimality_gap(const Vector& estimate_values, const ReferenceEquilibrium& reference);

// ---- simulation-loop internals ----------------------------------------

// Workspace + guarded equilibrium map for posterior draws.  Unlike the
// public selectors this never throws on degenerate geometry: objectives
// whose draw-specific range collapses (or whose preference bound falls
// below the draw utopia, d_i <= u_i) are dropped from the min, and a
// single-point front short-circuits to that point.  `values` is row-major
// n x p.  Returns the selected row and writes its objective vector to
// `out_values`.
//
// The selected row is the front-restricted maxmin, but the front is never
// materialized: the per-row objective (min ratio / min rank) is
// componentwise monotone, so its maximum over all rows is attained on the
// front, and only exact ties need a dominance check among themselves.
struct DrawEqWorkspace {
  std::vector<std::uint8_t> dominated;  // rows proven dominated (nadir walk)
  std::vector<int> ties;                // rows tied at the incumbent maxmin
  std::vector<double> scratch;          // utopia / nadir / inverse ranges
};

int draw_equilibrium(const double* values, int n, int p, EquilibriumKind kind,
                     const Vector* preference_bounds, const RankTable* ranks,
                     DrawEqWorkspace& ws, double* out_values);

}  // namespace ksbo
