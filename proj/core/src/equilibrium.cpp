#include "ksbo/equilibrium.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ksbo {
namespace {

void check_point_sizes(const Matrix& objectives, const Vector& d, const Vector& u) {
  if (objectives.rows() == 0) throw std::invalid_argument("equilibrium: no candidate rows");
  if (d.size() != objectives.cols() || u.size() != objectives.cols())
    throw std::invalid_argument("equilibrium: point dimension mismatch");
  if (!objectives.allFinite() || !d.allFinite() || !u.allFinite())
    throw std::invalid_argument("equilibrium: non-finite inputs");
}

}  // namespace

Vector apply_preferences(const Vector& nadir, const PreferenceSpec& prefs) {
  if (prefs.bounds.size() != nadir.size())
    throw std::invalid_argument("equilibrium: preference dimension mismatch");
  Vector d = nadir;
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    const double c = prefs.bounds[i];
    if (std::isnan(c)) throw std::invalid_argument("equilibrium: NaN preference bound");
    d[i] = std::min(d[i], c);
  }
  return d;
}

EquilibriumResult ks_solution(const Matrix& objectives, const Vector& d, const Vector& u) {
  check_point_sizes(objectives, d, u);
  const Eigen::Index p = objectives.cols();
  for (Eigen::Index i = 0; i < p; ++i)
    if (d[i] == u[i])
      throw DegenerateRange("equilibrium: disagreement equals utopia on a coordinate");

  EquilibriumResult result;
  result.kind = EquilibriumKind::KS;
  for (Eigen::Index i = 0; i < p; ++i)
    if (d[i] < u[i]) result.disagreement_warn = true;

  const std::vector<std::uint8_t> mask = pareto_filter(objectives);
  result.min_ratio = -std::numeric_limits<double>::infinity();
  Vector ratios(p);
  for (Eigen::Index r = 0; r < objectives.rows(); ++r) {
    if (!mask[static_cast<std::size_t>(r)]) continue;
    double worst = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < p; ++i) {
      ratios[i] = (d[i] - objectives(r, i)) / (d[i] - u[i]);
      worst = std::min(worst, ratios[i]);
    }
    if (worst > result.min_ratio) {  // strict: ties keep the lowest index
      result.min_ratio = worst;
      result.index = static_cast<int>(r);
      result.ratios = ratios;
    }
  }
  result.values = objectives.row(result.index).transpose();
  return result;
}

RankTable make_rank_table(const Matrix& aux) {
  if (aux.rows() == 0) throw std::invalid_argument("equilibrium: empty auxiliary sample");
  if (!aux.allFinite()) throw std::invalid_argument("equilibrium: non-finite auxiliary sample");
  RankTable table;
  table.n_aux = static_cast<int>(aux.rows());
  table.sorted_cols.resize(static_cast<std::size_t>(aux.cols()));
  for (Eigen::Index c = 0; c < aux.cols(); ++c) {
    auto& col = table.sorted_cols[static_cast<std::size_t>(c)];
    col.assign(aux.col(c).data(), aux.col(c).data() + aux.rows());
    std::sort(col.begin(), col.end());
  }
  return table;
}

EquilibriumResult cks_solution(const Matrix& objectives, const RankTable& ranks) {
  if (objectives.rows() == 0) throw std::invalid_argument("equilibrium: no candidate rows");
  if (static_cast<Eigen::Index>(ranks.sorted_cols.size()) != objectives.cols())
    throw std::invalid_argument("equilibrium: rank table dimension mismatch");
  if (!objectives.allFinite()) throw std::invalid_argument("equilibrium: non-finite inputs");

  EquilibriumResult result;
  result.kind = EquilibriumKind::CKS;
  const Eigen::Index p = objectives.cols();
  const std::vector<std::uint8_t> mask = pareto_filter(objectives);
  result.min_ratio = -std::numeric_limits<double>::infinity();
  Vector row_ranks(p);
  for (Eigen::Index r = 0; r < objectives.rows(); ++r) {
    if (!mask[static_cast<std::size_t>(r)]) continue;
    double worst = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < p; ++i) {
      row_ranks[i] = ranks.rank(static_cast<int>(i), objectives(r, i));
      worst = std::min(worst, row_ranks[i]);
    }
    if (worst > result.min_ratio) {
      result.min_ratio = worst;
      result.index = static_cast<int>(r);
      result.ratios = row_ranks;
    }
  }
  result.values = objectives.row(result.index).transpose();
  return result;
}

EquilibriumResult cks_solution(const Matrix& objectives, const Matrix& aux) {
  return cks_solution(objectives, make_rank_table(aux));
}

Matrix rank_transform(const Matrix& objectives, const Matrix& aux) {
  if (aux.cols() != objectives.cols())
    throw std::invalid_argument("equilibrium: rank transform dimension mismatch");
  const RankTable table = make_rank_table(aux);
  Matrix out(objectives.rows(), objectives.cols());
  for (Eigen::Index r = 0; r < objectives.rows(); ++r)
    for (Eigen::Index c = 0; c < objectives.cols(); ++c)
      out(r, c) = table.rank(static_cast<int>(c), objectives(r, c));
  return out;
}

double optimality_gap(const Vector& estimate_values, const ReferenceEquilibrium& reference) {
  double achieved = std::numeric_limits<double>::infinity();
  switch (reference.kind) {
    case EquilibriumKind::KS:
    case EquilibriumKind::KSpref: {
      if (reference.d.size() != estimate_values.size() ||
          reference.u.size() != estimate_values.size())
        throw std::invalid_argument("equilibrium: reference dimension mismatch");
      for (Eigen::Index i = 0; i < estimate_values.size(); ++i) {
        const double denom = reference.d[i] - reference.u[i];
        if (denom == 0.0)
          throw DegenerateRange("equilibrium: degenerate reference range");
        achieved = std::min(achieved, (reference.d[i] - estimate_values[i]) / denom);
      }
      break;
    }
    case EquilibriumKind::CKS: {
      if (reference.ranks == nullptr)
        throw std::invalid_argument("equilibrium: CKS reference lacks a rank table");
      if (static_cast<Eigen::Index>(reference.ranks->sorted_cols.size()) !=
          estimate_values.size())
        throw std::invalid_argument("equilibrium: reference dimension mismatch");
      for (Eigen::Index i = 0; i < estimate_values.size(); ++i)
        achieved = std::min(achieved,
                            reference.ranks->rank(static_cast<int>(i), estimate_values[i]));
      break;
    }
  }
  return reference.min_ratio - achieved;
}

namespace {

// True when row `q` dominates row `r` (componentwise <=, somewhere <).
inline bool dominates_row(const double* q, const double* r, int p) {
  bool strict = false;
  for (int c = 0; c < p; ++c) {
    if (q[c] > r[c]) return false;
    if (q[c] < r[c]) strict = true;
  }
  return strict;
}

// True when row `r` is dominated by any other row of `values`.
inline bool is_dominated(const double* values, int n, int p, int r) {
  const double* row = values + static_cast<std::size_t>(r) * p;
  for (int q = 0; q < n; ++q) {
    if (q == r) continue;
    if (dominates_row(values + static_cast<std::size_t>(q) * p, row, p)) return true;
  }
  return false;
}

}  // namespace

int draw_equilibrium(const double* values, int n, int p, EquilibriumKind kind,
                     const Vector* preference_bounds, const RankTable* ranks,
                     DrawEqWorkspace& ws, double* out_values) {
  // The per-row objective (min rank, or min normalized ratio once the
  // utopia/nadir frame is fixed) is componentwise nonincreasing in the
  // objective values, so any dominated row scores no better than one of its
  // dominators and the maxmin over all rows is attained on the front.  That
  // makes the full Pareto filter unnecessary: scan every row, and resolve
  // exact ties by a dominance check restricted to the tied rows (a
  // dominator of a tied row is itself tied, so the restriction is exact).
  if (n == 1) {
    for (int c = 0; c < p; ++c) out_values[c] = values[c];
    return 0;
  }

  double best_worst = -std::numeric_limits<double>::infinity();
  ws.ties.clear();

  if (kind == EquilibriumKind::CKS) {
    for (int r = 0; r < n; ++r) {
      const double* row = values + static_cast<std::size_t>(r) * p;
      double worst = std::numeric_limits<double>::infinity();
      bool pruned = false;
      for (int c = 0; c < p; ++c) {
        const double rank = ranks->rank(c, row[c]);
        if (rank < worst) {
          worst = rank;
          if (worst < best_worst) {  // cannot reach the incumbent any more
            pruned = true;
            break;
          }
        }
      }
      if (pruned) continue;
      if (worst > best_worst) {
        best_worst = worst;
        ws.ties.clear();
      }
      ws.ties.push_back(r);
    }
  } else {
    // Draw-specific utopia: column minima over all rows coincide with the
    // front minima.  Draw-specific nadir: per column, walk rows downward
    // from the column maximum until one is nondominated; dominated rows
    // stay marked across columns.
    ws.scratch.resize(static_cast<std::size_t>(3 * p));
    double* u = ws.scratch.data();
    double* d = ws.scratch.data() + p;
    double* inv = ws.scratch.data() + 2 * p;
    for (int c = 0; c < p; ++c) {
      u[c] = values[c];
      for (int r = 1; r < n; ++r) {
        const double v = values[static_cast<std::size_t>(r) * p + c];
        if (v < u[c]) u[c] = v;
      }
    }
    ws.dominated.assign(static_cast<std::size_t>(n), 0);
    for (int c = 0; c < p; ++c) {
      for (;;) {
        int arg = -1;
        double top = -std::numeric_limits<double>::infinity();
        for (int r = 0; r < n; ++r) {
          if (ws.dominated[static_cast<std::size_t>(r)]) continue;
          const double v = values[static_cast<std::size_t>(r) * p + c];
          if (v > top) {
            top = v;
            arg = r;
          }
        }
        if (arg < 0) {  // unreachable: a finite set always has a front
          d[c] = u[c];
          break;
        }
        if (is_dominated(values, n, p, arg)) {
          ws.dominated[static_cast<std::size_t>(arg)] = 1;
          continue;
        }
        d[c] = top;
        break;
      }
    }
    if (kind == EquilibriumKind::KSpref) {
      for (int c = 0; c < p; ++c) d[c] = std::min(d[c], (*preference_bounds)[c]);
    }
    // Coordinates whose draw-specific range collapses (or inverts, under a
    // preference bound tighter than the draw utopia) carry no usable scale
    // in this draw and are dropped from the min.
    for (int c = 0; c < p; ++c) {
      const double denom = d[c] - u[c];
      inv[c] = denom > 0.0 ? 1.0 / denom : 0.0;
    }
    for (int r = 0; r < n; ++r) {
      const double* row = values + static_cast<std::size_t>(r) * p;
      double worst = std::numeric_limits<double>::infinity();
      bool pruned = false;
      for (int c = 0; c < p; ++c) {
        if (inv[c] == 0.0) continue;
        const double ratio = (d[c] - row[c]) * inv[c];
        if (ratio < worst) {
          worst = ratio;
          if (worst < best_worst) {
            pruned = true;
            break;
          }
        }
      }
      if (pruned) continue;
      if (worst > best_worst) {
        best_worst = worst;
        ws.ties.clear();
      }
      ws.ties.push_back(r);
    }
  }

  // Lowest-index nondominated row among the ties; with a single candidate
  // the dominance check is unnecessary (its dominators would be tied too).
  int best = ws.ties.front();
  if (ws.ties.size() > 1) {
    for (const int t : ws.ties) {
      bool dominated = false;
      const double* trow = values + static_cast<std::size_t>(t) * p;
      for (const int q : ws.ties) {
        if (q == t) continue;
        if (dominates_row(values + static_cast<std::size_t>(q) * p, trow, p)) {
          dominated = true;
          break;
        }
      }
      if (!dominated) {
        best = t;
        break;
      }
    }
  }

  const double* row = values + static_cast<std::size_t>(best) * p;
  for (int c = 0; c < p; ++c) out_values[c] = row[c];
  return best;
}

}  // namespace ksbo
