#pragma once

#include "ksbo/common.hpp"

#include <cstdint>
#include <utility>
#include <vector>

namespace ksbo {

// Nondomination mask under weak dominance with at least one strict
// inequality (minimization): equal rows do not dominate each other, so
// duplicates of a front point all stay on the front.
std::vector<std::uint8_t> pareto_filter(const Matrix& objectives, int threads = 1);

// Componentwise best (utopia) and worst (nadir) over the nondominated rows.
std::pair<Vector, Vector> utopia_nadir(const Matrix& objectives);
std::pair<Vector, Vector> utopia_nadir(const Matrix& objectives,
                                       const std::vector<std::uint8_t>& mask);

// Objectives bundled with their front mask and the derived utopia/nadir.
struct ParetoArchive {
  Matrix objectives;
  std::vector<std::uint8_t> mask;
  std::vector<int> front_indices;
  Vector utopia;
  Vector nadir;

  static ParetoArchive make(const Matrix& objectives, int threads = 1);
};

// Allocation-free filter for the simulation inner loops.  Rows are visited
// in increasing objective-sum order: a row can only be dominated by rows
// whose sum is <= its own (strictly smaller for a strict inequality, but
// equal sums are scanned too so exact duplicates stay mutually
// nondominated).  Front rows near the ideal point have short prefixes, and
// dominated rows exit on their first dominator, which makes the quadratic
// scan cheap in practice.
struct ParetoWorkspace {
  std::vector<int> order;
  std::vector<double> sums;
  std::vector<std::uint8_t> mask;
};

// `values` is row-major n x p.  Fills ws.mask (1 = nondominated).
void pareto_filter_rowmajor(const double* values, int n, int p, ParetoWorkspace& ws);

}  // namespace ksbo
