#include "ksbo/pareto.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ksbo {
namespace {

// a dominates b: a <= b componentwise with at least one strict inequality.
inline bool dominates(const double* a, const double* b, int p) {
  bool strict = false;
  for (int c = 0; c < p; ++c) {
    if (a[c] > b[c]) return false;
    if (a[c] < b[c]) strict = true;
  }
  return strict;
}

}  // namespace

void pareto_filter_rowmajor(const double* values, int n, int p, ParetoWorkspace& ws) {
  ws.order.resize(static_cast<std::size_t>(n));
  ws.sums.resize(static_cast<std::size_t>(n));
  ws.mask.assign(static_cast<std::size_t>(n), 1);

  for (int i = 0; i < n; ++i) {
    double s = 0.0;
    const double* row = values + static_cast<std::size_t>(i) * p;
    for (int c = 0; c < p; ++c) s += row[c];
    ws.sums[static_cast<std::size_t>(i)] = s;
    ws.order[static_cast<std::size_t>(i)] = i;
  }
  std::sort(ws.order.begin(), ws.order.end(),
            [&](int a, int b) { return ws.sums[static_cast<std::size_t>(a)] <
                                       ws.sums[static_cast<std::size_t>(b)]; });

  // A dominator of row i has sum <= sum_i (strict dominance implies a
  // strictly smaller sum, but ties are scanned anyway; equal rows fail the
  // strictness test inside dominates()).
  for (int oi = 0; oi < n; ++oi) {
    const int i = ws.order[static_cast<std::size_t>(oi)];
    const double* row_i = values + static_cast<std::size_t>(i) * p;
    for (int oj = 0; oj < oi; ++oj) {
      const int j = ws.order[static_cast<std::size_t>(oj)];
      if (!ws.mask[static_cast<std::size_t>(j)]) continue;  // dominated rows can't be sole dominators
      if (dominates(values + static_cast<std::size_t>(j) * p, row_i, p)) {
        ws.mask[static_cast<std::size_t>(i)] = 0;
        break;
      }
    }
  }
}

std::vector<std::uint8_t> pareto_filter(const Matrix& objectives, int threads) {
  const int n = static_cast<int>(objectives.rows());
  const int p = static_cast<int>(objectives.cols());
  if (n == 0 || p == 0) throw std::invalid_argument("pareto: empty objective matrix");
  if (!objectives.allFinite())
    throw std::invalid_argument("pareto: non-finite objective values");

  // Row-major copy once; the scan below is row-oriented.
  RowMatrix values = objectives;
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(n), 1);

  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> sums(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) sums[static_cast<std::size_t>(i)] = values.row(i).sum();
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return sums[static_cast<std::size_t>(a)] < sums[static_cast<std::size_t>(b)];
  });
  std::vector<int> rank_of(static_cast<std::size_t>(n));
  for (int oi = 0; oi < n; ++oi) rank_of[static_cast<std::size_t>(order[static_cast<std::size_t>(oi)])] = oi;

  // Row partition over threads; each row's verdict depends only on the
  // immutable value table, so the partition is free of data races and the
  // result is independent of the worker count.
  parallel_for(n, threads, [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t i = lo; i < hi; ++i) {
      const double* row_i = values.data() + static_cast<std::size_t>(i) * p;
      const int my_rank = rank_of[static_cast<std::size_t>(i)];
      for (int oj = 0; oj < my_rank; ++oj) {
        const int j = order[static_cast<std::size_t>(oj)];
        if (dominates(values.data() + static_cast<std::size_t>(j) * p, row_i, p)) {
          mask[static_cast<std::size_t>(i)] = 0;
          break;
        }
      }
    }
  });
  return mask;
}

std::pair<Vector, Vector> utopia_nadir(const Matrix& objectives,
                                       const std::vector<std::uint8_t>& mask) {
  const Eigen::Index n = objectives.rows();
  const Eigen::Index p = objectives.cols();
  if (static_cast<Eigen::Index>(mask.size()) != n)
    throw std::invalid_argument("pareto: mask size mismatch");
  Vector utopia = Vector::Constant(p, std::numeric_limits<double>::infinity());
  Vector nadir = Vector::Constant(p, -std::numeric_limits<double>::infinity());
  bool any = false;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!mask[static_cast<std::size_t>(i)]) continue;
    any = true;
    utopia = utopia.cwiseMin(objectives.row(i).transpose());
    nadir = nadir.cwiseMax(objectives.row(i).transpose());
  }
  if (!any) throw std::invalid_argument("pareto: no nondominated rows");
  return {utopia, nadir};
}

std::pair<Vector, Vector> utopia_nadir(const Matrix& objectives) {
  return utopia_nadir(objectives, pareto_filter(objectives));
}

ParetoArchive ParetoArchive::make(const Matrix& objectives, int threads) {
  ParetoArchive archive;
  archive.objectives = objectives;
  archive.mask = pareto_filter(objectives, threads);
  for (int i = 0; i < static_cast<int>(archive.mask.size()); ++i)
    if (archive.mask[static_cast<std::size_t>(i)]) archive.front_indices.push_back(i);
  std::tie(archive.utopia, archive.nadir) = utopia_nadir(objectives, archive.mask);
  return archive;
}

}  // namespace ksbo
