#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace ksbo {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Design = Eigen::RowVectorXd;
// Row-major storage for per-draw objective tables: the hot loops walk one
// point's p objectives at a time.
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// A covariance matrix could not be factorized even at the maximum jitter.
struct FactorizationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A request would exceed a configured size cap (joint posteriors, domain
// materialization).
struct CapacityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Conditioning on a point with (numerically) zero posterior variance.
struct DegenerateConditioning : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Disagreement/utopia ranges collapsed: ratio denominators would vanish.
struct DegenerateRange : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed configuration, problem id, or reference file contents.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Filesystem-level failure (unreadable input, unwritable output).
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Deterministic static partition of [0, n) over at most `threads` workers.
// Each index is processed exactly once and results land in caller-owned
// slots, so the outcome does not depend on the worker count.
inline void parallel_for(std::int64_t n, int threads,
                         const std::function<void(std::int64_t, std::int64_t)>& body) {
  if (n <= 0) return;
  if (threads <= 1 || n == 1) {
    body(0, n);
    return;
  }
  const int workers = static_cast<int>(std::min<std::int64_t>(threads, n));
  const std::int64_t chunk = (n + workers - 1) / workers;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    const std::int64_t lo = w * chunk;
    const std::int64_t hi = std::min<std::int64_t>(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&body, lo, hi] { body(lo, hi); });
  }
  for (auto& t : pool) t.join();
}

}  // namespace ksbo
