#include "ksbo/acquisition.hpp"

#include "ksbo/rng.hpp"

#include <cmath>
#include <limits>

namespace ksbo {
namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440084436210485;
constexpr double kInvSqrt2Pi = 0.39894228040143267793994605993438;

// Sample covariance determinant via an in-place unpivoted Cholesky on a
// stack buffer; covariance matrices are PSD up to round-off, so a failed
// pivot means a (numerically) singular matrix and the determinant clamps
// to zero.
double psd_det(double* C, int p) {
  double det = 1.0;
  for (int j = 0; j < p; ++j) {
    double pivot = C[j * p + j];
    for (int k = 0; k < j; ++k) pivot -= C[j * p + k] * C[j * p + k];
    if (!(pivot > 0.0)) return 0.0;
    const double l = std::sqrt(pivot);
    C[j * p + j] = l;
    det *= pivot;
    for (int i = j + 1; i < p; ++i) {
      double v = C[i * p + j];
      for (int k = 0; k < j; ++k) v -= C[i * p + k] * C[j * p + k];
      C[i * p + j] = v / l;
    }
  }
  return det;
}

}  // namespace

double normal_cdf(double z) { return 0.5 * std::erfc(-z * kInvSqrt2); }

double normal_pdf(double z) { return kInvSqrt2Pi * std::exp(-0.5 * z * z); }

double ei(double mean, double sd, double best) {
  if (!(sd > 0.0)) return std::max(0.0, best - mean);
  const double z = (best - mean) / sd;
  return std::max(0.0, (best - mean) * normal_cdf(z) + sd * normal_pdf(z));
}

double ei_nad(double mean, double sd, double worst) { return ei(-mean, sd, -worst); }

double p_box(const Vector& mean, const Vector& sd, const Vector& lo, const Vector& hi) {
  const Eigen::Index p = mean.size();
  if (sd.size() != p || lo.size() != p || hi.size() != p)
    throw std::invalid_argument("acquisition: p_box dimension mismatch");
  double prob = 1.0;
  for (Eigen::Index i = 0; i < p; ++i) {
    if (!(hi[i] >= lo[i])) throw std::invalid_argument("acquisition: inverted box");
    double factor;
    if (sd[i] > 0.0) {
      factor = normal_cdf((hi[i] - mean[i]) / sd[i]) - normal_cdf((lo[i] - mean[i]) / sd[i]);
    } else {
      factor = (mean[i] >= lo[i] && mean[i] <= hi[i]) ? 1.0 : 0.0;
    }
    prob *= factor;
  }
  return prob;
}

Vector p_box_batch(const Matrix& means, const Matrix& sds, const Vector& lo, const Vector& hi) {
  const Eigen::Index n = means.rows();
  const Eigen::Index p = means.cols();
  if (sds.rows() != n || sds.cols() != p || lo.size() != p || hi.size() != p)
    throw std::invalid_argument("acquisition: p_box dimension mismatch");
  for (Eigen::Index i = 0; i < p; ++i)
    if (!(hi[i] >= lo[i])) throw std::invalid_argument("acquisition: inverted box");

  Vector prob = Vector::Ones(n);
  for (Eigen::Index i = 0; i < p; ++i) {
    for (Eigen::Index r = 0; r < n; ++r) {
      const double sd = sds(r, i);
      double factor;
      if (sd > 0.0) {
        factor = normal_cdf((hi[i] - means(r, i)) / sd) -
                 normal_cdf((lo[i] - means(r, i)) / sd);
      } else {
        factor = (means(r, i) >= lo[i] && means(r, i) <= hi[i]) ? 1.0 : 0.0;
      }
      prob[r] *= factor;
    }
  }
  return prob;
}

double p_nd(const Vector& mean, const Vector& sd, const Matrix& front, int n_mc,
            std::uint64_t seed) {
  const Eigen::Index p = mean.size();
  if (sd.size() != p || front.cols() != p)
    throw std::invalid_argument("acquisition: p_nd dimension mismatch");
  if (n_mc < 1) throw std::invalid_argument("acquisition: p_nd needs draws");
  if (front.rows() == 0) return 1.0;

  const RowMatrix fr = front;  // row-major for the domination scan
  Rng rng(seed);
  Vector sample(p);
  int nondominated = 0;
  for (int m = 0; m < n_mc; ++m) {
    for (Eigen::Index i = 0; i < p; ++i) sample[i] = mean[i] + sd[i] * rng.normal();
    bool dominated = false;
    for (Eigen::Index r = 0; r < fr.rows() && !dominated; ++r) {
      const double* row = fr.data() + static_cast<std::size_t>(r) * p;
      bool weak = true, strict = false;
      for (Eigen::Index c = 0; c < p; ++c) {
        if (row[c] > sample[c]) {
          weak = false;
          break;
        }
        if (row[c] < sample[c]) strict = true;
      }
      dominated = weak && strict;
    }
    if (!dominated) ++nondominated;
  }
  return static_cast<double>(nondominated) / static_cast<double>(n_mc);
}

Vector lcb_ratios(const Vector& mean, const Vector& sd, const Vector& d, const Vector& u,
                  double beta) {
  const Eigen::Index p = mean.size();
  if (sd.size() != p || d.size() != p || u.size() != p)
    throw std::invalid_argument("acquisition: lcb dimension mismatch");
  Vector ratios(p);
  for (Eigen::Index i = 0; i < p; ++i) {
    const double denom = d[i] - u[i];
    if (denom == 0.0) throw DegenerateRange("acquisition: lcb with degenerate range");
    ratios[i] = (d[i] - (mean[i] - beta * sd[i])) / denom;
  }
  return ratios;
}

double gamma_hat(const Matrix& equilibria) {
  const Eigen::Index m = equilibria.rows();
  const Eigen::Index p = equilibria.cols();
  if (m < 2) throw std::invalid_argument("acquisition: covariance needs at least 2 rows");
  if (p < 1 || p > 16) throw std::invalid_argument("acquisition: unsupported objective count");

  Eigen::Matrix<double, Eigen::Dynamic, 1> mean = equilibria.colwise().mean();
  double C[16 * 16];
  for (Eigen::Index a = 0; a < p; ++a)
    for (Eigen::Index b = 0; b <= a; ++b) {
      double acc = 0.0;
      for (Eigen::Index r = 0; r < m; ++r)
        acc += (equilibria(r, a) - mean[a]) * (equilibria(r, b) - mean[b]);
      C[a * p + b] = C[b * p + a] = acc / static_cast<double>(m - 1);
    }
  return psd_det(C, static_cast<int>(p));
}

SurEstimate sur_criterion(const SimulationEnsemble& ensemble, int candidate_index,
                          const KrigingWeights& weights, EquilibriumKind mode,
                          const SurContext& context, SurWorkspace* workspace) {
  const Eigen::Index N = ensemble.points.rows();
  const int M = static_cast<int>(ensemble.draws.size());
  if (M < 2) throw std::invalid_argument("acquisition: sur needs at least 2 draws");
  const Eigen::Index p = ensemble.draws.front().cols();
  if (candidate_index < 0 || candidate_index >= N)
    throw std::invalid_argument("acquisition: candidate index out of range");
  if (weights.lambda.rows() != N || weights.lambda.cols() != p)
    throw std::invalid_argument("acquisition: weight shape mismatch");
  if (mode == EquilibriumKind::KSpref && context.preference_bounds == nullptr)
    throw std::invalid_argument("acquisition: KSpref needs preference bounds");
  if (mode == EquilibriumKind::CKS && context.aux_ranks == nullptr)
    throw std::invalid_argument("acquisition: CKS needs a rank table");

  SurEstimate estimate;
  estimate.candidate_index = candidate_index;
  estimate.gamma_samples = Vector::Zero(M);

  // If the input equilibria already coincide, conditioning cannot spread
  // them: every candidate scores exactly zero.
  if (context.input_equilibria != nullptr && context.input_equilibria->rows() == M) {
    const Matrix& eq = *context.input_equilibria;
    bool identical = true;
    for (Eigen::Index r = 1; identical && r < eq.rows(); ++r)
      identical = (eq.row(r).array() == eq.row(0).array()).all();
    if (identical) return estimate;
  }

  SurWorkspace local;
  SurWorkspace& ws = (workspace != nullptr) ? *workspace : local;
  ws.updated.resize(N, p);
  ws.lambda = weights.lambda;
  if (ws.psi.rows() != M || ws.psi.cols() != p) ws.psi.resize(M, p);

  Vector psi_row(p);
  double acc = 0.0;
  for (int k = 0; k < M; ++k) {
    const auto f_k = ensemble.draws[static_cast<std::size_t>(k)].row(candidate_index);
    for (int j = 0; j < M; ++j) {
      if (j == k && context.input_equilibria != nullptr &&
          context.input_equilibria->rows() == M) {
        // Conditioning draw k on its own value leaves it unchanged.
        ws.psi.row(j) = context.input_equilibria->row(j);
        continue;
      }
      const RowMatrix& draw = ensemble.draws[static_cast<std::size_t>(j)];
      const auto shift = f_k - draw.row(candidate_index);
      ws.updated.array() = draw.array() + ws.lambda.array().rowwise() * shift.array();
      draw_equilibrium(ws.updated.data(), static_cast<int>(N), static_cast<int>(p), mode,
                       context.preference_bounds, context.aux_ranks, ws.draw_ws,
                       psi_row.data());
      ws.psi.row(j) = psi_row;
    }
    const double gamma = gamma_hat(ws.psi);
    estimate.gamma_samples[k] = gamma;
    acc += gamma;
  }
  estimate.j_hat = acc / static_cast<double>(M);
  return estimate;
}

}  // namespace ksbo
