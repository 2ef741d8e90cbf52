#pragma once

#include "ksbo/common.hpp"
#include "ksbo/kernels.hpp"

#include <optional>
#include <vector>

namespace ksbo {

enum class TrendKind { Constant, Linear };

// One evaluated design with its p objective values and known per-objective
// observation noise variances (zero for deterministic evaluations).
struct Observation {
  Design x;
  Vector values;
  Vector noise_vars;
};

// Kernel + trend specification, sufficient to evaluate the likelihood.
struct GPModelParams {
  KernelParams kernel;
  TrendKind trend = TrendKind::Constant;
};

// Single-objective Gaussian-process model conditioned on its training data.
// All solves go through the stored Cholesky factor; `jitter` records the
// diagonal inflation (absolute, already scaled by the process variance) that
// the factorization needed.
struct GPModel {
  KernelParams kernel;
  TrendKind trend = TrendKind::Constant;
  Matrix X;           // n x d training designs
  Vector y;           // n training values for this objective
  Vector noise_vars;  // n known noise variances
  Vector beta;        // generalized-least-squares trend coefficients
  Matrix chol;        // lower Cholesky factor of K + diag(noise) + jitter I
  Vector alpha;       // (K + ...)^{-1} (y - F beta)
  double jitter = 0.0;
  double loglik = 0.0;  // concentrated log-likelihood at the fitted parameters

  Eigen::Index dim() const { return X.cols(); }
  Eigen::Index size() const { return X.rows(); }
};

struct FitOptions {
  int n_starts = 5;      // multi-start count (includes the warm start if set)
  std::optional<Vector> warm_start;  // log-parameter vector [log l_1..d, log s2]
  int max_iterations = 80;
  double grad_tol = 1e-5;
  std::uint64_t seed = 0;  // stream for the random starts
};

// Trend basis row(s): [1] for constant, [1, x] for linear.
Matrix trend_basis(TrendKind trend, const Matrix& X);

// In-place Cholesky with escalating diagonal jitter: starts at 1e-10*scale,
// multiplies by 10, gives up at 1e-4*scale.  Returns the jitter used (0 if
// none was needed) and leaves the lower factor in `K`.
double cholesky_with_jitter(Matrix& K, double scale);

// Concentrated (trend-profiled) log marginal likelihood of one objective.
// Returns -infinity if the covariance cannot be factorized even with the
// maximum jitter.
double log_likelihood(const GPModelParams& params, const std::vector<Observation>& observations,
                      int objective_index);

// Same value plus its gradient with respect to the log-parameters
// [log l_1..d, log s2]; the trend is re-profiled, so this is the total
// derivative of the concentrated likelihood.
double log_likelihood_grad(const GPModelParams& params,
                           const std::vector<Observation>& observations, int objective_index,
                           Vector& grad);

// Maximum-likelihood fit for one objective: multi-start BFGS on the
// log-parameters with analytic gradients.
GPModel fit(const std::vector<Observation>& observations, int objective_index,
            KernelFamily family, TrendKind trend, const FitOptions& options = {});

struct MarginalPrediction {
  Vector mean;
  Vector sd;  // posterior standard deviation (noise-free prediction)
};

// Pointwise posterior means/sds at `points`, computed in column blocks so a
// 1e5-point candidate set stays one triangular solve away.
MarginalPrediction posterior_marginal(const GPModel& model, const Matrix& points);

struct JointPosterior {
  Vector mean;
  Matrix cov;
};

// Full joint posterior over `points`; refuses more than `n_max` points since
// the cost is cubic.
JointPosterior posterior_joint(const GPModel& model, const Matrix& points, int n_max = 4096);

// Joint draws from p independent single-objective posteriors on a shared
// point set.  draws[m] is N x p, one column per objective.
struct SimulationEnsemble {
  Matrix points;                 // N x d
  std::vector<RowMatrix> draws;  // M matrices, N x p each
  std::uint64_t seed = 0;
};

// Cached per-objective joint quantities for the point set of an ensemble;
// lets callers derive conditioning weights and hallucinated updates without
// re-solving against the training data.
struct ObjectiveJoint {
  Vector mean;      // N
  Matrix cov;       // N x N posterior covariance
  Matrix chol;      // lower Cholesky of cov (+jitter)
  Matrix v_train;   // n x N, L_train^{-1} k(X_train, points)
  double process_var = 1.0;
  double jitter = 0.0;
};

struct EnsembleJoints {
  std::vector<ObjectiveJoint> objectives;
};

SimulationEnsemble simulate(const std::vector<GPModel>& models, const Matrix& points,
                            int n_draws, std::uint64_t seed, EnsembleJoints* joints = nullptr);

// Kriging update weights for conditioning every ensemble point on a new
// observation at points.row(x_index):
//   lambda^i_j = cov_i(point_j, x) / cov_i(x, x).
struct KrigingWeights {
  Matrix lambda;    // N x p
  Vector var_at_x;  // p posterior variances at the conditioning point
  int x_index = -1;
};

// Relative variance floor below which conditioning is refused.
inline constexpr double kDegenerateVarTol = 1e-9;

KrigingWeights kriging_weights(const std::vector<GPModel>& models, const Matrix& points,
                               int x_index);
KrigingWeights kriging_weights(const EnsembleJoints& joints, int x_index);

// Conditions every draw of the ensemble on the outcome f_new at the weight's
// point: draw + lambda * (f_new - draw(x)) columnwise.  The fast update is
// exact for Gaussian conditioning, so no new factorization is needed.
SimulationEnsemble update_ensemble(const SimulationEnsemble& ensemble,
                                   const KrigingWeights& weights, const Vector& f_new);

}  // namespace ksbo
