#include "ksbo/gp.hpp"

#include "ksbo/rng.hpp"

#include <cmath>
#include <limits>

namespace ksbo {
namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

struct TrainingData {
  Matrix X;
  Vector y;
  Vector tau;  // per-observation noise variances
};

TrainingData assemble(const std::vector<Observation>& observations, int objective_index) {
  if (observations.empty()) throw std::invalid_argument("gp: no observations");
  const Eigen::Index n = static_cast<Eigen::Index>(observations.size());
  const Eigen::Index d = observations.front().x.size();
  const Eigen::Index p = observations.front().values.size();
  if (objective_index < 0 || objective_index >= p)
    throw std::invalid_argument("gp: objective index out of range");

  TrainingData data;
  data.X.resize(n, d);
  data.y.resize(n);
  data.tau.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Observation& obs = observations[static_cast<std::size_t>(i)];
    if (obs.x.size() != d || obs.values.size() != p || obs.noise_vars.size() != p)
      throw std::invalid_argument("gp: ragged observation list");
    data.X.row(i) = obs.x;
    data.y[i] = obs.values[objective_index];
    data.tau[i] = obs.noise_vars[objective_index];
    if (!(data.tau[i] >= 0.0)) throw std::invalid_argument("gp: negative noise variance");
    if (!std::isfinite(data.y[i]) || !obs.x.allFinite())
      throw std::invalid_argument("gp: non-finite observation");
  }
  // Exactly duplicated designs are only admissible when every copy carries
  // observation noise; otherwise the covariance is singular by construction.
  for (Eigen::Index a = 1; a < n; ++a)
    for (Eigen::Index b = 0; b < a; ++b)
      if ((data.X.row(a).array() == data.X.row(b).array()).all() &&
          (data.tau[a] == 0.0 || data.tau[b] == 0.0))
        throw std::invalid_argument("gp: duplicated noiseless designs");
  return data;
}

// Shared likelihood core.  Returns everything the optimizer and the final
// model assembly need; gradient parts are filled only when requested.
struct LikelihoodEval {
  double loglik = -std::numeric_limits<double>::infinity();
  Matrix chol;
  Vector beta;
  Vector alpha;
  double jitter = 0.0;
};

LikelihoodEval eval_likelihood(const GPModelParams& params, const TrainingData& data,
                               Vector* grad) {
  const Eigen::Index n = data.X.rows();
  const Eigen::Index d = data.X.cols();

  LikelihoodEval out;
  Matrix K = self_covariance(params.kernel, data.X);
  K.diagonal() += data.tau;
  out.chol = std::move(K);
  out.jitter = cholesky_with_jitter(out.chol, params.kernel.variance);

  const auto L = out.chol.triangularView<Eigen::Lower>();
  const Matrix F = trend_basis(params.trend, data.X);
  Matrix Ft = F;
  L.solveInPlace(Ft);
  Vector yt = data.y;
  L.solveInPlace(yt);

  // GLS trend via QR on the whitened basis (rank-robust).
  out.beta = Ft.colPivHouseholderQr().solve(yt);
  const Vector rt = yt - Ft * out.beta;

  double logdet = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) logdet += std::log(out.chol(i, i));
  out.loglik = -0.5 * static_cast<double>(n) * kLog2Pi - logdet - 0.5 * rt.squaredNorm();

  out.alpha = rt;
  out.chol.triangularView<Eigen::Lower>().transpose().solveInPlace(out.alpha);

  if (grad != nullptr) {
    // d loglik / d theta_k = 1/2 tr[(alpha alpha^T - K^{-1}) dK/dtheta_k],
    // exact for the beta-profiled likelihood by the envelope theorem.
    Matrix Kinv = Matrix::Identity(n, n);
    L.solveInPlace(Kinv);
    out.chol.triangularView<Eigen::Lower>().transpose().solveInPlace(Kinv);
    Matrix W = 0.5 * (out.alpha * out.alpha.transpose() - Kinv);
    *grad = weighted_grad_sum(params.kernel, data.X, W);
    // The jitter diagonal is proportional to the process variance, so it
    // contributes to the log-variance derivative.
    (*grad)[d] += out.jitter * W.trace();
  }
  return out;
}

GPModelParams params_from_log(const Vector& theta, KernelFamily family, TrendKind trend) {
  const Eigen::Index d = theta.size() - 1;
  GPModelParams params;
  params.kernel.family = family;
  params.kernel.lengthscales = theta.head(d).array().exp();
  params.kernel.variance = std::exp(theta[d]);
  params.trend = trend;
  return params;
}

// Minimal dense BFGS with Armijo backtracking; the objective returns +inf
// for infeasible parameters, which the line search simply backs away from.
double bfgs_minimize(const std::function<double(const Vector&, Vector&)>& fg, Vector& x,
                     int max_iterations, double grad_tol) {
  const Eigen::Index m = x.size();
  Vector g(m), g_next(m);
  double f = fg(x, g);
  if (!std::isfinite(f)) return f;

  Matrix H = Matrix::Identity(m, m);
  for (int it = 0; it < max_iterations; ++it) {
    if (g.lpNorm<Eigen::Infinity>() < grad_tol) break;
    Vector p = -(H * g);
    double slope = p.dot(g);
    if (!(slope < 0.0)) {  // curvature estimate went bad; restart steepest
      H.setIdentity();
      p = -g;
      slope = p.dot(g);
    }
    double step = 1.0;
    double f_next = std::numeric_limits<double>::infinity();
    Vector x_next;
    while (step > 1e-14) {
      x_next = x + step * p;
      f_next = fg(x_next, g_next);
      if (std::isfinite(f_next) && f_next <= f + 1e-4 * step * slope) break;
      step *= 0.5;
    }
    if (!(step > 1e-14)) break;  // no acceptable step left

    const Vector s = x_next - x;
    const Vector yv = g_next - g;
    const double sy = s.dot(yv);
    if (sy > 1e-12 * s.norm() * yv.norm()) {
      const double rho = 1.0 / sy;
      const Matrix I = Matrix::Identity(m, m);
      H = (I - rho * s * yv.transpose()) * H * (I - rho * yv * s.transpose()) +
          rho * s * s.transpose();
    }
    const double df = f - f_next;
    x = x_next;
    f = f_next;
    g = g_next;
    if (df < 1e-12 * (1.0 + std::abs(f))) break;
  }
  return f;
}

}  // namespace

Matrix trend_basis(TrendKind trend, const Matrix& X) {
  switch (trend) {
    case TrendKind::Constant:
      return Matrix::Ones(X.rows(), 1);
    case TrendKind::Linear: {
      Matrix F(X.rows(), X.cols() + 1);
      F.col(0).setOnes();
      F.rightCols(X.cols()) = X;
      return F;
    }
  }
  throw std::logic_error("gp: unknown trend kind");
}

double cholesky_with_jitter(Matrix& K, double scale) {
  if (K.rows() != K.cols()) throw std::invalid_argument("gp: covariance not square");
  const Matrix saved = K;
  double jitter = 0.0;
  for (int attempt = 0; attempt < 8; ++attempt) {
    Matrix trial = saved;
    if (jitter > 0.0) trial.diagonal().array() += jitter;
    Eigen::LLT<Eigen::Ref<Matrix>> llt(trial);
    if (llt.info() == Eigen::Success) {
      K = trial;  // lower triangle now holds the factor
      return jitter;
    }
    jitter = (jitter == 0.0) ? 1e-10 * scale : 10.0 * jitter;
    if (jitter > 1e-4 * scale) break;
  }
  throw FactorizationError("gp: covariance not positive definite at maximum jitter");
}

double log_likelihood(const GPModelParams& params, const std::vector<Observation>& observations,
                      int objective_index) {
  const TrainingData data = assemble(observations, objective_index);
  try {
    return eval_likelihood(params, data, nullptr).loglik;
  } catch (const FactorizationError&) {
    return -std::numeric_limits<double>::infinity();
  }
}

double log_likelihood_grad(const GPModelParams& params,
                           const std::vector<Observation>& observations, int objective_index,
                           Vector& grad) {
  const TrainingData data = assemble(observations, objective_index);
  try {
    return eval_likelihood(params, data, &grad).loglik;
  } catch (const FactorizationError&) {
    grad.setZero();
    return -std::numeric_limits<double>::infinity();
  }
}

GPModel fit(const std::vector<Observation>& observations, int objective_index,
            KernelFamily family, TrendKind trend, const FitOptions& options) {
  if (observations.size() < 2) throw std::invalid_argument("gp: fit needs at least 2 observations");
  const TrainingData data = assemble(observations, objective_index);
  const Eigen::Index d = data.X.cols();

  // Start distributions are derived from permutation-invariant data summaries.
  Vector ranges(d);
  for (Eigen::Index j = 0; j < d; ++j) {
    const double r = data.X.col(j).maxCoeff() - data.X.col(j).minCoeff();
    ranges[j] = (r > 0.0) ? r : 1.0;
  }
  const double y_mean = data.y.mean();
  const double y_var =
      std::max((data.y.array() - y_mean).square().sum() /
                   std::max<double>(1.0, static_cast<double>(data.y.size() - 1)),
               1e-12);

  const auto objective = [&](const Vector& theta, Vector& grad) -> double {
    if (theta.lpNorm<Eigen::Infinity>() > 22.0) {  // keep exp() in a sane range
      grad.setZero(theta.size());
      return std::numeric_limits<double>::infinity();
    }
    try {
      Vector ll_grad;
      const double ll =
          eval_likelihood(params_from_log(theta, family, trend), data, &ll_grad).loglik;
      grad = -ll_grad;
      return -ll;
    } catch (const FactorizationError&) {
      grad.setZero(theta.size());
      return std::numeric_limits<double>::infinity();
    }
  };

  Rng rng(mix_seed(options.seed, seed_tag::kFit));
  const int n_starts = std::max(1, options.n_starts);
  Vector best_theta;
  double best_value = std::numeric_limits<double>::infinity();
  for (int s = 0; s < n_starts; ++s) {
    Vector theta(d + 1);
    if (s == 0 && options.warm_start.has_value()) {
      if (options.warm_start->size() != d + 1)
        throw std::invalid_argument("gp: warm start has wrong size");
      theta = *options.warm_start;
    } else {
      // Lengthscale starts log-uniform on [1e-2, 1e1] x per-dimension range;
      // variance starts log-uniform within a decade of the sample variance.
      for (Eigen::Index j = 0; j < d; ++j)
        theta[j] = std::log(ranges[j]) + std::log(10.0) * rng.uniform(-2.0, 1.0);
      theta[d] = std::log(y_var) + std::log(10.0) * rng.uniform(-1.0, 1.0);
    }
    const double value = bfgs_minimize(objective, theta, options.max_iterations, options.grad_tol);
    if (value < best_value) {
      best_value = value;
      best_theta = theta;
    }
  }
  if (!std::isfinite(best_value))
    throw FactorizationError("gp: likelihood not finite at any start");

  const GPModelParams params = params_from_log(best_theta, family, trend);
  const LikelihoodEval eval = eval_likelihood(params, data, nullptr);

  GPModel model;
  model.kernel = params.kernel;
  model.trend = trend;
  model.X = data.X;
  model.y = data.y;
  model.noise_vars = data.tau;
  model.beta = eval.beta;
  model.chol = eval.chol;
  model.alpha = eval.alpha;
  model.jitter = eval.jitter;
  model.loglik = eval.loglik;
  return model;
}

MarginalPrediction posterior_marginal(const GPModel& model, const Matrix& points) {
  if (points.cols() != model.dim()) throw std::invalid_argument("gp: prediction dim mismatch");
  Matrix Kx = cross_covariance(model.kernel, model.X, points);  // n x N
  MarginalPrediction pred;
  pred.mean = trend_basis(model.trend, points) * model.beta;
  pred.mean.noalias() += Kx.transpose() * model.alpha;

  model.chol.triangularView<Eigen::Lower>().solveInPlace(Kx);  // now L^{-1} Kx
  Vector var = Vector::Constant(points.rows(), model.kernel.variance);
  var -= Kx.colwise().squaredNorm().transpose();

  const double tol = 1e-8;
  for (Eigen::Index i = 0; i < var.size(); ++i) {
    if (var[i] < -tol)
      throw FactorizationError("gp: posterior variance below round-off tolerance");
    if (var[i] < 0.0) var[i] = 0.0;
  }
  pred.sd = var.cwiseSqrt();
  return pred;
}

JointPosterior posterior_joint(const GPModel& model, const Matrix& points, int n_max) {
  if (points.cols() != model.dim()) throw std::invalid_argument("gp: prediction dim mismatch");
  if (points.rows() > n_max)
    throw CapacityError("gp: joint posterior request exceeds configured point cap");
  Matrix Kx = cross_covariance(model.kernel, model.X, points);
  JointPosterior joint;
  joint.mean = trend_basis(model.trend, points) * model.beta;
  joint.mean.noalias() += Kx.transpose() * model.alpha;

  model.chol.triangularView<Eigen::Lower>().solveInPlace(Kx);
  joint.cov = self_covariance(model.kernel, points);
  joint.cov.noalias() -= Kx.transpose() * Kx;
  joint.cov = 0.5 * (joint.cov + joint.cov.transpose()).eval();
  return joint;
}

SimulationEnsemble simulate(const std::vector<GPModel>& models, const Matrix& points,
                            int n_draws, std::uint64_t seed, EnsembleJoints* joints) {
  if (models.empty()) throw std::invalid_argument("gp: no models to simulate");
  if (n_draws < 1) throw std::invalid_argument("gp: need at least one draw");
  const Eigen::Index N = points.rows();
  const Eigen::Index p = static_cast<Eigen::Index>(models.size());

  SimulationEnsemble ensemble;
  ensemble.points = points;
  ensemble.seed = seed;
  ensemble.draws.assign(static_cast<std::size_t>(n_draws), RowMatrix(N, p));
  if (joints != nullptr) joints->objectives.assign(static_cast<std::size_t>(p), {});

  Vector z(N);
  for (Eigen::Index i = 0; i < p; ++i) {
    const GPModel& model = models[static_cast<std::size_t>(i)];
    if (points.cols() != model.dim()) throw std::invalid_argument("gp: prediction dim mismatch");

    Matrix Kx = cross_covariance(model.kernel, model.X, points);
    Vector mean = trend_basis(model.trend, points) * model.beta;
    mean.noalias() += Kx.transpose() * model.alpha;
    model.chol.triangularView<Eigen::Lower>().solveInPlace(Kx);
    Matrix cov = self_covariance(model.kernel, points);
    cov.noalias() -= Kx.transpose() * Kx;
    cov = 0.5 * (cov + cov.transpose()).eval();

    Matrix factor = cov;
    const double jitter = cholesky_with_jitter(factor, model.kernel.variance);

    Rng rng(mix_seed(seed, seed_tag::kEnsemble, static_cast<std::uint64_t>(i)));
    for (int m = 0; m < n_draws; ++m) {
      for (Eigen::Index r = 0; r < N; ++r) z[r] = rng.normal();
      ensemble.draws[static_cast<std::size_t>(m)].col(i) =
          mean + factor.triangularView<Eigen::Lower>() * z;
    }

    if (joints != nullptr) {
      ObjectiveJoint& oj = joints->objectives[static_cast<std::size_t>(i)];
      oj.mean = std::move(mean);
      oj.cov = std::move(cov);
      oj.chol = std::move(factor);
      oj.v_train = std::move(Kx);
      oj.process_var = model.kernel.variance;
      oj.jitter = jitter;
    }
  }
  return ensemble;
}

KrigingWeights kriging_weights(const std::vector<GPModel>& models, const Matrix& points,
                               int x_index) {
  if (x_index < 0 || x_index >= points.rows())
    throw std::invalid_argument("gp: conditioning index out of range");
  const Eigen::Index N = points.rows();
  const Eigen::Index p = static_cast<Eigen::Index>(models.size());
  KrigingWeights weights;
  weights.lambda.resize(N, p);
  weights.var_at_x.resize(p);
  weights.x_index = x_index;

  for (Eigen::Index i = 0; i < p; ++i) {
    const GPModel& model = models[static_cast<std::size_t>(i)];
    Matrix Kx = cross_covariance(model.kernel, model.X, points);
    model.chol.triangularView<Eigen::Lower>().solveInPlace(Kx);
    const Vector v_x = Kx.col(x_index);
    Vector cov_col =
        cross_covariance(model.kernel, points, points.row(x_index)).col(0);
    cov_col.noalias() -= Kx.transpose() * v_x;
    const double var_x = cov_col[x_index];
    if (!(var_x > kDegenerateVarTol * model.kernel.variance))
      throw DegenerateConditioning("gp: conditioning point has ~zero posterior variance");
    weights.lambda.col(i) = cov_col / var_x;
    weights.var_at_x[i] = var_x;
  }
  return weights;
}

KrigingWeights kriging_weights(const EnsembleJoints& joints, int x_index) {
  if (joints.objectives.empty()) throw std::invalid_argument("gp: empty joint cache");
  const Eigen::Index N = joints.objectives.front().cov.rows();
  if (x_index < 0 || x_index >= N)
    throw std::invalid_argument("gp: conditioning index out of range");
  const Eigen::Index p = static_cast<Eigen::Index>(joints.objectives.size());
  KrigingWeights weights;
  weights.lambda.resize(N, p);
  weights.var_at_x.resize(p);
  weights.x_index = x_index;
  for (Eigen::Index i = 0; i < p; ++i) {
    const ObjectiveJoint& oj = joints.objectives[static_cast<std::size_t>(i)];
    const double var_x = oj.cov(x_index, x_index);
    if (!(var_x > kDegenerateVarTol * oj.process_var))
      throw DegenerateConditioning("gp: conditioning point has ~zero posterior variance");
    weights.lambda.col(i) = oj.cov.col(x_index) / var_x;
    weights.var_at_x[i] = var_x;
  }
  return weights;
}

SimulationEnsemble update_ensemble(const SimulationEnsemble& ensemble,
                                   const KrigingWeights& weights, const Vector& f_new) {
  const Eigen::Index N = ensemble.points.rows();
  if (ensemble.draws.empty()) throw std::invalid_argument("gp: empty ensemble");
  const Eigen::Index p = ensemble.draws.front().cols();
  if (weights.lambda.rows() != N || weights.lambda.cols() != p)
    throw std::invalid_argument("gp: weight shape mismatch");
  if (f_new.size() != p) throw std::invalid_argument("gp: outcome dimension mismatch");

  SimulationEnsemble updated = ensemble;
  for (auto& draw : updated.draws) {
    for (Eigen::Index c = 0; c < p; ++c) {
      const double shift = f_new[c] - draw(weights.x_index, c);
      draw.col(c) += weights.lambda.col(c) * shift;
    }
  }
  return updated;
}

}  // namespace ksbo
