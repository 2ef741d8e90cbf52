#include "ksbo/strategies.hpp"

#include "ksbo/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <unordered_set>
#include <utility>
#include <vector>

namespace ksbo {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
      .count();
}

// ---- domain access ------------------------------------------------------

// Prediction sample for one iteration: either the whole finite domain, a
// without-replacement subset of it, or fresh uniform points on [0,1]^d.
struct LargeSample {
  Matrix points;
  std::vector<std::int64_t> indices;  // domain row ids; empty for continuous problems
};

// Fetches specific domain rows (indices must be sorted ascending).
Matrix domain_rows(const Problem& problem, const std::vector<std::int64_t>& indices) {
  const FiniteDomain& dom = *problem.domain;
  Matrix out(static_cast<Eigen::Index>(indices.size()), problem.dim);
  if (dom.materialized()) {
    for (std::size_t i = 0; i < indices.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = dom.points.row(indices[i]);
    return out;
  }
  std::size_t i = 0;
  while (i < indices.size()) {
    const std::int64_t block = indices[i] / kDomainBlockSize;
    const Matrix pts = domain_block(dom, problem.dim, block);
    const std::int64_t base = block * kDomainBlockSize;
    while (i < indices.size() && indices[i] / kDomainBlockSize == block) {
      out.row(static_cast<Eigen::Index>(i)) = pts.row(indices[i] - base);
      ++i;
    }
  }
  return out;
}

// n distinct sorted indices from {0, ..., size-1}.
std::vector<std::int64_t> sample_indices_without_replacement(std::int64_t size, std::int64_t n,
                                                             Rng& rng) {
  std::unordered_set<std::int64_t> chosen;
  chosen.reserve(static_cast<std::size_t>(n) * 2);
  while (static_cast<std::int64_t>(chosen.size()) < n) chosen.insert(rng.uniform_index(size));
  std::vector<std::int64_t> out(chosen.begin(), chosen.end());
  std::sort(out.begin(), out.end());
  return out;
}

LargeSample sample_x_large(const Problem& problem, std::int64_t n_large, std::uint64_t seed) {
  LargeSample out;
  if (problem.domain) {
    const FiniteDomain& dom = *problem.domain;
    if (dom.size <= n_large) {
      out.indices.resize(static_cast<std::size_t>(dom.size));
      std::iota(out.indices.begin(), out.indices.end(), std::int64_t{0});
      if (dom.materialized()) {
        out.points = dom.points;
      } else {
        out.points = domain_rows(problem, out.indices);
      }
      return out;
    }
    Rng rng(seed);
    out.indices = sample_indices_without_replacement(dom.size, n_large, rng);
    out.points = domain_rows(problem, out.indices);
    return out;
  }
  Rng rng(seed);
  out.points.resize(n_large, problem.dim);
  for (Eigen::Index r = 0; r < out.points.rows(); ++r)
    for (Eigen::Index c = 0; c < out.points.cols(); ++c) out.points(r, c) = rng.uniform01();
  return out;
}

// Uniform i.i.d. auxiliary designs (domain points when the domain is finite).
Matrix sample_aux_designs(const Problem& problem, int n_aux, std::uint64_t seed) {
  Rng rng(seed);
  Matrix out(n_aux, problem.dim);
  if (problem.domain) {
    const FiniteDomain& dom = *problem.domain;
    std::vector<std::int64_t> idx(static_cast<std::size_t>(n_aux));
    for (auto& v : idx) v = rng.uniform_index(dom.size);
    // Fetch via a sorted copy, then restore draw order (i.i.d. sample keeps
    // duplicates, so the rank sample stays unbiased).
    std::vector<std::int64_t> sorted = idx;
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    const Matrix rows = domain_rows(problem, sorted);
    for (int i = 0; i < n_aux; ++i) {
      const auto it = std::lower_bound(sorted.begin(), sorted.end(), idx[static_cast<std::size_t>(i)]);
      out.row(i) = rows.row(static_cast<Eigen::Index>(it - sorted.begin()));
    }
    return out;
  }
  for (Eigen::Index r = 0; r < out.rows(); ++r)
    for (Eigen::Index c = 0; c < out.cols(); ++c) out(r, c) = rng.uniform01();
  return out;
}

// ---- bookkeeping --------------------------------------------------------

std::vector<Observation> to_observations(const RunState& state) {
  const Eigen::Index p = state.F.cols();
  Vector noise = state.problem.noise_vars.size() > 0 ? state.problem.noise_vars
                                                     : Vector::Zero(p);
  std::vector<Observation> obs(static_cast<std::size_t>(state.X.rows()));
  for (Eigen::Index r = 0; r < state.X.rows(); ++r) {
    obs[static_cast<std::size_t>(r)] = Observation{state.X.row(r), state.F.row(r).transpose(), noise};
  }
  return obs;
}

Vector log_params(const GPModel& model) {
  const Eigen::Index d = model.kernel.lengthscales.size();
  Vector theta(d + 1);
  theta.head(d) = model.kernel.lengthscales.array().log();
  theta(d) = std::log(model.kernel.variance);
  return theta;
}

void refit_models(RunState& state, const StrategyParams& params, bool warm) {
  const auto obs = to_observations(state);
  const int p = static_cast<int>(state.F.cols());
  if (state.models.empty()) state.models.resize(static_cast<std::size_t>(p));
  const std::uint64_t fit_seed = mix_seed(state.run_seed, seed_tag::kFit);
  for (int i = 0; i < p; ++i) {
    FitOptions options;
    options.seed = mix_seed(fit_seed, static_cast<std::uint64_t>(state.evaluations) *
                                              static_cast<std::uint64_t>(p) +
                                          static_cast<std::uint64_t>(i));
    GPModel& slot = state.models[static_cast<std::size_t>(i)];
    if (warm && slot.size() > 0) {
      options.warm_start = log_params(slot);
      options.n_starts = 2;  // warm start plus one fresh draw
    }
    slot = fit(obs, i, params.kernel, params.trend, options);
  }
}

Vector append_observation(RunState& state, const Design& x) {
  const Vector f = state.problem.evaluate_observed(x, state.evaluations);
  state.X.conservativeResize(state.evaluations + 1, Eigen::NoChange);
  state.F.conservativeResize(state.evaluations + 1, Eigen::NoChange);
  state.X.row(state.evaluations) = x;
  state.F.row(state.evaluations) = f.transpose();
  state.evaluations += 1;
  return f;
}

// Re-observing a noiseless design would duplicate a training row exactly,
// which the fit rejects; noisy observations may repeat designs freely.
bool is_observed_duplicate(const RunState& state, const Design& x) {
  if (state.problem.noisy()) return false;
  for (Eigen::Index r = 0; r < state.X.rows(); ++r) {
    if ((state.X.row(r).array() == x.array()).all()) return true;
  }
  return false;
}

Matrix front_rows(const Matrix& objectives, const std::vector<std::uint8_t>& mask,
                  std::vector<Eigen::Index>* row_ids = nullptr) {
  Eigen::Index count = 0;
  for (auto m : mask) count += m != 0;
  Matrix front(count, objectives.cols());
  if (row_ids) row_ids->clear();
  Eigen::Index w = 0;
  for (Eigen::Index r = 0; r < objectives.rows(); ++r) {
    if (!mask[static_cast<std::size_t>(r)]) continue;
    front.row(w++) = objectives.row(r);
    if (row_ids) row_ids->push_back(r);
  }
  return front;
}

void require_models(const RunState& state, const char* who) {
  if (state.models.size() != static_cast<std::size_t>(state.F.cols()))
    throw ConfigError(std::string(who) + ": run state has no fitted models");
  for (const auto& m : state.models)
    if (m.size() == 0) throw ConfigError(std::string(who) + ": run state has no fitted models");
}

void require_prefs(const StrategyParams& params, Eigen::Index p) {
  if (params.mode != EquilibriumKind::KSpref) return;
  if (!params.preferences || params.preferences->bounds.size() != p)
    throw ConfigError("KSpref mode needs one preference bound per objective");
}

// ---- init design --------------------------------------------------------

double min_pair_dist(const Matrix& P) {
  double best = kInf;
  for (Eigen::Index a = 0; a + 1 < P.rows(); ++a)
    for (Eigen::Index b = a + 1; b < P.rows(); ++b)
      best = std::min(best, (P.row(a) - P.row(b)).squaredNorm());
  return best;
}

Matrix latin_hypercube(int n, int d, Rng& rng) {
  Matrix P(n, d);
  std::vector<int> perm(static_cast<std::size_t>(n));
  for (int j = 0; j < d; ++j) {
    std::iota(perm.begin(), perm.end(), 0);
    for (int i = n - 1; i > 0; --i) {
      const auto k = rng.uniform_index(i + 1);
      std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(k)]);
    }
    for (int r = 0; r < n; ++r)
      P(r, j) = (static_cast<double>(perm[static_cast<std::size_t>(r)]) + rng.uniform01()) /
                static_cast<double>(n);
  }
  return P;
}

Matrix maximin_lhd(int n, int d, Rng& rng) {
  Matrix best = latin_hypercube(n, d, rng);
  double best_dist = min_pair_dist(best);
  for (int t = 1; t < 32; ++t) {
    Matrix cand = latin_hypercube(n, d, rng);
    const double dist = min_pair_dist(cand);
    if (dist > best_dist) {
      best = std::move(cand);
      best_dist = dist;
    }
  }
  // Local improvement: swapping one coordinate between two rows keeps the
  // Latin property.
  for (int t = 0; t < 200; ++t) {
    const int j = static_cast<int>(rng.uniform_index(d));
    const int a = static_cast<int>(rng.uniform_index(n));
    int b = static_cast<int>(rng.uniform_index(n));
    if (a == b) continue;
    std::swap(best(a, j), best(b, j));
    const double dist = min_pair_dist(best);
    if (dist > best_dist) {
      best_dist = dist;
    } else {
      std::swap(best(a, j), best(b, j));
    }
  }
  return best;
}

// Nearest unused domain point for each design row (sequential, so two rows
// never collapse onto one domain point).
Matrix snap_to_domain(const Matrix& P, const Problem& problem) {
  const FiniteDomain& dom = *problem.domain;
  Matrix out(P.rows(), P.cols());
  std::unordered_set<std::int64_t> used;
  for (Eigen::Index i = 0; i < P.rows(); ++i) {
    double best = kInf;
    std::int64_t best_idx = -1;
    Design best_point = P.row(i);
    auto scan = [&](const Matrix& pts, std::int64_t base) {
      for (Eigen::Index r = 0; r < pts.rows(); ++r) {
        const std::int64_t idx = base + r;
        if (used.count(idx)) continue;
        const double dist = (pts.row(r) - P.row(i)).squaredNorm();
        if (dist < best) {
          best = dist;
          best_idx = idx;
          best_point = pts.row(r);
        }
      }
    };
    if (dom.materialized()) {
      scan(dom.points, 0);
    } else {
      const std::int64_t n_blocks = (dom.size + kDomainBlockSize - 1) / kDomainBlockSize;
      for (std::int64_t b = 0; b < n_blocks; ++b)
        scan(domain_block(dom, static_cast<int>(P.cols()), b), b * kDomainBlockSize);
    }
    used.insert(best_idx);
    out.row(i) = best_point;
  }
  return out;
}

// ---- acquisition scans over the prediction sample -----------------------

struct ArgmaxState {
  double value = -kInf;
  double mean = kInf;
  Eigen::Index index = -1;

  // Strict improvement, then lower posterior mean, then lowest index (the
  // scan runs in ascending index order).
  void offer(double v, double m, Eigen::Index i) {
    if (v > value || (v == value && m < mean)) {
      value = v;
      mean = m;
      index = i;
    }
  }
};

Eigen::Index argmax_ei(const Matrix& means, const Matrix& sds, int col, double best_observed,
                       const RunState* dup_filter, const Matrix& x_large) {
  ArgmaxState arg;
  for (Eigen::Index r = 0; r < means.rows(); ++r) {
    if (dup_filter && is_observed_duplicate(*dup_filter, x_large.row(r))) continue;
    arg.offer(ei(means(r, col), sds(r, col), best_observed), means(r, col), r);
  }
  return arg.index;
}

// argmax of ei_nad * p_nd, evaluated lazily in decreasing ei_nad order:
// p_nd <= 1 bounds the product, so the scan stops once the sorted ei_nad
// drops below the best product found.
Eigen::Index argmax_nadir(const Matrix& means, const Matrix& sds, int col, double worst_observed,
                          const Matrix& front, int n_mc, std::uint64_t seed,
                          const RunState* dup_filter, const Matrix& x_large) {
  const Eigen::Index n = means.rows();
  Vector en(n);
  for (Eigen::Index r = 0; r < n; ++r) en(r) = ei_nad(means(r, col), sds(r, col), worst_observed);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return en(a) > en(b); });
  double best = -kInf;
  double best_mean = -kInf;
  Eigen::Index best_idx = -1;
  for (const Eigen::Index r : order) {
    if (best_idx >= 0 && en(r) < best) break;  // upper bound on the product
    if (dup_filter && is_observed_duplicate(*dup_filter, x_large.row(r))) continue;
    const double v = en(r) == 0.0
                         ? 0.0
                         : en(r) * p_nd(means.row(r).transpose(), sds.row(r).transpose(), front,
                                        n_mc, mix_seed(seed, static_cast<std::uint64_t>(r)));
    const double m = means(r, col);
    // Ties push outward (higher mean), then to the lowest candidate index.
    if (best_idx < 0 || v > best ||
        (v == best && (m > best_mean || (m == best_mean && r < best_idx)))) {
      best = v;
      best_mean = m;
      best_idx = r;
    }
  }
  return best_idx;
}

}  // namespace

// ---- public entry points -------------------------------------------------

RunState init_design(const Problem& problem, int n0, std::uint64_t seed,
                     const StrategyParams& params, bool fit_models) {
  if (n0 < 2) throw ConfigError("init_design: need at least two initial points");
  RunState state;
  state.problem = problem;
  state.run_seed = seed;
  Rng rng(mix_seed(seed, seed_tag::kInitDesign));
  Matrix P = maximin_lhd(n0, problem.dim, rng);
  if (problem.domain) P = snap_to_domain(P, problem);
  state.X = Matrix(0, problem.dim);
  state.F = Matrix(0, problem.n_obj);
  for (int i = 0; i < n0; ++i) append_observation(state, P.row(i));
  if (fit_models) refit_models(state, params, /*warm=*/false);
  return state;
}

IntegrationSets select_integration_points(const RunState& state, const Matrix& x_large,
                                          const std::vector<MarginalPrediction>& marginals,
                                          const StrategyParams& params, std::uint64_t seed) {
  const Eigen::Index n = x_large.rows();
  const int p = static_cast<int>(state.F.cols());
  require_prefs(params, p);
  Matrix means(n, p);
  Matrix sds(n, p);
  for (int i = 0; i < p; ++i) {
    means.col(i) = marginals[static_cast<std::size_t>(i)].mean;
    sds.col(i) = marginals[static_cast<std::size_t>(i)].sd;
  }

  const int n_utopia = params.mode == EquilibriumKind::CKS ? 0 : p;
  const int n_nadir = params.mode == EquilibriumKind::KS ? p : 0;
  const int n_central = params.n_star - n_utopia - n_nadir;
  if (n_central < 1)
    throw ConfigError("select_integration_points: n_star leaves no room for central points");

  // Target box: hull of the previous simulated equilibria, or a box around
  // the posterior-mean equilibrium on the first iteration (10% of each
  // marginal-mean range per side, since a single point has no extent).
  Vector lo(p);
  Vector hi(p);
  if (state.prev_equilibria) {
    lo = state.prev_equilibria->colwise().minCoeff();
    hi = state.prev_equilibria->colwise().maxCoeff();
  } else {
    RowMatrix mr = means;
    DrawEqWorkspace ws;
    Vector point(p);
    RankTable table;
    if (params.mode == EquilibriumKind::CKS) table = make_rank_table(means);
    const Vector* bounds =
        params.preferences ? &params.preferences->bounds : nullptr;
    draw_equilibrium(mr.data(), static_cast<int>(n), p, params.mode,
                     params.mode == EquilibriumKind::KSpref ? bounds : nullptr,
                     params.mode == EquilibriumKind::CKS ? &table : nullptr, ws, point.data());
    for (int i = 0; i < p; ++i) {
      const double range = means.col(i).maxCoeff() - means.col(i).minCoeff();
      lo(i) = point(i) - 0.05 * range;
      hi(i) = point(i) + 0.05 * range;
    }
  }

  IntegrationSets sets;
  const Vector weights = p_box_batch(means, sds, lo, hi);

  // Weighted sampling without replacement (exponential-keys scheme); any
  // shortfall of positive-weight points is topped up uniformly.
  Rng rng(mix_seed(seed, seed_tag::kCentral));
  std::vector<std::pair<double, std::int64_t>> keyed;
  keyed.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index r = 0; r < n; ++r) {
    const double u = rng.uniform01();
    if (weights(r) > 0.0) keyed.emplace_back(std::log(u) / weights(r), r);
  }
  const auto by_key = [](const auto& a, const auto& b) {
    return a.first > b.first || (a.first == b.first && a.second < b.second);
  };
  if (static_cast<int>(keyed.size()) >= n_central) {
    std::nth_element(keyed.begin(), keyed.begin() + n_central - 1, keyed.end(), by_key);
    keyed.resize(static_cast<std::size_t>(n_central));
    for (const auto& kv : keyed) sets.central.push_back(kv.second);
  } else {
    sets.uniform_fallback = true;
    std::unordered_set<std::int64_t> taken;
    for (const auto& kv : keyed) {
      sets.central.push_back(kv.second);
      taken.insert(kv.second);
    }
    std::vector<std::int64_t> rest;
    rest.reserve(static_cast<std::size_t>(n));
    for (std::int64_t r = 0; r < n; ++r)
      if (!taken.count(r)) rest.push_back(r);
    const std::int64_t need = n_central - static_cast<std::int64_t>(sets.central.size());
    for (std::int64_t k = 0; k < need && k < static_cast<std::int64_t>(rest.size()); ++k) {
      const std::int64_t j = k + rng.uniform_index(static_cast<std::int64_t>(rest.size()) - k);
      std::swap(rest[static_cast<std::size_t>(k)], rest[static_cast<std::size_t>(j)]);
      sets.central.push_back(rest[static_cast<std::size_t>(k)]);
    }
  }
  std::sort(sets.central.begin(), sets.central.end());

  if (n_utopia > 0) {
    for (int c = 0; c < p; ++c) {
      const double best = state.F.col(c).minCoeff();
      sets.utopia.push_back(argmax_ei(means, sds, c, best, nullptr, x_large));
    }
  }
  if (n_nadir > 0) {
    const auto mask = pareto_filter(state.F, params.threads);
    const Matrix front = front_rows(state.F, mask);
    const std::uint64_t nd_seed = mix_seed(seed, seed_tag::kNondominated);
    for (int c = 0; c < p; ++c) {
      const double worst = state.F.col(c).maxCoeff();
      sets.nadir.push_back(argmax_nadir(means, sds, c, worst, front, params.n_mc,
                                        mix_seed(nd_seed, static_cast<std::uint64_t>(c)),
                                        nullptr, x_large));
    }
  }

  std::unordered_set<std::int64_t> seen;
  auto push = [&](const std::vector<std::int64_t>& group) {
    for (const auto idx : group)
      if (seen.insert(idx).second) sets.merged.push_back(idx);
  };
  push(sets.central);
  push(sets.utopia);
  push(sets.nadir);

  sets.designs.resize(static_cast<Eigen::Index>(sets.merged.size()), x_large.cols());
  for (std::size_t i = 0; i < sets.merged.size(); ++i)
    sets.designs.row(static_cast<Eigen::Index>(i)) = x_large.row(sets.merged[i]);
  return sets;
}

AuxiliarySample build_aux_sample(const std::vector<GPModel>& models,
                                 const SimulationEnsemble& ensemble,
                                 const EnsembleJoints& joints, const Matrix& x_aux,
                                 int draw_index) {
  if (draw_index < 0 || draw_index >= static_cast<int>(ensemble.draws.size()))
    throw std::invalid_argument("build_aux_sample: draw index out of range");
  AuxiliarySample aux;
  aux.designs = x_aux;
  aux.values.resize(x_aux.rows(), static_cast<Eigen::Index>(models.size()));
  for (std::size_t i = 0; i < models.size(); ++i) {
    const GPModel& model = models[i];
    const ObjectiveJoint& joint = joints.objectives[i];
    // Posterior mean and cross-covariance of the aux points against the
    // simulation points, conditioned on the training data.
    Matrix k_train_aux = cross_covariance(model.kernel, model.X, x_aux);
    Vector mean_aux = trend_basis(model.trend, x_aux) * model.beta +
                      k_train_aux.transpose() * model.alpha;
    model.chol.triangularView<Eigen::Lower>().solveInPlace(k_train_aux);  // now L^{-1} k
    Matrix cross = cross_covariance(model.kernel, ensemble.points, x_aux);
    cross.noalias() -= joint.v_train.transpose() * k_train_aux;
    // Treat one joint draw over the simulation points as pseudo-data: the
    // updated mean at the aux points is mean + cov(aux, pts) cov(pts)^{-1} r.
    Vector resid = ensemble.draws[static_cast<std::size_t>(draw_index)].col(
                       static_cast<Eigen::Index>(i)) -
                   joint.mean;
    joint.chol.triangularView<Eigen::Lower>().solveInPlace(resid);
    joint.chol.triangularView<Eigen::Lower>().transpose().solveInPlace(resid);
    aux.values.col(static_cast<Eigen::Index>(i)) = mean_aux + cross.transpose() * resid;
  }
  return aux;
}

StepInfo sur_step(RunState& state, const StrategyParams& params) {
  const auto start = std::chrono::steady_clock::now();
  require_models(state, "sur_step");
  require_prefs(params, state.F.cols());
  const int p = static_cast<int>(state.F.cols());
  const std::uint64_t iter_seed =
      mix_seed(state.run_seed, seed_tag::kIteration, static_cast<std::uint64_t>(state.iteration));

  const LargeSample large =
      sample_x_large(state.problem, params.n_large, mix_seed(iter_seed, seed_tag::kXLarge));
  std::vector<MarginalPrediction> marginals(static_cast<std::size_t>(p));
  for (int i = 0; i < p; ++i)
    marginals[static_cast<std::size_t>(i)] =
        posterior_marginal(state.models[static_cast<std::size_t>(i)], large.points);

  const IntegrationSets sets =
      select_integration_points(state, large.points, marginals, params, iter_seed);

  EnsembleJoints joints;
  const SimulationEnsemble ensemble =
      simulate(state.models, sets.designs, params.m_draws, iter_seed, &joints);
  const int n_points = static_cast<int>(sets.designs.rows());
  const int m = params.m_draws;

  RankTable aux_table;
  if (params.mode == EquilibriumKind::CKS) {
    const std::uint64_t aux_seed = mix_seed(iter_seed, seed_tag::kAux);
    const Matrix x_aux = sample_aux_designs(state.problem, params.n_aux, aux_seed);
    AuxiliarySample aux = build_aux_sample(state.models, ensemble, joints, x_aux, 0);
    aux.seed = aux_seed;
    aux_table = make_rank_table(aux.values);
    state.current_aux = std::move(aux);
  }

  // Equilibrium of every input draw; these rows double as the reused k == j
  // outcome inside the criterion and as the next iteration's target box.
  Matrix input_eq(m, p);
  {
    DrawEqWorkspace ws;
    Vector point(p);
    const Vector* bounds =
        params.mode == EquilibriumKind::KSpref ? &params.preferences->bounds : nullptr;
    const RankTable* ranks = params.mode == EquilibriumKind::CKS ? &aux_table : nullptr;
    for (int j = 0; j < m; ++j) {
      draw_equilibrium(ensemble.draws[static_cast<std::size_t>(j)].data(), n_points, p,
                       params.mode, bounds, ranks, ws, point.data());
      input_eq.row(j) = point.transpose();
    }
  }

  StepInfo info;
  info.phase = "sur";
  SurContext context;
  context.preference_bounds =
      params.mode == EquilibriumKind::KSpref ? &params.preferences->bounds : nullptr;
  context.aux_ranks = params.mode == EquilibriumKind::CKS ? &aux_table : nullptr;
  context.input_equilibria = &input_eq;

  const bool all_identical = [&] {
    for (int j = 1; j < m; ++j)
      if (input_eq.row(j) != input_eq.row(0)) return false;
    return true;
  }();

  Eigen::Index chosen = -1;
  if (all_identical) {
    // Every conditioning outcome leaves the (degenerate) ensemble fixed, so
    // the criterion is zero everywhere; take the first evaluable candidate.
    info.criterion_value = 0.0;
    for (int c = 0; c < n_points; ++c) {
      if (is_observed_duplicate(state, sets.designs.row(c))) continue;
      chosen = c;
      break;
    }
  } else {
    double best = kInf;
    SurWorkspace ws;
    for (int c = 0; c < n_points; ++c) {
      if (is_observed_duplicate(state, sets.designs.row(c))) {
        ++info.candidates_skipped;
        continue;
      }
      KrigingWeights weights;
      try {
        weights = kriging_weights(joints, c);
      } catch (const DegenerateConditioning&) {
        ++info.candidates_skipped;
        continue;
      }
      const SurEstimate est = sur_criterion(ensemble, c, weights, params.mode, context, &ws);
      if (est.j_hat < best) {
        best = est.j_hat;
        chosen = c;
      }
    }
    info.criterion_value = best;
  }

  Design x;
  if (chosen >= 0) {
    x = sets.designs.row(chosen);
  } else {
    // Every candidate was degenerate; fall back to a uniform unvisited point
    // from the prediction sample.
    info.uniform_fallback = true;
    Rng rng(mix_seed(iter_seed, seed_tag::kRandomSearch));
    x = large.points.row(rng.uniform_index(large.points.rows()));
    for (int tries = 0; tries < 100 && is_observed_duplicate(state, x); ++tries)
      x = large.points.row(rng.uniform_index(large.points.rows()));
  }

  info.x = x;
  info.f = append_observation(state, x);
  refit_models(state, params, /*warm=*/true);
  state.prev_equilibria = input_eq;
  state.iteration += 1;
  info.wall_ms = elapsed_ms(start);
  return info;
}

void run_sur(RunState& state, int n_new, const StrategyParams& params,
             const StepObserver& observer) {
  for (int k = 0; k < n_new; ++k) {
    const StepInfo info = sur_step(state, params);
    if (observer) observer(state, info);
  }
}

void baseline_ks_run(RunState& state, int n_new, const StrategyParams& params,
                     const StepObserver& observer) {
  require_models(state, "baseline_ks_run");
  const int p = static_cast<int>(state.F.cols());
  const int cycle = 2 * p + 1;
  for (int k = 0; k < n_new; ++k) {
    const auto start = std::chrono::steady_clock::now();
    const std::uint64_t iter_seed = mix_seed(state.run_seed, seed_tag::kIteration,
                                             static_cast<std::uint64_t>(state.iteration));
    const LargeSample large =
        sample_x_large(state.problem, params.n_large, mix_seed(iter_seed, seed_tag::kXLarge));
    const Eigen::Index n = large.points.rows();
    Matrix means(n, p);
    Matrix sds(n, p);
    for (int i = 0; i < p; ++i) {
      const MarginalPrediction pred =
          posterior_marginal(state.models[static_cast<std::size_t>(i)], large.points);
      means.col(i) = pred.mean;
      sds.col(i) = pred.sd;
    }

    StepInfo info;
    Eigen::Index chosen = -1;
    const int cp = state.iteration % cycle;
    if (cp < p) {
      info.phase = "ei:" + std::to_string(cp);
      chosen = argmax_ei(means, sds, cp, state.F.col(cp).minCoeff(), &state, large.points);
    } else if (cp < 2 * p) {
      const int c = cp - p;
      info.phase = "nad:" + std::to_string(c);
      const auto mask = pareto_filter(state.F, params.threads);
      const Matrix front = front_rows(state.F, mask);
      const std::uint64_t nd_seed = mix_seed(iter_seed, seed_tag::kNondominated);
      chosen = argmax_nadir(means, sds, c, state.F.col(c).maxCoeff(), front, params.n_mc,
                            mix_seed(nd_seed, static_cast<std::uint64_t>(c)), &state,
                            large.points);
    } else {
      info.phase = "lcb";
      // Maxmin of the LCB benefit ratios against the posterior-mean front's
      // utopia/nadir.
      const auto mask = pareto_filter(means, params.threads);
      const auto [u, d] = utopia_nadir(means, mask);
      ArgmaxState arg;
      for (Eigen::Index r = 0; r < n; ++r) {
        if (is_observed_duplicate(state, large.points.row(r))) continue;
        double worst = kInf;
        bool any = false;
        for (int i = 0; i < p; ++i) {
          const double denom = d(i) - u(i);
          if (denom <= 0.0) continue;
          any = true;
          worst = std::min(worst, (d(i) - (means(r, i) - params.beta * sds(r, i))) / denom);
        }
        if (!any) continue;
        arg.offer(worst, means.row(r).sum(), r);
      }
      chosen = arg.index;
    }

    if (chosen < 0) {
      info.uniform_fallback = true;
      Rng rng(mix_seed(iter_seed, seed_tag::kRandomSearch));
      chosen = rng.uniform_index(n);
    }
    info.x = large.points.row(chosen);
    info.f = append_observation(state, info.x);
    refit_models(state, params, /*warm=*/true);
    state.iteration += 1;
    info.wall_ms = elapsed_ms(start);
    if (observer) observer(state, info);
  }
}

void baseline_cks_run(RunState& state, int n_new, const StrategyParams& params,
                      const StepObserver& observer) {
  require_models(state, "baseline_cks_run");
  const int p = static_cast<int>(state.F.cols());
  const int cycle = 2 * p + 1;
  for (int k = 0; k < n_new; ++k) {
    const auto start = std::chrono::steady_clock::now();
    const std::uint64_t iter_seed = mix_seed(state.run_seed, seed_tag::kIteration,
                                             static_cast<std::uint64_t>(state.iteration));
    const LargeSample large =
        sample_x_large(state.problem, params.n_large, mix_seed(iter_seed, seed_tag::kXLarge));
    const Eigen::Index n = large.points.rows();
    Matrix means(n, p);
    Matrix sds(n, p);
    for (int i = 0; i < p; ++i) {
      const MarginalPrediction pred =
          posterior_marginal(state.models[static_cast<std::size_t>(i)], large.points);
      means.col(i) = pred.mean;
      sds.col(i) = pred.sd;
    }

    StepInfo info;
    Eigen::Index chosen = -1;
    const int cp = state.iteration % cycle;
    if (cp < 2 * p) {
      const int c = cp % p;
      info.phase = "var:" + std::to_string(c);
      ArgmaxState arg;
      for (Eigen::Index r = 0; r < n; ++r) {
        if (is_observed_duplicate(state, large.points.row(r))) continue;
        arg.offer(sds(r, c), means(r, c), r);
      }
      chosen = arg.index;
    } else {
      info.phase = "exploit";
      // CKS solution of the posterior means, ranked against a fresh
      // posterior-mean auxiliary sample.
      const std::uint64_t aux_seed = mix_seed(iter_seed, seed_tag::kAux);
      const Matrix x_aux = sample_aux_designs(state.problem, params.n_aux, aux_seed);
      AuxiliarySample aux;
      aux.designs = x_aux;
      aux.seed = aux_seed;
      aux.values.resize(x_aux.rows(), p);
      for (int i = 0; i < p; ++i)
        aux.values.col(i) =
            posterior_marginal(state.models[static_cast<std::size_t>(i)], x_aux).mean;
      const RankTable table = make_rank_table(aux.values);
      state.current_aux = std::move(aux);

      const auto mask = pareto_filter(means, params.threads);
      ArgmaxState arg;
      for (Eigen::Index r = 0; r < n; ++r) {
        if (!mask[static_cast<std::size_t>(r)]) continue;
        if (is_observed_duplicate(state, large.points.row(r))) continue;
        double worst = kInf;
        for (int i = 0; i < p; ++i) worst = std::min(worst, table.rank(i, means(r, i)));
        arg.offer(worst, means.row(r).sum(), r);
      }
      chosen = arg.index;
    }

    if (chosen < 0) {
      info.uniform_fallback = true;
      Rng rng(mix_seed(iter_seed, seed_tag::kRandomSearch));
      chosen = rng.uniform_index(n);
    }
    info.x = large.points.row(chosen);
    info.f = append_observation(state, info.x);
    refit_models(state, params, /*warm=*/true);
    state.iteration += 1;
    info.wall_ms = elapsed_ms(start);
    if (observer) observer(state, info);
  }
}

void random_search_run(RunState& state, int n_new, const StepObserver& observer) {
  Rng rng(mix_seed(state.run_seed, seed_tag::kRandomSearch));
  for (int k = 0; k < n_new; ++k) {
    const auto start = std::chrono::steady_clock::now();
    StepInfo info;
    info.phase = "random";
    Design x(state.problem.dim);
    if (state.problem.domain) {
      const std::int64_t idx = rng.uniform_index(state.problem.domain->size);
      x = domain_rows(state.problem, {idx}).row(0);
    } else {
      for (int j = 0; j < state.problem.dim; ++j) x(j) = rng.uniform01();
    }
    info.x = x;
    info.f = append_observation(state, x);
    state.iteration += 1;
    info.wall_ms = elapsed_ms(start);
    if (observer) observer(state, info);
  }
}

EquilibriumResult report_estimate(const RunState& state, EquilibriumKind mode,
                                  const StrategyParams& params) {
  const int p = static_cast<int>(state.F.cols());
  const auto mask = pareto_filter(state.F, params.threads);
  std::vector<Eigen::Index> row_ids;
  const Matrix front = front_rows(state.F, mask, &row_ids);

  EquilibriumResult result;
  result.kind = mode;
  if (mode == EquilibriumKind::CKS) {
    // Rank sample: the strategy's current auxiliary sample when one exists,
    // a fresh posterior-mean sample when models are available, otherwise the
    // observations themselves.
    RankTable table;
    if (state.current_aux) {
      table = make_rank_table(state.current_aux->values);
    } else if (!state.models.empty() && state.models.front().size() > 0) {
      const Matrix x_aux = sample_aux_designs(
          state.problem, params.n_aux,
          mix_seed(state.run_seed, seed_tag::kReport, static_cast<std::uint64_t>(state.iteration)));
      Matrix values(x_aux.rows(), p);
      for (int i = 0; i < p; ++i)
        values.col(i) = posterior_marginal(state.models[static_cast<std::size_t>(i)], x_aux).mean;
      table = make_rank_table(values);
    } else {
      table = make_rank_table(state.F);
    }
    double best = -kInf;
    Eigen::Index best_row = -1;
    Vector best_ranks(p);
    for (Eigen::Index r = 0; r < front.rows(); ++r) {
      Vector ranks(p);
      double worst = kInf;
      for (int i = 0; i < p; ++i) {
        ranks(i) = table.rank(i, front(r, i));
        worst = std::min(worst, ranks(i));
      }
      if (worst > best) {
        best = worst;
        best_row = r;
        best_ranks = ranks;
      }
    }
    result.index = static_cast<int>(row_ids[static_cast<std::size_t>(best_row)]);
    result.values = front.row(best_row).transpose();
    result.ratios = best_ranks;
    result.min_ratio = best;
    return result;
  }

  const auto [u, nadir] = utopia_nadir(state.F, mask);
  Vector d = nadir;
  if (mode == EquilibriumKind::KSpref) {
    require_prefs(params, p);
    d = apply_preferences(nadir, *params.preferences);
  }
  double best = -kInf;
  Eigen::Index best_row = -1;
  Vector best_ratios = Vector::Constant(p, kNaN);
  bool degenerate_coords = false;
  for (Eigen::Index r = 0; r < front.rows(); ++r) {
    Vector ratios = Vector::Constant(p, kNaN);
    double worst = kInf;
    bool any = false;
    for (int i = 0; i < p; ++i) {
      const double denom = d(i) - u(i);
      if (denom <= 0.0) {
        degenerate_coords = true;
        continue;
      }
      ratios(i) = (d(i) - front(r, i)) / denom;
      worst = std::min(worst, ratios(i));
      any = true;
    }
    if (!any) continue;
    if (worst > best) {
      best = worst;
      best_row = r;
      best_ratios = ratios;
    }
  }
  if (best_row < 0) {
    // Fully degenerate geometry (e.g. a single-point front): report the
    // first front point and flag it.
    best_row = 0;
    best = kNaN;
    result.degenerate = true;
  }
  result.degenerate = result.degenerate || degenerate_coords;
  result.index = static_cast<int>(row_ids[static_cast<std::size_t>(best_row)]);
  result.values = front.row(best_row).transpose();
  result.ratios = best_ratios;
  result.min_ratio = best;
  return result;
}

}  // namespace ksbo
