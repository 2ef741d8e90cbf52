#pragma once

#include "ksbo/acquisition.hpp"
#include "ksbo/equilibrium.hpp"
#include "ksbo/gp.hpp"
#include "ksbo/problems.hpp"

#include <functional>
#include <optional>
#include <string>

namespace ksbo {

// Knobs shared by all model-based strategies (coarse defaults).
struct StrategyParams {
  EquilibriumKind mode = EquilibriumKind::KS;
  int n_star = 250;    // integration/candidate set size N*
  int m_draws = 25;    // conditional-simulation ensemble size M
  int n_aux = 10000;   // auxiliary sample size for copula ranks
  int n_mc = 1000;     // Monte-Carlo draws for p_nd
  double beta = 1.96;  // LCB multiplier for the baseline ratio step
  std::int64_t n_large = 100000;  // prediction grid size
  KernelFamily kernel = KernelFamily::Matern52;
  TrendKind trend = TrendKind::Constant;
  std::optional<PreferenceSpec> preferences;  // required in KSpref mode
  int threads = 1;
};

// Auxiliary sample: designs drawn i.i.d. from the instrumental (uniform)
// distribution plus the objective values attached to them (hallucinated or
// posterior-mean, depending on the caller).
struct AuxiliarySample {
  Matrix designs;
  Matrix values;
  std::uint64_t seed = 0;
};

// Everything a sequential run carries between iterations.
struct RunState {
  Problem problem;
  Matrix X;  // n x d evaluated designs
  Matrix F;  // n x p observed objective values
  std::vector<GPModel> models;  // one per objective; empty until fitted
  int evaluations = 0;
  int iteration = 0;  // completed post-init steps
  std::uint64_t run_seed = 0;
  std::optional<Matrix> prev_equilibria;      // M x p simulated equilibria (last SUR step)
  std::optional<AuxiliarySample> current_aux; // latest rank sample (CKS strategies)
};

// Per-step diagnostics handed to observers after each evaluation.
struct StepInfo {
  std::string phase;
  Design x;
  Vector f;
  int candidates_skipped = 0;
  bool uniform_fallback = false;
  double criterion_value = 0.0;  // acquisition value at the selected point
  double wall_ms = 0.0;
};

using StepObserver = std::function<void(const RunState&, const StepInfo&)>;

// Maximin-optimized Latin hypercube of n0 points (snapped onto the finite
// domain when the problem has one), evaluated, with one GP fitted per
// objective unless fit_models is false.
RunState init_design(const Problem& problem, int n0, std::uint64_t seed,
                     const StrategyParams& params, bool fit_models = true);

// The integration/candidate set X*: indices refer to rows of the X_large
// sample the set was built from.
struct IntegrationSets {
  std::vector<std::int64_t> central;
  std::vector<std::int64_t> utopia;
  std::vector<std::int64_t> nadir;
  std::vector<std::int64_t> merged;  // deduplicated union, order-preserving
  Matrix designs;                    // rows of X_large at `merged`
  bool uniform_fallback = false;     // box probabilities degenerated
};

// Draws the central points proportionally to p_box (without replacement),
// adds per-objective EI maximizers (KS/KSpref) and EI_nad * p_nd maximizers
// (KS only), then merges.
IntegrationSets select_integration_points(const RunState& state, const Matrix& x_large,
                                          const std::vector<MarginalPrediction>& marginals,
                                          const StrategyParams& params, std::uint64_t seed);

// Hallucinated observations: posterior-update means at x_aux after treating
// one ensemble draw over X* as noiseless pseudo-data.
AuxiliarySample build_aux_sample(const std::vector<GPModel>& models,
                                 const SimulationEnsemble& ensemble,
                                 const EnsembleJoints& joints, const Matrix& x_aux,
                                 int draw_index);

// One full SUR iteration: integration sets, ensemble, candidate scan,
// evaluation of the argmin, model refit.
StepInfo sur_step(RunState& state, const StrategyParams& params);

void run_sur(RunState& state, int n_new, const StrategyParams& params,
             const StepObserver& observer = {});

// Algorithm-1-style baseline: cycles of p EI steps, p EI_nad * p_nd steps,
// and one LCB-ratio maxmin step.
void baseline_ks_run(RunState& state, int n_new, const StrategyParams& params,
                     const StepObserver& observer = {});

// CKS baseline: 2p posterior-variance maximizations followed by one
// exploitation step at the CKS solution of the posterior means.
void baseline_cks_run(RunState& state, int n_new, const StrategyParams& params,
                      const StepObserver& observer = {});

// Uniform sampling over the domain; no models involved.
void random_search_run(RunState& state, int n_new, const StepObserver& observer = {});

// Current equilibrium estimate over the actual observations.
EquilibriumResult report_estimate(const RunState& state, EquilibriumKind mode,
                                  const StrategyParams& params);

}  // namespace ksbo
