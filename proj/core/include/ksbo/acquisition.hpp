#pragma once

#include "ksbo/common.hpp"
#include "ksbo/equilibrium.hpp"
#include "ksbo/gp.hpp"

namespace ksbo {

double normal_cdf(double z);
double normal_pdf(double z);

// Expected improvement below `best` for a minimized objective; collapses to
// max(0, best - mean) at zero sd.
double ei(double mean, double sd, double best);

// Mirrored expected improvement above `worst` (drives nadir exploration).
double ei_nad(double mean, double sd, double worst);

// Probability that an independent Gaussian vector lands inside the axis
// box [lo, hi]: prod_i Phi((hi_i - mu_i)/sd_i) - Phi((lo_i - mu_i)/sd_i).
// Zero-sd coordinates degrade to the indicator of mu_i in [lo_i, hi_i].
double p_box(const Vector& mean, const Vector& sd, const Vector& lo, const Vector& hi);

// Batched variant over N points (rows of means/sds).
Vector p_box_batch(const Matrix& means, const Matrix& sds, const Vector& lo, const Vector& hi);

// Monte-Carlo probability that a Gaussian sample is not dominated by any
// row of `front`; deterministic in (inputs, seed).
double p_nd(const Vector& mean, const Vector& sd, const Matrix& front, int n_mc,
            std::uint64_t seed);

// Ratios of the lower-confidence-bound mean surrogate:
// (d_i - (mean_i - beta sd_i)) / (d_i - u_i).
Vector lcb_ratios(const Vector& mean, const Vector& sd, const Vector& d, const Vector& u,
                  double beta);

// Determinant of the sample covariance (denominator M-1) of the rows;
// round-off negatives clamp to zero.
double gamma_hat(const Matrix& equilibria);

// External context for the per-draw equilibrium map: preference bounds for
// KSpref, the shared auxiliary rank table for CKS, and (optionally) the
// input ensemble's own equilibria, which enable the zero-variance shortcut
// and reuse of the unchanged k == j draws.
struct SurContext {
  const Vector* preference_bounds = nullptr;
  const RankTable* aux_ranks = nullptr;
  const Matrix* input_equilibria = nullptr;  // M x p
};

struct SurEstimate {
  int candidate_index = -1;
  double j_hat = 0.0;
  Vector gamma_samples;  // one determinant per conditioning outcome
};

// Reusable buffers for scanning many candidates.
struct SurWorkspace {
  RowMatrix updated;      // N x p conditioned draw
  RowMatrix lambda;       // N x p weights, row-major copy
  Matrix psi;             // M x p equilibria of the conditioned ensemble
  DrawEqWorkspace draw_ws;
};

// One-point stepwise-uncertainty-reduction value: for each of the M
// possible outcomes F_k (the ensemble's own draws at the candidate), every
// draw is conditioned through the kriging-weight update, the per-draw
// equilibria are recomputed, and their sample-covariance determinant is
// averaged.
SurEstimate sur_criterion(const SimulationEnsemble& ensemble, int candidate_index,
                          const KrigingWeights& weights, EquilibriumKind mode,
                          const SurContext& context, SurWorkspace* workspace = nullptr);

}  // namespace ksbo
