#pragma once

#include "ksbo/common.hpp"
#include "ksbo/equilibrium.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>

namespace ksbo {

// Finite design domains are generated in fixed-size blocks so that 1e7-point
// domains never have to live in memory: block b of a domain is a pure
// function of (seed, b).
inline constexpr std::int64_t kDomainBlockSize = 100000;
// Guard for explicit materialization (points kept resident).
inline constexpr std::int64_t kMaterializeCap = 2000000;

struct FiniteDomain {
  std::int64_t size = 0;
  std::uint64_t seed = 0;
  Matrix points;  // resident only when size <= kMaterializeCap

  bool materialized() const { return points.rows() == size; }
};

struct Problem {
  std::string id;
  int dim = 0;
  int n_obj = 0;
  std::function<Vector(const Design&)> evaluate;  // deterministic, noise-free
  Vector noise_vars;                              // per-objective tau, zeros if noiseless
  std::uint64_t noise_seed = 0;
  std::optional<FiniteDomain> domain;

  bool noisy() const { return noise_vars.size() > 0 && noise_vars.maxCoeff() > 0.0; }

  // Observed value at call `call_index` of a run: true value plus the seeded
  // Gaussian noise stream.  Pure in (x, call_index), hence reentrant.
  Vector evaluate_observed(const Design& x, std::int64_t call_index) const;
};

// Rescaled six-dimensional Hartmann core used by all hartman6 objectives.
double hartman6_base(const Design& v);

// The six-objective hartman problem on [0,1]^6 (permuted/shifted copies of
// the base through -log(-h(.))).
Problem make_hartman6();

// Standard DTLZ2 with d inputs and p objectives (k = d - p + 1 distance
// variables).
Problem make_dtlz2(int d, int p);

// Same problem with independent Gaussian observation noise per objective.
Problem noisy_wrap(const Problem& problem, const Vector& tau, std::uint64_t seed);

// Attaches a finite domain of `size` i.i.d. uniform points.  Domains up to
// the materialization cap are kept resident; larger ones stay generator-only.
Problem discrete_domain(const Problem& problem, std::int64_t size, std::uint64_t seed);

// Regenerates one domain block (pure in the domain spec).
Matrix domain_block(const FiniteDomain& domain, int dim, std::int64_t block_index);

// Streams f(x) for every domain point in index order:
// visit(block_values, block_designs, first_index).
void for_each_domain_block(const Problem& problem,
                           const std::function<void(const Matrix&, const Matrix&,
                                                    std::int64_t)>& visit,
                           std::int64_t block_size = kDomainBlockSize);

// Problem ids: "hartman6" | "dtlz2-D-P", optional "@SIZE" finite-domain
// suffix (e.g. @1e5, @1e7), optional "+noise(TAU)" or "+noise(t1,...,tp)".
Problem parse_problem_id(const std::string& id, std::uint64_t domain_seed,
                         std::uint64_t noise_seed = 0);

// Ground truth over a finite domain, computed exhaustively (streamed).
struct ReferenceSolution {
  std::string problem_id;
  std::uint64_t domain_seed = 0;
  std::uint64_t aux_seed = 0;
  std::int64_t domain_size = 0;
  std::int64_t aux_size = 0;        // auxiliary sample for CKS ranks
  bool aux_is_full_domain = false;  // true when the whole domain served as aux
  Vector utopia;
  Vector nadir;
  EquilibriumResult ks;   // index field refers to the domain ordering
  EquilibriumResult cks;
  std::uint64_t domain_hash = 0;  // FNV over the streamed design coordinates
  std::shared_ptr<const RankTable> aux_ranks;  // rebuilt on load

  ReferenceEquilibrium ks_reference() const;
  ReferenceEquilibrium cks_reference() const;
};

ReferenceSolution compute_reference(const Problem& problem, std::uint64_t aux_seed,
                                    std::int64_t block_size = kDomainBlockSize);

// Auxiliary-sample cap for references: domains at or below the cap serve as
// their own rank sample, larger ones contribute a seeded subset.
inline constexpr std::int64_t kReferenceAuxCap = 100000;

// Re-collects the auxiliary objective sample a reference was built with and
// (optionally) the streamed domain hash; reference files persist seeds and
// solutions only, so loading re-streams the domain.
Matrix reference_aux_values(const Problem& problem, std::uint64_t aux_seed,
                            std::uint64_t* domain_hash = nullptr,
                            std::int64_t block_size = kDomainBlockSize);

// Two-objective drop study: what optimizing a single objective pair costs in
// the remaining objectives.  Collects the pairwise Pareto front over the full
// domain, each front point's min benefit ratio over the pair and over all p
// objectives (ratios normalized by the reference utopia/nadir), against the
// full KS solution's performance.
struct StudyRecord {
  int obj_a = 0;
  int obj_b = 0;
  std::vector<std::int64_t> front_indices;
  Vector pair_min_ratio;  // per pairwise-front point
  Vector full_min_ratio;  // per pairwise-front point
  double ks_pair_ratio = 0.0;   // full KS solution restricted to the pair
  double ks_full_ratio = 0.0;   // full KS min ratio
  double best_pair_ratio = 0.0;
  double mean_full_ratio = 0.0;
};

StudyRecord objective_drop_study(const Problem& problem, int obj_a, int obj_b,
                                 const ReferenceSolution& reference);

}  // namespace ksbo
