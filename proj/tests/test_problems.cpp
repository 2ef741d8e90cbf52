#include "ksbo/problems.hpp"

#include "ksbo/rng.hpp"

#include "test_util.hpp"

#include "doctest.h"

#include <cmath>
#include <numbers>
#include <vector>

using namespace ksbo;

namespace {

// Independent transcription of the rescaled six-dimensional Hartmann core,
// written column-by-column from the standard constant tables.
double oracle_hartman_base(const Design& v) {
  static const double c[4] = {1.0, 1.2, 3.0, 3.2};
  static const double A[4][6] = {
      {10.0, 3.0, 17.0, 3.5, 1.7, 8.0},
      {0.05, 10.0, 17.0, 0.1, 8.0, 14.0},
      {3.0, 3.5, 1.7, 10.0, 17.0, 8.0},
      {17.0, 8.0, 0.05, 10.0, 0.1, 14.0},
  };
  static const double P[4][6] = {
      {0.1312, 0.1696, 0.5569, 0.0124, 0.8283, 0.5886},
      {0.2329, 0.4135, 0.8307, 0.3736, 0.1004, 0.9991},
      {0.2348, 0.1451, 0.3522, 0.2883, 0.3047, 0.6650},
      {0.4047, 0.8828, 0.8732, 0.5743, 0.1091, 0.0381},
  };
  double sum = 0.0;
  for (int i = 0; i < 4; ++i) {
    double expo = 0.0;
    for (int j = 0; j < 6; ++j) expo += A[i][j] * (v[j] - P[i][j]) * (v[j] - P[i][j]);
    sum += c[i] * std::exp(-expo);
  }
  return -(2.58 + sum) / 1.94;
}

// Independent transcription of DTLZ2 in its usual one-based statement.
Vector oracle_dtlz2(const Design& x, int d, int p) {
  double g = 0.0;
  for (int j = p; j <= d; ++j) g += (x[j - 1] - 0.5) * (x[j - 1] - 0.5);
  Vector f(p);
  const double half_pi = std::numbers::pi / 2.0;
  for (int j = 1; j <= p; ++j) {
    double value = 1.0 + g;
    for (int i = 1; i <= p - j; ++i) value *= std::cos(half_pi * x[i - 1]);
    if (j >= 2) value *= std::sin(half_pi * x[p - j]);
    f[j - 1] = value;
  }
  return f;
}

// Collects every (index, value) pair of a finite-domain problem.
Matrix collect_domain_values(const Problem& problem, std::int64_t block_size = 1000) {
  REQUIRE(problem.domain.has_value());
  Matrix all(problem.domain->size, problem.n_obj);
  for_each_domain_block(
      problem,
      [&](const Matrix& values, const Matrix&, std::int64_t first) {
        all.middleRows(first, values.rows()) = values;
      },
      block_size);
  return all;
}

}  // namespace

TEST_CASE("problems: hartman objectives match an independent transcription") {
  const Problem problem = make_hartman6();
  CHECK(problem.id == "hartman6");
  CHECK(problem.dim == 6);
  CHECK(problem.n_obj == 6);
  CHECK_FALSE(problem.noisy());

  Rng rng(61);
  for (int t = 0; t < 50; ++t) {
    Design x(6);
    for (int j = 0; j < 6; ++j) x[j] = rng.uniform01();
    CHECK(hartman6_base(x) == doctest::Approx(oracle_hartman_base(x)).epsilon(1e-12));

    const Vector f = problem.evaluate(x);
    REQUIRE(f.size() == 6);
    CHECK(f.allFinite());

    // First objective: identity permutation, no shift.
    const double f0 = -std::log(-oracle_hartman_base(0.5 * x));
    CHECK(f[0] == doctest::Approx(f0).epsilon(1e-12));

    // Second objective: reversed coordinates, all half-shifts active.
    Design v(6);
    for (int j = 0; j < 6; ++j) v[j] = 0.5 * x[5 - j] + 0.5;
    CHECK(f[1] == doctest::Approx(-std::log(-oracle_hartman_base(v))).epsilon(1e-12));
  }
}

TEST_CASE("problems: hartman core stays negative across the whole box") {
  // The log transform in the objectives needs -h > 0 everywhere the
  // objectives ever evaluate it (v in [0, 1]^6).
  Rng rng(62);
  Design v(6);
  double max_seen = -std::numeric_limits<double>::infinity();
  for (int t = 0; t < 100000; ++t) {
    for (int j = 0; j < 6; ++j) v[j] = rng.uniform01();
    max_seen = std::max(max_seen, hartman6_base(v));
  }
  CHECK(max_seen < -1.0);  // 2.58 / 1.94 leaves comfortable headroom
}

TEST_CASE("problems: evaluation rejects designs outside the unit box") {
  const Problem problem = make_hartman6();
  Design bad = Design::Constant(6, 0.5);
  bad[2] = 1.5;
  CHECK_THROWS_AS(problem.evaluate(bad), std::invalid_argument);
  bad[2] = -0.2;
  CHECK_THROWS_AS(problem.evaluate(bad), std::invalid_argument);
  CHECK_THROWS_AS(problem.evaluate(Design::Constant(5, 0.5)), std::invalid_argument);
  CHECK(problem.evaluate(Design::Zero(6)).allFinite());
  CHECK(problem.evaluate(Design::Ones(6)).allFinite());
}

TEST_CASE("problems: dtlz2 matches the textbook statement") {
  Rng rng(63);
  for (const auto& [d, p] : {std::pair{3, 2}, std::pair{5, 4}, std::pair{7, 3}}) {
    const Problem problem = make_dtlz2(d, p);
    CHECK(problem.id == "dtlz2-" + std::to_string(d) + "-" + std::to_string(p));
    CHECK(problem.dim == d);
    CHECK(problem.n_obj == p);
    for (int t = 0; t < 30; ++t) {
      Design x(d);
      for (int j = 0; j < d; ++j) x[j] = rng.uniform01();
      const Vector f = problem.evaluate(x);
      const Vector expect = oracle_dtlz2(x, d, p);
      for (int m = 0; m < p; ++m) CHECK(f[m] == doctest::Approx(expect[m]).epsilon(1e-12));

      // Spherical identity: the objective vector has norm 1 + g.
      double g = 0.0;
      for (int j = p - 1; j < d; ++j) g += (x[j] - 0.5) * (x[j] - 0.5);
      CHECK(f.squaredNorm() == doctest::Approx((1.0 + g) * (1.0 + g)).epsilon(1e-12));
    }
  }
}

TEST_CASE("problems: dtlz2 corner designs and distance scaling") {
  const int d = 5, p = 3;
  const Problem problem = make_dtlz2(d, p);

  // Position variables at zero concentrate everything on the first
  // objective; distance variables at 1/2 put the point on the unit sphere.
  Design x = Design::Zero(d);
  x.tail(d - p + 1).setConstant(0.5);
  Vector f = problem.evaluate(x);
  CHECK(f[0] == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(f[1] == 0.0);
  CHECK(f[2] == 0.0);

  // Position variables at one concentrate on the last objective.
  x.head(p - 1).setOnes();
  f = problem.evaluate(x);
  CHECK(f[p - 1] == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(std::abs(f[0]) < 1e-15);

  // Two designs sharing position variables differ by the factor 1 + g.
  Rng rng(64);
  Design a(d), b(d);
  for (int j = 0; j < d; ++j) a[j] = rng.uniform01();
  b = a;
  for (int j = p - 1; j < d; ++j) b[j] = rng.uniform01();
  double ga = 0.0, gb = 0.0;
  for (int j = p - 1; j < d; ++j) {
    ga += (a[j] - 0.5) * (a[j] - 0.5);
    gb += (b[j] - 0.5) * (b[j] - 0.5);
  }
  const Vector fa = problem.evaluate(a);
  const Vector fb = problem.evaluate(b);
  for (int m = 0; m < p; ++m)
    CHECK(fa[m] / (1.0 + ga) == doctest::Approx(fb[m] / (1.0 + gb)).epsilon(1e-12));

  CHECK_THROWS_AS(make_dtlz2(3, 1), ConfigError);
  CHECK_THROWS_AS(make_dtlz2(2, 3), ConfigError);
}

TEST_CASE("problems: observation noise is seeded, unbiased, and sized correctly") {
  const Problem clean = make_dtlz2(3, 2);
  Vector tau(2);
  tau << 0.04, 0.09;
  const Problem noisy = noisy_wrap(clean, tau, 17);
  CHECK(noisy.noisy());
  CHECK_FALSE(clean.noisy());

  Design x(3);
  x << 0.2, 0.6, 0.4;
  const Vector truth = clean.evaluate(x);

  // Noiseless problems observe the exact value at any call index.
  CHECK(clean.evaluate_observed(x, 0) == truth);
  CHECK(clean.evaluate_observed(x, 5) == truth);

  // Reentrancy: the observed value is pure in (x, call index).
  CHECK(noisy.evaluate_observed(x, 3) == noisy.evaluate_observed(x, 3));
  CHECK(noisy.evaluate_observed(x, 3) != noisy.evaluate_observed(x, 4));
  const Problem reseeded = noisy_wrap(clean, tau, 18);
  CHECK(reseeded.evaluate_observed(x, 3) != noisy.evaluate_observed(x, 3));

  const int n = 20000;
  Vector sum = Vector::Zero(2), sum_sq = Vector::Zero(2);
  for (int call = 0; call < n; ++call) {
    const Vector diff = noisy.evaluate_observed(x, call) - truth;
    sum += diff;
    sum_sq += diff.cwiseProduct(diff);
  }
  for (int i = 0; i < 2; ++i) {
    const double mean = sum[i] / n;
    const double var = sum_sq[i] / n - mean * mean;
    CHECK(std::abs(mean) < 4.0 * std::sqrt(tau[i] / n));
    CHECK(std::abs(var - tau[i]) < 4.0 * tau[i] * std::sqrt(2.0 / n));
  }

  CHECK_THROWS_AS(noisy_wrap(clean, Vector::Constant(3, 0.1), 1), std::invalid_argument);
  CHECK_THROWS_AS(noisy_wrap(clean, Vector::Constant(2, -0.1), 1), std::invalid_argument);
}

TEST_CASE("problems: finite domains are deterministic and block-pure") {
  const Problem base = make_dtlz2(3, 2);
  const Problem a = discrete_domain(base, 500, 9);
  const Problem b = discrete_domain(base, 500, 9);
  const Problem c = discrete_domain(base, 500, 10);
  REQUIRE(a.domain.has_value());
  CHECK(a.id == "dtlz2-3-2@500");
  CHECK(a.domain->materialized());
  CHECK(a.domain->points.rows() == 500);
  CHECK((a.domain->points.array() >= 0.0).all());
  CHECK((a.domain->points.array() < 1.0).all());
  CHECK(a.domain->points == b.domain->points);
  CHECK(a.domain->points != c.domain->points);

  CHECK(domain_block(*a.domain, 3, 0) == domain_block(*a.domain, 3, 0));
  CHECK_THROWS_AS(domain_block(*a.domain, 3, 1), std::invalid_argument);
  CHECK_THROWS_AS(discrete_domain(base, 0, 1), std::invalid_argument);

  // The generator path (domain not resident) yields exactly the same designs
  // and values as the materialized one, regardless of the visit block size.
  Problem lazy = a;
  lazy.domain->points.resize(0, 3);
  REQUIRE_FALSE(lazy.domain->materialized());
  const Matrix resident = collect_domain_values(a, 500);
  CHECK(collect_domain_values(a, 7) == resident);
  CHECK(collect_domain_values(lazy, 7) == resident);
  CHECK(collect_domain_values(lazy, 123) == resident);

  Problem no_domain = base;
  CHECK_THROWS_AS(for_each_domain_block(no_domain, [](const Matrix&, const Matrix&,
                                                      std::int64_t) {}),
                  std::invalid_argument);
}

TEST_CASE("problems: id parsing round-trips and rejects malformed specs") {
  const Problem plain = parse_problem_id("hartman6", 1);
  CHECK(plain.id == "hartman6");
  CHECK_FALSE(plain.domain.has_value());

  const Problem sized = parse_problem_id("hartman6@1000", 4);
  CHECK(sized.id == "hartman6@1000");
  REQUIRE(sized.domain.has_value());
  CHECK(sized.domain->size == 1000);
  CHECK(sized.domain->seed == 4);

  const Problem sci = parse_problem_id("dtlz2-5-4@1e5", 4);
  CHECK(sci.id == "dtlz2-5-4@100000");
  CHECK(sci.dim == 5);
  CHECK(sci.n_obj == 4);
  CHECK(sci.domain->size == 100000);

  const Problem broadcast = parse_problem_id("dtlz2-3-2@100+noise(0.01)", 4, 11);
  CHECK(broadcast.noise_vars == Vector::Constant(2, 0.01));
  CHECK(broadcast.noise_seed == 11);
  const Problem per_obj = parse_problem_id("dtlz2-3-2+noise(0.01,0.02)", 4, 11);
  CHECK(per_obj.noise_vars[0] == 0.01);
  CHECK(per_obj.noise_vars[1] == 0.02);

  // Different domain seeds produce different point sets for the same id.
  const Problem seed_a = parse_problem_id("hartman6@200", 1);
  const Problem seed_b = parse_problem_id("hartman6@200", 2);
  CHECK(seed_a.domain->points != seed_b.domain->points);

  CHECK_THROWS_AS(parse_problem_id("rosenbrock", 1), ConfigError);
  CHECK_THROWS_AS(parse_problem_id("hartman6@-3", 1), ConfigError);
  CHECK_THROWS_AS(parse_problem_id("hartman6@2.5", 1), ConfigError);
  CHECK_THROWS_AS(parse_problem_id("hartman6@12junk", 1), ConfigError);
  CHECK_THROWS_AS(parse_problem_id("dtlz2-4", 1), ConfigError);
  CHECK_THROWS_AS(parse_problem_id("dtlz2-x-y", 1), ConfigError);
  CHECK_THROWS_AS(parse_problem_id("hartman6+noise(abc)", 1), ConfigError);
  CHECK_THROWS_AS(parse_problem_id("hartman6+noise(0.1", 1), ConfigError);
  CHECK_THROWS_AS(parse_problem_id("hartman6+noise(0.1,0.2)", 1), std::invalid_argument);
}

TEST_CASE("problems: reference solution matches an exhaustive scan") {
  // A one-dimensional trade-off problem whose domain-wide optimum is easy to
  // enumerate: f(x) = (x, 1 - x) keeps every point nondominated.
  Problem toy;
  toy.id = "toy";
  toy.dim = 1;
  toy.n_obj = 2;
  toy.noise_vars = Vector::Zero(2);
  toy.evaluate = [](const Design& x) {
    Vector f(2);
    f << x[0], 1.0 - x[0];
    return f;
  };
  const Problem sized = discrete_domain(toy, 30, 123);
  const ReferenceSolution ref = compute_reference(sized, 5);
  CHECK(ref.problem_id == "toy@30");
  CHECK(ref.domain_size == 30);
  CHECK(ref.aux_is_full_domain);
  CHECK(ref.aux_size == 30);

  const Matrix values = collect_domain_values(sized);
  // Every point is on the front, so utopia/nadir are plain column extremes.
  CHECK(ref.utopia[0] == values.col(0).minCoeff());
  CHECK(ref.utopia[1] == values.col(1).minCoeff());
  CHECK(ref.nadir[0] == values.col(0).maxCoeff());
  CHECK(ref.nadir[1] == values.col(1).maxCoeff());

  // Exhaustive maxmin over the domain for both selections.
  int best_ks = -1, best_cks = -1;
  double best_ks_v = -1e300, best_cks_v = -1e300;
  for (int r = 0; r < 30; ++r) {
    double worst = std::numeric_limits<double>::infinity();
    for (int c = 0; c < 2; ++c)
      worst = std::min(worst,
                       (ref.nadir[c] - values(r, c)) / (ref.nadir[c] - ref.utopia[c]));
    if (worst > best_ks_v) {
      best_ks_v = worst;
      best_ks = r;
    }
    double worst_rank = std::numeric_limits<double>::infinity();
    for (int c = 0; c < 2; ++c)
      worst_rank = std::min(worst_rank, test::oracle_rank(values, c, values(r, c)));
    if (worst_rank > best_cks_v) {
      best_cks_v = worst_rank;
      best_cks = r;
    }
  }
  CHECK(ref.ks.index == best_ks);
  CHECK(ref.ks.min_ratio == doctest::Approx(best_ks_v).epsilon(1e-12));
  CHECK(ref.cks.index == best_cks);
  CHECK(ref.cks.min_ratio == doctest::Approx(best_cks_v).epsilon(1e-12));

  // The recorded index refers to the domain ordering.
  CHECK(ref.ks.values ==
        sized.evaluate(sized.domain->points.row(ref.ks.index)).transpose().transpose());

  // Self-gap: scoring the reference values against the reference is zero.
  CHECK(std::abs(optimality_gap(ref.ks.values, ref.ks_reference())) < 1e-12);
  CHECK(std::abs(optimality_gap(ref.cks.values, ref.cks_reference())) < 1e-12);
}

TEST_CASE("problems: reference is invariant to streaming block size and seeded") {
  const Problem problem = parse_problem_id("dtlz2-4-3@400", 77);
  const ReferenceSolution coarse = compute_reference(problem, 5, 400);
  const ReferenceSolution fine = compute_reference(problem, 5, 23);
  CHECK(coarse.ks.index == fine.ks.index);
  CHECK(coarse.ks.min_ratio == fine.ks.min_ratio);
  CHECK(coarse.cks.index == fine.cks.index);
  CHECK(coarse.cks.min_ratio == fine.cks.min_ratio);
  CHECK(coarse.utopia == fine.utopia);
  CHECK(coarse.nadir == fine.nadir);
  CHECK(coarse.domain_hash == fine.domain_hash);

  // Utopia/nadir are front extremes, not domain extremes.
  const Matrix values = collect_domain_values(problem);
  const auto mask = test::oracle_front(values);
  Vector u = Vector::Constant(3, std::numeric_limits<double>::infinity());
  Vector d = Vector::Constant(3, -std::numeric_limits<double>::infinity());
  for (int r = 0; r < values.rows(); ++r) {
    if (!mask[static_cast<std::size_t>(r)]) continue;
    for (int c = 0; c < 3; ++c) {
      u[c] = std::min(u[c], values(r, c));
      d[c] = std::max(d[c], values(r, c));
    }
  }
  CHECK(coarse.utopia == u);
  CHECK(coarse.nadir == d);

  // Different domain seeds give different streamed hashes.
  const ReferenceSolution other = compute_reference(parse_problem_id("dtlz2-4-3@400", 78), 5);
  CHECK(other.domain_hash != coarse.domain_hash);

  CHECK_THROWS_AS(compute_reference(make_dtlz2(4, 3), 5), std::invalid_argument);
}

TEST_CASE("problems: oversized domains use a seeded auxiliary subset") {
  // 120000 > the auxiliary cap, so the reference keeps a seeded 1e5-point
  // subset; re-collecting it reproduces both the rank table and the hash.
  const Problem problem = parse_problem_id("dtlz2-2-2@120000", 31);
  const ReferenceSolution ref = compute_reference(problem, 6);
  CHECK_FALSE(ref.aux_is_full_domain);
  CHECK(ref.aux_size == kReferenceAuxCap);

  std::uint64_t hash = 0;
  const Matrix aux = reference_aux_values(problem, 6, &hash);
  CHECK(hash == ref.domain_hash);
  REQUIRE(aux.rows() == kReferenceAuxCap);
  const RankTable rebuilt = make_rank_table(aux);
  REQUIRE(ref.aux_ranks != nullptr);
  CHECK(rebuilt.n_aux == ref.aux_ranks->n_aux);
  CHECK(rebuilt.sorted_cols == ref.aux_ranks->sorted_cols);
}

TEST_CASE("problems: drop study agrees with direct recomputation") {
  const Problem problem = parse_problem_id("dtlz2-4-3@300", 55);
  const ReferenceSolution ref = compute_reference(problem, 5);
  const StudyRecord record = objective_drop_study(problem, 0, 2, ref);
  CHECK(record.obj_a == 0);
  CHECK(record.obj_b == 2);

  const Matrix values = collect_domain_values(problem);
  Matrix pair(values.rows(), 2);
  pair.col(0) = values.col(0);
  pair.col(1) = values.col(2);
  const auto mask = test::oracle_front(pair);
  std::vector<std::int64_t> expect_idx;
  for (int r = 0; r < pair.rows(); ++r)
    if (mask[static_cast<std::size_t>(r)]) expect_idx.push_back(r);
  CHECK(record.front_indices == expect_idx);

  REQUIRE(record.pair_min_ratio.size() == static_cast<Eigen::Index>(expect_idx.size()));
  double best_pair = -std::numeric_limits<double>::infinity();
  double sum_full = 0.0;
  for (std::size_t k = 0; k < expect_idx.size(); ++k) {
    const auto r = expect_idx[k];
    double full = std::numeric_limits<double>::infinity();
    for (int c = 0; c < 3; ++c)
      full = std::min(full, (ref.nadir[c] - values(r, c)) / (ref.nadir[c] - ref.utopia[c]));
    const double ra =
        (ref.nadir[0] - values(r, 0)) / (ref.nadir[0] - ref.utopia[0]);
    const double rb =
        (ref.nadir[2] - values(r, 2)) / (ref.nadir[2] - ref.utopia[2]);
    CHECK(record.pair_min_ratio[static_cast<Eigen::Index>(k)] ==
          doctest::Approx(std::min(ra, rb)).epsilon(1e-12));
    CHECK(record.full_min_ratio[static_cast<Eigen::Index>(k)] ==
          doctest::Approx(full).epsilon(1e-12));
    best_pair = std::max(best_pair, std::min(ra, rb));
    sum_full += full;
  }
  CHECK(record.best_pair_ratio == doctest::Approx(best_pair).epsilon(1e-12));
  CHECK(record.mean_full_ratio ==
        doctest::Approx(sum_full / static_cast<double>(expect_idx.size())).epsilon(1e-12));
  CHECK(record.ks_full_ratio == ref.ks.min_ratio);
  CHECK(record.ks_pair_ratio ==
        doctest::Approx(std::min(ref.ks.ratios[0], ref.ks.ratios[2])).epsilon(1e-14));

  // The full equilibrium can never beat the best pairwise point on the pair.
  CHECK(record.ks_pair_ratio <= record.best_pair_ratio + 1e-12);

  CHECK_THROWS_AS(objective_drop_study(problem, 0, 0, ref), std::invalid_argument);
  CHECK_THROWS_AS(objective_drop_study(problem, 0, 3, ref), std::invalid_argument);
  CHECK_THROWS_AS(objective_drop_study(make_dtlz2(4, 3), 0, 1, ref), std::invalid_argument);
}
