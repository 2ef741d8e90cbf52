#include "ksbo/problems.hpp"

#include "ksbo/pareto.hpp"
#include "ksbo/rng.hpp"

#include <cctype>
#include <cmath>
#include <cstring>
#include <numbers>

namespace ksbo {
namespace {

constexpr double kBoxTol = 1e-9;

void check_in_box(const Design& x, int dim) {
  if (x.size() != dim) throw std::invalid_argument("problem: wrong input dimension");
  for (int j = 0; j < dim; ++j)
    if (!(x[j] >= -kBoxTol && x[j] <= 1.0 + kBoxTol))
      throw std::invalid_argument("problem: design outside the unit box");
}

// hartman constants (rows j = 1..6, columns i = 1..4).
constexpr double kHartmanC[4] = {1.0, 1.2, 3.0, 3.2};
constexpr double kHartmanA[6][4] = {
    {10.00, 0.05, 3.00, 17.00},
    {3.00, 10.00, 3.50, 8.00},
    {17.00, 17.00, 1.70, 0.05},
    {3.50, 0.10, 10.00, 10.00},
    {1.70, 8.00, 17.00, 0.10},
    {8.00, 14.00, 8.00, 14.00},
};
constexpr double kHartmanP[6][4] = {
    {0.1312, 0.2329, 0.2348, 0.4047},
    {0.1696, 0.4135, 0.1451, 0.8828},
    {0.5569, 0.8307, 0.3522, 0.8732},
    {0.0124, 0.3736, 0.2883, 0.5743},
    {0.8283, 0.1004, 0.3047, 0.1091},
    {0.5886, 0.9991, 0.6650, 0.0381},
};

// Coordinate permutations and half-shifts defining the six objectives:
// objective o evaluates the base at v_j = xt[perm[o][j]] + 0.5 * shift[o][j]
// with xt = x / 2.
constexpr int kHartmanPerm[6][6] = {
    {0, 1, 2, 3, 4, 5}, {5, 4, 3, 2, 1, 0}, {1, 3, 5, 0, 2, 4},
    {4, 2, 0, 1, 3, 5}, {2, 5, 0, 3, 1, 4}, {3, 1, 5, 4, 2, 0},
};
constexpr int kHartmanShift[6][6] = {
    {0, 0, 0, 0, 0, 0}, {1, 1, 1, 1, 1, 1}, {0, 1, 0, 0, 1, 1},
    {1, 0, 1, 1, 0, 0}, {0, 0, 0, 1, 1, 1}, {1, 1, 1, 0, 0, 0},
};

std::int64_t parse_size_token(const std::string& token) {
  // Accepts plain integers and scientific shorthand like 1e5.
  double value = 0.0;
  std::size_t used = 0;
  try {
    value = std::stod(token, &used);
  } catch (const std::exception&) {
    throw ConfigError("problem id: bad domain size '" + token + "'");
  }
  if (used != token.size() || !(value >= 1.0) || value != std::floor(value) ||
      value > 9.2e18)
    throw ConfigError("problem id: bad domain size '" + token + "'");
  return static_cast<std::int64_t>(value);
}

}  // namespace

Vector Problem::evaluate_observed(const Design& x, std::int64_t call_index) const {
  Vector value = evaluate(x);
  if (noisy()) {
    Rng rng(mix_seed(noise_seed, seed_tag::kNoise, static_cast<std::uint64_t>(call_index)));
    for (Eigen::Index i = 0; i < value.size(); ++i)
      value[i] += std::sqrt(noise_vars[i]) * rng.normal();
  }
  return value;
}

double hartman6_base(const Design& v) {
  if (v.size() != 6) throw std::invalid_argument("hartman: base takes 6 coordinates");
  double acc = 2.58;
  for (int i = 0; i < 4; ++i) {
    double expo = 0.0;
    for (int j = 0; j < 6; ++j) {
      const double t = v[j] - kHartmanP[j][i];
      expo += kHartmanA[j][i] * t * t;
    }
    acc += kHartmanC[i] * std::exp(-expo);
  }
  return -acc / 1.94;
}

Problem make_hartman6() {
  Problem problem;
  problem.id = "hartman6";
  problem.dim = 6;
  problem.n_obj = 6;
  problem.noise_vars = Vector::Zero(6);
  problem.evaluate = [](const Design& x) -> Vector {
    check_in_box(x, 6);
    Design xt = 0.5 * x;
    Design v(6);
    Vector f(6);
    for (int o = 0; o < 6; ++o) {
      for (int j = 0; j < 6; ++j)
        v[j] = xt[kHartmanPerm[o][j]] + 0.5 * kHartmanShift[o][j];
      f[o] = -std::log(-hartman6_base(v));
    }
    return f;
  };
  return problem;
}

Problem make_dtlz2(int d, int p) {
  if (p < 2 || d < p) throw ConfigError("dtlz2: need d >= p >= 2");
  Problem problem;
  problem.id = "dtlz2-" + std::to_string(d) + "-" + std::to_string(p);
  problem.dim = d;
  problem.n_obj = p;
  problem.noise_vars = Vector::Zero(p);
  problem.evaluate = [d, p](const Design& x) -> Vector {
    check_in_box(x, d);
    double g = 0.0;
    for (int j = p - 1; j < d; ++j) {
      const double t = x[j] - 0.5;
      g += t * t;
    }
    Vector f(p);
    constexpr double half_pi = std::numbers::pi / 2.0;
    for (int m = 0; m < p; ++m) {
      double value = 1.0 + g;
      for (int i = 0; i < p - 1 - m; ++i) value *= std::cos(half_pi * x[i]);
      if (m > 0) value *= std::sin(half_pi * x[p - 1 - m]);
      f[m] = value;
    }
    return f;
  };
  return problem;
}

Problem noisy_wrap(const Problem& problem, const Vector& tau, std::uint64_t seed) {
  if (tau.size() != problem.n_obj)
    throw std::invalid_argument("problem: noise vector length mismatch");
  if (tau.minCoeff() < 0.0) throw std::invalid_argument("problem: negative noise variance");
  Problem wrapped = problem;
  wrapped.noise_vars = tau;
  wrapped.noise_seed = seed;
  return wrapped;
}

Matrix domain_block(const FiniteDomain& domain, int dim, std::int64_t block_index) {
  const std::int64_t first = block_index * kDomainBlockSize;
  if (first < 0 || first >= domain.size) throw std::invalid_argument("domain: block out of range");
  const std::int64_t count = std::min<std::int64_t>(kDomainBlockSize, domain.size - first);
  Matrix block(count, dim);
  Rng rng(mix_seed(domain.seed, seed_tag::kDomain, static_cast<std::uint64_t>(block_index)));
  for (std::int64_t r = 0; r < count; ++r)
    for (int j = 0; j < dim; ++j) block(r, j) = rng.uniform01();
  return block;
}

Problem discrete_domain(const Problem& problem, std::int64_t size, std::uint64_t seed) {
  if (size < 1) throw std::invalid_argument("domain: size must be positive");
  Problem out = problem;
  FiniteDomain domain;
  domain.size = size;
  domain.seed = seed;
  if (size <= kMaterializeCap) {
    domain.points.resize(size, problem.dim);
    const std::int64_t blocks = (size + kDomainBlockSize - 1) / kDomainBlockSize;
    for (std::int64_t b = 0; b < blocks; ++b) {
      const Matrix block = domain_block(domain, problem.dim, b);
      domain.points.middleRows(b * kDomainBlockSize, block.rows()) = block;
    }
  }
  out.domain = domain;
  out.id = problem.id + "@" + std::to_string(size);
  return out;
}

void for_each_domain_block(const Problem& problem,
                           const std::function<void(const Matrix&, const Matrix&,
                                                    std::int64_t)>& visit,
                           std::int64_t block_size) {
  if (!problem.domain.has_value()) throw std::invalid_argument("domain: problem has none");
  if (block_size < 1) throw std::invalid_argument("domain: bad block size");
  const FiniteDomain& domain = *problem.domain;
  for (std::int64_t first = 0; first < domain.size; first += block_size) {
    const std::int64_t count = std::min(block_size, domain.size - first);
    Matrix designs(count, problem.dim);
    if (domain.materialized()) {
      designs = domain.points.middleRows(first, count);
    } else {
      // Pull the needed rows out of the deterministic generator blocks.
      std::int64_t filled = 0;
      while (filled < count) {
        const std::int64_t global = first + filled;
        const std::int64_t b = global / kDomainBlockSize;
        const Matrix block = domain_block(domain, problem.dim, b);
        const std::int64_t offset = global - b * kDomainBlockSize;
        const std::int64_t take = std::min(count - filled, block.rows() - offset);
        designs.middleRows(filled, take) = block.middleRows(offset, take);
        filled += take;
      }
    }
    Matrix values(count, problem.n_obj);
    for (std::int64_t r = 0; r < count; ++r)
      values.row(r) = problem.evaluate(designs.row(r)).transpose();
    visit(values, designs, first);
  }
}

Problem parse_problem_id(const std::string& id, std::uint64_t domain_seed,
                         std::uint64_t noise_seed) {
  std::string spec = id;

  // Optional trailing "+noise(...)".
  Vector tau;
  const std::size_t plus = spec.find("+noise(");
  if (plus != std::string::npos) {
    if (spec.back() != ')') throw ConfigError("problem id: unterminated noise spec");
    const std::string inner = spec.substr(plus + 7, spec.size() - plus - 8);
    spec = spec.substr(0, plus);
    std::vector<double> parts;
    std::size_t start = 0;
    while (start <= inner.size()) {
      const std::size_t comma = inner.find(',', start);
      const std::string tok =
          inner.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
      try {
        std::size_t used = 0;
        parts.push_back(std::stod(tok, &used));
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw ConfigError("problem id: bad noise value '" + tok + "'");
      }
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    tau = Eigen::Map<Vector>(parts.data(), static_cast<Eigen::Index>(parts.size()));
  }

  std::int64_t domain_size = 0;
  const std::size_t at = spec.find('@');
  if (at != std::string::npos) {
    domain_size = parse_size_token(spec.substr(at + 1));
    spec = spec.substr(0, at);
  }

  Problem problem;
  if (spec == "hartman6") {
    problem = make_hartman6();
  } else if (spec.rfind("dtlz2-", 0) == 0) {
    const std::string dims = spec.substr(6);
    const std::size_t dash = dims.find('-');
    if (dash == std::string::npos) throw ConfigError("problem id: expected dtlz2-D-P");
    int d = 0, p = 0;
    try {
      d = std::stoi(dims.substr(0, dash));
      p = std::stoi(dims.substr(dash + 1));
    } catch (const std::exception&) {
      throw ConfigError("problem id: expected dtlz2-D-P");
    }
    problem = make_dtlz2(d, p);
  } else {
    throw ConfigError("problem id: unknown problem '" + spec + "'");
  }

  if (domain_size > 0) problem = discrete_domain(problem, domain_size, domain_seed);
  if (tau.size() > 0) {
    if (tau.size() == 1) tau = Vector::Constant(problem.n_obj, tau[0]);
    problem = noisy_wrap(problem, tau, noise_seed);
  }
  return problem;
}

namespace {

constexpr std::uint64_t kFnvOffset = 1469598103934665603ull;

// Hashes designs in row order so the digest identifies the point sequence
// itself, independent of the streaming block size.
std::uint64_t fnv_accumulate(std::uint64_t h, const Matrix& designs) {
  for (Eigen::Index r = 0; r < designs.rows(); ++r)
    for (Eigen::Index c = 0; c < designs.cols(); ++c) {
      std::uint64_t bits;
      const double value = designs(r, c);
      std::memcpy(&bits, &value, sizeof(bits));
      for (int b = 0; b < 8; ++b) {
        h ^= (bits >> (8 * b)) & 0xffu;
        h *= 1099511628211ull;
      }
    }
  return h;
}

// Running nondominated archive over streamed blocks, tracking domain indices
// in increasing order (ties in the final maxmin then resolve to the lowest
// domain index, matching a single exhaustive scan).
struct StreamingArchive {
  Matrix values;                    // front rows
  std::vector<std::int64_t> index;  // original domain indices

  void merge(const Matrix& block_values, std::int64_t first_index) {
    const std::vector<std::uint8_t> block_mask = pareto_filter(block_values);
    std::vector<std::int64_t> keep;
    for (std::int64_t r = 0; r < block_values.rows(); ++r)
      if (block_mask[static_cast<std::size_t>(r)]) keep.push_back(r);

    Matrix merged(values.rows() + static_cast<Eigen::Index>(keep.size()), block_values.cols());
    std::vector<std::int64_t> merged_index;
    merged_index.reserve(static_cast<std::size_t>(merged.rows()));
    merged.topRows(values.rows()) = values;
    merged_index.insert(merged_index.end(), index.begin(), index.end());
    for (std::size_t k = 0; k < keep.size(); ++k) {
      merged.row(values.rows() + static_cast<Eigen::Index>(k)) = block_values.row(keep[k]);
      merged_index.push_back(first_index + keep[k]);
    }

    const std::vector<std::uint8_t> mask = pareto_filter(merged);
    Eigen::Index n_front = 0;
    for (const auto m : mask) n_front += (m != 0);
    Matrix next(n_front, merged.cols());
    std::vector<std::int64_t> next_index;
    next_index.reserve(static_cast<std::size_t>(n_front));
    Eigen::Index w = 0;
    for (Eigen::Index r = 0; r < merged.rows(); ++r) {
      if (!mask[static_cast<std::size_t>(r)]) continue;
      next.row(w++) = merged.row(r);
      next_index.push_back(merged_index[static_cast<std::size_t>(r)]);
    }
    values = std::move(next);
    index = std::move(next_index);
  }
};

// Seeded index subset for oversized domains.  Sampling without replacement
// out of >=1e7: collisions are rare, so draw, sort, dedup, and top up until
// the quota is met.
std::vector<std::int64_t> reference_aux_index(std::int64_t domain_size, std::uint64_t aux_seed) {
  Rng rng(mix_seed(aux_seed, seed_tag::kAux));
  std::vector<std::int64_t> aux_index;
  aux_index.reserve(static_cast<std::size_t>(kReferenceAuxCap));
  while (static_cast<std::int64_t>(aux_index.size()) < kReferenceAuxCap) {
    aux_index.push_back(rng.uniform_index(domain_size));
    if (static_cast<std::int64_t>(aux_index.size()) == kReferenceAuxCap) {
      std::sort(aux_index.begin(), aux_index.end());
      aux_index.erase(std::unique(aux_index.begin(), aux_index.end()), aux_index.end());
    }
  }
  return aux_index;
}

}  // namespace

Matrix reference_aux_values(const Problem& problem, std::uint64_t aux_seed,
                            std::uint64_t* domain_hash, std::int64_t block_size) {
  if (!problem.domain.has_value())
    throw std::invalid_argument("reference: problem lacks a finite domain");
  const FiniteDomain& domain = *problem.domain;
  const bool full = domain.size <= kReferenceAuxCap;
  const std::int64_t quota = full ? domain.size : kReferenceAuxCap;
  std::vector<std::int64_t> aux_index;
  if (!full) aux_index = reference_aux_index(domain.size, aux_seed);

  Matrix aux_values(quota, problem.n_obj);
  std::int64_t aux_filled = 0;
  std::uint64_t hash = kFnvOffset;
  for_each_domain_block(
      problem,
      [&](const Matrix& values, const Matrix& designs, std::int64_t first) {
        hash = fnv_accumulate(hash, designs);
        if (full) {
          aux_values.middleRows(first, values.rows()) = values;
          aux_filled += values.rows();
        } else {
          const std::int64_t last = first + values.rows();
          auto it = std::lower_bound(aux_index.begin(), aux_index.end(), first);
          for (; it != aux_index.end() && *it < last; ++it)
            aux_values.row(aux_filled++) = values.row(*it - first);
        }
      },
      block_size);
  if (aux_filled != quota)
    throw std::logic_error("reference: auxiliary sample not fully collected");
  if (domain_hash != nullptr) *domain_hash = hash;
  return aux_values;
}

ReferenceEquilibrium ReferenceSolution::ks_reference() const {
  ReferenceEquilibrium ref;
  ref.kind = EquilibriumKind::KS;
  ref.min_ratio = ks.min_ratio;
  ref.d = nadir;
  ref.u = utopia;
  return ref;
}

ReferenceEquilibrium ReferenceSolution::cks_reference() const {
  if (aux_ranks == nullptr)
    throw std::invalid_argument("reference: CKS rank table not loaded");
  ReferenceEquilibrium ref;
  ref.kind = EquilibriumKind::CKS;
  ref.min_ratio = cks.min_ratio;
  ref.ranks = aux_ranks;
  return ref;
}

ReferenceSolution compute_reference(const Problem& problem, std::uint64_t aux_seed,
                                    std::int64_t block_size) {
  if (!problem.domain.has_value())
    throw std::invalid_argument("reference: problem lacks a finite domain");
  const FiniteDomain& domain = *problem.domain;
  const Eigen::Index p = problem.n_obj;

  ReferenceSolution ref;
  ref.problem_id = problem.id;
  ref.domain_seed = domain.seed;
  ref.aux_seed = aux_seed;
  ref.domain_size = domain.size;
  ref.aux_is_full_domain = domain.size <= kReferenceAuxCap;
  ref.aux_size = ref.aux_is_full_domain ? domain.size : kReferenceAuxCap;

  // Auxiliary rows for CKS: the whole domain when it is small enough, else
  // a seeded uniform index subset collected during the same streaming pass.
  std::vector<std::int64_t> aux_index;
  if (!ref.aux_is_full_domain) aux_index = reference_aux_index(domain.size, aux_seed);

  Matrix aux_values(ref.aux_size, p);
  std::int64_t aux_filled = 0;
  StreamingArchive archive;
  std::uint64_t hash = kFnvOffset;

  for_each_domain_block(
      problem,
      [&](const Matrix& values, const Matrix& designs, std::int64_t first) {
        archive.merge(values, first);
        hash = fnv_accumulate(hash, designs);
        if (ref.aux_is_full_domain) {
          aux_values.middleRows(first, values.rows()) = values;
          aux_filled += values.rows();
        } else {
          const std::int64_t last = first + values.rows();
          auto it = std::lower_bound(aux_index.begin(), aux_index.end(), first);
          for (; it != aux_index.end() && *it < last; ++it)
            aux_values.row(aux_filled++) = values.row(*it - first);
        }
      },
      block_size);
  if (aux_filled != ref.aux_size)
    throw std::logic_error("reference: auxiliary sample not fully collected");

  ref.domain_hash = hash;
  std::tie(ref.utopia, ref.nadir) = utopia_nadir(archive.values,
                                                 std::vector<std::uint8_t>(
                                                     static_cast<std::size_t>(archive.values.rows()), 1));

  // KS over the true front with d = nadir, u = utopia.
  EquilibriumResult ks = ks_solution(archive.values, ref.nadir, ref.utopia);
  ks.index = static_cast<int>(archive.index[static_cast<std::size_t>(ks.index)]);
  ref.ks = ks;

  auto table = std::make_shared<RankTable>(make_rank_table(aux_values));
  EquilibriumResult cks = cks_solution(archive.values, *table);
  cks.index = static_cast<int>(archive.index[static_cast<std::size_t>(cks.index)]);
  ref.cks = cks;
  ref.aux_ranks = std::move(table);
  return ref;
}

StudyRecord objective_drop_study(const Problem& problem, int obj_a, int obj_b,
                                 const ReferenceSolution& reference) {
  if (!problem.domain.has_value())
    throw std::invalid_argument("study: problem lacks a finite domain");
  const int p = problem.n_obj;
  if (obj_a < 0 || obj_b < 0 || obj_a >= p || obj_b >= p)
    throw std::invalid_argument("study: objective index out of range");
  if (obj_a == obj_b) throw std::invalid_argument("study: objective pair must be distinct");

  // Pairwise nondominated archive; keeps the full objective vectors of the
  // surviving points for the all-objective ratios.
  Matrix pair_front(0, 2);
  Matrix full_front(0, p);
  std::vector<std::int64_t> front_index;
  for_each_domain_block(problem, [&](const Matrix& values, const Matrix&, std::int64_t first) {
    Matrix pair_vals(values.rows(), 2);
    pair_vals.col(0) = values.col(obj_a);
    pair_vals.col(1) = values.col(obj_b);

    Matrix merged_pair(pair_front.rows() + pair_vals.rows(), 2);
    merged_pair << pair_front, pair_vals;
    Matrix merged_full(full_front.rows() + values.rows(), p);
    merged_full << full_front, values;
    std::vector<std::int64_t> merged_index = front_index;
    for (std::int64_t r = 0; r < values.rows(); ++r) merged_index.push_back(first + r);

    const std::vector<std::uint8_t> mask = pareto_filter(merged_pair);
    Eigen::Index n_front = 0;
    for (const auto m : mask) n_front += (m != 0);
    Matrix next_pair(n_front, 2);
    Matrix next_full(n_front, p);
    std::vector<std::int64_t> next_index;
    Eigen::Index w = 0;
    for (Eigen::Index r = 0; r < merged_pair.rows(); ++r) {
      if (!mask[static_cast<std::size_t>(r)]) continue;
      next_pair.row(w) = merged_pair.row(r);
      next_full.row(w) = merged_full.row(r);
      next_index.push_back(merged_index[static_cast<std::size_t>(r)]);
      ++w;
    }
    pair_front = std::move(next_pair);
    full_front = std::move(next_full);
    front_index = std::move(next_index);
  });

  StudyRecord record;
  record.obj_a = obj_a;
  record.obj_b = obj_b;
  record.front_indices = front_index;
  const Eigen::Index n = full_front.rows();
  record.pair_min_ratio.resize(n);
  record.full_min_ratio.resize(n);
  const Vector& u = reference.utopia;
  const Vector& d = reference.nadir;
  for (Eigen::Index r = 0; r < n; ++r) {
    double full_min = std::numeric_limits<double>::infinity();
    for (int i = 0; i < p; ++i) {
      const double ratio = (d[i] - full_front(r, i)) / (d[i] - u[i]);
      full_min = std::min(full_min, ratio);
    }
    const double ra = (d[obj_a] - full_front(r, obj_a)) / (d[obj_a] - u[obj_a]);
    const double rb = (d[obj_b] - full_front(r, obj_b)) / (d[obj_b] - u[obj_b]);
    record.pair_min_ratio[r] = std::min(ra, rb);
    record.full_min_ratio[r] = full_min;
  }
  record.ks_full_ratio = reference.ks.min_ratio;
  record.ks_pair_ratio = std::min(reference.ks.ratios[obj_a], reference.ks.ratios[obj_b]);
  record.best_pair_ratio = record.pair_min_ratio.maxCoeff();
  record.mean_full_ratio = record.full_min_ratio.mean();
  return record;
}

}  // namespace ksbo
