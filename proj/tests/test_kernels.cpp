#include "ksbo/kernels.hpp"

#include "test_util.hpp"

#include "doctest.h"

#include <Eigen/Eigenvalues>
#include <cmath>

using namespace ksbo;

namespace {

KernelParams make_params(KernelFamily family, const Vector& ls, double var) {
  KernelParams p;
  p.family = family;
  p.lengthscales = ls;
  p.variance = var;
  return p;
}

// Independent transcriptions of the two families, written directly from the
// textbook formulas (anisotropic scaled Euclidean distance).
double oracle_matern52(const Design& a, const Design& b, const Vector& ls, double var) {
  double r2 = 0.0;
  for (int j = 0; j < a.size(); ++j) {
    const double u = (a[j] - b[j]) / ls[j];
    r2 += u * u;
  }
  const double r = std::sqrt(r2);
  const double s5r = std::sqrt(5.0) * r;
  return var * (1.0 + s5r + 5.0 * r2 / 3.0) * std::exp(-s5r);
}

double oracle_gaussian(const Design& a, const Design& b, const Vector& ls, double var) {
  double r2 = 0.0;
  for (int j = 0; j < a.size(); ++j) {
    const double u = (a[j] - b[j]) / ls[j];
    r2 += u * u;
  }
  return var * std::exp(-0.5 * r2);
}

}  // namespace

TEST_CASE("kernels: values match independent formula transcriptions") {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const int d = 1 + static_cast<int>(rng.uniform_index(6));
    Vector ls(d);
    for (int j = 0; j < d; ++j) ls[j] = rng.uniform(0.05, 3.0);
    const double var = rng.uniform(0.1, 5.0);
    Design a(d), b(d);
    for (int j = 0; j < d; ++j) {
      a[j] = rng.uniform(-1.0, 2.0);
      b[j] = rng.uniform(-1.0, 2.0);
    }
    const auto pm = make_params(KernelFamily::Matern52, ls, var);
    const auto pg = make_params(KernelFamily::Gaussian, ls, var);
    CHECK(kernel_value(pm, a, b) == doctest::Approx(oracle_matern52(a, b, ls, var)).epsilon(1e-12));
    CHECK(kernel_value(pg, a, b) == doctest::Approx(oracle_gaussian(a, b, ls, var)).epsilon(1e-12));
  }
}

TEST_CASE("kernels: k(x,x) equals the process variance") {
  const Vector ls = Vector::Constant(3, 0.7);
  Design x(3);
  x << 0.2, 0.5, 0.9;
  for (auto family : {KernelFamily::Matern52, KernelFamily::Gaussian}) {
    const auto p = make_params(family, ls, 2.5);
    CHECK(kernel_value(p, x, x) == doctest::Approx(2.5).epsilon(1e-14));
  }
}

TEST_CASE("kernels: cross_covariance matches pairwise kernel_value") {
  Rng rng(17);
  const int d = 4;
  Vector ls(d);
  for (int j = 0; j < d; ++j) ls[j] = rng.uniform(0.1, 2.0);
  const Matrix X = test::random_matrix(rng, 7, d);
  const Matrix Z = test::random_matrix(rng, 5, d);
  for (auto family : {KernelFamily::Matern52, KernelFamily::Gaussian}) {
    const auto p = make_params(family, ls, 1.3);
    const Matrix K = cross_covariance(p, X, Z);
    REQUIRE(K.rows() == 7);
    REQUIRE(K.cols() == 5);
    for (int i = 0; i < 7; ++i)
      for (int j = 0; j < 5; ++j)
        CHECK(K(i, j) == doctest::Approx(kernel_value(p, X.row(i), Z.row(j))).epsilon(1e-10));
  }
}

TEST_CASE("kernels: self_covariance is symmetric with PSD spectrum") {
  Rng rng(23);
  const Matrix X = test::random_matrix(rng, 30, 3);
  Vector ls = Vector::Constant(3, 0.4);
  for (auto family : {KernelFamily::Matern52, KernelFamily::Gaussian}) {
    const auto p = make_params(family, ls, 1.0);
    const Matrix K = self_covariance(p, X);
    CHECK((K - K.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    Eigen::SelfAdjointEigenSolver<Matrix> eig(K);
    CHECK(eig.eigenvalues().minCoeff() > -1e-8);
  }
}

TEST_CASE("kernels: anisotropy only involves coordinates that differ") {
  Vector ls(2);
  ls << 0.3, 100.0;  // second coordinate almost irrelevant
  Design a(2), b(2);
  a << 0.1, 0.9;
  b << 0.1, 0.1;  // differs only in the near-flat coordinate
  const auto p = make_params(KernelFamily::Gaussian, ls, 1.0);
  CHECK(kernel_value(p, a, b) == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("kernels: weighted_grad_sum matches finite differences of sum W.K") {
  Rng rng(31);
  const int d = 3, n = 8;
  const Matrix X = test::random_matrix(rng, n, d);
  Matrix W = test::random_normal_matrix(rng, n, n);
  W = ((W + W.transpose()) / 2.0).eval();  // gradient pass assumes symmetry

  for (auto family : {KernelFamily::Matern52, KernelFamily::Gaussian}) {
    Vector theta(d + 1);  // [log l_1..d, log s2]
    for (int j = 0; j < d; ++j) theta[j] = std::log(rng.uniform(0.2, 1.5));
    theta[d] = std::log(rng.uniform(0.5, 2.0));

    const auto obj = [&](const Vector& th) {
      KernelParams p;
      p.family = family;
      p.lengthscales = th.head(d).array().exp();
      p.variance = std::exp(th[d]);
      return (W.array() * self_covariance(p, X).array()).sum();
    };

    KernelParams p;
    p.family = family;
    p.lengthscales = theta.head(d).array().exp();
    p.variance = std::exp(theta[d]);
    const Vector grad = weighted_grad_sum(p, X, W);
    REQUIRE(grad.size() == d + 1);
    for (int k = 0; k <= d; ++k) {
      const double fd = test::finite_difference(obj, theta, k, 1e-6);
      CHECK(grad[k] == doctest::Approx(fd).epsilon(1e-5).scale(std::abs(fd) + 1.0));
    }
  }
}

TEST_CASE("kernels: invalid hyperparameters are rejected") {
  Design x(2);
  x << 0.0, 0.0;
  KernelParams p;
  p.family = KernelFamily::Matern52;
  p.lengthscales = Vector::Constant(2, -1.0);
  p.variance = 1.0;
  CHECK_THROWS_AS(kernel_value(p, x, x), std::invalid_argument);
  p.lengthscales = Vector::Constant(2, 1.0);
  p.variance = 0.0;
  CHECK_THROWS_AS(kernel_value(p, x, x), std::invalid_argument);
  p.variance = 1.0;
  p.lengthscales = Vector::Constant(3, 1.0);  // dimension mismatch
  CHECK_THROWS_AS(kernel_value(p, x, x), std::invalid_argument);
}
