#include "ksbo/kernels.hpp"

#include <cmath>

namespace ksbo {
namespace {

constexpr double kSqrt5 = 2.2360679774997896964091736687747;

void validate(const KernelParams& params, Eigen::Index dim) {
  if (params.lengthscales.size() != dim)
    throw std::invalid_argument("kernel: lengthscale count does not match input dimension");
  if (!(params.variance > 0.0) || !std::isfinite(params.variance))
    throw std::invalid_argument("kernel: process variance must be positive and finite");
  for (Eigen::Index j = 0; j < dim; ++j) {
    const double l = params.lengthscales[j];
    if (!(l > 0.0) || !std::isfinite(l))
      throw std::invalid_argument("kernel: lengthscales must be positive and finite");
  }
}

// Squared scaled distances r^2(a,b) = sum_j ((a_j - b_j)/l_j)^2 via the
// expansion |a|^2 + |b|^2 - 2 a.b on lengthscale-scaled inputs.
Matrix scaled_sq_dist(const Vector& lengthscales, const Matrix& X, const Matrix& Z) {
  const Matrix Xs = X.array().rowwise() / lengthscales.transpose().array();
  const Matrix Zs = Z.array().rowwise() / lengthscales.transpose().array();
  const Vector xn = Xs.rowwise().squaredNorm();
  const Vector zn = Zs.rowwise().squaredNorm();
  Matrix r2(X.rows(), Z.rows());
  r2.noalias() = Xs * Zs.transpose();
  r2 *= -2.0;
  r2.colwise() += xn;
  r2.rowwise() += zn.transpose();
  return r2.cwiseMax(0.0);  // cancellation can leave tiny negatives
}

Matrix apply_family(const KernelParams& params, Matrix&& r2) {
  switch (params.family) {
    case KernelFamily::Matern52: {
      const Matrix r = r2.cwiseSqrt();
      return params.variance *
             ((1.0 + kSqrt5 * r.array() + (5.0 / 3.0) * r2.array()) *
              (-kSqrt5 * r.array()).exp())
                 .matrix();
    }
    case KernelFamily::Gaussian:
      return params.variance * (-0.5 * r2.array()).exp().matrix();
  }
  throw std::logic_error("kernel: unknown family");
}

}  // namespace

double kernel_value(const KernelParams& params, const Design& a, const Design& b) {
  validate(params, a.size());
  if (a.size() != b.size()) throw std::invalid_argument("kernel: dimension mismatch");
  double r2 = 0.0;
  for (Eigen::Index j = 0; j < a.size(); ++j) {
    const double u = (a[j] - b[j]) / params.lengthscales[j];
    r2 += u * u;
  }
  switch (params.family) {
    case KernelFamily::Matern52: {
      const double r = std::sqrt(r2);
      return params.variance * (1.0 + kSqrt5 * r + (5.0 / 3.0) * r2) * std::exp(-kSqrt5 * r);
    }
    case KernelFamily::Gaussian:
      return params.variance * std::exp(-0.5 * r2);
  }
  throw std::logic_error("kernel: unknown family");
}

Matrix cross_covariance(const KernelParams& params, const Matrix& X, const Matrix& Z) {
  validate(params, X.cols());
  if (X.cols() != Z.cols()) throw std::invalid_argument("kernel: dimension mismatch");
  return apply_family(params, scaled_sq_dist(params.lengthscales, X, Z));
}

Matrix self_covariance(const KernelParams& params, const Matrix& X) {
  validate(params, X.cols());
  Matrix K = apply_family(params, scaled_sq_dist(params.lengthscales, X, X));
  // Exact symmetry and exact variance on the diagonal keep the downstream
  // Cholesky behaviour independent of summation order.
  K = 0.5 * (K + K.transpose()).eval();
  K.diagonal().setConstant(params.variance);
  return K;
}

Vector weighted_grad_sum(const KernelParams& params, const Matrix& X, const Matrix& W) {
  validate(params, X.cols());
  const Eigen::Index n = X.rows();
  const Eigen::Index d = X.cols();
  if (W.rows() != n || W.cols() != n)
    throw std::invalid_argument("kernel: weight matrix shape mismatch");

  Vector grad = Vector::Zero(d + 1);
  // Diagonal pairs: dK/dlog l_j = 0, dK/dlog s2 = variance.
  grad[d] += params.variance * W.diagonal().sum();

  Vector u(d);
  for (Eigen::Index a = 1; a < n; ++a) {
    for (Eigen::Index b = 0; b < a; ++b) {
      const double w = W(a, b) + W(b, a);
      double r2 = 0.0;
      for (Eigen::Index j = 0; j < d; ++j) {
        const double s = (X(a, j) - X(b, j)) / params.lengthscales[j];
        u[j] = s * s;
        r2 += u[j];
      }
      switch (params.family) {
        case KernelFamily::Matern52: {
          const double r = std::sqrt(r2);
          const double e = std::exp(-kSqrt5 * r);
          const double k = params.variance * (1.0 + kSqrt5 * r + (5.0 / 3.0) * r2) * e;
          // d k / d log l_j = variance * e * (5/3) (1 + sqrt5 r) u_j
          const double common = params.variance * e * (5.0 / 3.0) * (1.0 + kSqrt5 * r);
          for (Eigen::Index j = 0; j < d; ++j) grad[j] += w * common * u[j];
          grad[d] += w * k;
          break;
        }
        case KernelFamily::Gaussian: {
          const double k = params.variance * std::exp(-0.5 * r2);
          // d k / d log l_j = k * u_j
          for (Eigen::Index j = 0; j < d; ++j) grad[j] += w * k * u[j];
          grad[d] += w * k;
          break;
        }
      }
    }
  }
  return grad;
}

}  // namespace ksbo
