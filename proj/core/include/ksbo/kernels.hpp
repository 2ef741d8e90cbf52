#pragma once

#include "ksbo/common.hpp"

namespace ksbo {

enum class KernelFamily { Matern52, Gaussian };

struct KernelParams {
  KernelFamily family = KernelFamily::Matern52;
  Vector lengthscales;  // one per input dimension, > 0
  double variance = 1.0;  // process variance sigma^2, > 0
};

// Covariance value for a single pair of designs.
double kernel_value(const KernelParams& params, const Design& a, const Design& b);

// k(X, Z), rows of X against rows of Z.  Assembled as a scaled Gram product
// plus elementwise transforms so Eigen can run the distance part as a GEMM;
// this is the dominant cost of predicting on 1e5-point candidate sets.
Matrix cross_covariance(const KernelParams& params, const Matrix& X, const Matrix& Z);

// k(X, X); exploits symmetry.
Matrix self_covariance(const KernelParams& params, const Matrix& X);

// Accumulates the directional derivatives sum_{a,b} W(a,b) * dK(a,b)/dtheta
// for theta = (log lengthscale_1..d, log variance) in a single pass over the
// pairs.  Returns the vector of length d+1.  The variance component excludes
// noise/jitter diagonals; callers append those if their covariance carries
// them.
Vector weighted_grad_sum(const KernelParams& params, const Matrix& X, const Matrix& W);

}  // namespace ksbo
