#pragma once

#include <Eigen/Eigenvalues>

#include "oparch/grid.hpp"

namespace oparch {

// Top eigenpairs of a kernel operator on the midpoint grid.  Eigenvalues are
// descending and strictly positive; eigenfunctions hold node values of
// L2-normalized functions (sign fixed so the integral is nonnegative,
// first-node sign breaking ties).
struct eigen_basis {
  vec lambda;     // K positive eigenvalues, descending
  mat functions;  // r x K node values, L2 norm 1 per column
  int r = 0;

  int size() const { return static_cast<int>(lambda.size()); }
  vec function(int j) const { return functions.col(j); }
};

namespace detail {

// Symmetric eigensolve of W^{1/2} M W^{1/2} = M/r under flat weights,
// returned descending.  Throws on solver failure only.
inline void weighted_eigensolve(const mat& k, vec& values, mat& vectors) {
  const int r = static_cast<int>(k.rows());
  Eigen::SelfAdjointEigenSolver<mat> solver(k / static_cast<double>(r));
  require(solver.info() == Eigen::Success, errc::non_convergence,
          "symmetric eigensolver did not converge");
  values = solver.eigenvalues().reverse();
  vectors = solver.eigenvectors().rowwise().reverse();
}

// Flat-weight quadrature of a kernel with a diagonal kink (BM-type, where
// d/ds K(s,t) jumps across s=t) biases every eigenvalue upward by c*h^2/6,
// c the median diagonal kink strength.  Smooth kernels give c = O(h) and the
// correction is inert; kinked kernels drop from O(h^2) to near-exact.
inline double diagonal_kink_strength(const mat& k) {
  const int r = static_cast<int>(k.rows());
  if (r < 3) return 0.0;
  const double h = 1.0 / static_cast<double>(r);
  std::vector<double> kink;
  kink.reserve(r - 2);
  for (int i = 1; i + 1 < r; ++i)
    kink.push_back((k(i, i) - 0.5 * (k(i, i - 1) + k(i, i + 1))) / h);
  return median(std::move(kink));
}

}  // namespace detail

// count requests that many positive eigenpairs; nonpositive eigenvalues are
// clamped to zero and excluded, and coming up short is DegenerateKernel.
inline eigen_basis eigendecompose(const mat& kernel, int count,
                                  bool kink_correction = true) {
  const int r = static_cast<int>(kernel.rows());
  require(kernel.cols() == r && r > 0, errc::bad_input, "kernel must be square");
  require(count > 0 && count <= r, errc::bad_input,
          "eigenpair count must lie in [1, r]");
  vec values;
  mat vectors;
  detail::weighted_eigensolve(kernel, values, vectors);

  if (kink_correction) {
    const double h = 1.0 / static_cast<double>(r);
    const double shift = detail::diagonal_kink_strength(kernel) * h * h / 6.0;
    values.array() -= shift;
  }

  // Rounding noise around zero must not count as signal: positivity is
  // measured relative to the leading eigenvalue.
  const double floor = values(0) > 0.0 ? 1e-12 * values(0) : 0.0;
  int positive = 0;
  while (positive < r && values(positive) > floor) ++positive;
  require(positive >= count, errc::degenerate_kernel,
          "kernel has " + std::to_string(positive) +
              " positive eigenvalues, needed " + std::to_string(count));

  eigen_basis basis;
  basis.r = r;
  basis.lambda = values.head(count);
  basis.functions = vectors.leftCols(count) * std::sqrt(static_cast<double>(r));
  for (int j = 0; j < count; ++j) {
    double integral = basis.functions.col(j).sum() / static_cast<double>(r);
    double sign = integral;
    if (std::abs(integral) < 1e-12) sign = basis.functions(0, j);
    if (sign < 0) basis.functions.col(j) = -basis.functions.col(j);
  }
  return basis;
}

// Spectral square root; clamps negative eigenvalues so (result o result)
// reproduces the PSD part of the input.  No kink correction here: the
// round-trip identity must hold on the discretized operator as given.
inline mat operator_sqrt(const mat& kernel) {
  const int r = static_cast<int>(kernel.rows());
  require(kernel.cols() == r && r > 0, errc::bad_input, "kernel must be square");
  vec values;
  mat vectors;
  detail::weighted_eigensolve(kernel, values, vectors);
  // The square root doubles the relative weight of rounding noise near zero
  // (sqrt(eps*lambda_1) >> eps*lambda_1), so noise-level eigenvalues are
  // dropped rather than clamped.
  const double floor = values.maxCoeff() > 0.0 ? 1e-14 * values.maxCoeff() : 0.0;
  vec scaled = (values.array() > floor)
                   .select(values.cwiseMax(0.0).cwiseSqrt(), 0.0) *
               static_cast<double>(r);
  return vectors * scaled.asDiagonal() * vectors.transpose();
}

// Composes op on the right with (C_eps + theta I)^{-1} projected onto
// span(e_1..e_K): in basis coordinates column j is scaled by 1/(lambda_j +
// theta) for j <= K and zeroed beyond.
inline mat tikhonov_apply_right(const mat& op, const eigen_basis& basis,
                                double theta, int K) {
  require(theta > 0.0, errc::bad_input, "theta must be positive");
  require(K > 0 && K <= basis.size(), errc::bad_input, "K outside basis");
  require(op.cols() == basis.r, errc::grid_mismatch, "operator/basis mismatch");
  mat regularized = mat::Zero(basis.r, basis.r);
  for (int j = 0; j < K; ++j)
    regularized += basis.functions.col(j) * basis.functions.col(j).transpose() /
                   (basis.lambda(j) + theta);
  return compose(op, regularized);
}

// Cholesky factor of a node covariance with jitter 1e-10*trace escalating
// x10 up to 3 retries before CholeskyFailure.  Cache it when drawing many
// curves from one kernel.
inline mat cholesky_factor(const mat& kernel) {
  const int r = static_cast<int>(kernel.rows());
  require(kernel.cols() == r && r > 0, errc::bad_input, "kernel must be square");
  if (kernel.isZero(0.0)) return mat::Zero(r, r);
  double jitter = 1e-10 * kernel.trace();
  if (jitter <= 0.0) jitter = 1e-300;
  Eigen::LLT<mat> llt;
  for (int attempt = 0; attempt <= 3; ++attempt) {
    llt.compute(kernel + jitter * mat::Identity(r, r));
    if (llt.info() == Eigen::Success) return llt.matrixL();
    jitter *= 10.0;
  }
  fail(errc::cholesky_failure, "kernel not factorizable after jitter escalation");
}

inline vec gaussian_from_factor(const mat& factor, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  vec z(factor.cols());
  for (int i = 0; i < z.size(); ++i) z(i) = gauss(rng);
  return factor * z;
}

// Centered Gaussian curve with the kernel as node covariance.
inline vec sample_gaussian(const mat& kernel, std::mt19937_64& rng) {
  return gaussian_from_factor(cholesky_factor(kernel), rng);
}

// Kernel assembled from diagonal coefficients in a basis:
// sum_j coeff_j e_j(s) e_j(t).
inline mat diagonal_kernel(const eigen_basis& basis, const vec& coeffs) {
  require(coeffs.size() <= basis.size(), errc::bad_input,
          "more coefficients than basis functions");
  mat k = mat::Zero(basis.r, basis.r);
  for (int j = 0; j < coeffs.size(); ++j)
    k += coeffs(j) * basis.functions.col(j) * basis.functions.col(j).transpose();
  return k;
}

}  // namespace oparch
