#pragma once

#include "oparch/grid.hpp"

namespace oparch {

// Brownian-motion covariance min(s,t).
inline mat bm_kernel(int r) {
  vec t = midpoint_grid(r);
  mat k(r, r);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < r; ++j) k(i, j) = std::min(t(i), t(j));
  return k;
}

// Ornstein-Uhlenbeck covariance exp(-|s-t|/2).
inline mat ou_kernel(int r) {
  vec t = midpoint_grid(r);
  mat k(r, r);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < r; ++j) k(i, j) = std::exp(-std::abs(t(i) - t(j)) / 2.0);
  return k;
}

inline mat kernel_by_name(const std::string& name, int r) {
  if (name == "bm") return bm_kernel(r);
  if (name == "ou") return ou_kernel(r);
  fail(errc::bad_input, "unknown kernel '" + name + "' (expected bm or ou)");
}

// Analytic trace integral when known; quadrature otherwise.  BM has
// integral min(t,t) dt = 1/2 exactly, OU has kernel diagonal constant 1.
inline double kernel_trace(const std::string& name, int r) {
  if (name == "bm") return 0.5;
  if (name == "ou") return 1.0;
  return trace_integral(kernel_by_name(name, r));
}

}  // namespace oparch
