#pragma once

#include "oparch/common.hpp"

namespace oparch {

// All curves live on the uniform midpoint grid t_i = (2i-1)/(2r) over [0,1]
// with flat quadrature weights 1/r; a curve is just its r node values.
// Midpoints keep t=0 out of the grid, where Brownian-motion-type kernels
// degenerate (zero variance) and quantile formulas divide by zero.
inline vec midpoint_grid(int r) {
  require(r > 0, errc::bad_input, "grid size must be positive");
  vec t(r);
  for (int i = 0; i < r; ++i) t(i) = (2.0 * i + 1.0) / (2.0 * r);
  return t;
}

inline void require_same_grid(const vec& f, const vec& g) {
  require(f.size() == g.size(), errc::grid_mismatch,
          "curves on grids of size " + std::to_string(f.size()) + " and " +
              std::to_string(g.size()));
}

// L2 quadrature: <f,g> = (1/r) sum_i f_i g_i.
inline double inner_product(const vec& f, const vec& g) {
  require_same_grid(f, g);
  require(f.size() > 0, errc::grid_mismatch, "empty grid");
  return f.dot(g) / static_cast<double>(f.size());
}

inline double norm(const vec& f) { return std::sqrt(inner_product(f, f)); }

// Trace integral of a kernel matrix on the grid.
inline double trace_integral(const mat& k) {
  require(k.rows() == k.cols() && k.rows() > 0, errc::bad_input,
          "kernel matrix must be square");
  return k.trace() / static_cast<double>(k.rows());
}

// Kernel composition (A o B)(s,u) = integral A(s,t)B(t,u) dt and operator
// application (A f)(s) = integral A(s,t)f(t) dt under flat weights.
inline mat compose(const mat& a, const mat& b) {
  require(a.cols() == b.rows(), errc::grid_mismatch, "kernel size mismatch");
  return a * b / static_cast<double>(a.cols());
}

inline vec apply_operator(const mat& a, const vec& f) {
  require(a.cols() == f.size(), errc::grid_mismatch, "kernel/curve mismatch");
  return a * f / static_cast<double>(a.cols());
}

}  // namespace oparch
