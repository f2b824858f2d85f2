#pragma once

#include "oparch/model.hpp"

namespace oparch {

// Score coordinates of a curve sample in an innovation eigenbasis.
struct score_panel {
  mat scores;   // N x K, x_{k,j} = <X_k, e_j>
  mat squared;  // N x K, s_{k,j} = x_{k,j}^2
  eigen_basis basis;
  int K = 0;

  int N() const { return static_cast<int>(scores.rows()); }
};

inline score_panel compute_scores(const mat& curves, const eigen_basis& basis,
                                  int K) {
  require(K > 0 && K <= basis.size(), errc::bad_input, "K outside basis");
  require(curves.cols() == basis.r, errc::grid_mismatch,
          "curves and basis on different grids");
  score_panel panel;
  panel.K = K;
  panel.basis = basis;
  panel.scores =
      curves * basis.functions.leftCols(K) / static_cast<double>(basis.r);
  panel.squared = panel.scores.cwiseAbs2();
  return panel;
}

// Smallest k whose k-term reconstruction leaves at most (1 - tve) of the
// sample energy; Parseval makes the residual energy total - captured.
inline int select_K_tve(const mat& curves, const eigen_basis& basis,
                        double tve = 0.9) {
  require(tve > 0.0 && tve < 1.0, errc::bad_input, "tve must lie in (0,1)");
  require(curves.cols() == basis.r, errc::grid_mismatch,
          "curves and basis on different grids");
  const double total = curves.cwiseAbs2().sum() / static_cast<double>(basis.r);
  require(total > 0.0, errc::bad_input, "sample has zero energy");
  mat scores = curves * basis.functions / static_cast<double>(basis.r);
  double captured = 0.0;
  for (int k = 0; k < basis.size(); ++k) {
    captured += scores.col(k).cwiseAbs2().sum();
    if ((total - captured) / total <= 1.0 - tve) return k + 1;
  }
  fail(errc::insufficient_basis,
       "basis of size " + std::to_string(basis.size()) +
           " does not reach tve " + std::to_string(tve));
}

// Moment matrices of the stacked squared-score process.  With y_k the stack
// (s_k, ..., s_{k-p+1}) for k = p..N (1-based) and targets z_{k+1,j} =
// s_{k+1,j}/(lambda_j + theta):
//   m_p  = (1/N) sum y_k              (pK means)
//   c_d  = (1/N) sum (y_k - m_p)(y_k - m_p)'
//   d_d  = (1/N) sum_{k=p..N-1} (z_{k+1} - zbar)(y_k - m_p)'
// with zbar the same scaling applied to m1_prime = (1/N) sum_{k=p+1..N} s_k.
// Normalization 1/N and the index ranges are deliberate (not 1/(N-p)).
struct yw_matrices {
  mat c_d;        // pK x pK
  mat d_d;        // K x pK, theta-scaled targets
  mat d_d_mp;     // K x pK, exact-reciprocal targets (theta = 0)
  vec m_p;        // pK
  vec m1_prime;   // K
  vec lambda;     // K basis eigenvalues
  double theta = 0.0;
  int p = 1;
  int K = 0;
};

inline yw_matrices build_yw_matrices(const score_panel& panel, int p,
                                     double theta) {
  require(theta > 0.0, errc::bad_input, "theta must be positive");
  const int N = panel.N();
  const int K = panel.K;
  require(N > p + 1, errc::bad_input, "need N > p + 1");
  for (int j = 0; j < K; ++j) {
    double lo = panel.squared.col(j).minCoeff();
    double hi = panel.squared.col(j).maxCoeff();
    if (hi - lo <= 0.0)
      fail(errc::degenerate_sample,
           "squared-score column " + std::to_string(j + 1) + " is constant");
  }

  yw_matrices yw;
  yw.theta = theta;
  yw.p = p;
  yw.K = K;
  yw.lambda = panel.basis.lambda.head(K);

  const int stacks = N - p + 1;  // k = p..N
  mat y(stacks, p * K);
  for (int k = 0; k < stacks; ++k)
    for (int i = 0; i < p; ++i)
      y.block(k, i * K, 1, K) = panel.squared.row(p - 1 + k - i);

  yw.m_p = y.colwise().sum().transpose() / static_cast<double>(N);
  mat yc = y.rowwise() - yw.m_p.transpose();
  yw.c_d = yc.transpose() * yc / static_cast<double>(N);

  yw.m1_prime =
      panel.squared.bottomRows(N - p).colwise().sum().transpose() /
      static_cast<double>(N);

  // Lag-1 pairs (y_k, z_{k+1}) for k = p..N-1: the first stacks-1 rows of y
  // against squared rows p..N-1 (0-based).
  vec scale = (yw.lambda.array() + theta).inverse().matrix();
  vec scale_mp = yw.lambda.array().inverse().matrix();
  mat z = panel.squared.bottomRows(N - p) * scale.asDiagonal();
  mat z_mp = panel.squared.bottomRows(N - p) * scale_mp.asDiagonal();
  vec zbar = yw.m1_prime.cwiseProduct(scale);
  vec zbar_mp = yw.m1_prime.cwiseProduct(scale_mp);
  mat zc = z.rowwise() - zbar.transpose();
  mat zc_mp = z_mp.rowwise() - zbar_mp.transpose();
  mat yc_head = yc.topRows(stacks - 1);
  yw.d_d = zc.transpose() * yc_head / static_cast<double>(N);
  yw.d_d_mp = zc_mp.transpose() * yc_head / static_cast<double>(N);
  return yw;
}

enum class fit_method { finite, tikhonov, moore_penrose };

inline const char* fit_method_name(fit_method m) {
  switch (m) {
    case fit_method::finite: return "finite";
    case fit_method::tikhonov: return "tikhonov";
    case fit_method::moore_penrose: return "mp";
  }
  return "?";
}

inline fit_method fit_method_from_name(const std::string& name) {
  if (name == "finite") return fit_method::finite;
  if (name == "tikhonov") return fit_method::tikhonov;
  if (name == "mp" || name == "moore-penrose") return fit_method::moore_penrose;
  fail(errc::bad_input, "unknown method '" + name + "'");
}

// Fitted coefficients.  Raw values feed error metrics; the clamped accessors
// (alpha >= 0, delta >= 1e-12) are what forecasting is allowed to see.
struct fit_result {
  int p = 1;
  int K = 0;
  fit_method method = fit_method::finite;
  double theta = 0.0;
  int k_proj = 0;
  mat alpha_hat;           // p x K raw
  vec delta_hat;           // K raw
  mat delta_matrix;        // K x K raw
  mat m_hat;               // K x pK full inversion output
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> alpha_clamped;
  Eigen::Array<bool, Eigen::Dynamic, 1> delta_clamped;
  double tve = 0.0;        // 0 when K was fixed by hand
  std::uint64_t seed = 0;  // provenance when fitted to simulated data

  static constexpr double delta_floor = 1e-12;

  mat alpha_fc() const { return alpha_hat.cwiseMax(0.0); }
  vec delta_fc() const { return delta_hat.cwiseMax(delta_floor); }
};

namespace detail {

inline fit_result extract_block_diagonals(const mat& m_hat, const yw_matrices& yw,
                                          fit_method method, double theta,
                                          int k_proj) {
  fit_result fit;
  fit.p = yw.p;
  fit.K = yw.K;
  fit.method = method;
  fit.theta = theta;
  fit.k_proj = k_proj;
  fit.m_hat = m_hat;
  fit.alpha_hat.resize(yw.p, yw.K);
  for (int i = 0; i < yw.p; ++i)
    for (int j = 0; j < yw.K; ++j) fit.alpha_hat(i, j) = m_hat(j, i * yw.K + j);
  fit.alpha_clamped = fit.alpha_hat.array() < 0.0;
  return fit;
}

}  // namespace detail

// Plain inversion: M = d_d c_d^{-1}; the coefficient estimates are the block
// diagonals of M.
inline fit_result fit_alpha_finite(const yw_matrices& yw) {
  Eigen::JacobiSVD<mat> svd(yw.c_d);
  const auto& sv = svd.singularValues();
  double cond = sv(0) / std::max(sv(sv.size() - 1), 1e-300);
  require(cond < 1e12, errc::singular_cd,
          "condition number " + std::to_string(cond) + " >= 1e12");
  mat m_hat = yw.c_d.ldlt().solve(yw.d_d.transpose()).transpose();
  return detail::extract_block_diagonals(m_hat, yw, fit_method::finite, yw.theta,
                                         yw.p * yw.K);
}

// Ridge inversion with spectral projection: M = d_d (c_d + theta I)^{-1} P,
// P the projector onto the top k_proj eigenvectors of c_d.
inline fit_result fit_alpha_tikhonov(const yw_matrices& yw, double theta,
                                     int k_proj) {
  require(theta > 0.0, errc::bad_input, "theta must be positive");
  require(k_proj > 0 && k_proj <= yw.p * yw.K, errc::bad_input,
          "k_proj outside [1, pK]");
  Eigen::SelfAdjointEigenSolver<mat> solver(yw.c_d);
  require(solver.info() == Eigen::Success, errc::non_convergence,
          "eigensolver failed on c_d");
  vec xi = solver.eigenvalues().reverse();
  mat v = solver.eigenvectors().rowwise().reverse();
  mat inv_proj = mat::Zero(yw.c_d.rows(), yw.c_d.cols());
  for (int i = 0; i < k_proj; ++i)
    inv_proj += v.col(i) * v.col(i).transpose() / (xi(i) + theta);
  mat m_hat = yw.d_d * inv_proj;
  return detail::extract_block_diagonals(m_hat, yw, fit_method::tikhonov, theta,
                                         k_proj);
}

// Truncated spectral inversion with exact-reciprocal targets: M =
// d_d(theta=0) sum_{i<=k_mp} xi_i^{-1} v_i v_i'.
inline fit_result fit_alpha_mp(const yw_matrices& yw, int k_mp) {
  require(k_mp > 0 && k_mp <= yw.p * yw.K, errc::bad_input,
          "k_mp outside [1, pK]");
  Eigen::SelfAdjointEigenSolver<mat> solver(yw.c_d);
  require(solver.info() == Eigen::Success, errc::non_convergence,
          "eigensolver failed on c_d");
  vec xi = solver.eigenvalues().reverse();
  mat v = solver.eigenvectors().rowwise().reverse();
  require(xi(k_mp - 1) > 1e-12 * xi(0), errc::rank_deficient,
          "xi_" + std::to_string(k_mp) + " <= 1e-12 xi_1");
  mat inv = mat::Zero(yw.c_d.rows(), yw.c_d.cols());
  for (int i = 0; i < k_mp; ++i)
    inv += v.col(i) * v.col(i).transpose() / xi(i);
  mat m_hat = yw.d_d_mp * inv;
  fit_result fit = detail::extract_block_diagonals(
      m_hat, yw, fit_method::moore_penrose, 0.0, k_mp);
  return fit;
}

namespace detail {

// Intercept identity in score coordinates: Delta C_eps = C_X - alpha(m_p) C_eps,
// solved with the same theta-regularized division as the coefficients.
inline void fit_delta_core(fit_result& fit, const mat& c_x, const vec& m_p,
                           const vec& lambda, double theta) {
  const int p = fit.p;
  const int K = fit.K;
  vec alpha_m(K);
  for (int j = 0; j < K; ++j) {
    double acc = 0.0;
    for (int i = 0; i < p; ++i) acc += fit.alpha_hat(i, j) * m_p(i * K + j);
    alpha_m(j) = acc;
  }
  vec scale = (lambda.array() + theta).inverse().matrix();
  mat adjusted = c_x;
  adjusted -= mat(alpha_m.asDiagonal()) * mat(lambda.asDiagonal());
  fit.delta_matrix = adjusted * scale.asDiagonal();
  fit.delta_hat = fit.delta_matrix.diagonal();
  fit.delta_clamped = fit.delta_hat.array() < fit_result::delta_floor;
}

}  // namespace detail

// Fills delta_hat/delta_matrix on an already alpha-fitted result.
inline void fit_delta(fit_result& fit, const yw_matrices& yw,
                      const score_panel& panel) {
  const int K = fit.K;
  require(K == panel.K, errc::bad_input, "fit and panel disagree on K");
  mat c_x = panel.scores.transpose() * panel.scores /
            static_cast<double>(panel.N());
  double theta = fit.method == fit_method::moore_penrose ? 0.0 : yw.theta;
  detail::fit_delta_core(fit, c_x, yw.m_p, yw.lambda, theta);
}

// One-call pipeline: scores -> moments -> coefficient fit -> intercept fit.
inline fit_result fit_ccc(const mat& curves, const eigen_basis& basis, int p,
                          int K, fit_method method, double theta,
                          int k_proj = -1) {
  score_panel panel = compute_scores(curves, basis, K);
  yw_matrices yw = build_yw_matrices(panel, p, theta);
  fit_result fit;
  switch (method) {
    case fit_method::finite:
      fit = fit_alpha_finite(yw);
      break;
    case fit_method::tikhonov:
      fit = fit_alpha_tikhonov(yw, theta, k_proj > 0 ? k_proj : K);
      break;
    case fit_method::moore_penrose:
      fit = fit_alpha_mp(yw, k_proj > 0 ? k_proj : p * K);
      break;
  }
  fit_delta(fit, yw, panel);
  return fit;
}

// Default regularization grid: 12 log-spaced points spanning
// [1e-6, 1e-1] * trace(c_d) / pK.
inline std::vector<double> default_theta_grid(double cd_trace, int pk) {
  const double scale = cd_trace / static_cast<double>(pk);
  const double lo = 1e-6 * scale, hi = 1e-1 * scale;
  std::vector<double> grid(12);
  for (int i = 0; i < 12; ++i)
    grid[i] = lo * std::pow(hi / lo, static_cast<double>(i) / 11.0);
  return grid;
}

// Mean relative coefficient errors of one fit against the truth, averaged
// over lags; fitted frequencies beyond the fit's K count as zero estimates.
inline double relative_error_alpha(const ccc_params& truth, const fit_result& fit) {
  require(fit.p == truth.p, errc::bad_input, "order mismatch");
  double acc = 0.0;
  for (int i = 0; i < truth.p; ++i) {
    double denom = truth.alpha.row(i).norm();
    require(denom > 0.0, errc::zero_norm,
            "true alpha_" + std::to_string(i + 1) + " is identically zero");
    vec diff = truth.alpha.row(i).transpose();
    for (int j = 0; j < std::min(truth.K(), fit.K); ++j)
      diff(j) -= fit.alpha_hat(i, j);
    acc += diff.norm() / denom;
  }
  return acc / static_cast<double>(truth.p);
}

inline double relative_error_delta(const ccc_params& truth, const fit_result& fit) {
  double denom = truth.delta.norm();
  require(denom > 0.0, errc::zero_norm, "true delta is identically zero");
  vec diff = truth.delta;
  for (int j = 0; j < std::min(truth.K(), fit.K); ++j) diff(j) -= fit.delta_hat(j);
  return diff.norm() / denom;
}

// Replicate-level aggregate used by the consistency harness.
inline std::pair<double, double> relative_errors(
    const ccc_params& truth, const std::vector<fit_result>& fits) {
  require(!fits.empty(), errc::bad_input, "no fits supplied");
  std::vector<double> ea, ed;
  ea.reserve(fits.size());
  ed.reserve(fits.size());
  for (const auto& fit : fits) {
    ea.push_back(relative_error_alpha(truth, fit));
    ed.push_back(relative_error_delta(truth, fit));
  }
  return {mean(ea), mean(ed)};
}

// Chronological 80/20 split; for each grid theta, expanding-window one-step
// quantile forecasts on the test days scored by the integrated check loss
// rho_alpha(forecast - realized), rho_alpha(u) = u(alpha - 1{u<0}).  Ties
// break toward the larger theta; a theta whose fit fails anywhere scores
// +infinity.
struct theta_cv_result {
  double theta = 0.0;
  std::vector<double> cv_err;  // aligned with the grid
  int K = 0;
};

inline double check_loss(double u, double alpha) {
  return u * (alpha - (u < 0.0 ? 1.0 : 0.0));
}

inline theta_cv_result cross_validate_theta(
    const mat& curves, const eigen_basis& basis, const mat& innovation_kernel,
    int p, double alpha_level = 0.05,
    std::vector<double> theta_grid = {}, double tve = 0.9) {
  const int n = static_cast<int>(curves.rows());
  require(n >= 50, errc::bad_input, "need N >= 50 for cross-validation");
  const int split = static_cast<int>(std::floor(0.8 * n));
  const int K = select_K_tve(curves, basis, tve);

  if (theta_grid.empty()) {
    score_panel panel = compute_scores(curves.topRows(split), basis, K);
    yw_matrices yw = build_yw_matrices(panel, p, 1e-8);
    theta_grid = default_theta_grid(yw.c_d.trace(), p * K);
  }
  require(!theta_grid.empty(), errc::bad_input, "theta grid is empty");

  // Paper-form quantile: sqrt(v(t)) * Phi^{-1}(alpha / Ceps^{1/2}(t,t)),
  // argument clamped into (0,1).
  const int r = basis.r;
  vec sqrt_diag = operator_sqrt(innovation_kernel).diagonal();
  vec phi_arg(r);
  for (int i = 0; i < r; ++i) {
    double q = alpha_level / std::max(sqrt_diag(i), 1e-300);
    phi_arg(i) = normal_quantile(std::clamp(q, 1e-6, 1.0 - 1e-6));
  }

  theta_cv_result result;
  result.K = K;
  result.cv_err.assign(theta_grid.size(), 0.0);
  vec lambda_k = basis.lambda.head(K);
  for (std::size_t g = 0; g < theta_grid.size(); ++g) {
    const double theta = theta_grid[g];
    double total = 0.0;
    bool failed = false;
    for (int day = split; day < n && !failed; ++day) {
      try {
        fit_result fit = fit_ccc(curves.topRows(day), basis, p, K,
                                 fit_method::tikhonov, theta, K);
        score_panel panel = compute_scores(curves.topRows(day), basis, K);
        vec z_hat = fit.delta_fc();
        mat alpha_fc = fit.alpha_fc();
        for (int i = 0; i < p; ++i)
          z_hat += alpha_fc.row(i).transpose().cwiseProduct(
              panel.squared.row(day - 1 - i).transpose());
        vec v = (basis.functions.leftCols(K).cwiseAbs2()) *
                z_hat.cwiseProduct(lambda_k);
        double day_loss = 0.0;
        for (int i = 0; i < r; ++i)
          day_loss += check_loss(std::sqrt(std::max(v(i), 0.0)) * phi_arg(i) -
                                     curves(day, i),
                                 alpha_level);
        total += day_loss / static_cast<double>(r);
      } catch (const domain_error&) {
        failed = true;
      }
    }
    result.cv_err[g] =
        failed ? std::numeric_limits<double>::infinity()
               : total / static_cast<double>(n - split);
  }

  std::size_t best = 0;
  for (std::size_t g = 1; g < theta_grid.size(); ++g) {
    if (result.cv_err[g] < result.cv_err[best] ||
        (result.cv_err[g] == result.cv_err[best] &&
         theta_grid[g] > theta_grid[best]))
      best = g;
  }
  result.theta = theta_grid[best];
  return result;
}

}  // namespace oparch
