#pragma once

#include <optional>

#include <Eigen/SVD>

#include "oparch/basis.hpp"
#include "oparch/kernels.hpp"

namespace oparch {

// Volatility-recursion parameters diagonal in the innovation eigenbasis:
// Z_{k,l} = d_l + sum_i a_{i,l} Z_{k-i,l} <eps_{k-i}, e_l>^2, X assembled as
// sum_l sqrt(Z_{k,l}) <eps_k, e_l> e_l.
struct ccc_params {
  int p = 1;
  std::string kernel = "bm";   // innovation covariance identity
  eigen_basis basis;           // K_model leading eigenpairs of that kernel
  vec delta;                   // K_model intercepts d_l, positive
  mat alpha;                   // p x K_model nonnegative coefficients a_{i,l}
  double eps_trace = 0.0;      // E ||eps||^2 over the full spectrum

  int K() const { return static_cast<int>(delta.size()); }
};

inline ccc_params make_params(const std::string& kernel_name, int r, int K_model,
                              int p, const mat& alpha, const vec& delta) {
  ccc_params params;
  params.p = p;
  params.kernel = kernel_name;
  params.basis = eigendecompose(kernel_by_name(kernel_name, r), K_model);
  params.delta = delta;
  params.alpha = alpha;
  params.eps_trace = kernel_trace(kernel_name, r);
  return params;
}

struct stationarity_report {
  double margin = 0.0;  // LHS of the sufficient condition; stationary when < 1
  bool satisfied = false;
  std::optional<double> lyapunov_estimate;
  std::optional<double> lyapunov_se;
};

// Invariant checks, reported rather than thrown.  `structural` additionally
// enforces the identification rule that the last-lag row of alpha is nonzero;
// simulation accepts the degenerate all-zero case (iid Gaussian curves), so
// the engines validate with structural = false.
inline std::vector<std::string> validate(const ccc_params& params,
                                         bool structural = true) {
  std::vector<std::string> errors;
  if (params.p < 1) errors.push_back("order p must be >= 1");
  if (params.delta.size() == 0) errors.push_back("delta is empty");
  if (params.alpha.rows() != params.p || params.alpha.cols() != params.delta.size())
    errors.push_back("alpha must be p x K_model");
  if (params.basis.size() < params.delta.size())
    errors.push_back("basis holds fewer eigenpairs than K_model");
  for (int l = 0; l < params.delta.size(); ++l) {
    if (!(params.delta(l) > 0.0)) {
      errors.push_back("delta not positive definite (d_" + std::to_string(l + 1) +
                       " <= 0)");
      break;
    }
  }
  if (!params.delta.allFinite() || !params.alpha.allFinite())
    errors.push_back("parameters contain non-finite values");
  if (params.alpha.size() > 0 && (params.alpha.array() < 0.0).any())
    errors.push_back("alpha coefficients must be nonnegative");
  if (structural && params.alpha.rows() == params.p && params.alpha.cols() > 0 &&
      params.alpha.row(params.p - 1).maxCoeff() <= 0.0)
    errors.push_back("alpha_p != 0 violated (last-lag row all zero)");
  return errors;
}

inline void validate_or_throw(const ccc_params& params, bool structural = true) {
  auto errors = validate(params, structural);
  if (!errors.empty()) {
    std::string joined;
    for (const auto& e : errors) joined += (joined.empty() ? "" : "; ") + e;
    fail(errc::bad_input, joined);
  }
}

// Sufficient stationarity check: with b = sum_i sup_l a_{i,l} bounding the
// coefficient operator norm and E = E||eps||^2, the condition is
//   b E sum_{l=1..p} l (b E)^{p-l} < 1.
// For p=1 this is b E < 1; for p=3 with norms summing to a over BM errors it
// reduces to a(a^2 + 4a + 12) < 8.
inline stationarity_report sufficient_stationarity_margin(const ccc_params& params) {
  double b = 0.0;
  for (int i = 0; i < params.p; ++i) b += params.alpha.row(i).maxCoeff();
  const double be = b * params.eps_trace;
  double margin = 0.0;
  for (int l = 1; l <= params.p; ++l)
    margin += static_cast<double>(l) * std::pow(be, params.p - l);
  margin *= be;
  stationarity_report report;
  report.margin = margin;
  report.satisfied = margin < 1.0;
  return report;
}

// Per-frequency mean of the volatility recursion, mu_l = d_l / (1 - lambda_l
// sum_i a_{i,l}); defined only when every denominator is positive.
inline vec mean_sigma(const ccc_params& params) {
  vec mu(params.K());
  for (int l = 0; l < params.K(); ++l) {
    double denom = 1.0 - params.basis.lambda(l) * params.alpha.col(l).sum();
    require(denom > 0.0, errc::non_stationary_mean,
            "mean recursion denominator <= 0 at frequency " + std::to_string(l + 1));
    mu(l) = params.delta(l) / denom;
  }
  return mu;
}

// Variance of the squared scores s_l = <X,e_l>^2 for p=1 Gaussian
// innovations: lambda_l^2 * 2 d_l^2 / ((1-lambda_l a_l)^2 (1-3 lambda_l^2 a_l^2)).
inline vec population_cov_diag(const ccc_params& params) {
  require(params.p == 1, errc::bad_input,
          "closed-form score variance requires p == 1");
  vec out(params.K());
  for (int l = 0; l < params.K(); ++l) {
    const double lam = params.basis.lambda(l);
    const double a = params.alpha(0, l);
    const double fourth = 3.0 * lam * lam * a * a;
    require(fourth < 1.0, errc::fourth_moment_diverges,
            "3 lambda^2 a^2 >= 1 at frequency " + std::to_string(l + 1));
    const double d = params.delta(l);
    const double m = 1.0 - lam * a;
    out(l) = lam * lam * 2.0 * d * d / (m * m * (1.0 - fourth));
  }
  return out;
}

namespace detail {

inline double spectral_norm(const mat& m) {
  if (m.rows() == 1 && m.cols() == 1) return std::abs(m(0, 0));
  Eigen::JacobiSVD<mat> svd(m);
  return svd.singularValues()(0);
}

}  // namespace detail

// Monte-Carlo top Lyapunov exponent of the volatility-update maps.  Per
// frequency the update is a p x p companion matrix with top row
// a_{i,l} <eps_k, e_l>^2 and unit subdiagonal; gamma is the growth rate of
// the product norm, maximized over frequencies (for entrywise nonnegative
// matrices the cone-restricted gauge matches the spectral norm).
inline stationarity_report lyapunov_mc(const ccc_params& params, int steps,
                                       int reps, std::uint64_t seed) {
  require(steps >= 100, errc::bad_input, "steps must be >= 100");
  require(reps >= 10, errc::bad_input, "reps must be >= 10");
  const int p = params.p;
  const int K = params.K();
  std::vector<double> gammas(reps);
  parallel_for(reps, [&](std::int64_t rep) {
    auto rng = make_rng(seed, 0xa11e, static_cast<std::uint64_t>(rep));
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<mat> product(K, mat::Identity(p, p));
    vec log_scale = vec::Zero(K);
    for (int k = 0; k < steps; ++k) {
      for (int l = 0; l < K; ++l) {
        double score = std::sqrt(params.basis.lambda(l)) * gauss(rng);
        mat update = mat::Zero(p, p);
        for (int i = 0; i < p; ++i) update(0, i) = params.alpha(i, l) * score * score;
        for (int i = 1; i < p; ++i) update(i, i - 1) = 1.0;
        product[l] = update * product[l];
      }
      if ((k + 1) % 25 == 0 || k + 1 == steps) {
        for (int l = 0; l < K; ++l) {
          double scale = detail::spectral_norm(product[l]);
          if (scale > 0.0) {
            log_scale(l) += std::log(scale);
            product[l] /= scale;
          } else {
            log_scale(l) = -std::numeric_limits<double>::infinity();
            product[l] = mat::Identity(p, p);
          }
        }
      }
    }
    double best = -std::numeric_limits<double>::infinity();
    for (int l = 0; l < K; ++l) {
      double total = log_scale(l) + std::log(detail::spectral_norm(product[l]));
      best = std::max(best, total);
    }
    gammas[rep] = best / static_cast<double>(steps);
  });
  double gbar = mean(gammas);
  double var = 0.0;
  for (double g : gammas) var += (g - gbar) * (g - gbar);
  var /= static_cast<double>(reps - 1);
  stationarity_report report = sufficient_stationarity_margin(params);
  report.lyapunov_estimate = gbar;
  report.lyapunov_se = std::sqrt(var / static_cast<double>(reps));
  return report;
}

}  // namespace oparch
