#pragma once

#include <optional>

#include "oparch/estimate.hpp"

namespace oparch {

// One-step-ahead volatility forecast in basis coordinates, with optional grid
// materializations.
struct sigma_forecast {
  vec z_hat;                      // K nonnegative coefficients
  std::optional<mat> kernel;      // sum z_l e_l x e_l
  std::optional<mat> cond_cov;    // sum z_l lambda_l e_l x e_l
};

// Z_{N+1,l} = d_l + sum_i a_{i,l} last_scores(i,l)^2 with last_scores(i,.) the
// scores of X_{N+1-i}; inputs are the clamped fit, so z_hat >= 0.
inline sigma_forecast forecast_sigma(const fit_result& fit, const mat& last_scores) {
  require(last_scores.rows() == fit.p && last_scores.cols() == fit.K,
          errc::bad_input, "last_scores must be p x K");
  sigma_forecast sf;
  sf.z_hat = fit.delta_fc();
  mat alpha = fit.alpha_fc();
  for (int i = 0; i < fit.p; ++i)
    sf.z_hat += alpha.row(i).transpose().cwiseProduct(
        last_scores.row(i).transpose().cwiseAbs2());
  return sf;
}

// Conditional covariance kernel Sigma^{1/2} C_eps Sigma^{1/2}: under the
// shared eigenbasis the coefficients are z_l lambda_l on e_l x e_l (the
// off-span remainder of C_eps is truncated away).
inline mat conditional_covariance(sigma_forecast& sf, const eigen_basis& basis) {
  const int K = static_cast<int>(sf.z_hat.size());
  require(K <= basis.size(), errc::bad_input, "forecast exceeds basis");
  vec coeff = sf.z_hat.cwiseProduct(basis.lambda.head(K));
  mat cc = diagonal_kernel(basis, coeff);
  sf.kernel = diagonal_kernel(basis, sf.z_hat);
  sf.cond_cov = cc;
  return cc;
}

enum class quantile_mode { gaussian, paper };

inline const char* quantile_mode_name(quantile_mode m) {
  return m == quantile_mode::gaussian ? "gaussian" : "paper";
}

inline quantile_mode quantile_mode_from_name(const std::string& name) {
  if (name == "gaussian") return quantile_mode::gaussian;
  if (name == "paper") return quantile_mode::paper;
  fail(errc::bad_input, "unknown quantile mode '" + name + "'");
}

// Pointwise conditional variance v(t) = sum_l z_l lambda_l e_l(t)^2.
inline vec forecast_variance_diag(const sigma_forecast& sf, const eigen_basis& basis) {
  const int K = static_cast<int>(sf.z_hat.size());
  require(K <= basis.size(), errc::bad_input, "forecast exceeds basis");
  return basis.functions.leftCols(K).cwiseAbs2() *
         sf.z_hat.cwiseProduct(basis.lambda.head(K));
}

// Lower quantile curve of the forecast distribution.  gaussian mode is the
// calibrated Gaussian quantile sqrt(v) Phi^{-1}(alpha).  paper mode divides
// alpha by the diagonal of the innovation covariance operator's square root
// before Phi^{-1}; the argument is clamped into [1e-6, 1-1e-6] and the number
// of clamped nodes is reported through clamped_nodes when given.
inline vec quantile_curve(const sigma_forecast& sf, const eigen_basis& basis,
                          double alpha_level, quantile_mode mode,
                          const vec* ceps_sqrt_diag = nullptr,
                          int* clamped_nodes = nullptr) {
  require(alpha_level > 0.0 && alpha_level < 1.0, errc::bad_input,
          "alpha outside (0,1)");
  vec v = forecast_variance_diag(sf, basis);
  vec out(basis.r);
  if (mode == quantile_mode::gaussian) {
    double q = normal_quantile(alpha_level);
    for (int i = 0; i < basis.r; ++i) out(i) = std::sqrt(std::max(v(i), 0.0)) * q;
    return out;
  }
  require(ceps_sqrt_diag != nullptr && ceps_sqrt_diag->size() == basis.r,
          errc::bad_input, "paper mode needs the C_eps^{1/2} diagonal");
  int clamps = 0;
  for (int i = 0; i < basis.r; ++i) {
    double arg = alpha_level / std::max((*ceps_sqrt_diag)(i), 1e-300);
    double clamped = std::clamp(arg, 1e-6, 1.0 - 1e-6);
    if (clamped != arg) ++clamps;
    out(i) = std::sqrt(std::max(v(i), 0.0)) * normal_quantile(clamped);
  }
  if (clamped_nodes) *clamped_nodes = clamps;
  return out;
}

// Integrated violation frequency: mean over days of the node fraction where
// the realized curve dips below the forecast quantile curve.
inline double violation_rate(const std::vector<vec>& forecasts,
                             const std::vector<vec>& realized) {
  require(forecasts.size() == realized.size(), errc::grid_mismatch,
          "forecast/realized day counts differ");
  require(!forecasts.empty(), errc::bad_input, "no forecast days");
  double acc = 0.0;
  for (std::size_t j = 0; j < forecasts.size(); ++j) {
    require_same_grid(forecasts[j], realized[j]);
    double below = 0.0;
    for (int i = 0; i < realized[j].size(); ++i)
      if (realized[j](i) < forecasts[j](i)) below += 1.0;
    acc += below / static_cast<double>(realized[j].size());
  }
  return acc / static_cast<double>(forecasts.size());
}

inline vec average_quantile_curve(const std::vector<vec>& forecasts) {
  require(!forecasts.empty(), errc::bad_input, "no forecast curves");
  vec acc = forecasts[0];
  for (std::size_t j = 1; j < forecasts.size(); ++j) {
    require_same_grid(acc, forecasts[j]);
    acc += forecasts[j];
  }
  return acc / static_cast<double>(forecasts.size());
}

struct backtest_level {
  double alpha = 0.0;
  double vr = 0.0;
  double cv_err = 0.0;
  vec avg_curve;
  double baseline_vr = 0.0;
  vec baseline_avg_curve;
};

struct backtest_report {
  std::vector<backtest_level> levels;
  int n_train = 0;
  int n_test = 0;
  int K = 0;
  double theta = 0.0;
  quantile_mode mode = quantile_mode::gaussian;
};

struct backtest_config {
  int p = 1;
  int K = 0;          // 0 means select by tve
  double tve = 0.9;
  fit_method method = fit_method::tikhonov;
  double theta = 0.0;      // 0 means the scale-free default policy
  double theta_factor = 1e-6;  // default policy: theta_factor * tr(c_d)/pK
  std::vector<double> alpha_levels = {0.05, 0.01};
  double split = 0.8;
  quantile_mode mode = quantile_mode::gaussian;
};

// Expanding-window one-step backtest.  Each test day refits on all prior
// days, forecasts the next curve's quantile at every level, and scores it
// against the realization; the historical baseline answers with the pointwise
// empirical quantile of all past curves.
inline backtest_report backtest(const mat& curves, const eigen_basis& basis,
                                const mat& innovation_kernel,
                                const backtest_config& config) {
  const int n = static_cast<int>(curves.rows());
  require(config.split > 0.0 && config.split < 1.0, errc::bad_input,
          "split outside (0,1)");
  const int split = static_cast<int>(std::floor(config.split * n));
  require(split > config.p + 2 && split < n, errc::bad_input,
          "split leaves no usable train or test segment");
  const int r = static_cast<int>(curves.cols());
  const int K = config.K > 0 ? config.K
                             : select_K_tve(curves.topRows(split), basis, config.tve);

  vec sqrt_diag;
  if (config.mode == quantile_mode::paper)
    sqrt_diag = operator_sqrt(innovation_kernel).diagonal();

  const std::size_t L = config.alpha_levels.size();
  std::vector<std::vector<vec>> model_curves(L), baseline_curves(L);
  std::vector<vec> realized;
  double theta_used = 0.0;

  for (int day = split; day < n; ++day) {
    score_panel panel = compute_scores(curves.topRows(day), basis, K);
    double theta = config.theta;
    yw_matrices yw = build_yw_matrices(panel, config.p, theta > 0 ? theta : 1e-8);
    if (theta <= 0.0) {
      theta = config.theta_factor * yw.c_d.trace() /
              static_cast<double>(config.p * K);
      yw = build_yw_matrices(panel, config.p, theta);
    }
    theta_used = theta;
    fit_result fit;
    switch (config.method) {
      case fit_method::finite: fit = fit_alpha_finite(yw); break;
      case fit_method::tikhonov: fit = fit_alpha_tikhonov(yw, theta, K); break;
      case fit_method::moore_penrose: fit = fit_alpha_mp(yw, config.p * K); break;
    }
    fit_delta(fit, yw, panel);

    mat last_scores(config.p, K);
    for (int i = 0; i < config.p; ++i)
      last_scores.row(i) = panel.scores.row(day - 1 - i);
    sigma_forecast sf = forecast_sigma(fit, last_scores);

    realized.push_back(curves.row(day).transpose());
    for (std::size_t a = 0; a < L; ++a) {
      model_curves[a].push_back(quantile_curve(
          sf, basis, config.alpha_levels[a], config.mode,
          config.mode == quantile_mode::paper ? &sqrt_diag : nullptr));
      vec base(r);
      for (int i = 0; i < r; ++i) {
        std::vector<double> past(curves.col(i).head(day).data(),
                                 curves.col(i).head(day).data() + day);
        base(i) = empirical_quantile(std::move(past), config.alpha_levels[a]);
      }
      baseline_curves[a].push_back(std::move(base));
    }
  }

  backtest_report report;
  report.n_train = split;
  report.n_test = n - split;
  report.K = K;
  report.theta = theta_used;
  report.mode = config.mode;
  for (std::size_t a = 0; a < L; ++a) {
    backtest_level level;
    level.alpha = config.alpha_levels[a];
    level.vr = violation_rate(model_curves[a], realized);
    level.avg_curve = average_quantile_curve(model_curves[a]);
    level.baseline_vr = violation_rate(baseline_curves[a], realized);
    level.baseline_avg_curve = average_quantile_curve(baseline_curves[a]);
    double loss = 0.0;
    for (std::size_t j = 0; j < realized.size(); ++j) {
      double day_loss = 0.0;
      for (int i = 0; i < r; ++i)
        day_loss += check_loss(model_curves[a][j](i) - realized[j](i),
                               config.alpha_levels[a]);
      loss += day_loss / static_cast<double>(r);
    }
    level.cv_err = loss / static_cast<double>(realized.size());
    report.levels.push_back(std::move(level));
  }
  return report;
}

}  // namespace oparch
