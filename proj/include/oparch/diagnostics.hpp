#pragma once

#include "oparch/forecast.hpp"

namespace oparch {

enum class residual_mode { paper, half };

inline const char* residual_mode_name(residual_mode m) {
  return m == residual_mode::paper ? "paper" : "half";
}

inline residual_mode residual_mode_from_name(const std::string& name) {
  if (name == "paper") return residual_mode::paper;
  if (name == "half") return residual_mode::half;
  fail(errc::bad_input, "unknown residual mode '" + name + "'");
}

// Model residual curves for observations p+1..N.  half mode inverts the
// volatility square root per frequency (x / sqrt(Z)), which is what recovers
// the innovation scores exactly under true parameters; paper mode divides by
// Z itself (the verbatim pseudoinverse of Sigma).
struct residual_set {
  std::vector<vec> curves;  // N - p residual curves
  mat scores;               // (N-p) x K residual scores
  mat sigma_path;           // (N-p) x K volatility coefficients used
  residual_mode mode = residual_mode::paper;
};

inline residual_set residuals(const fit_result& fit, const score_panel& panel,
                              residual_mode mode) {
  const int N = panel.N();
  const int K = fit.K;
  require(K == panel.K, errc::bad_input, "fit and panel disagree on K");
  require(N > fit.p, errc::bad_input, "need N > p");
  const vec delta = fit.delta_fc();
  const mat alpha = fit.alpha_fc();

  residual_set out;
  out.mode = mode;
  out.scores.resize(N - fit.p, K);
  out.sigma_path.resize(N - fit.p, K);
  for (int k = fit.p; k < N; ++k) {
    vec z = delta;
    for (int i = 0; i < fit.p; ++i)
      z += alpha.row(i).transpose().cwiseProduct(
          panel.squared.row(k - 1 - i).transpose());
    require(z.minCoeff() > 0.0, errc::non_positive_sigma,
            "nonpositive volatility at step " + std::to_string(k + 1));
    vec denom = mode == residual_mode::half ? z.cwiseSqrt() : z;
    out.scores.row(k - fit.p) =
        panel.scores.row(k).cwiseQuotient(denom.transpose());
    out.sigma_path.row(k - fit.p) = z.transpose();
  }
  out.curves.reserve(N - fit.p);
  for (int k = 0; k < N - fit.p; ++k)
    out.curves.push_back(panel.basis.functions.leftCols(K) *
                         out.scores.row(k).transpose());
  return out;
}

// Spherical autocorrelation: rho_h = (1/M) sum_{i=1..M-h} <u_i, u_{i+h}> with
// u the centered curves normalized to unit L2 length.  Curves closer than
// 1e-12 to the mean are skipped (counted in skipped when given).
inline std::vector<double> sacf(const std::vector<vec>& curves, int max_lag,
                                int* skipped = nullptr) {
  const int n = static_cast<int>(curves.size());
  require(max_lag >= 1, errc::bad_input, "max_lag must be >= 1");
  require(n > max_lag, errc::bad_input, "need more curves than max_lag");
  vec mu = vec::Zero(curves[0].size());
  for (const auto& c : curves) {
    require_same_grid(c, mu);
    mu += c;
  }
  mu /= static_cast<double>(n);

  std::vector<vec> unit(n);
  std::vector<bool> ok(n);
  int skip_count = 0;
  for (int i = 0; i < n; ++i) {
    vec d = curves[i] - mu;
    double len = norm(d);
    ok[i] = len >= 1e-12;
    if (ok[i])
      unit[i] = d / len;
    else
      ++skip_count;
  }
  if (skipped) *skipped = skip_count;

  std::vector<double> rho(max_lag, 0.0);
  for (int h = 1; h <= max_lag; ++h) {
    double acc = 0.0;
    for (int i = 0; i + h < n; ++i)
      if (ok[i] && ok[i + h]) acc += inner_product(unit[i], unit[i + h]);
    rho[h - 1] = acc / static_cast<double>(n);
  }
  return rho;
}

struct whiteness_result {
  double stat = 0.0;
  double p_value = 1.0;
  int max_lag = 0;
  int n_perm = 0;
};

namespace detail {

// T = n sum_{h<=L} ||gamma_h||_HS^2 evaluated through the Gram matrix of the
// centered curves: ||gamma_h||^2 = (1/n^2) sum_{i,j<=n-h} G_ij G_{i+h,j+h},
// so a permutation of time indices is a symmetric reindexing of G.
inline double portmanteau_from_gram(const mat& gram, int max_lag,
                                    const std::vector<int>& order) {
  const int n = static_cast<int>(gram.rows());
  double total = 0.0;
  for (int h = 1; h <= max_lag; ++h) {
    double acc = 0.0;
    for (int i = 0; i + h < n; ++i) {
      const int oi = order[i], oih = order[i + h];
      for (int j = 0; j + h < n; ++j)
        acc += gram(oi, order[j]) * gram(oih, order[j + h]);
    }
    total += acc / (static_cast<double>(n) * static_cast<double>(n));
  }
  return total * static_cast<double>(n);
}

}  // namespace detail

// Permutation portmanteau test against serial dependence: the statistic sums
// squared Hilbert-Schmidt norms of lag-h autocovariance kernels, and the
// p-value is its tail rank under random reshuffling of time order,
// (1 + #{T_perm >= T}) / (n_perm + 1).
inline whiteness_result whiteness_test(const std::vector<vec>& curves,
                                       int max_lag, int n_perm = 999,
                                       std::uint64_t seed = 1) {
  const int n = static_cast<int>(curves.size());
  require(max_lag >= 1, errc::bad_input, "max_lag must be >= 1");
  require(n > 4 * max_lag, errc::bad_input, "need more than 4*max_lag curves");
  require(n_perm >= 1, errc::bad_input, "n_perm must be >= 1");
  const int r = static_cast<int>(curves[0].size());

  mat centered(n, r);
  vec mu = vec::Zero(r);
  for (const auto& c : curves) {
    require_same_grid(c, mu);
    mu += c;
  }
  mu /= static_cast<double>(n);
  for (int i = 0; i < n; ++i) centered.row(i) = (curves[i] - mu).transpose();
  mat gram = centered * centered.transpose() / static_cast<double>(r);

  std::vector<int> identity(n);
  for (int i = 0; i < n; ++i) identity[i] = i;
  const double observed = detail::portmanteau_from_gram(gram, max_lag, identity);

  std::vector<int> exceed(n_perm, 0);
  parallel_for(n_perm, [&](std::int64_t perm) {
    auto rng = make_rng(seed, 0x9e37, static_cast<std::uint64_t>(perm));
    std::vector<int> order(identity);
    for (int i = n - 1; i > 0; --i) {
      std::uniform_int_distribution<int> pick(0, i);
      std::swap(order[i], order[pick(rng)]);
    }
    double t = detail::portmanteau_from_gram(gram, max_lag, order);
    exceed[perm] = t >= observed ? 1 : 0;
  });
  int count = 0;
  for (int e : exceed) count += e;

  whiteness_result result;
  result.stat = observed;
  result.p_value = (1.0 + count) / (static_cast<double>(n_perm) + 1.0);
  result.max_lag = max_lag;
  result.n_perm = n_perm;
  return result;
}

}  // namespace oparch
