#pragma once

#include "oparch/model.hpp"

namespace oparch {

enum class innovation_mode { truncated_kl, full_cholesky };

inline const char* innovation_mode_name(innovation_mode m) {
  return m == innovation_mode::truncated_kl ? "truncated_kl" : "full_cholesky";
}

// A simulated path plus the bookkeeping oracle tests need: the true
// volatility coefficients Z_{k,l} and the innovation scores <eps_k, e_l>.
struct simulated_sample {
  mat curves;      // n x r node values of X_1..X_n
  mat z_path;      // n x K true Z_{k,l}
  mat eps_scores;  // n x K true <eps_k, e_l>
  std::uint64_t seed = 0;
  int burn_in = 0;
};

namespace detail {

struct recursion_state {
  std::vector<vec> z_hist;  // last p volatility coefficient vectors
  std::vector<vec> s_hist;  // last p realized Z * score^2 products
};

inline recursion_state init_recursion(const ccc_params& params) {
  vec z0;
  try {
    z0 = mean_sigma(params);
  } catch (const domain_error&) {
    z0 = params.delta;  // mean undefined for this configuration; start at d
  }
  recursion_state state;
  vec s0 = z0.cwiseProduct(params.basis.lambda);  // E[Z xi^2] = Z lambda
  state.z_hist.assign(params.p, z0);
  state.s_hist.assign(params.p, s0);
  return state;
}

inline vec next_z(const ccc_params& params, const recursion_state& state) {
  vec z = params.delta;
  for (int i = 0; i < params.p; ++i)
    z += params.alpha.row(i).transpose().cwiseProduct(state.s_hist[i]);
  return z;
}

inline void push_history(recursion_state& state, vec z, vec s) {
  for (int i = static_cast<int>(state.z_hist.size()) - 1; i > 0; --i) {
    state.z_hist[i] = state.z_hist[i - 1];
    state.s_hist[i] = state.s_hist[i - 1];
  }
  state.z_hist[0] = std::move(z);
  state.s_hist[0] = std::move(s);
}

inline void check_blowup(const vec& z, int step) {
  if (z.maxCoeff() > 1e300 || !z.allFinite())
    fail(errc::numerical_blowup,
         "volatility recursion exceeded 1e300 at step " + std::to_string(step) +
             " (parameters likely non-stationary)");
}

}  // namespace detail

// Per-frequency engine: iid Gaussian scores with variances lambda_l drive the
// scalar recursions; curves are assembled from the K_model basis terms.
// Innovation scores are drawn per frequency (truncated KL) by default; in
// full_cholesky mode a full grid curve is drawn and projected, so the score
// stream matches the grid engine's.
inline simulated_sample simulate_spectral(
    const ccc_params& params, int n, int burn_in = 100, std::uint64_t seed = 1,
    innovation_mode mode = innovation_mode::truncated_kl) {
  validate_or_throw(params, /*structural=*/false);
  require(n >= params.p, errc::bad_input, "need n >= p");
  require(burn_in >= 0, errc::bad_input, "burn_in must be nonnegative");
  const int K = params.K();
  const int r = params.basis.r;

  auto rng = make_rng(seed, 0x51e0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  mat innovation_factor;  // only for full_cholesky draws
  if (mode == innovation_mode::full_cholesky)
    innovation_factor = cholesky_factor(kernel_by_name(params.kernel, r));

  simulated_sample sample;
  sample.curves.resize(n, r);
  sample.z_path.resize(n, K);
  sample.eps_scores.resize(n, K);
  sample.seed = seed;
  sample.burn_in = burn_in;

  auto state = detail::init_recursion(params);
  for (int k = 0; k < burn_in + n; ++k) {
    vec z = detail::next_z(params, state);
    detail::check_blowup(z, k - burn_in);
    vec eps(K);
    if (mode == innovation_mode::truncated_kl) {
      for (int l = 0; l < K; ++l)
        eps(l) = std::sqrt(params.basis.lambda(l)) * gauss(rng);
    } else {
      vec curve = gaussian_from_factor(innovation_factor, rng);
      eps = params.basis.functions.transpose() * curve / static_cast<double>(r);
    }
    vec s = z.cwiseProduct(eps.cwiseAbs2());
    if (k >= burn_in) {
      const int idx = k - burn_in;
      vec x_scores = z.cwiseSqrt().cwiseProduct(eps);
      sample.curves.row(idx) = (params.basis.functions * x_scores).transpose();
      sample.z_path.row(idx) = z.transpose();
      sample.eps_scores.row(idx) = eps.transpose();
    }
    detail::push_history(state, std::move(z), std::move(s));
  }
  return sample;
}

// Grid engine: materializes the volatility kernel each step, takes its
// operator square root, and pushes a Gaussian innovation curve through it.
// truncated_kl keeps both the innovation and the intercept kernel inside the
// K_model span (algebraically the spectral recursion); full_cholesky draws on
// the whole grid and carries the innovation covariance tail inside the
// intercept, which is where the two engines genuinely differ.
inline simulated_sample simulate_grid(
    const ccc_params& params, int n, int burn_in = 100, std::uint64_t seed = 1,
    innovation_mode mode = innovation_mode::full_cholesky) {
  validate_or_throw(params, /*structural=*/false);
  require(n >= params.p, errc::bad_input, "need n >= p");
  require(burn_in >= 0, errc::bad_input, "burn_in must be nonnegative");
  const int K = params.K();
  const int r = params.basis.r;
  const mat innovation = kernel_by_name(params.kernel, r);
  mat innovation_factor;
  if (mode == innovation_mode::full_cholesky)
    innovation_factor = cholesky_factor(innovation);

  mat delta_kernel = diagonal_kernel(params.basis, params.delta);
  if (mode == innovation_mode::full_cholesky) {
    mat truncated = diagonal_kernel(params.basis, params.basis.lambda);
    delta_kernel += innovation - truncated;  // spectrum tail rides along
  }

  auto rng = make_rng(seed, 0x51e0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  simulated_sample sample;
  sample.curves.resize(n, r);
  sample.z_path.resize(n, K);
  sample.eps_scores.resize(n, K);
  sample.seed = seed;
  sample.burn_in = burn_in;

  // History of realized score squares <X_{k-i}, e_l>^2 seeds the kernel
  // update; warm start at the stationary mean when it exists.
  auto state = detail::init_recursion(params);
  std::vector<vec> x2_hist(params.p);
  for (int i = 0; i < params.p; ++i) x2_hist[i] = state.s_hist[i];

  for (int k = 0; k < burn_in + n; ++k) {
    vec z_coeff = params.delta;
    for (int i = 0; i < params.p; ++i)
      z_coeff += params.alpha.row(i).transpose().cwiseProduct(x2_hist[i]);
    detail::check_blowup(z_coeff, k - burn_in);

    mat sigma = delta_kernel + diagonal_kernel(params.basis, z_coeff - params.delta);
    mat root = operator_sqrt(sigma);

    vec eps_curve;
    if (mode == innovation_mode::truncated_kl) {
      vec eps_scores(K);
      for (int l = 0; l < K; ++l)
        eps_scores(l) = std::sqrt(params.basis.lambda(l)) * gauss(rng);
      eps_curve = params.basis.functions * eps_scores;
    } else {
      eps_curve = gaussian_from_factor(innovation_factor, rng);
    }
    vec x = apply_operator(root, eps_curve);
    vec x_scores = params.basis.functions.transpose() * x / static_cast<double>(r);

    if (k >= burn_in) {
      const int idx = k - burn_in;
      sample.curves.row(idx) = x.transpose();
      sample.z_path.row(idx) = z_coeff.transpose();
      sample.eps_scores.row(idx) =
          (params.basis.functions.transpose() * eps_curve / static_cast<double>(r))
              .transpose();
    }
    for (int i = params.p - 1; i > 0; --i) x2_hist[i] = x2_hist[i - 1];
    x2_hist[0] = x_scores.cwiseAbs2();
  }
  return sample;
}

}  // namespace oparch
