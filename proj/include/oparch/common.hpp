#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <mutex>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

namespace oparch {

using vec = Eigen::VectorXd;
using mat = Eigen::MatrixXd;

// Failure taxonomy shared by every layer.  Each error renders as a single
// machine-parsable line: "error: <code>: <detail>".
enum class errc {
  grid_mismatch,
  non_convergence,
  degenerate_kernel,
  cholesky_failure,
  numerical_blowup,
  non_stationary_mean,
  fourth_moment_diverges,
  degenerate_sample,
  singular_cd,
  rank_deficient,
  insufficient_basis,
  zero_norm,
  non_positive_sigma,
  non_positive_price,
  bad_input,
};

inline const char* errc_name(errc c) {
  switch (c) {
    case errc::grid_mismatch: return "GridMismatch";
    case errc::non_convergence: return "NonConvergence";
    case errc::degenerate_kernel: return "DegenerateKernel";
    case errc::cholesky_failure: return "CholeskyFailure";
    case errc::numerical_blowup: return "NumericalBlowup";
    case errc::non_stationary_mean: return "NonStationaryMean";
    case errc::fourth_moment_diverges: return "FourthMomentDiverges";
    case errc::degenerate_sample: return "DegenerateSample";
    case errc::singular_cd: return "SingularCd";
    case errc::rank_deficient: return "RankDeficient";
    case errc::insufficient_basis: return "InsufficientBasis";
    case errc::zero_norm: return "ZeroNorm";
    case errc::non_positive_sigma: return "NonPositiveSigma";
    case errc::non_positive_price: return "NonPositivePrice";
    case errc::bad_input: return "BadInput";
  }
  return "Unknown";
}

class domain_error : public std::runtime_error {
 public:
  domain_error(errc code, const std::string& detail)
      : std::runtime_error(std::string(errc_name(code)) + ": " + detail),
        code_(code) {}
  errc code() const { return code_; }

 private:
  errc code_;
};

[[noreturn]] inline void fail(errc code, const std::string& detail) {
  throw domain_error(code, detail);
}

inline void require(bool ok, errc code, const std::string& detail) {
  if (!ok) fail(code, detail);
}

// SplitMix64; used only to turn (seed, stream...) tuples into well-spread
// engine seeds so parallel work items get decorrelated deterministic streams.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline std::uint64_t splitmix_combine(std::uint64_t seed, std::uint64_t stream_a = 0,
                                      std::uint64_t stream_b = 0) {
  std::uint64_t s = seed;
  std::uint64_t mixed = splitmix64(s);
  s ^= 0x5851f42d4c957f2dull * (stream_a + 1);
  mixed ^= splitmix64(s);
  s ^= 0x14057b7ef767814full * (stream_b + 1);
  mixed ^= splitmix64(s);
  return mixed;
}

inline std::mt19937_64 make_rng(std::uint64_t seed,
                                std::uint64_t stream_a = 0,
                                std::uint64_t stream_b = 0) {
  return std::mt19937_64(splitmix_combine(seed, stream_a, stream_b));
}

inline int thread_budget() {
  if (const char* env = std::getenv("OPARCH_THREADS")) {
    int n = std::atoi(env);
    if (n > 0) return n;
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw ? static_cast<int>(hw) : 1;
}

// Index-sharded parallel loop.  Work items must be independent; results keyed
// by index so the schedule never affects output.
template <class Fn>
void parallel_for(std::int64_t n, Fn&& fn, int threads = -1) {
  if (threads <= 0) threads = thread_budget();
  threads = static_cast<int>(std::min<std::int64_t>(threads, n));
  if (threads <= 1) {
    for (std::int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::int64_t> next(0);
  std::vector<std::thread> pool;
  std::exception_ptr first_error;
  std::mutex err_mu;
  pool.reserve(threads);
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (;;) {
        std::int64_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(err_mu);
          if (!first_error) first_error = std::current_exception();
          next.store(n);
          return;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Inverse standard normal CDF (Acklam's rational approximation polished by one
// Halley step); absolute error below 1e-15 across (0,1).
inline double normal_quantile(double p) {
  require(p > 0.0 && p < 1.0, errc::bad_input, "quantile level outside (0,1)");
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425, phigh = 1 - plow;
  double x;
  if (p < plow) {
    double q = std::sqrt(-2 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  } else if (p <= phigh) {
    double q = p - 0.5, r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
  } else {
    double q = std::sqrt(-2 * std::log(1 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  }
  double e = normal_cdf(x) - p;
  double u = e * std::sqrt(2 * M_PI) * std::exp(x * x / 2);
  return x - u / (1 + x * u / 2);
}

inline double median(std::vector<double> v) {
  require(!v.empty(), errc::bad_input, "median of empty set");
  std::sort(v.begin(), v.end());
  std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline double mean(const std::vector<double>& v) {
  require(!v.empty(), errc::bad_input, "mean of empty set");
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// Empirical quantile with linear interpolation between order statistics
// (the common h = (n-1)p rule).
inline double empirical_quantile(std::vector<double> v, double p) {
  require(!v.empty(), errc::bad_input, "quantile of empty set");
  require(p >= 0.0 && p <= 1.0, errc::bad_input, "quantile level outside [0,1]");
  std::sort(v.begin(), v.end());
  double h = (static_cast<double>(v.size()) - 1.0) * p;
  std::size_t lo = static_cast<std::size_t>(h);
  if (lo + 1 >= v.size()) return v.back();
  double frac = h - static_cast<double>(lo);
  return v[lo] + frac * (v[lo + 1] - v[lo]);
}

}  // namespace oparch
