#pragma once

#include "oparch/estimate.hpp"
#include "oparch/io.hpp"
#include "oparch/simulate.hpp"

namespace oparch {

struct mc_row {
  int N = 0;
  int reps = 0;
  int failed = 0;
  double e_alpha_mean = 0.0;
  double e_alpha_median = 0.0;
  double e_delta_mean = 0.0;
  double e_delta_median = 0.0;
};

struct mc_config {
  fit_method method = fit_method::finite;
  double theta = 0.0;          // 0: scale-free default policy per replicate
  double theta_factor = 1e-6;  // default policy: factor * tr(c_d)/pK
  bool theta_min_diag = false; // override: theta = min diag(c_d)
  int K_fit = 0;               // 0: TVE-selected per replicate
  double tve = 0.9;
  int k_proj = 0;              // 0: K for tikhonov, pK for mp
  int burn_in = 100;
  std::uint64_t seed = 1;
};

struct mc_replicate {
  double e_alpha = 0.0;
  double e_delta = 0.0;
  bool ok = false;
};

// One simulate -> fit -> error cycle.  Failures (degenerate draws, singular
// moments, rank deficiency) are recorded, not fatal.
inline mc_replicate mc_one(const ccc_params& truth, int n, const mc_config& config,
                           std::uint64_t replicate_seed) {
  mc_replicate out;
  try {
    simulated_sample sample =
        simulate_spectral(truth, n, config.burn_in, replicate_seed);
    const int K = config.K_fit > 0
                      ? config.K_fit
                      : select_K_tve(sample.curves, truth.basis, config.tve);
    score_panel panel = compute_scores(sample.curves, truth.basis, K);
    yw_matrices yw = build_yw_matrices(panel, truth.p, 1e-8);
    double theta = config.theta;
    if (theta <= 0.0)
      theta = config.theta_min_diag
                  ? yw.c_d.diagonal().minCoeff()
                  : config.theta_factor * yw.c_d.trace() /
                        static_cast<double>(truth.p * K);
    yw = build_yw_matrices(panel, truth.p, theta);
    fit_result fit;
    switch (config.method) {
      case fit_method::finite:
        fit = fit_alpha_finite(yw);
        break;
      case fit_method::tikhonov:
        fit = fit_alpha_tikhonov(yw, theta, config.k_proj > 0 ? config.k_proj : K);
        break;
      case fit_method::moore_penrose:
        fit = fit_alpha_mp(yw, config.k_proj > 0 ? config.k_proj : truth.p * K);
        break;
    }
    fit_delta(fit, yw, panel);
    out.e_alpha = relative_error_alpha(truth, fit);
    out.e_delta = relative_error_delta(truth, fit);
    out.ok = std::isfinite(out.e_alpha) && std::isfinite(out.e_delta);
  } catch (const domain_error&) {
    out.ok = false;
  }
  return out;
}

// Estimator-consistency experiment: for each N, reps independent
// simulate -> fit cycles aggregated into relative-error rows.  Work items are
// seeded by (seed, N index, replicate), so results are schedule-independent.
inline std::vector<mc_row> mc_consistency(const ccc_params& truth,
                                          const std::vector<int>& n_list,
                                          int reps, const mc_config& config) {
  require(reps >= 2, errc::bad_input, "need reps >= 2");
  require(!n_list.empty(), errc::bad_input, "empty N list");
  validate_or_throw(truth);

  const std::int64_t total = static_cast<std::int64_t>(n_list.size()) * reps;
  std::vector<mc_replicate> cells(total);
  parallel_for(total, [&](std::int64_t item) {
    const int ni = static_cast<int>(item / reps);
    const int rep = static_cast<int>(item % reps);
    std::uint64_t rep_seed =
        splitmix_combine(config.seed, static_cast<std::uint64_t>(ni),
                         static_cast<std::uint64_t>(rep));
    cells[item] = mc_one(truth, n_list[ni], config, rep_seed);
  });

  std::vector<mc_row> rows;
  for (std::size_t ni = 0; ni < n_list.size(); ++ni) {
    std::vector<double> ea, ed;
    int failed = 0;
    for (int rep = 0; rep < reps; ++rep) {
      const auto& cell = cells[ni * reps + rep];
      if (cell.ok) {
        ea.push_back(cell.e_alpha);
        ed.push_back(cell.e_delta);
      } else {
        ++failed;
      }
    }
    require(!ea.empty(), errc::degenerate_sample,
            "every replicate failed at N = " + std::to_string(n_list[ni]));
    mc_row row;
    row.N = n_list[ni];
    row.reps = reps;
    row.failed = failed;
    row.e_alpha_mean = mean(ea);
    row.e_alpha_median = median(ea);
    row.e_delta_mean = mean(ed);
    row.e_delta_median = median(ed);
    rows.push_back(row);
  }
  return rows;
}

inline void write_mc_csv(const std::string& path, const std::vector<mc_row>& rows) {
  auto out = detail::open_out(path);
  out << "N,reps,failed,e_alpha_mean,e_alpha_median,e_delta_mean,e_delta_median\n";
  for (const auto& row : rows)
    out << row.N << ',' << row.reps << ',' << row.failed << ','
        << format_real(row.e_alpha_mean) << ',' << format_real(row.e_alpha_median)
        << ',' << format_real(row.e_delta_mean) << ','
        << format_real(row.e_delta_median) << '\n';
}

}  // namespace oparch
