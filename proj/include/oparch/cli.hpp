#pragma once

#include <iostream>

#include <CLI11.hpp>

#include "oparch/mc.hpp"

namespace oparch {

namespace detail {

inline double resolve_theta(const std::string& policy, const yw_matrices& yw) {
  if (policy == "auto")
    return 1e-3 * yw.c_d.trace() / static_cast<double>(yw.p * yw.K);
  double theta = parse_real(policy);
  require(theta > 0.0, errc::bad_input, "theta must be positive or 'auto'");
  return theta;
}

inline std::vector<double> parse_level_list(const std::string& text) {
  std::vector<double> levels;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) levels.push_back(parse_real(item));
  require(!levels.empty(), errc::bad_input, "empty level list");
  return levels;
}

inline std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> values;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) values.push_back(std::stoi(item));
  require(!values.empty(), errc::bad_input, "empty integer list");
  return values;
}

}  // namespace detail

// Subcommand surface; returns 0 on success, 1 on domain errors (single-line
// machine-parsable message on stderr), 2 on usage errors.
inline int cli_main(int argc, const char* const* argv) {
  CLI::App app{"CCC operator-level ARCH toolkit: simulate, estimate, forecast, "
               "and diagnose function-valued volatility models"};
  app.require_subcommand(1);

  std::string config_path;
  app.add_option("--config", config_path, "RunConfig JSON with shared defaults");

  // simulate
  auto* sim = app.add_subcommand("simulate", "Generate a sample path");
  std::string sim_params, sim_out, sim_engine = "spectral", sim_zpath;
  int sim_n = 500, sim_burn = 100, sim_r = 50;
  std::uint64_t sim_seed = 7;
  sim->add_option("--params", sim_params, "model JSON")->required();
  sim->add_option("--n", sim_n, "sample size");
  sim->add_option("--burn-in", sim_burn, "burn-in steps");
  sim->add_option("--seed", sim_seed, "RNG seed");
  sim->add_option("--engine", sim_engine, "spectral|grid");
  sim->add_option("--r", sim_r, "grid resolution");
  sim->add_option("--out", sim_out, "sample CSV")->required();
  sim->add_option("--z-path", sim_zpath, "optional Z-path CSV");

  // fit
  auto* fit_cmd = app.add_subcommand("fit", "Estimate coefficients from a sample");
  std::string fit_in, fit_out, fit_kernel = "bm", fit_method_name_ = "tikhonov";
  std::string fit_theta = "auto";
  int fit_p = 1, fit_K = 0;
  double fit_tve = 0.9;
  fit_cmd->add_option("--in", fit_in, "sample CSV")->required();
  fit_cmd->add_option("--kernel", fit_kernel, "bm|ou");
  fit_cmd->add_option("--p", fit_p, "model order");
  fit_cmd->add_option("--tve", fit_tve, "TVE threshold for K selection");
  fit_cmd->add_option("--K", fit_K, "fix K instead of TVE selection");
  fit_cmd->add_option("--method", fit_method_name_, "finite|tikhonov|mp");
  fit_cmd->add_option("--theta", fit_theta, "auto|<positive real>");
  fit_cmd->add_option("--out", fit_out, "fit JSON")->required();

  // forecast
  auto* fc = app.add_subcommand("forecast", "One-step quantile forecast");
  std::string fc_fit, fc_in, fc_out, fc_kernel = "bm", fc_mode = "gaussian";
  double fc_alpha = 0.05;
  fc->add_option("--fit", fc_fit, "fit JSON")->required();
  fc->add_option("--in", fc_in, "sample CSV")->required();
  fc->add_option("--kernel", fc_kernel, "bm|ou");
  fc->add_option("--alpha", fc_alpha, "quantile level");
  fc->add_option("--mode", fc_mode, "gaussian|paper");
  fc->add_option("--out", fc_out, "quantile curve CSV")->required();

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Expanding-window VaR backtest");
  std::string ev_in, ev_out, ev_kernel = "bm", ev_mode = "gaussian";
  std::string ev_levels = "0.05,0.01", ev_method = "tikhonov", ev_theta = "auto";
  std::string ev_curves_out;
  int ev_p = 1, ev_K = 0;
  double ev_split = 0.8, ev_tve = 0.9;
  ev->add_option("--in", ev_in, "sample CSV")->required();
  ev->add_option("--kernel", ev_kernel, "bm|ou");
  ev->add_option("--p", ev_p, "model order");
  ev->add_option("--K", ev_K, "fix K instead of TVE selection");
  ev->add_option("--tve", ev_tve, "TVE threshold");
  ev->add_option("--alpha", ev_levels, "comma-separated levels");
  ev->add_option("--mode", ev_mode, "gaussian|paper");
  ev->add_option("--split", ev_split, "train fraction");
  ev->add_option("--method", ev_method, "finite|tikhonov|mp");
  ev->add_option("--theta", ev_theta, "auto|<positive real>");
  ev->add_option("--out", ev_out, "report JSON")->required();
  ev->add_option("--curves-out", ev_curves_out, "average-curve CSV sidecar");

  // diagnose
  auto* dg = app.add_subcommand("diagnose", "Residual and whiteness diagnostics");
  std::string dg_fit, dg_in, dg_out, dg_kernel = "bm", dg_lags = "3,10";
  std::string dg_mode = "paper";
  int dg_nperm = 999;
  std::uint64_t dg_seed = 1;
  dg->add_option("--fit", dg_fit, "fit JSON")->required();
  dg->add_option("--in", dg_in, "sample CSV")->required();
  dg->add_option("--kernel", dg_kernel, "bm|ou");
  dg->add_option("--max-lags", dg_lags, "comma-separated lags");
  dg->add_option("--mode", dg_mode, "paper|half");
  dg->add_option("--n-perm", dg_nperm, "permutations");
  dg->add_option("--seed", dg_seed, "permutation seed");
  dg->add_option("--out", dg_out, "diagnostics JSON")->required();

  // mc-consistency
  auto* mc = app.add_subcommand("mc-consistency", "Estimator-consistency table");
  std::string mc_params, mc_out, mc_method = "finite", mc_nlist = "50,100,250,500";
  int mc_reps = 100, mc_r = 50, mc_K = 0;
  std::uint64_t mc_seed = 1;
  mc->add_option("--params", mc_params, "model JSON")->required();
  mc->add_option("--n-list", mc_nlist, "comma-separated sample sizes");
  mc->add_option("--reps", mc_reps, "replicates per N");
  mc->add_option("--method", mc_method, "finite|tikhonov|mp");
  mc->add_option("--K", mc_K, "fix K instead of TVE selection");
  mc->add_option("--r", mc_r, "grid resolution");
  mc->add_option("--seed", mc_seed, "master seed");
  mc->add_option("--out", mc_out, "results CSV")->required();

  // ingest
  auto* ing = app.add_subcommand("ingest", "Prices to OCIDR curves");
  std::string ing_prices, ing_out;
  ing->add_option("--prices", ing_prices, "price CSV")->required();
  ing->add_option("--out", ing_out, "OCIDR sample CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);  // prints message and usage
    return code == 0 ? 0 : 2;
  }

  try {
    // A config file supplies defaults; explicit flags win.
    if (!config_path.empty()) {
      run_config rc;
      try {
        auto in = detail::open_in(config_path);
        rc = run_config_from_json(json::parse(in));
      } catch (const domain_error&) {
        throw;
      } catch (const std::exception& e) {
        fail(errc::bad_input, std::string("config: ") + e.what());
      }
      auto unset = [](const CLI::App* cmd, const char* name) {
        return cmd->count(name) == 0;
      };
      if (unset(fit_cmd, "--kernel")) fit_kernel = rc.kernel;
      if (unset(fc, "--kernel")) fc_kernel = rc.kernel;
      if (unset(ev, "--kernel")) ev_kernel = rc.kernel;
      if (unset(dg, "--kernel")) dg_kernel = rc.kernel;
      if (unset(fit_cmd, "--p")) fit_p = rc.p;
      if (unset(ev, "--p")) ev_p = rc.p;
      if (unset(fit_cmd, "--tve")) fit_tve = rc.tve;
      if (unset(ev, "--tve")) ev_tve = rc.tve;
      if (unset(fit_cmd, "--theta")) fit_theta = rc.theta;
      if (unset(ev, "--theta")) ev_theta = rc.theta;
      if (unset(fit_cmd, "--method")) fit_method_name_ = rc.method;
      if (unset(ev, "--method")) ev_method = rc.method;
      if (unset(mc, "--method")) mc_method = rc.method;
      if (!rc.alpha_levels.empty()) {
        if (unset(fc, "--alpha")) fc_alpha = rc.alpha_levels.front();
        if (unset(ev, "--alpha")) {
          std::string joined;
          for (double a : rc.alpha_levels)
            joined += (joined.empty() ? "" : ",") + format_real(a);
          ev_levels = joined;
        }
      }
      if (unset(ev, "--split")) ev_split = rc.split;
      if (unset(sim, "--seed")) sim_seed = rc.seed;
      if (unset(dg, "--seed")) dg_seed = rc.seed;
      if (unset(mc, "--seed")) mc_seed = rc.seed;
      if (unset(sim, "--engine")) sim_engine = rc.engine;
      if (unset(sim, "--r")) sim_r = rc.r;
      if (unset(mc, "--r")) mc_r = rc.r;
    }

    if (*sim) {
      ccc_params params = read_params_json(sim_params, sim_r);
      simulated_sample sample;
      if (sim_engine == "spectral")
        sample = simulate_spectral(params, sim_n, sim_burn, sim_seed);
      else if (sim_engine == "grid")
        sample = simulate_grid(params, sim_n, sim_burn, sim_seed);
      else
        fail(errc::bad_input, "engine must be spectral or grid");
      write_sample_csv(sim_out, sample.curves);
      if (!sim_zpath.empty()) write_z_path_csv(sim_zpath, sample.z_path);
    } else if (*fit_cmd) {
      mat curves = read_sample_csv(fit_in);
      const int r = static_cast<int>(curves.cols());
      eigen_basis basis =
          eigendecompose(kernel_by_name(fit_kernel, r), std::min(r, 25));
      int K = fit_K > 0 ? fit_K : select_K_tve(curves, basis, fit_tve);
      score_panel panel = compute_scores(curves, basis, K);
      yw_matrices yw = build_yw_matrices(panel, fit_p, 1e-8);
      double theta = detail::resolve_theta(fit_theta, yw);
      fit_result fit = fit_ccc(curves, basis, fit_p, K,
                               fit_method_from_name(fit_method_name_), theta);
      fit.tve = fit_K > 0 ? 0.0 : fit_tve;
      write_fit_json(fit_out, fit);
    } else if (*fc) {
      mat curves = read_sample_csv(fc_in);
      const int r = static_cast<int>(curves.cols());
      fit_result fit = read_fit_json(fc_fit);
      eigen_basis basis =
          eigendecompose(kernel_by_name(fc_kernel, r), std::min(r, 25));
      score_panel panel = compute_scores(curves, basis, fit.K);
      const int n = panel.N();
      require(n >= fit.p, errc::bad_input, "sample shorter than model order");
      mat last_scores(fit.p, fit.K);
      for (int i = 0; i < fit.p; ++i)
        last_scores.row(i) = panel.scores.row(n - 1 - i);
      sigma_forecast sf = forecast_sigma(fit, last_scores);
      quantile_mode mode = quantile_mode_from_name(fc_mode);
      vec sqrt_diag;
      const vec* diag_ptr = nullptr;
      if (mode == quantile_mode::paper) {
        sqrt_diag = operator_sqrt(kernel_by_name(fc_kernel, r)).diagonal();
        diag_ptr = &sqrt_diag;
      }
      write_grid_function_csv(fc_out,
                              quantile_curve(sf, basis, fc_alpha, mode, diag_ptr));
    } else if (*ev) {
      mat curves = read_sample_csv(ev_in);
      const int r = static_cast<int>(curves.cols());
      mat kernel = kernel_by_name(ev_kernel, r);
      eigen_basis basis = eigendecompose(kernel, std::min(r, 25));
      backtest_config config;
      config.p = ev_p;
      config.K = ev_K;
      config.tve = ev_tve;
      config.method = fit_method_from_name(ev_method);
      if (ev_theta != "auto") config.theta = parse_real(ev_theta);
      config.theta_factor = 1e-3;
      config.alpha_levels = detail::parse_level_list(ev_levels);
      config.split = ev_split;
      config.mode = quantile_mode_from_name(ev_mode);
      backtest_report report = backtest(curves, basis, kernel, config);
      write_backtest_json(ev_out, report);
      if (!ev_curves_out.empty()) write_avg_curves_csv(ev_curves_out, report);
    } else if (*dg) {
      mat curves = read_sample_csv(dg_in);
      const int r = static_cast<int>(curves.cols());
      fit_result fit = read_fit_json(dg_fit);
      eigen_basis basis =
          eigendecompose(kernel_by_name(dg_kernel, r), std::min(r, 25));
      score_panel panel = compute_scores(curves, basis, fit.K);
      residual_set res = residuals(fit, panel, residual_mode_from_name(dg_mode));
      std::vector<vec> squared;
      squared.reserve(res.curves.size());
      for (const auto& c : res.curves) squared.push_back(c.cwiseAbs2());
      auto lags = detail::parse_int_list(dg_lags);
      int max_lag = *std::max_element(lags.begin(), lags.end());
      std::vector<double> rho = sacf(squared, max_lag);
      std::vector<whiteness_result> tests;
      for (int lag : lags)
        tests.push_back(whiteness_test(squared, lag, dg_nperm, dg_seed));
      auto out = detail::open_out(dg_out);
      out << diagnostics_to_json(rho, tests, residual_mode_from_name(dg_mode))
                 .dump(2)
          << '\n';
    } else if (*mc) {
      ccc_params truth = read_params_json(mc_params, mc_r);
      mc_config config;
      config.method = fit_method_from_name(mc_method);
      config.K_fit = mc_K;
      config.seed = mc_seed;
      auto rows = mc_consistency(truth, detail::parse_int_list(mc_nlist),
                                 mc_reps, config);
      write_mc_csv(mc_out, rows);
    } else if (*ing) {
      price_panel panel = read_price_csv(ing_prices);
      write_sample_csv(ing_out, build_ocidr(panel));
    }
  } catch (const domain_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: Internal: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace oparch
