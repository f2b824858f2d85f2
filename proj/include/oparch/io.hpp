#pragma once

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "oparch/diagnostics.hpp"
#include "oparch/simulate.hpp"

namespace oparch {

using nlohmann::json;

// All text output is UTF-8 with LF endings; reals are serialized with 17
// significant digits so read(write(x)) round-trips within 1 ulp.
inline std::string format_real(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

inline double parse_real(const std::string& text) {
  try {
    std::size_t used = 0;
    double x = std::stod(text, &used);
    if (used != text.size()) fail(errc::bad_input, "trailing junk in '" + text + "'");
    return x;
  } catch (const std::exception&) {
    fail(errc::bad_input, "cannot parse real '" + text + "'");
  }
}

namespace detail {

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);  // binary keeps LF on all hosts
  require(out.good(), errc::bad_input, "cannot open for writing: " + path);
  return out;
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), errc::bad_input, "cannot open for reading: " + path);
  return in;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.push_back("");
  return fields;
}

inline std::vector<std::vector<std::string>> read_csv(const std::string& path,
                                                      bool header,
                                                      std::vector<std::string>* head
                                                      = nullptr) {
  auto in = open_in(path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (first && header) {
      if (head) *head = fields;
      first = false;
      continue;
    }
    first = false;
    rows.push_back(std::move(fields));
  }
  return rows;
}

}  // namespace detail

// ---- GridFunction CSV: columns t,value --------------------------------

inline void write_grid_function_csv(const std::string& path, const vec& f) {
  auto out = detail::open_out(path);
  vec t = midpoint_grid(static_cast<int>(f.size()));
  out << "t,value\n";
  for (int i = 0; i < f.size(); ++i)
    out << format_real(t(i)) << ',' << format_real(f(i)) << '\n';
}

inline vec read_grid_function_csv(const std::string& path) {
  auto rows = detail::read_csv(path, true);
  require(!rows.empty(), errc::bad_input, "empty curve file " + path);
  vec f(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require(rows[i].size() == 2, errc::bad_input, "curve row needs t,value");
    f(i) = parse_real(rows[i][1]);
  }
  return f;
}

// ---- Kernel matrix CSV: r rows x r columns, no header -----------------

inline void write_kernel_csv(const std::string& path, const mat& k) {
  auto out = detail::open_out(path);
  for (int i = 0; i < k.rows(); ++i) {
    for (int j = 0; j < k.cols(); ++j)
      out << (j ? "," : "") << format_real(k(i, j));
    out << '\n';
  }
}

inline mat read_kernel_csv(const std::string& path) {
  auto rows = detail::read_csv(path, false);
  require(!rows.empty(), errc::bad_input, "empty kernel file " + path);
  mat k(rows.size(), rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require(rows[i].size() == rows[0].size(), errc::bad_input,
            "ragged kernel matrix");
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      k(i, j) = parse_real(rows[i][j]);
  }
  require(k.rows() == k.cols(), errc::bad_input, "kernel matrix must be square");
  return k;
}

// ---- Sample CSV (long): columns k,t,value; k is the 1-based day --------

inline void write_sample_csv(const std::string& path, const mat& curves) {
  auto out = detail::open_out(path);
  vec t = midpoint_grid(static_cast<int>(curves.cols()));
  out << "k,t,value\n";
  for (int k = 0; k < curves.rows(); ++k)
    for (int i = 0; i < curves.cols(); ++i)
      out << (k + 1) << ',' << format_real(t(i)) << ','
          << format_real(curves(k, i)) << '\n';
}

inline mat read_sample_csv(const std::string& path) {
  auto rows = detail::read_csv(path, true);
  require(!rows.empty(), errc::bad_input, "empty sample file " + path);
  std::map<long, std::vector<double>> days;
  for (const auto& row : rows) {
    require(row.size() == 3, errc::bad_input, "sample row needs k,t,value");
    days[std::stol(row[0])].push_back(parse_real(row[2]));
  }
  const std::size_t r = days.begin()->second.size();
  mat curves(days.size(), r);
  int k = 0;
  long expected = days.begin()->first;
  for (const auto& [day, values] : days) {
    require(day == expected++, errc::bad_input, "day keys must be consecutive");
    require(values.size() == r, errc::bad_input,
            "day " + std::to_string(day) + " has a different grid size");
    for (std::size_t i = 0; i < r; ++i) curves(k, i) = values[i];
    ++k;
  }
  return curves;
}

// ---- Z-path companion CSV: columns k,ell,z -----------------------------

inline void write_z_path_csv(const std::string& path, const mat& z) {
  auto out = detail::open_out(path);
  out << "k,ell,z\n";
  for (int k = 0; k < z.rows(); ++k)
    for (int l = 0; l < z.cols(); ++l)
      out << (k + 1) << ',' << (l + 1) << ',' << format_real(z(k, l)) << '\n';
}

// ---- Model parameters JSON ---------------------------------------------

inline json params_to_json(const ccc_params& params) {
  json j;
  j["p"] = params.p;
  j["kernel"] = params.kernel;
  j["K_model"] = params.K();
  j["delta"] = std::vector<double>(params.delta.data(),
                                   params.delta.data() + params.delta.size());
  std::vector<std::vector<double>> alpha(params.p,
                                         std::vector<double>(params.K()));
  for (int i = 0; i < params.p; ++i)
    for (int l = 0; l < params.K(); ++l) alpha[i][l] = params.alpha(i, l);
  j["alpha"] = alpha;
  return j;
}

inline ccc_params params_from_json(const json& j, int r) {
  require(j.contains("p") && j.contains("kernel") && j.contains("delta") &&
              j.contains("alpha"),
          errc::bad_input, "model json needs p, kernel, delta, alpha");
  const int p = j.at("p").get<int>();
  auto delta = j.at("delta").get<std::vector<double>>();
  auto alpha = j.at("alpha").get<std::vector<std::vector<double>>>();
  const int K = j.contains("K_model") ? j.at("K_model").get<int>()
                                      : static_cast<int>(delta.size());
  require(static_cast<int>(delta.size()) == K, errc::bad_input,
          "delta length disagrees with K_model");
  require(static_cast<int>(alpha.size()) == p, errc::bad_input,
          "alpha must have p rows");
  mat a(p, K);
  for (int i = 0; i < p; ++i) {
    require(static_cast<int>(alpha[i].size()) == K, errc::bad_input,
            "alpha rows must have K_model entries");
    for (int l = 0; l < K; ++l) a(i, l) = alpha[i][l];
  }
  vec d(K);
  for (int l = 0; l < K; ++l) d(l) = delta[l];
  return make_params(j.at("kernel").get<std::string>(), r, K, p, a, d);
}

inline void write_params_json(const std::string& path, const ccc_params& params) {
  auto out = detail::open_out(path);
  out << params_to_json(params).dump(2) << '\n';
}

inline ccc_params read_params_json(const std::string& path, int r) {
  auto in = detail::open_in(path);
  json j = json::parse(in, nullptr, true);
  return params_from_json(j, r);
}

// ---- Fit result JSON ----------------------------------------------------

inline json fit_to_json(const fit_result& fit) {
  json j;
  j["p"] = fit.p;
  j["K"] = fit.K;
  j["method"] = fit_method_name(fit.method);
  j["theta"] = fit.theta;
  j["k_proj"] = fit.k_proj;
  std::vector<std::vector<double>> alpha(fit.p, std::vector<double>(fit.K));
  std::vector<std::vector<double>> delta_matrix(fit.K,
                                                std::vector<double>(fit.K));
  for (int i = 0; i < fit.p; ++i)
    for (int l = 0; l < fit.K; ++l) alpha[i][l] = fit.alpha_hat(i, l);
  for (int i = 0; i < fit.K; ++i)
    for (int l = 0; l < fit.K; ++l) delta_matrix[i][l] = fit.delta_matrix(i, l);
  j["alpha_hat"] = alpha;
  j["delta_hat"] = std::vector<double>(fit.delta_hat.data(),
                                       fit.delta_hat.data() + fit.K);
  j["delta_matrix"] = delta_matrix;
  std::vector<bool> clamped;
  for (int i = 0; i < fit.p; ++i)
    for (int l = 0; l < fit.K; ++l) clamped.push_back(fit.alpha_clamped(i, l));
  for (int l = 0; l < fit.K; ++l) clamped.push_back(fit.delta_clamped(l));
  j["clamped"] = clamped;
  j["tve"] = fit.tve;
  j["seed"] = fit.seed;
  return j;
}

inline fit_result fit_from_json(const json& j) {
  fit_result fit;
  fit.p = j.at("p").get<int>();
  fit.K = j.at("K").get<int>();
  fit.method = fit_method_from_name(j.at("method").get<std::string>());
  fit.theta = j.at("theta").get<double>();
  fit.k_proj = j.at("k_proj").get<int>();
  auto alpha = j.at("alpha_hat").get<std::vector<std::vector<double>>>();
  auto delta = j.at("delta_hat").get<std::vector<double>>();
  auto dm = j.at("delta_matrix").get<std::vector<std::vector<double>>>();
  fit.alpha_hat.resize(fit.p, fit.K);
  for (int i = 0; i < fit.p; ++i)
    for (int l = 0; l < fit.K; ++l) fit.alpha_hat(i, l) = alpha.at(i).at(l);
  fit.delta_hat.resize(fit.K);
  for (int l = 0; l < fit.K; ++l) fit.delta_hat(l) = delta.at(l);
  fit.delta_matrix.resize(fit.K, fit.K);
  for (int i = 0; i < fit.K; ++i)
    for (int l = 0; l < fit.K; ++l) fit.delta_matrix(i, l) = dm.at(i).at(l);
  fit.alpha_clamped = fit.alpha_hat.array() < 0.0;
  fit.delta_clamped = fit.delta_hat.array() < fit_result::delta_floor;
  if (j.contains("tve")) fit.tve = j.at("tve").get<double>();
  if (j.contains("seed")) fit.seed = j.at("seed").get<std::uint64_t>();
  return fit;
}

inline void write_fit_json(const std::string& path, const fit_result& fit) {
  auto out = detail::open_out(path);
  out << fit_to_json(fit).dump(2) << '\n';
}

inline fit_result read_fit_json(const std::string& path) {
  auto in = detail::open_in(path);
  return fit_from_json(json::parse(in, nullptr, true));
}

// ---- Backtest report JSON + average-curve sidecar CSV -------------------

inline json backtest_to_json(const backtest_report& report) {
  json j;
  j["mode"] = quantile_mode_name(report.mode);
  j["n_train"] = report.n_train;
  j["n_test"] = report.n_test;
  j["K"] = report.K;
  j["theta"] = report.theta;
  json levels = json::array();
  json baseline = json::array();
  for (const auto& level : report.levels) {
    levels.push_back({{"alpha", level.alpha},
                      {"vr", level.vr},
                      {"cv_err", level.cv_err}});
    baseline.push_back({{"alpha", level.alpha}, {"vr", level.baseline_vr}});
  }
  j["levels"] = levels;
  j["baseline"] = {{"levels", baseline}};
  return j;
}

inline void write_backtest_json(const std::string& path,
                                const backtest_report& report) {
  auto out = detail::open_out(path);
  out << backtest_to_json(report).dump(2) << '\n';
}

// Sidecar columns t,model,value; one block per level and forecaster.
inline void write_avg_curves_csv(const std::string& path,
                                 const backtest_report& report) {
  auto out = detail::open_out(path);
  out << "t,model,value\n";
  for (const auto& level : report.levels) {
    vec t = midpoint_grid(static_cast<int>(level.avg_curve.size()));
    std::string tag_model = "model@" + format_real(level.alpha);
    std::string tag_base = "baseline@" + format_real(level.alpha);
    for (int i = 0; i < t.size(); ++i)
      out << format_real(t(i)) << ',' << tag_model << ','
          << format_real(level.avg_curve(i)) << '\n';
    for (int i = 0; i < t.size(); ++i)
      out << format_real(t(i)) << ',' << tag_base << ','
          << format_real(level.baseline_avg_curve(i)) << '\n';
  }
}

// ---- Diagnostics JSON ----------------------------------------------------

inline json diagnostics_to_json(const std::vector<double>& sacf_values,
                                const std::vector<whiteness_result>& whiteness,
                                residual_mode mode) {
  json j;
  j["sacf"] = sacf_values;
  json w = json::array();
  for (const auto& res : whiteness)
    w.push_back({{"max_lag", res.max_lag},
                 {"stat", res.stat},
                 {"p_value", res.p_value}});
  j["whiteness"] = w;
  j["residual_mode"] = residual_mode_name(mode);
  return j;
}

// ---- Intraday price panel -> overnight cumulative intraday returns ------

struct price_panel {
  std::vector<std::string> days;  // strictly increasing day keys
  mat prices;                     // n_days x r intraday prices
};

// Long CSV: day,time_index,price; days sorted lexicographically; every day
// must carry the same complete 1..r index set (no imputation).
inline price_panel read_price_csv(const std::string& path) {
  std::vector<std::string> head;
  auto rows = detail::read_csv(path, true, &head);
  require(head.size() == 3 && head[0] == "day" && head[1] == "time_index" &&
              head[2] == "price",
          errc::bad_input, "price csv header must be day,time_index,price");
  std::map<std::string, std::map<long, double>> table;
  for (const auto& row : rows) {
    require(row.size() == 3, errc::bad_input, "price row needs day,time_index,price");
    double price = parse_real(row[2]);
    require(price > 0.0, errc::non_positive_price,
            "price <= 0 on day " + row[0] + " index " + row[1]);
    auto [it, fresh] = table[row[0]].emplace(std::stol(row[1]), price);
    require(fresh, errc::bad_input,
            "duplicate time index " + row[1] + " on day " + row[0]);
  }
  require(table.size() >= 2, errc::bad_input, "need at least 2 days");
  const std::size_t r = table.begin()->second.size();
  price_panel panel;
  panel.prices.resize(table.size(), r);
  int row_idx = 0;
  for (const auto& [day, points] : table) {
    require(points.size() == r, errc::bad_input,
            "day " + day + " is missing intraday points (no imputation)");
    long expected = 1;
    for (const auto& [idx, price] : points) {
      require(idx == expected++, errc::bad_input,
              "day " + day + " has gaps in time_index");
      panel.prices(row_idx, idx - 1) = price;
    }
    panel.days.push_back(day);
    ++row_idx;
  }
  return panel;
}

// R_j(t) = 100 (log P_j(t) - log P_{j-1}(1)), day 1 consumed as anchor.
// "Previous close" is the last intraday observation of the prior day.
inline mat build_ocidr(const price_panel& panel) {
  const int n = static_cast<int>(panel.prices.rows());
  const int r = static_cast<int>(panel.prices.cols());
  require(n >= 2, errc::bad_input, "need at least 2 days");
  require((panel.prices.array() > 0.0).all(), errc::non_positive_price,
          "prices must be positive");
  mat curves(n - 1, r);
  for (int j = 1; j < n; ++j) {
    double anchor = std::log(panel.prices(j - 1, r - 1));
    for (int i = 0; i < r; ++i)
      curves(j - 1, i) = 100.0 * (std::log(panel.prices(j, i)) - anchor);
  }
  return curves;
}

// ---- Run configuration ----------------------------------------------------

struct run_config {
  std::string kernel = "bm";
  int p = 1;
  double tve = 0.9;
  std::string theta = "auto";  // "auto" or a positive real
  std::string method = "tikhonov";
  std::vector<double> alpha_levels = {0.05, 0.01};
  double split = 0.8;
  std::uint64_t seed = 1;
  std::string engine = "spectral";
  int r = 50;
};

inline json run_config_to_json(const run_config& config) {
  return json{{"kernel", config.kernel}, {"p", config.p},
              {"tve", config.tve},       {"theta", config.theta},
              {"method", config.method}, {"alpha_levels", config.alpha_levels},
              {"split", config.split},   {"seed", config.seed},
              {"engine", config.engine}, {"r", config.r}};
}

inline run_config run_config_from_json(const json& j) {
  run_config config;
  if (j.contains("kernel")) config.kernel = j.at("kernel").get<std::string>();
  if (j.contains("p")) config.p = j.at("p").get<int>();
  if (j.contains("tve")) config.tve = j.at("tve").get<double>();
  if (j.contains("theta")) {
    if (j.at("theta").is_number())
      config.theta = format_real(j.at("theta").get<double>());
    else
      config.theta = j.at("theta").get<std::string>();
  }
  if (j.contains("method")) config.method = j.at("method").get<std::string>();
  if (j.contains("alpha_levels"))
    config.alpha_levels = j.at("alpha_levels").get<std::vector<double>>();
  if (j.contains("split")) config.split = j.at("split").get<double>();
  if (j.contains("seed")) config.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("engine")) config.engine = j.at("engine").get<std::string>();
  if (j.contains("r")) config.r = j.at("r").get<int>();
  require(config.p >= 1, errc::bad_input, "config p must be >= 1");
  require(config.r >= 2, errc::bad_input, "config r must be >= 2");
  require(config.tve > 0.0 && config.tve < 1.0, errc::bad_input,
          "config tve outside (0,1)");
  require(config.split > 0.0 && config.split < 1.0, errc::bad_input,
          "config split outside (0,1)");
  return config;
}

// ---- Minimal SVG line plot (convenience output, data CSVs stay canonical) --

inline void write_svg_lines(const std::string& path,
                            const std::vector<vec>& curves,
                            const std::vector<std::string>& labels) {
  require(!curves.empty(), errc::bad_input, "no curves to plot");
  const int width = 640, height = 360, margin = 40;
  double lo = curves[0].minCoeff(), hi = curves[0].maxCoeff();
  for (const auto& c : curves) {
    lo = std::min(lo, c.minCoeff());
    hi = std::max(hi, c.maxCoeff());
  }
  if (hi - lo < 1e-12) hi = lo + 1.0;
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c",
                                  "#9467bd", "#ff7f0e", "#8c564b"};
  auto out = detail::open_out(path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
      << "\" height=\"" << height << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (std::size_t c = 0; c < curves.size(); ++c) {
    const vec& f = curves[c];
    out << "<polyline fill=\"none\" stroke=\"" << palette[c % 6]
        << "\" stroke-width=\"1.5\" points=\"";
    for (int i = 0; i < f.size(); ++i) {
      double x = margin + (width - 2.0 * margin) * i / std::max<int>(1, f.size() - 1);
      double y = height - margin -
                 (height - 2.0 * margin) * (f(i) - lo) / (hi - lo);
      out << x << ',' << y << ' ';
    }
    out << "\"/>\n";
    if (c < labels.size())
      out << "<text x=\"" << (margin + 4) << "\" y=\"" << (margin + 14 * (c + 1))
          << "\" fill=\"" << palette[c % 6] << "\" font-size=\"12\">" << labels[c]
          << "</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace oparch
