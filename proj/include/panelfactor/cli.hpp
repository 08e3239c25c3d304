#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "panelfactor/bootstrap.hpp"
#include "panelfactor/errors.hpp"
#include "panelfactor/estimator.hpp"
#include "panelfactor/numeric.hpp"
#include "panelfactor/panel_data.hpp"
#include "panelfactor/rng.hpp"
#include "panelfactor/simulation.hpp"
#include "panelfactor/spec_test.hpp"

namespace panelfactor::cli {

using ordered_json = nlohmann::ordered_json;

namespace detail {

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == ',') {
      std::string item = s.substr(start, i - start);
      while (!item.empty() && item.front() == ' ') item.erase(item.begin());
      while (!item.empty() && item.back() == ' ') item.pop_back();
      if (!item.empty()) out.push_back(item);
      start = i + 1;
    }
  }
  return out;
}

// "auto" keeps the rule-of-thumb value; otherwise a comma list of positive
// numbers, one per coordinate.
inline std::optional<Eigen::VectorXd> parse_bandwidths(const std::string& s, Eigen::Index expected,
                                                       const std::string& what) {
  if (s == "auto") return std::nullopt;
  std::vector<std::string> items = split_list(s);
  require(static_cast<Eigen::Index>(items.size()) == expected, errc::invalid_argument,
          what + " needs " + std::to_string(expected) + " comma-separated values, got '" + s +
              "'");
  Eigen::VectorXd h(expected);
  for (Eigen::Index l = 0; l < expected; ++l) {
    auto v = panelfactor::detail::parse_double(items[static_cast<std::size_t>(l)]);
    require(v.has_value() && std::isfinite(*v) && *v > 0.0, errc::invalid_argument,
            what + ": '" + items[static_cast<std::size_t>(l)] + "' is not a positive number");
    h[l] = *v;
  }
  return h;
}

inline ordered_json vec_to_json(const Eigen::VectorXd& v) {
  ordered_json a = ordered_json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline ordered_json mat_to_json(const Eigen::MatrixXd& m) {
  ordered_json rows = ordered_json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    ordered_json row = ordered_json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  require(out.good(), errc::io_error, "cannot write '" + path.string() + "'");
  out << text;
  require(out.good(), errc::io_error, "write to '" + path.string() + "' failed");
}

// Per-coordinate sweep grid: `points` equispaced values over the observed
// range of each coordinate, other coordinates held at their sample medians.
// Returns the grid plus the sweeping coordinate's index for each row.
inline std::pair<Eigen::MatrixXd, std::vector<int>> default_grid(const Eigen::MatrixXd& w,
                                                                 int points) {
  require(points >= 2, errc::invalid_argument, "grid needs at least 2 points");
  const Eigen::Index d = w.cols();
  Eigen::VectorXd med(d);
  for (Eigen::Index l = 0; l < d; ++l) {
    std::vector<double> col(w.col(l).data(), w.col(l).data() + w.rows());
    med[l] = quantile_type7(std::move(col), 0.5);
  }
  Eigen::MatrixXd grid(static_cast<Eigen::Index>(points) * d, d);
  std::vector<int> sweep(static_cast<std::size_t>(grid.rows()));
  Eigen::Index row = 0;
  for (Eigen::Index l = 0; l < d; ++l) {
    double lo = w.col(l).minCoeff(), hi = w.col(l).maxCoeff();
    for (int g = 0; g < points; ++g, ++row) {
      grid.row(row) = med.transpose();
      // Clamp: lo + (hi-lo) can overshoot hi by an ulp and land outside the
      // observed hull.
      double v = g == 0            ? lo
                 : g == points - 1 ? hi
                                   : lo + (hi - lo) * static_cast<double>(g) / (points - 1);
      grid(row, l) = std::clamp(v, lo, hi);
      sweep[static_cast<std::size_t>(row)] = static_cast<int>(l);
    }
  }
  return {grid, sweep};
}

inline void write_ghat_csv(const std::filesystem::path& path, const GCurve& curve,
                           const std::vector<int>& sweep, const std::vector<std::string>& w_names) {
  std::string text = "sweep";
  for (const auto& name : w_names) text += "," + name;
  text += ",g_hat,band_lo,band_hi\n";
  for (Eigen::Index g = 0; g < curve.grid.rows(); ++g) {
    text += w_names[static_cast<std::size_t>(sweep[static_cast<std::size_t>(g)])];
    for (Eigen::Index l = 0; l < curve.grid.cols(); ++l)
      text += "," + format_double(curve.grid(g, l));
    text += "," + format_double(curve.g_hat[g]) + "," + format_double(curve.band_lo[g]) + "," +
            format_double(curve.band_hi[g]) + "\n";
  }
  write_text(path, text);
}

inline void write_study_outputs(const MonteCarloReport& report, const std::string& out_dir) {
  namespace fs = std::filesystem;
  const StudyGrid& grid = report.grid;

  std::string beta = "n_units,n_periods,delta,estimator,coef,bias,rmse\n";
  for (const CellResult& c : report.cells) {
    std::string prefix = std::to_string(c.n_units) + "," + std::to_string(c.n_periods) + "," +
                         format_double(c.delta) + ",";
    auto row = [&](const std::string& est, const std::string& coef, double bias, double rmse) {
      beta += prefix + est + "," + coef + "," + format_double(bias) + "," + format_double(rmse) +
              "\n";
    };
    row("profile", "beta1", c.beta1_bias, c.beta1_rmse);
    row("profile", "beta2", c.beta2_bias, c.beta2_rmse);
    if (grid.run_naive) {
      row("naive", "beta1", c.naive_beta1_bias, c.naive_beta1_rmse);
      row("naive", "beta2", c.naive_beta2_bias, c.naive_beta2_rmse);
    }
    if (grid.run_cce) {
      row("cce", "beta1", c.cce_beta1_bias, c.cce_beta1_rmse);
      row("cce", "beta2", c.cce_beta2_bias, c.cce_beta2_rmse);
    }
  }
  write_text(fs::path(out_dir) / "table_beta.csv", beta);

  std::string gtab = "n_units,n_periods,delta,median_bias,median_rmse\n";
  for (const CellResult& c : report.cells)
    gtab += std::to_string(c.n_units) + "," + std::to_string(c.n_periods) + "," +
            format_double(c.delta) + "," + format_double(c.g_median_bias) + "," +
            format_double(c.g_median_rmse) + "\n";
  write_text(fs::path(out_dir) / "table_g.csv", gtab);

  if (grid.bootstrap_replications > 0) {
    std::string header = "n_units,n_periods,delta,level,rejection_rate\n";
    std::string size_tab = header, power_tab = header;
    for (const CellResult& c : report.cells) {
      for (std::size_t li = 0; li < grid.levels.size(); ++li) {
        std::string line = std::to_string(c.n_units) + "," + std::to_string(c.n_periods) + "," +
                           format_double(c.delta) + "," + format_double(grid.levels[li]) + "," +
                           format_double(c.rejection_rates[li]) + "\n";
        power_tab += line;
        if (c.delta == 0.0) size_tab += line;
      }
    }
    write_text(fs::path(out_dir) / "table_size.csv", size_tab);
    write_text(fs::path(out_dir) / "power_curve.csv", power_tab);
  }

  ordered_json j;
  j["recipe"] = report.recipe;
  j["seed"] = grid.seed;
  j["replications"] = grid.replications;
  j["bootstrap_replications"] = grid.bootstrap_replications;
  j["levels"] = grid.levels;
  j["elapsed_seconds"] = report.elapsed_seconds;
  j["cells"] = ordered_json::array();
  for (const CellResult& c : report.cells) {
    ordered_json cj;
    cj["n_units"] = c.n_units;
    cj["n_periods"] = c.n_periods;
    cj["delta"] = c.delta;
    cj["valid_replications"] = static_cast<int>(c.beta1_hat.size());
    cj["failed_replications"] = c.failed_reps;
    cj["test_failures"] = c.test_failures;
    cj["profile"] = {{"beta1_bias", c.beta1_bias},
                     {"beta1_rmse", c.beta1_rmse},
                     {"beta2_bias", c.beta2_bias},
                     {"beta2_rmse", c.beta2_rmse}};
    cj["g"] = {{"median_bias", c.g_median_bias}, {"median_rmse", c.g_median_rmse}};
    if (grid.run_naive)
      cj["naive"] = {{"beta1_bias", c.naive_beta1_bias},
                     {"beta1_rmse", c.naive_beta1_rmse},
                     {"beta2_bias", c.naive_beta2_bias},
                     {"beta2_rmse", c.naive_beta2_rmse}};
    if (grid.run_cce)
      cj["cce"] = {{"beta1_bias", c.cce_beta1_bias},
                   {"beta1_rmse", c.cce_beta1_rmse},
                   {"beta2_bias", c.cce_beta2_bias},
                   {"beta2_rmse", c.cce_beta2_rmse}};
    if (grid.bootstrap_replications > 0) cj["rejection_rates"] = c.rejection_rates;
    j["cells"].push_back(cj);
  }
  write_text(fs::path(out_dir) / "report.json", j.dump(2) + "\n");
}

struct DataOpts {
  std::string input, bandwidth = "auto", test_bandwidth = "auto";
  ColumnMapping mapping;
  std::string x_list, w_list;
};

inline void add_data_options(CLI::App* cmd, DataOpts& opts) {
  cmd->add_option("--input", opts.input, "input CSV (long format, header row)")->required();
  cmd->add_option("--unit", opts.mapping.unit, "unit id column")->capture_default_str();
  cmd->add_option("--time", opts.mapping.time, "time id column")->capture_default_str();
  cmd->add_option("--y", opts.mapping.y, "outcome column")->capture_default_str();
  cmd->add_option("--x", opts.x_list, "regressor columns, comma-separated")->required();
  cmd->add_option("--w", opts.w_list, "smoothing covariate columns, comma-separated")->required();
  cmd->add_option("--bandwidth", opts.bandwidth,
                  "'auto' or comma list of smoothing bandwidths")
      ->capture_default_str();
  cmd->add_option("--test-bandwidth", opts.test_bandwidth,
                  "'auto' or comma list of test bandwidths over [x, w]")
      ->capture_default_str();
}

inline PanelDataset load_data(DataOpts& opts) {
  opts.mapping.x = split_list(opts.x_list);
  opts.mapping.w = split_list(opts.w_list);
  require(!opts.mapping.x.empty(), errc::invalid_argument, "--x names no columns");
  require(!opts.mapping.w.empty(), errc::invalid_argument, "--w names no columns");
  return load_csv(opts.input, opts.mapping);
}

inline BandwidthSpec resolve_bandwidths(const PanelDataset& ds, const DataOpts& opts) {
  BandwidthSpec bw = default_bandwidths(ds);
  auto h_est = parse_bandwidths(opts.bandwidth, ds.d_w(), "--bandwidth");
  auto h_test = parse_bandwidths(opts.test_bandwidth, ds.d_x() + ds.d_w(), "--test-bandwidth");
  if (h_est) bw.h_est = *h_est;
  if (h_test) bw.h_test = *h_test;
  if (h_est || h_test) bw.source = BandwidthSpec::Source::user_supplied;
  return bw;
}

inline ordered_json bandwidths_json(const BandwidthSpec& bw) {
  ordered_json j;
  j["h_est"] = vec_to_json(bw.h_est);
  j["h_test"] = vec_to_json(bw.h_test);
  j["source"] =
      bw.source == BandwidthSpec::Source::rule_of_thumb ? "rule_of_thumb" : "user_supplied";
  return j;
}

inline ordered_json coef_table_json(const std::vector<std::string>& names,
                                    const Eigen::VectorXd& est, const Eigen::MatrixXd& vcov) {
  ordered_json coefs = ordered_json::array();
  for (Eigen::Index k = 0; k < est.size(); ++k) {
    double se = std::sqrt(std::max(vcov(k, k), 0.0));
    double t = se > 0.0 ? est[k] / se : std::numeric_limits<double>::quiet_NaN();
    ordered_json c;
    c["name"] = names[static_cast<std::size_t>(k)];
    c["estimate"] = est[k];
    c["std_error"] = se;
    c["t_ratio"] = t;
    c["p_value"] = std::isfinite(t) ? 2.0 * normal_cdf(-std::abs(t))
                                    : std::numeric_limits<double>::quiet_NaN();
    coefs.push_back(c);
  }
  return coefs;
}

}  // namespace detail

// Argument vector excludes the program name. Exit codes: 0 success, 2 input
// or usage error, 3 numerical failure.
inline int run(const std::vector<std::string>& args) {
  CLI::App app{"semiparametric estimation for panels with an unspecified factor structure"};
  app.require_subcommand(1);

  detail::DataOpts est_opts, test_opts, curve_opts;
  std::string est_out = ".", test_out = ".", curve_out = ".", sim_out = ".";
  std::string est_comparators;
  std::uint64_t est_seed = kDefaultSeed, test_seed = kDefaultSeed, curve_seed = kDefaultSeed,
                sim_seed = kDefaultSeed;
  int est_boot = 199, test_boot = 199, curve_boot = 199;
  int est_workers = 0, test_workers = 0, curve_workers = 0, sim_workers = 0;
  int est_grid_points = 50, curve_grid_points = 50;
  double est_ci = 0.95, curve_ci = 0.95;
  std::string sim_grid_file;

  CLI::App* est = app.add_subcommand("estimate", "fit the model and write fit.json + ghat.csv");
  detail::add_data_options(est, est_opts);
  est->add_option("--bootstrap", est_boot, "band replications; 0 uses plug-in bands")
      ->capture_default_str();
  est->add_option("--seed", est_seed, "rng seed")->capture_default_str();
  est->add_option("--workers", est_workers, "worker threads; 0 = auto")->capture_default_str();
  est->add_option("--out", est_out, "output directory")->capture_default_str();
  est->add_option("--ci-level", est_ci, "band coverage level")->capture_default_str();
  est->add_option("--grid-points", est_grid_points, "points per sweep coordinate")
      ->capture_default_str();
  est->add_option("--comparators", est_comparators, "comma list from {naive, cce}");

  CLI::App* tst = app.add_subcommand("test", "run the specification test and write test.json");
  detail::add_data_options(tst, test_opts);
  tst->add_option("--bootstrap", test_boot, "bootstrap replications; 0 = asymptotic only")
      ->capture_default_str();
  tst->add_option("--seed", test_seed, "rng seed")->capture_default_str();
  tst->add_option("--workers", test_workers, "worker threads; 0 = auto")->capture_default_str();
  tst->add_option("--out", test_out, "output directory")->capture_default_str();

  CLI::App* crv = app.add_subcommand("gcurve", "evaluate g on a grid and write ghat.csv");
  detail::add_data_options(crv, curve_opts);
  crv->add_option("--bootstrap", curve_boot, "band replications; 0 uses plug-in bands")
      ->capture_default_str();
  crv->add_option("--seed", curve_seed, "rng seed")->capture_default_str();
  crv->add_option("--workers", curve_workers, "worker threads; 0 = auto")->capture_default_str();
  crv->add_option("--out", curve_out, "output directory")->capture_default_str();
  crv->add_option("--ci-level", curve_ci, "band coverage level")->capture_default_str();
  crv->add_option("--grid-points", curve_grid_points, "points per sweep coordinate")
      ->capture_default_str();

  CLI::App* sim = app.add_subcommand("simulate", "run a Monte Carlo study from a grid file");
  sim->add_option("--grid", sim_grid_file, "study grid JSON file")->required();
  CLI::Option* sim_seed_opt =
      sim->add_option("--seed", sim_seed, "rng seed; overrides the grid file");
  sim->add_option("--workers", sim_workers, "worker threads; 0 = auto")->capture_default_str();
  sim->add_option("--out", sim_out, "output directory")->capture_default_str();

  std::vector<const char*> argv;
  argv.push_back("panelfactor");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (est->parsed()) {
      std::filesystem::create_directories(est_out);
      PanelDataset ds = detail::load_data(est_opts);
      BandwidthSpec bw = detail::resolve_bandwidths(ds, est_opts);
      FitResult f = fit(ds, bw, est_workers);
      require(est_boot >= 0, errc::invalid_argument, "--bootstrap must be >= 0");
      require(est_ci > 0.0 && est_ci < 1.0, errc::invalid_argument,
              "--ci-level must lie in (0,1)");

      ordered_json j;
      j["n_units"] = ds.n_units();
      j["n_periods"] = ds.n_periods();
      j["d_x"] = ds.d_x();
      j["d_w"] = ds.d_w();
      j["bandwidths"] = detail::bandwidths_json(bw);
      j["coefficients"] = detail::coef_table_json(est_opts.mapping.x, f.beta_hat, f.vcov_beta);
      j["omega_x_hat"] = detail::mat_to_json(f.omega_x_hat);
      j["band_method"] = est_boot > 0 ? "bootstrap_percentile" : "plug_in";
      j["ci_level"] = est_ci;
      j["bootstrap_replications"] = est_boot;
      j["seed"] = est_seed;
      for (const std::string& name : detail::split_list(est_comparators)) {
        if (name == "naive") {
          PooledFit nf = naive_fit(ds);
          ordered_json cj;
          cj["intercept"] = nf.intercept;
          cj["coefficients"] = detail::coef_table_json(est_opts.mapping.x, nf.beta_hat,
                                                       nf.vcov_beta);
          j["comparators"]["naive"] = cj;
        } else if (name == "cce") {
          PooledFit cf = cce_pooled_fit(ds);
          ordered_json cj;
          cj["intercept"] = cf.intercept;
          cj["coefficients"] = detail::coef_table_json(est_opts.mapping.x, cf.beta_hat,
                                                       cf.vcov_beta);
          j["comparators"]["cce"] = cj;
        } else {
          raise(errc::invalid_argument, "unknown comparator '" + name + "'");
        }
      }
      detail::write_text(std::filesystem::path(est_out) / "fit.json", j.dump(2) + "\n");

      auto [grid, sweep] = detail::default_grid(ds.w(), est_grid_points);
      GCurve curve = est_boot > 0 ? g_curve_bootstrap(f, ds, grid, est_ci, est_boot, est_seed,
                                                      est_workers)
                                  : g_curve_plugin(f, ds, grid, est_ci, est_workers);
      detail::write_ghat_csv(std::filesystem::path(est_out) / "ghat.csv", curve, sweep,
                             est_opts.mapping.w);
      for (Eigen::Index k = 0; k < f.beta_hat.size(); ++k)
        std::cout << est_opts.mapping.x[static_cast<std::size_t>(k)] << ": estimate "
                  << format_double(f.beta_hat[k]) << " (se "
                  << format_double(std::sqrt(std::max(f.vcov_beta(k, k), 0.0))) << ")\n";
      return 0;
    }

    if (tst->parsed()) {
      std::filesystem::create_directories(test_out);
      PanelDataset ds = detail::load_data(test_opts);
      BandwidthSpec bw = detail::resolve_bandwidths(ds, test_opts);
      require(test_boot >= 0, errc::invalid_argument, "--bootstrap must be >= 0");
      FitResult f = fit(ds, bw, test_workers);
      SpecTestResult result = run_test(ds, bw, f, test_workers);
      if (test_boot > 0) {
        BootstrapPlan plan;
        plan.n_replications = test_boot;
        plan.seed = test_seed;
        plan.targets.beta_moments = false;
        plan.targets.test_pvalue = true;
        BootstrapReport br = run_bootstrap(ds, bw, f, plan, test_workers);
        result.p_bootstrap = br.test_pvalue;
      }
      ordered_json j;
      j["n_units"] = ds.n_units();
      j["n_periods"] = ds.n_periods();
      j["v_nt"] = result.v_nt;
      j["upsilon0_hat"] = result.upsilon0_hat;
      j["standardized"] = result.standardized;
      j["p_asymptotic"] = result.p_asymptotic;
      if (result.p_bootstrap) {
        j["p_bootstrap"] = *result.p_bootstrap;
      } else {
        j["p_bootstrap"] = nullptr;
      }
      j["bootstrap_replications"] = test_boot;
      j["h_test"] = detail::vec_to_json(result.h_test);
      j["n_pairs"] = result.n_pairs;
      j["seed"] = test_seed;
      detail::write_text(std::filesystem::path(test_out) / "test.json", j.dump(2) + "\n");
      double p_line = result.p_bootstrap ? *result.p_bootstrap : result.p_asymptotic;
      std::printf("Test statistic is %.3f with p-value %.3f\n", result.standardized, p_line);
      return 0;
    }

    if (crv->parsed()) {
      std::filesystem::create_directories(curve_out);
      PanelDataset ds = detail::load_data(curve_opts);
      BandwidthSpec bw = detail::resolve_bandwidths(ds, curve_opts);
      require(curve_boot >= 0, errc::invalid_argument, "--bootstrap must be >= 0");
      require(curve_ci > 0.0 && curve_ci < 1.0, errc::invalid_argument,
              "--ci-level must lie in (0,1)");
      FitResult f = fit(ds, bw, curve_workers);
      auto [grid, sweep] = detail::default_grid(ds.w(), curve_grid_points);
      GCurve curve = curve_boot > 0 ? g_curve_bootstrap(f, ds, grid, curve_ci, curve_boot,
                                                        curve_seed, curve_workers)
                                    : g_curve_plugin(f, ds, grid, curve_ci, curve_workers);
      detail::write_ghat_csv(std::filesystem::path(curve_out) / "ghat.csv", curve, sweep,
                             curve_opts.mapping.w);
      return 0;
    }

    // simulate
    std::filesystem::create_directories(sim_out);
    std::ifstream in(sim_grid_file);
    require(in.good(), errc::io_error, "cannot open grid file '" + sim_grid_file + "'");
    ordered_json gj;
    try {
      in >> gj;
    } catch (const std::exception& e) {
      raise(errc::invalid_argument, "grid file '" + sim_grid_file + "': " + e.what());
    }
    StudyGrid grid;
    try {
      grid.n_units_list = gj.value("n_units", grid.n_units_list);
      grid.n_periods_list = gj.value("n_periods", grid.n_periods_list);
      grid.delta_list = gj.value("delta", grid.delta_list);
      grid.replications = gj.value("replications", grid.replications);
      grid.bootstrap_replications = gj.value("bootstrap", grid.bootstrap_replications);
      grid.levels = gj.value("levels", grid.levels);
      grid.seed = gj.value("seed", grid.seed);
      if (gj.contains("comparators")) {
        grid.run_naive = false;
        grid.run_cce = false;
        for (const auto& c : gj.at("comparators")) {
          std::string name = c.get<std::string>();
          if (name == "naive") {
            grid.run_naive = true;
          } else if (name == "cce") {
            grid.run_cce = true;
          } else {
            raise(errc::invalid_argument, "unknown comparator '" + name + "' in grid file");
          }
        }
      }
    } catch (const ordered_json::exception& e) {
      raise(errc::invalid_argument, "grid file '" + sim_grid_file + "': " + e.what());
    }
    if (sim_seed_opt->count() > 0) grid.seed = sim_seed;
    MonteCarloReport report = run_study(grid, sim_workers);
    detail::write_study_outputs(report, sim_out);
    std::cout << "simulated " << report.cells.size() << " cell(s) x " << grid.replications
              << " replication(s) in " << format_double(report.elapsed_seconds) << "s\n";
    return 0;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return is_input_error(e.code()) ? 2 : 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

inline int run_main(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args);
}

}  // namespace panelfactor::cli
