#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "panelfactor/errors.hpp"
#include "panelfactor/estimator.hpp"
#include "panelfactor/local_linear.hpp"
#include "panelfactor/numeric.hpp"
#include "panelfactor/panel_data.hpp"
#include "panelfactor/parallel.hpp"
#include "panelfactor/rng.hpp"
#include "panelfactor/spec_test.hpp"

namespace panelfactor {

// Stream tag for per-replication multiplier substreams.
inline constexpr std::uint64_t kMultiplierStreamTag = 0x626F6F74ULL;

struct BootstrapPlan {
  int n_replications = 199;
  std::uint64_t seed = kDefaultSeed;
  enum class Multiplier { standard_normal };
  Multiplier multiplier = Multiplier::standard_normal;
  struct Targets {
    bool beta_moments = true;
    bool g_bands = false;
    bool test_pvalue = false;
  };
  Targets targets;
  Eigen::MatrixXd g_grid;  // required when targets.g_bands
  double ci_level = 0.95;
  std::size_t kernel_cache_budget = std::size_t{64} << 20;
};

struct BootstrapReport {
  Eigen::VectorXd beta_bias;  // mean(beta*) - beta_hat
  Eigen::VectorXd beta_sd;    // componentwise sd over replications
  Eigen::MatrixXd beta_reps;  // d_x x B replication draws
  Eigen::VectorXd g_band_lo, g_band_hi;
  std::optional<double> test_pvalue;
  double observed_statistic = std::numeric_limits<double>::quiet_NaN();
  // Standardized replication statistics; NaN marks a replication whose
  // statistic could not be computed (recorded, never raised).
  Eigen::VectorXd replication_statistics;
  int fit_failures = 0;
  int test_failures = 0;
};

// Wild bootstrap sample with one multiplier per unit: every observation of
// unit i shares theta_i, which preserves the within-unit residual covariance.
// Computed as y + eps_hat*(theta_i - 1), algebraically x'beta_hat + g_hat +
// eps_hat*theta_i; this form reproduces y exactly at theta = 1 and the fitted
// values y - eps_hat exactly at theta = 0.
inline Eigen::VectorXd make_bootstrap_sample_with(const FitResult& fit_result,
                                                  const PanelDataset& ds,
                                                  const Eigen::VectorXd& theta) {
  require(theta.size() == ds.n_units(), errc::dimension_mismatch,
          "expected one multiplier per unit");
  require(fit_result.residuals.size() == ds.n_rows(), errc::dimension_mismatch,
          "fit does not match the dataset");
  Eigen::VectorXd y_star(ds.n_rows());
  for (int i = 0; i < ds.n_units(); ++i) {
    double shift = theta[i] - 1.0;
    for (int t = 0; t < ds.n_periods(); ++t) {
      Eigen::Index r = static_cast<Eigen::Index>(i) * ds.n_periods() + t;
      y_star[r] = ds.y()[r] + fit_result.residuals[r] * shift;
    }
  }
  return y_star;
}

// Multiplier vector for one replication; identical (seed, b) gives identical
// multipliers regardless of how replications are scheduled.
inline Eigen::VectorXd bootstrap_multipliers(std::uint64_t seed, int replication, int n_units) {
  Rng rng = Rng::from_seed(seed, {kMultiplierStreamTag, static_cast<std::uint64_t>(replication)});
  Eigen::VectorXd theta(n_units);
  for (int i = 0; i < n_units; ++i) theta[i] = rng.next_normal();
  return theta;
}

inline Eigen::VectorXd make_bootstrap_sample(const FitResult& fit_result, const PanelDataset& ds,
                                             Rng& rng) {
  Eigen::VectorXd theta(ds.n_units());
  for (int i = 0; i < ds.n_units(); ++i) theta[i] = rng.next_normal();
  return make_bootstrap_sample_with(fit_result, ds, theta);
}

// Full-pipeline wild bootstrap. Each replication regenerates y*, re-runs the
// residualize -> beta* -> g* -> eps* pipeline at the original bandwidths, and
// recomputes whatever the targets ask for. The smoother weights, the
// residualized x block, and the test kernel blocks do not depend on y, so
// they are computed once and shared; per-replication numbers are identical
// to a one-at-a-time refit.
inline BootstrapReport run_bootstrap(const PanelDataset& ds, const BandwidthSpec& bw,
                                     const FitResult& fit_result, const BootstrapPlan& plan,
                                     int workers = 0) {
  const int B = plan.n_replications;
  const auto& targets = plan.targets;
  require(targets.beta_moments || targets.g_bands || targets.test_pvalue, errc::invalid_argument,
          "bootstrap plan has no targets");
  if (targets.beta_moments || targets.g_bands)
    require(B >= 2, errc::invalid_argument, "moments and bands need at least 2 replications");
  if (targets.test_pvalue) {
    require(B >= 19, errc::invalid_argument, "p-values need at least 19 replications");
    if (B < 199)
      std::cerr << "warning: " << B << " bootstrap replications is low for p-values;"
                << " 199 or more is recommended\n";
  }
  require(plan.ci_level > 0.0 && plan.ci_level < 1.0, errc::invalid_argument,
          "ci level must lie in (0,1)");
  bw.validate();
  if (targets.g_bands) check_grid_in_hull(plan.g_grid, ds.w());

  // Shared, y-independent pieces of the pipeline.
  LocalLinearSmoother smoother(ds.w(), bw.h_est);
  ResidualizeResult rz = residualize(ds, bw.h_est, workers);
  Eigen::MatrixXd gram = rz.x_tilde.transpose() * rz.x_tilde;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
  require(es.eigenvalues().minCoeff() > 1e-12 * es.eigenvalues().cwiseAbs().maxCoeff(),
          errc::singular_design, "residualized design is rank-deficient");
  Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);

  const Eigen::Index n = ds.n_rows();
  const int d_x = ds.d_x();
  BootstrapReport report;
  report.beta_reps.resize(d_x, B);
  report.replication_statistics =
      Eigen::VectorXd::Constant(B, std::numeric_limits<double>::quiet_NaN());

  Eigen::MatrixXd chi;
  std::optional<PairKernelCache> cache;
  double stat_scale = 0.0;
  bool observed_ok = false;
  if (targets.test_pvalue) {
    require(bw.h_test.size() == d_x + ds.d_w(), errc::dimension_mismatch,
            "test bandwidths do not match [x, w]");
    chi = make_chi(ds);
    cache = PairKernelCache::build(chi, bw.h_test, ds.n_units(), ds.n_periods(),
                                   plan.kernel_cache_budget, workers);
    double prod_h = 1.0;
    for (Eigen::Index l = 0; l < bw.h_test.size(); ++l) prod_h *= bw.h_test[l];
    stat_scale = static_cast<double>(n) * std::sqrt(prod_h);
    try {
      auto [v, u2] = compute_vnt(fit_result.residuals, chi, bw.h_test, ds.n_units(),
                                 ds.n_periods(), workers, cache ? &*cache : nullptr);
      report.observed_statistic = stat_scale * v / std::sqrt(u2);
      observed_ok = true;
    } catch (const Error& e) {
      if (e.code() != errc::zero_variance) throw;
    }
  }

  Eigen::MatrixXd grid_reps;
  if (targets.g_bands) grid_reps.resize(plan.g_grid.rows(), B);

  // Chunk replications to bound the batched matrices at ~16 MB each.
  int chunk_cols = static_cast<int>(std::clamp<Eigen::Index>(2'000'000 / std::max<Eigen::Index>(n, 1),
                                                             1, B));
  for (int b0 = 0; b0 < B; b0 += chunk_cols) {
    int c_n = std::min(chunk_cols, B - b0);
    Eigen::MatrixXd y_star(n, c_n);
    for (int c = 0; c < c_n; ++c)
      y_star.col(c) = make_bootstrap_sample_with(
          fit_result, ds, bootstrap_multipliers(plan.seed, b0 + c, ds.n_units()));

    Eigen::MatrixXd fitted_y = smoother.fit_values(ds.w(), y_star, workers);
    Eigen::MatrixXd partial(n, c_n);
    for (int c = 0; c < c_n; ++c) {
      Eigen::VectorXd y_tilde_c = y_star.col(c) - fitted_y.col(c);
      Eigen::VectorXd beta_c = ldlt.solve(rz.x_tilde.transpose() * y_tilde_c);
      report.beta_reps.col(b0 + c) = beta_c;
      partial.col(c) = y_star.col(c) - ds.x() * beta_c;
    }
    Eigen::MatrixXd fitted_g = smoother.fit_values(ds.w(), partial, workers);
    Eigen::MatrixXd eps = partial - fitted_g;

    if (targets.test_pvalue) {
      std::vector<double> stats(static_cast<std::size_t>(c_n));
      std::vector<std::uint8_t> failed(static_cast<std::size_t>(c_n), 0);
      parallel_for(static_cast<std::size_t>(c_n), workers, [&](std::size_t c) {
        VntSums sums = accumulate_vnt(eps.col(static_cast<Eigen::Index>(c)), chi, bw.h_test,
                                      ds.n_units(), ds.n_periods(), 1,
                                      cache ? &*cache : nullptr);
        if (sums.upsilon0_sq > 0.0) {
          stats[c] = stat_scale * sums.v_nt / std::sqrt(sums.upsilon0_sq);
        } else {
          failed[c] = 1;
        }
      });
      for (int c = 0; c < c_n; ++c) {
        if (failed[static_cast<std::size_t>(c)]) {
          ++report.test_failures;
        } else {
          report.replication_statistics[b0 + c] = stats[static_cast<std::size_t>(c)];
        }
      }
    }
    if (targets.g_bands)
      grid_reps.middleCols(b0, c_n) = smoother.fit_values(plan.g_grid, partial, workers);
  }

  require(report.fit_failures <= B / 20, errc::insufficient_local_data,
          "more than 5% of bootstrap replications failed to refit");

  if (targets.beta_moments || targets.test_pvalue || targets.g_bands) {
    report.beta_bias = report.beta_reps.rowwise().mean() - fit_result.beta_hat;
    report.beta_sd.resize(d_x);
    for (int k = 0; k < d_x; ++k)
      report.beta_sd[k] = sample_sd(report.beta_reps.row(k).transpose());
  }

  if (targets.g_bands) {
    double lo_p = (1.0 - plan.ci_level) / 2.0;
    report.g_band_lo.resize(plan.g_grid.rows());
    report.g_band_hi.resize(plan.g_grid.rows());
    for (Eigen::Index g = 0; g < plan.g_grid.rows(); ++g) {
      std::vector<double> draws(static_cast<std::size_t>(B));
      for (int b = 0; b < B; ++b) draws[static_cast<std::size_t>(b)] = grid_reps(g, b);
      report.g_band_lo[g] = quantile_type7(draws, lo_p);
      report.g_band_hi[g] = quantile_type7(draws, 1.0 - lo_p);
    }
  }

  if (targets.test_pvalue && observed_ok) {
    long valid = 0, at_least = 0;
    for (int b = 0; b < B; ++b) {
      double s = report.replication_statistics[b];
      if (std::isnan(s)) continue;
      ++valid;
      if (s >= report.observed_statistic) ++at_least;
    }
    if (valid > 0)
      report.test_pvalue = static_cast<double>(1 + at_least) / static_cast<double>(valid + 1);
  }
  return report;
}

// Curve of g with bootstrap percentile bands; se_pointwise reports half the
// band width.
inline GCurve g_curve_bootstrap(const FitResult& fit_result, const PanelDataset& ds,
                                const Eigen::MatrixXd& grid, double level, int n_replications,
                                std::uint64_t seed, int workers = 0) {
  check_grid_in_hull(grid, ds.w());
  BootstrapPlan plan;
  plan.n_replications = n_replications;
  plan.seed = seed;
  plan.targets.beta_moments = false;
  plan.targets.g_bands = true;
  plan.g_grid = grid;
  plan.ci_level = level;
  BootstrapReport report = run_bootstrap(ds, fit_result.bandwidths, fit_result, plan, workers);
  LocalLinearSmoother smoother(ds.w(), fit_result.bandwidths.h_est);
  Eigen::VectorXd partial = ds.y() - ds.x() * fit_result.beta_hat;
  GCurve curve;
  curve.grid = grid;
  curve.method = GCurve::Method::bootstrap_percentile;
  curve.level = level;
  curve.g_hat = smoother.fit_values(grid, partial, workers).col(0);
  curve.band_lo = report.g_band_lo;
  curve.band_hi = report.g_band_hi;
  curve.se_pointwise = (curve.band_hi - curve.band_lo) / 2.0;
  return curve;
}

inline GCurve g_curve(const FitResult& fit_result, const PanelDataset& ds,
                      const Eigen::MatrixXd& grid, GCurve::Method method, double level = 0.95,
                      int n_replications = 199, std::uint64_t seed = kDefaultSeed,
                      int workers = 0) {
  if (method == GCurve::Method::plug_in)
    return g_curve_plugin(fit_result, ds, grid, level, workers);
  return g_curve_bootstrap(fit_result, ds, grid, level, n_replications, seed, workers);
}

}  // namespace panelfactor
