#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "panelfactor/bootstrap.hpp"
#include "panelfactor/errors.hpp"
#include "panelfactor/estimator.hpp"
#include "panelfactor/panel_data.hpp"
#include "panelfactor/parallel.hpp"
#include "panelfactor/rng.hpp"
#include "panelfactor/spec_test.hpp"

namespace panelfactor {

// Data-generating recipe, versioned so reports can state exactly what was
// simulated. Interactive factor structure with one factor:
//   lambda_i ~ N(0,1)
//   f_t      AR(1), coefficient 0.5, unit innovations, stationary start
//   w_it  = 0.6*lambda_i + 0.6*f_t + zeta_it,  zeta ~ N(0, 0.5^2)
//   x_it  = 0.5*w_it + nu_it,                  nu   ~ N(0, 1)
//   z_t   = 0.5*f_t + e_t,                     e    ~ N(0, 1)   (varies only over t)
//   m0    = -w^2 + 2*w + xi_it,                xi   ~ N(0, 1)
//   y_it  = beta1*x_it + beta2*z_t + m0 + delta*(4*x^2 + z^3 - 3*w) + u_it
// Draw order is fixed: lambda (i asc), f (t asc), e (t asc), then per (i, t)
// in unit-major order zeta, nu, xi, u. Noise suppression zeroes xi and u but
// still consumes their draws, so covariates match across the switch.
inline constexpr const char* kDgpRecipe = "interactive-factor-dgp-v1";

struct DgpSpec {
  int n_units = 20;
  int n_periods = 20;
  double beta1 = 1.0;
  double beta2 = 1.0;
  double delta = 0.0;  // departure scale; 0 generates the null model
  std::uint64_t seed = kDefaultSeed;
  bool suppress_noise = false;
};

struct DgpTruth {
  Eigen::VectorXd g_true;  // -w^2 + 2w at the sample points
  Eigen::VectorXd m0;      // g_true + xi
  Eigen::VectorXd lambda;
  Eigen::VectorXd f;
};

inline PanelDataset generate(const DgpSpec& spec, Rng& rng, DgpTruth* truth = nullptr) {
  require(spec.n_units >= 2 && spec.n_periods >= 2, errc::invalid_argument,
          "recipe needs N >= 2 and T >= 2");
  const int N = spec.n_units, T = spec.n_periods;
  Eigen::VectorXd lambda(N), f(T), z(T);
  for (int i = 0; i < N; ++i) lambda[i] = rng.next_normal();
  f[0] = rng.next_normal() * std::sqrt(1.0 / (1.0 - 0.25));
  for (int t = 1; t < T; ++t) f[t] = 0.5 * f[t - 1] + rng.next_normal();
  for (int t = 0; t < T; ++t) z[t] = 0.5 * f[t] + rng.next_normal();
  const double noise = spec.suppress_noise ? 0.0 : 1.0;
  Eigen::Index n = static_cast<Eigen::Index>(N) * T;
  Eigen::VectorXd y(n), g_true(n), m0(n);
  Eigen::MatrixXd x(n, 2), w(n, 1);
  for (int i = 0; i < N; ++i) {
    for (int t = 0; t < T; ++t) {
      Eigen::Index r = static_cast<Eigen::Index>(i) * T + t;
      double zeta = 0.5 * rng.next_normal();
      double w_it = 0.6 * lambda[i] + 0.6 * f[t] + zeta;
      double nu = rng.next_normal();
      double x_it = 0.5 * w_it + nu;
      double xi = noise * rng.next_normal();
      double u = noise * rng.next_normal();
      double g = -w_it * w_it + 2.0 * w_it;
      double departure = spec.delta * (4.0 * x_it * x_it + z[t] * z[t] * z[t] - 3.0 * w_it);
      w(r, 0) = w_it;
      x(r, 0) = x_it;
      x(r, 1) = z[t];
      g_true[r] = g;
      m0[r] = g + xi;
      y[r] = spec.beta1 * x_it + spec.beta2 * z[t] + m0[r] + departure + u;
    }
  }
  if (truth) {
    truth->g_true = std::move(g_true);
    truth->m0 = std::move(m0);
    truth->lambda = std::move(lambda);
    truth->f = std::move(f);
  }
  std::vector<std::string> unit_ids(static_cast<std::size_t>(N)), time_ids(static_cast<std::size_t>(T));
  for (int i = 0; i < N; ++i) unit_ids[static_cast<std::size_t>(i)] = std::to_string(i + 1);
  for (int t = 0; t < T; ++t) time_ids[static_cast<std::size_t>(t)] = std::to_string(t + 1);
  return PanelDataset::from_arrays(std::move(y), std::move(x), std::move(w), std::move(unit_ids),
                                   std::move(time_ids), {1});
}

inline PanelDataset generate(const DgpSpec& spec, DgpTruth* truth = nullptr) {
  Rng rng = Rng::from_seed(spec.seed);
  return generate(spec, rng, truth);
}

struct StudyGrid {
  std::vector<int> n_units_list{20};
  std::vector<int> n_periods_list{20};
  std::vector<double> delta_list{0.0};
  int replications = 200;
  int bootstrap_replications = 199;  // 0 disables the specification test
  std::vector<double> levels{0.01, 0.05, 0.10};
  std::uint64_t seed = kDefaultSeed;
  bool run_naive = true;
  bool run_cce = true;
};

struct CellResult {
  int n_units = 0, n_periods = 0;
  double delta = 0.0;
  // Per-replication draws (valid replications only).
  Eigen::VectorXd beta1_hat, beta2_hat;
  Eigen::VectorXd g_bias, g_rmse;
  Eigen::VectorXd naive_beta1, naive_beta2, cce_beta1, cce_beta2;
  Eigen::VectorXd p_boot;  // NaN where the replication's test failed
  int failed_reps = 0;
  int test_failures = 0;
  // Aggregates.
  double beta1_bias = 0.0, beta1_rmse = 0.0, beta2_bias = 0.0, beta2_rmse = 0.0;
  double g_median_bias = 0.0, g_median_rmse = 0.0;
  double naive_beta1_bias = 0.0, naive_beta1_rmse = 0.0;
  double naive_beta2_bias = 0.0, naive_beta2_rmse = 0.0;
  double cce_beta1_bias = 0.0, cce_beta1_rmse = 0.0;
  double cce_beta2_bias = 0.0, cce_beta2_rmse = 0.0;
  std::vector<double> rejection_rates;  // aligned with StudyGrid::levels
};

struct MonteCarloReport {
  StudyGrid grid;
  std::vector<CellResult> cells;
  std::string recipe = kDgpRecipe;
  double elapsed_seconds = 0.0;
};

inline constexpr std::uint64_t kStudyDgpTag = 0x646770ULL;   // replication substream
inline constexpr std::uint64_t kStudyBootTag = 0x627374ULL;  // per-replication bootstrap seed

// Monte Carlo study over the (N, T, delta) grid. Tasks are flattened
// (cell, replication) pairs with per-task substreams and preallocated result
// slots, so the report is identical for any worker count. Nested parallelism
// is disabled inside each task.
inline MonteCarloReport run_study(const StudyGrid& grid, int workers = 0) {
  require(!grid.n_units_list.empty() && !grid.n_periods_list.empty() &&
              !grid.delta_list.empty(),
          errc::invalid_argument, "study grid has an empty dimension");
  require(grid.replications >= 1, errc::invalid_argument, "study needs replications >= 1");
  require(grid.bootstrap_replications == 0 || grid.bootstrap_replications >= 19,
          errc::invalid_argument, "bootstrap_replications must be 0 or >= 19");
  for (double level : grid.levels)
    require(level > 0.0 && level < 1.0, errc::invalid_argument,
            "levels must lie in (0,1)");

  struct Cell {
    int n, t;
    double delta;
  };
  std::vector<Cell> cells;
  for (int n : grid.n_units_list)
    for (int t : grid.n_periods_list)
      for (double delta : grid.delta_list) cells.push_back({n, t, delta});

  const int R = grid.replications;
  const int B = grid.bootstrap_replications;
  struct Slot {
    double beta1 = 0.0, beta2 = 0.0, g_bias = 0.0, g_rmse = 0.0;
    double naive_b1 = 0.0, naive_b2 = 0.0, cce_b1 = 0.0, cce_b2 = 0.0;
    double p = std::numeric_limits<double>::quiet_NaN();
    bool ok = false;
    bool test_failed = false;
  };
  std::vector<Slot> slots(cells.size() * static_cast<std::size_t>(R));
  auto started = std::chrono::steady_clock::now();

  parallel_for(slots.size(), workers, [&](std::size_t task) {
    std::size_t ci = task / static_cast<std::size_t>(R);
    int rep = static_cast<int>(task % static_cast<std::size_t>(R));
    const Cell& cell = cells[ci];
    Slot& slot = slots[task];
    Rng rng = Rng::from_seed(grid.seed, {kStudyDgpTag, ci, static_cast<std::uint64_t>(rep)});
    DgpSpec dgp;
    dgp.n_units = cell.n;
    dgp.n_periods = cell.t;
    dgp.delta = cell.delta;
    DgpTruth truth;
    PanelDataset ds = generate(dgp, rng, &truth);
    try {
      BandwidthSpec bw = default_bandwidths(ds);
      FitResult f = fit(ds, bw, 1);
      slot.beta1 = f.beta_hat[0];
      slot.beta2 = f.beta_hat[1];
      Eigen::VectorXd dev = f.g_hat_at_sample - truth.g_true;
      slot.g_bias = dev.mean();
      slot.g_rmse = std::sqrt(dev.squaredNorm() / static_cast<double>(dev.size()));
      if (grid.run_naive) {
        PooledFit nf = naive_fit(ds);
        slot.naive_b1 = nf.beta_hat[0];
        slot.naive_b2 = nf.beta_hat[1];
      }
      if (grid.run_cce) {
        // A time-only regressor is indistinguishable from a common factor, so
        // the CCE comparator absorbs it into the averages it projects out and
        // reports a coefficient only for the unit-varying block.
        std::vector<int> keep;
        for (int c = 0; c < ds.d_x(); ++c)
          if (!ds.time_only_x()[static_cast<std::size_t>(c)]) keep.push_back(c);
        slot.cce_b1 = slot.cce_b2 = std::numeric_limits<double>::quiet_NaN();
        if (!keep.empty() && ds.n_units() >= static_cast<int>(keep.size()) + 2) {
          Eigen::MatrixXd x_red(ds.n_rows(), static_cast<Eigen::Index>(keep.size()));
          for (std::size_t c = 0; c < keep.size(); ++c)
            x_red.col(static_cast<Eigen::Index>(c)) = ds.x().col(keep[c]);
          PanelDataset reduced = PanelDataset::from_arrays(ds.y(), std::move(x_red), ds.w(),
                                                           ds.unit_ids(), ds.time_ids());
          PooledFit cf = cce_pooled_fit(reduced);
          for (std::size_t c = 0; c < keep.size(); ++c) {
            if (keep[c] == 0) slot.cce_b1 = cf.beta_hat[static_cast<Eigen::Index>(c)];
            if (keep[c] == 1) slot.cce_b2 = cf.beta_hat[static_cast<Eigen::Index>(c)];
          }
        }
      }
      if (B > 0) {
        BootstrapPlan plan;
        plan.n_replications = B;
        plan.seed = Rng::derive_token(grid.seed, {kStudyBootTag, ci, static_cast<std::uint64_t>(rep)});
        plan.targets.beta_moments = false;
        plan.targets.test_pvalue = true;
        BootstrapReport br = run_bootstrap(ds, bw, f, plan, 1);
        if (br.test_pvalue) {
          slot.p = *br.test_pvalue;
        } else {
          slot.test_failed = true;
        }
      }
      slot.ok = true;
    } catch (const Error&) {
      slot.ok = false;
    }
  });

  MonteCarloReport report;
  report.grid = grid;
  for (std::size_t ci = 0; ci < cells.size(); ++ci) {
    CellResult cr;
    cr.n_units = cells[ci].n;
    cr.n_periods = cells[ci].t;
    cr.delta = cells[ci].delta;
    std::vector<double> b1, b2, gb, gr, nb1, nb2, cb1, cb2, ps;
    for (int rep = 0; rep < R; ++rep) {
      const Slot& slot = slots[ci * static_cast<std::size_t>(R) + static_cast<std::size_t>(rep)];
      if (!slot.ok) {
        ++cr.failed_reps;
        continue;
      }
      b1.push_back(slot.beta1);
      b2.push_back(slot.beta2);
      gb.push_back(slot.g_bias);
      gr.push_back(slot.g_rmse);
      if (grid.run_naive) {
        nb1.push_back(slot.naive_b1);
        nb2.push_back(slot.naive_b2);
      }
      if (grid.run_cce) {
        cb1.push_back(slot.cce_b1);
        cb2.push_back(slot.cce_b2);
      }
      if (B > 0) {
        if (slot.test_failed) {
          ++cr.test_failures;
        } else {
          ps.push_back(slot.p);
        }
      }
    }
    require(cr.failed_reps <= R / 20, errc::insufficient_local_data,
            "more than 5% of replications failed in cell (N=" + std::to_string(cr.n_units) +
                ", T=" + std::to_string(cr.n_periods) + ", delta=" + format_double(cr.delta) +
                ")");
    auto to_vec = [](const std::vector<double>& v) {
      return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()))
          .eval();
    };
    cr.beta1_hat = to_vec(b1);
    cr.beta2_hat = to_vec(b2);
    cr.g_bias = to_vec(gb);
    cr.g_rmse = to_vec(gr);
    cr.naive_beta1 = to_vec(nb1);
    cr.naive_beta2 = to_vec(nb2);
    cr.cce_beta1 = to_vec(cb1);
    cr.cce_beta2 = to_vec(cb2);
    cr.p_boot = to_vec(ps);
    auto moments = [](const Eigen::VectorXd& v, double target, double& bias, double& rmse) {
      if (v.size() == 0) {
        bias = rmse = std::numeric_limits<double>::quiet_NaN();
        return;
      }
      bias = v.mean() - target;
      rmse = std::sqrt((v.array() - target).square().mean());
    };
    moments(cr.beta1_hat, 1.0, cr.beta1_bias, cr.beta1_rmse);
    moments(cr.beta2_hat, 1.0, cr.beta2_bias, cr.beta2_rmse);
    moments(cr.naive_beta1, 1.0, cr.naive_beta1_bias, cr.naive_beta1_rmse);
    moments(cr.naive_beta2, 1.0, cr.naive_beta2_bias, cr.naive_beta2_rmse);
    moments(cr.cce_beta1, 1.0, cr.cce_beta1_bias, cr.cce_beta1_rmse);
    moments(cr.cce_beta2, 1.0, cr.cce_beta2_bias, cr.cce_beta2_rmse);
    if (gb.empty()) {
      cr.g_median_bias = cr.g_median_rmse = std::numeric_limits<double>::quiet_NaN();
    } else {
      cr.g_median_bias = quantile_type7(gb, 0.5);
      cr.g_median_rmse = quantile_type7(gr, 0.5);
    }
    if (B > 0) {
      for (double level : grid.levels) {
        if (ps.empty()) {
          cr.rejection_rates.push_back(std::numeric_limits<double>::quiet_NaN());
        } else {
          long rejected = 0;
          for (double p : ps)
            if (p <= level) ++rejected;
          cr.rejection_rates.push_back(static_cast<double>(rejected) /
                                       static_cast<double>(ps.size()));
        }
      }
    }
    report.cells.push_back(std::move(cr));
  }
  report.elapsed_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

}  // namespace panelfactor
