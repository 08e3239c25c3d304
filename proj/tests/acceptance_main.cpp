// Acceptance gate: one line per criterion, [PASS]/[FAIL], nonzero exit when
// any selected criterion fails. Criteria can be selected by number on the
// command line (default: all). Heavy studies run with 8 workers.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "panelfactor/bootstrap.hpp"
#include "panelfactor/estimator.hpp"
#include "panelfactor/simulation.hpp"
#include "panelfactor/spec_test.hpp"
#include "support/oracles.hpp"
#include "support/test_data.hpp"

using namespace panelfactor;

namespace {

constexpr int kWorkers = 8;
int g_failures = 0;

void report(int criterion, bool pass, const std::string& detail) {
  std::printf("[%s] criterion %d: %s\n", pass ? "PASS" : "FAIL", criterion, detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* pattern, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, pattern, a, b, c, d);
  return buf;
}

// Criterion 1: production profile estimate vs the dense smoother-matrix path.
void criterion_dense_oracle() {
  auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  const int shapes[][2] = {{4, 3}, {5, 4}, {6, 5}, {7, 5}, {5, 5}};
  for (int k = 0; k < 20; ++k) {
    int n = shapes[k % 5][0], t = shapes[k % 5][1];
    int d_x = 1 + (k % 2), d_w = 1 + ((k / 2) % 2);
    testdata::Instance inst =
        testdata::make_instance(n, t, d_x, d_w, 1000ULL + static_cast<std::uint64_t>(k));
    PanelDataset ds = testdata::to_dataset(inst);
    BandwidthSpec bw = default_bandwidths(ds);
    FitResult f = fit(ds, bw);
    oracles::DenseFit dense = oracles::dense_profile_fit(inst.y, inst.x, inst.w, bw.h_est);
    for (int c = 0; c < d_x; ++c) {
      double rel = std::abs(f.beta_hat[c] - dense.beta[c]) /
                   std::max(1.0, std::abs(dense.beta[c]));
      worst = std::max(worst, rel);
    }
  }
  double elapsed = seconds_since(t0);
  report(1, worst <= 1e-10 && elapsed < 5.0,
         fmt("dense smoother-matrix oracle, 20 instances: max rel err %.3g (<= 1e-10), "
             "%.2fs (< 5s)",
             worst, elapsed));
}

// Criterion 2: blocked pairwise sums vs the literal quadruple loop.
void criterion_loop_oracle() {
  auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  const int shapes[][4] = {{4, 3, 1, 1}, {6, 4, 2, 1}, {5, 5, 1, 2}, {8, 3, 2, 2}, {7, 4, 1, 3}};
  for (int k = 0; k < 20; ++k) {
    const int* s = shapes[k % 5];
    testdata::Instance inst =
        testdata::make_instance(s[0], s[1], s[2], s[3], 2000ULL + static_cast<std::uint64_t>(k));
    Eigen::MatrixXd chi(inst.y.size(), s[2] + s[3]);
    chi << inst.x, inst.w;
    Eigen::VectorXd h = Eigen::VectorXd::Constant(s[2] + s[3], 1.0 + 0.05 * (k % 4));
    Rng rng = Rng::from_seed(555ULL, {static_cast<std::uint64_t>(k)});
    Eigen::VectorXd e(inst.y.size());
    for (Eigen::Index r = 0; r < e.size(); ++r) e[r] = rng.next_normal();
    VntSums fast = accumulate_vnt(e, chi, h, s[0], s[1], kWorkers);
    oracles::LoopVnt slow = oracles::loop_vnt(e, chi, h, s[0], s[1]);
    worst = std::max(worst, std::abs(fast.v_nt - slow.v_nt) /
                                std::max(1.0, std::abs(slow.v_nt)));
    worst = std::max(worst, std::abs(fast.upsilon0_sq - slow.upsilon0_sq) /
                                std::max(1.0, slow.upsilon0_sq));
  }
  double elapsed = seconds_since(t0);
  report(2, worst <= 1e-12 && elapsed < 5.0,
         fmt("quadruple-loop oracle, 20 instances: max rel err %.3g (<= 1e-12), %.2fs (< 5s)",
             worst, elapsed));
}

// Criterion 3: exact recovery of a pure parametric signal and of affine g.
void criterion_exact_recovery() {
  testdata::Instance inst = testdata::make_instance(8, 8, 2, 1, 3000ULL);
  Eigen::VectorXd beta(2);
  beta << 2.0, -3.0;
  inst.y = inst.x * beta;
  PanelDataset ds = testdata::to_dataset(inst);
  FitResult f = fit(ds, default_bandwidths(ds), kWorkers);
  double beta_err = (f.beta_hat - beta).cwiseAbs().maxCoeff();

  testdata::Instance aff = testdata::make_instance(9, 7, 1, 2, 3001ULL);
  Eigen::VectorXd target =
      (1.25 + 0.8 * aff.w.col(0).array() - 0.6 * aff.w.col(1).array()).matrix();
  Eigen::VectorXd h = Eigen::VectorXd::Constant(2, 1.0);
  LocalLinearSmoother smoother(aff.w, h);
  Eigen::MatrixXd fitted = smoother.fit_values(aff.w, target, kWorkers);
  double g_err = (fitted.col(0) - target).cwiseAbs().maxCoeff();

  report(3, beta_err < 1e-8 && g_err < 1e-9,
         fmt("exact recovery: |beta_hat - beta| = %.3g (< 1e-8), affine-g max dev = %.3g "
             "(< 1e-9)",
             beta_err, g_err));
}

// Criteria 4 and 5 share one Monte Carlo study over the delta ladder.
const MonteCarloReport& power_study() {
  static std::optional<MonteCarloReport> cached;
  if (!cached) {
    StudyGrid grid;
    grid.n_units_list = {20};
    grid.n_periods_list = {20};
    grid.delta_list = {0.0, 0.25, 0.5, 0.75, 1.0};
    grid.replications = 200;
    grid.bootstrap_replications = 199;
    grid.levels = {0.01, 0.05, 0.10};
    grid.run_naive = false;
    grid.run_cce = false;
    std::printf("... running the size/power study (5 cells x 200 replications x 199 bootstrap "
                "draws)\n");
    std::fflush(stdout);
    cached = run_study(grid, kWorkers);
  }
  return *cached;
}

void criterion_size() {
  const MonteCarloReport& report_mc = power_study();
  double rate = report_mc.cells[0].rejection_rates[1];  // delta 0, level 0.05
  report(4, rate >= 0.02 && rate <= 0.10,
         fmt("size at nominal 5%% (N=T=20, R=200, B=199): %.3f in [0.02, 0.10]", rate));
}

void criterion_power() {
  const MonteCarloReport& mc = power_study();
  double at_one = mc.cells[4].rejection_rates[1];
  bool monotone = true;
  std::string curve;
  for (std::size_t c = 0; c < mc.cells.size(); ++c) {
    double r = mc.cells[c].rejection_rates[1];
    curve += (c ? ", " : "") + std::to_string(r).substr(0, 5);
    if (c > 0 && r < mc.cells[c - 1].rejection_rates[1] - 0.05) monotone = false;
  }
  report(5, at_one >= 0.8 && monotone,
         "power at delta=1: " + fmt("%.3f (>= 0.8)", at_one) +
             ", 5%-level curve over delta {0,.25,.5,.75,1}: [" + curve +
             "] monotone within 0.05: " + (monotone ? "yes" : "no"));
}

// Criterion 6: RMSE ladders. Strict decrease along N and along T.
void criterion_consistency() {
  StudyGrid grid;
  grid.n_units_list = {20, 50, 100};
  grid.n_periods_list = {20};
  grid.delta_list = {0.0};
  grid.replications = 200;
  grid.bootstrap_replications = 0;
  grid.run_naive = false;
  grid.run_cce = false;
  MonteCarloReport along_n = run_study(grid, kWorkers);

  grid.n_units_list = {20};
  grid.n_periods_list = {50, 100};
  MonteCarloReport along_t_tail = run_study(grid, kWorkers);

  std::vector<double> beta_n, g_n, beta_t, g_t;
  for (const CellResult& c : along_n.cells) {
    beta_n.push_back(c.beta1_rmse);
    g_n.push_back(c.g_median_rmse);
  }
  beta_t.push_back(along_n.cells[0].beta1_rmse);
  g_t.push_back(along_n.cells[0].g_median_rmse);
  for (const CellResult& c : along_t_tail.cells) {
    beta_t.push_back(c.beta1_rmse);
    g_t.push_back(c.g_median_rmse);
  }
  auto strictly_down = [](const std::vector<double>& v) {
    for (std::size_t k = 1; k < v.size(); ++k)
      if (!(v[k] < v[k - 1])) return false;
    return true;
  };
  bool ok = strictly_down(beta_n) && strictly_down(g_n) && strictly_down(beta_t) &&
            strictly_down(g_t);
  report(6, ok,
         fmt("RMSE(beta1) along N {20,50,100} at T=20: %.4f > %.4f > %.4f", beta_n[0], beta_n[1],
             beta_n[2]) +
             fmt("; along T {20,50,100} at N=20: %.4f > %.4f > %.4f", beta_t[0], beta_t[1],
                 beta_t[2]) +
             fmt("; median RMSE(g) ladders decreasing: N %.4f>%.4f>%.4f", g_n[0], g_n[1],
                 g_n[2]) +
             fmt(" T %.4f>%.4f>%.4f", g_t[0], g_t[1], g_t[2]));
}

// Criterion 7: null distribution of the standardized statistic at N=T=50.
void criterion_null_distribution() {
  const int reps = 200;
  std::vector<double> stats(reps);
  parallel_for(static_cast<std::size_t>(reps), kWorkers, [&](std::size_t rep) {
    DgpSpec spec;
    spec.n_units = 50;
    spec.n_periods = 50;
    spec.seed = Rng::derive_token(kDefaultSeed, {0x6E756C6CULL, rep});
    PanelDataset ds = generate(spec);
    BandwidthSpec bw = default_bandwidths(ds);
    FitResult f = fit(ds, bw, 1);
    stats[rep] = run_test(ds, bw, f, 1).standardized;
  });
  double mean = 0.0;
  for (double s : stats) mean += s;
  mean /= reps;
  double var = 0.0;
  for (double s : stats) var += (s - mean) * (s - mean);
  double sd = std::sqrt(var / (reps - 1));
  report(7, mean >= -0.35 && mean <= 0.35 && sd >= 0.7 && sd <= 1.3,
         fmt("null statistic at N=T=50, R=200: mean %.3f in [-0.35, 0.35], sd %.3f in "
             "[0.7, 1.3]",
             mean, sd));
}

// Criterion 8: wild-bootstrap structure: shared multipliers within units and
// the bootstrap covariance identity at B=2000.
void criterion_bootstrap_moments() {
  PanelDataset ds = testdata::make_dataset(12, 10, 1, 1, 4000ULL);
  BandwidthSpec bw = default_bandwidths(ds);
  FitResult f = fit(ds, bw, kWorkers);
  Eigen::VectorXd fitted = ds.y() - f.residuals;

  bool ratio_ok = true;
  for (int b = 0; b < 50 && ratio_ok; ++b) {
    Eigen::VectorXd y_star =
        make_bootstrap_sample_with(f, ds, bootstrap_multipliers(kDefaultSeed, b, ds.n_units()));
    for (int i = 0; i < ds.n_units() && ratio_ok; ++i) {
      double ref = (y_star[ds.row(i, 0)] - fitted[ds.row(i, 0)]) / f.residuals[ds.row(i, 0)];
      for (int t = 1; t < ds.n_periods(); ++t) {
        Eigen::Index r = ds.row(i, t);
        double ratio = (y_star[r] - fitted[r]) / f.residuals[r];
        if (std::abs(ratio - ref) > 1e-10 * std::max(1.0, std::abs(ref))) ratio_ok = false;
      }
    }
  }

  // Bootstrap residual products against their population targets:
  // same unit -> eps_it * eps_is, different units -> 0.
  const int B = 2000;
  struct Probe {
    Eigen::Index a, b;
    double target;
  };
  std::vector<Probe> probes;
  Rng pick = Rng::from_seed(4100ULL);
  for (int k = 0; k < 12; ++k) {
    int i = static_cast<int>(pick.next_unit() * ds.n_units()) % ds.n_units();
    int t = static_cast<int>(pick.next_unit() * ds.n_periods()) % ds.n_periods();
    int s = (t + 1 + static_cast<int>(pick.next_unit() * (ds.n_periods() - 1))) %
            ds.n_periods();
    int j = (i + 1 + static_cast<int>(pick.next_unit() * (ds.n_units() - 1))) % ds.n_units();
    probes.push_back({ds.row(i, t), ds.row(i, s),
                      f.residuals[ds.row(i, t)] * f.residuals[ds.row(i, s)]});
    probes.push_back({ds.row(i, t), ds.row(j, s), 0.0});
  }
  double worst_z = 0.0;
  for (const Probe& probe : probes) {
    double sum = 0.0, sum2 = 0.0;
    for (int b = 0; b < B; ++b) {
      Eigen::VectorXd theta = bootstrap_multipliers(kDefaultSeed, b, ds.n_units());
      Eigen::VectorXd y_star = make_bootstrap_sample_with(f, ds, theta);
      double prod = (y_star[probe.a] - fitted[probe.a]) * (y_star[probe.b] - fitted[probe.b]);
      sum += prod;
      sum2 += prod * prod;
    }
    double mean = sum / B;
    double se = std::sqrt((sum2 / B - mean * mean) / B);
    if (se > 0.0) worst_z = std::max(worst_z, std::abs(mean - probe.target) / se);
  }
  report(8, ratio_ok && worst_z <= 3.0,
         std::string("unit-constant multiplier ratios: ") + (ratio_ok ? "exact" : "BROKEN") +
             fmt("; covariance identity at B=2000: worst |z| = %.2f (<= 3)", worst_z));
}

// Criterion 9: worker-count invariance and the large-panel timing budget.
void criterion_determinism_scaling() {
  PanelDataset ds = testdata::make_dataset(15, 12, 2, 1, 5000ULL);
  BandwidthSpec bw = default_bandwidths(ds);
  bool identical = true;
  FitResult f1 = fit(ds, bw, 1);
  SpecTestResult t1 = run_test(ds, bw, f1, 1);
  BootstrapPlan plan;
  plan.n_replications = 19;
  plan.targets.test_pvalue = true;
  BootstrapReport b1 = run_bootstrap(ds, bw, f1, plan, 1);
  for (int workers : {4, 8}) {
    FitResult fk = fit(ds, bw, workers);
    SpecTestResult tk = run_test(ds, bw, fk, workers);
    BootstrapReport bk = run_bootstrap(ds, bw, fk, plan, workers);
    if (fk.beta_hat != f1.beta_hat || fk.residuals != f1.residuals ||
        tk.v_nt != t1.v_nt || tk.standardized != t1.standardized ||
        bk.beta_reps != b1.beta_reps ||
        bk.replication_statistics != b1.replication_statistics ||
        *bk.test_pvalue != *b1.test_pvalue)
      identical = false;
  }

  DgpSpec big;
  big.n_units = 100;
  big.n_periods = 100;
  big.seed = 5100ULL;
  PanelDataset large = generate(big);
  BandwidthSpec large_bw = default_bandwidths(large);
  FitResult large_fit = fit(large, large_bw, kWorkers);
  auto t0 = std::chrono::steady_clock::now();
  SpecTestResult large_test = run_test(large, large_bw, large_fit, kWorkers);
  double elapsed = seconds_since(t0);
  report(9, identical && elapsed < 60.0,
         std::string("worker counts {1,4,8} bit-identical: ") + (identical ? "yes" : "NO") +
             fmt("; N=T=100 specification test: %.1fs (< 60s), standardized %.2f", elapsed,
                 large_test.standardized));
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> selected;
  for (int a = 1; a < argc; ++a) selected.insert(std::atoi(argv[a]));
  auto want = [&](int c) { return selected.empty() || selected.count(c) > 0; };

  auto t0 = std::chrono::steady_clock::now();
  if (want(1)) criterion_dense_oracle();
  if (want(2)) criterion_loop_oracle();
  if (want(3)) criterion_exact_recovery();
  if (want(4)) criterion_size();
  if (want(5)) criterion_power();
  if (want(6)) criterion_consistency();
  if (want(7)) criterion_null_distribution();
  if (want(8)) criterion_bootstrap_moments();
  if (want(9)) criterion_determinism_scaling();
  std::printf("%s: %d criterion(s) failed, %.1fs total\n", g_failures ? "FAIL" : "PASS",
              g_failures, seconds_since(t0));
  return g_failures ? 1 : 0;
}
