#pragma once

#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "panelfactor/errors.hpp"
#include "panelfactor/kernels.hpp"
#include "panelfactor/local_linear.hpp"
#include "panelfactor/numeric.hpp"
#include "panelfactor/panel_data.hpp"
#include "panelfactor/parallel.hpp"

namespace panelfactor {

// Rule-of-thumb bandwidths: Silverman-style per-coordinate h for smoothing,
// and the faster-shrinking per-coordinate h for the test over [x, w].
inline BandwidthSpec default_bandwidths(const PanelDataset& ds) {
  BandwidthSpec bw;
  Eigen::Index n = ds.n_rows();
  bw.h_est.resize(ds.d_w());
  for (int l = 0; l < ds.d_w(); ++l) {
    double sd = sample_sd(ds.w().col(l));
    require(sd > 0.0, errc::degenerate_scale,
            "smoothing covariate " + std::to_string(l + 1) + " is constant");
    bw.h_est[l] = silverman_bandwidth(sd, n);
  }
  int d = ds.d_x() + ds.d_w();
  bw.h_test.resize(d);
  for (int c = 0; c < ds.d_x(); ++c) {
    double sd = sample_sd(ds.x().col(c));
    require(sd > 0.0, errc::degenerate_scale, "x column " + std::to_string(c + 1) + " is constant");
    bw.h_test[c] = default_test_bandwidth(sd, n, d);
  }
  for (int l = 0; l < ds.d_w(); ++l)
    bw.h_test[ds.d_x() + l] = default_test_bandwidth(sample_sd(ds.w().col(l)), n, d);
  bw.source = BandwidthSpec::Source::rule_of_thumb;
  return bw;
}

struct FitResult {
  Eigen::VectorXd beta_hat;
  Eigen::MatrixXd vcov_beta;  // cluster-by-unit sandwich
  Eigen::VectorXd g_hat_at_sample;
  Eigen::VectorXd residuals;
  Eigen::MatrixXd omega_x_hat;  // (NT)^{-1} x~' x~
  BandwidthSpec bandwidths;
};

// Profile estimator: kernel-residualize y and x on w, regress the residualized
// y on the residualized x, then smooth y - x*beta_hat to recover g.
inline FitResult fit(const PanelDataset& ds, const BandwidthSpec& bw, int workers = 0) {
  bw.validate();
  require(bw.h_est.size() == ds.d_w(), errc::dimension_mismatch,
          "expected " + std::to_string(ds.d_w()) + " smoothing bandwidths, got " +
              std::to_string(bw.h_est.size()));
  require(ds.n_rows() > ds.d_x() + ds.d_w() + 1, errc::invalid_argument,
          "not enough rows to identify the model");
  for (int c = 0; c < ds.d_x(); ++c) {
    double sd = sample_sd(ds.x().col(c));
    require(sd >= 1e-12, errc::singular_design,
            "x column " + std::to_string(c + 1) +
                " is (near-)constant; intercepts are absorbed by the smoothing step");
  }

  ResidualizeResult rz = residualize(ds, bw.h_est, workers);
  Eigen::MatrixXd gram = rz.x_tilde.transpose() * rz.x_tilde;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
  double lam_max = es.eigenvalues().cwiseAbs().maxCoeff();
  require(es.eigenvalues().minCoeff() > 1e-12 * lam_max, errc::singular_design,
          "residualized design is rank-deficient; some x column is explained by w");
  Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
  FitResult out;
  out.beta_hat = ldlt.solve(rz.x_tilde.transpose() * rz.y_tilde);

  LocalLinearSmoother smoother(ds.w(), bw.h_est);
  Eigen::VectorXd partial = ds.y() - ds.x() * out.beta_hat;
  out.g_hat_at_sample = smoother.fit_values(ds.w(), partial, workers).col(0);
  out.residuals = partial - out.g_hat_at_sample;

  int n_units = ds.n_units(), n_periods = ds.n_periods();
  Eigen::MatrixXd gram_inv = ldlt.solve(Eigen::MatrixXd::Identity(ds.d_x(), ds.d_x()));
  Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(ds.d_x(), ds.d_x());
  for (int i = 0; i < n_units; ++i) {
    Eigen::Index lo = static_cast<Eigen::Index>(i) * n_periods;
    Eigen::VectorXd score =
        rz.x_tilde.middleRows(lo, n_periods).transpose() * out.residuals.segment(lo, n_periods);
    meat.noalias() += score * score.transpose();
  }
  // The triple product drifts off symmetry in the last ulps; fold it back.
  Eigen::MatrixXd vcov = gram_inv * meat * gram_inv;
  out.vcov_beta = 0.5 * (vcov + vcov.transpose());
  out.omega_x_hat = gram / static_cast<double>(ds.n_rows());
  out.bandwidths = bw;
  return out;
}

struct GCurve {
  Eigen::MatrixXd grid;
  Eigen::VectorXd g_hat;
  // Plug-in standard errors, or half the percentile band width for the
  // bootstrap path; `method` says which.
  Eigen::VectorXd se_pointwise;
  Eigen::VectorXd band_lo, band_hi;
  enum class Method { bootstrap_percentile, plug_in };
  Method method = Method::plug_in;
  double level = 0.95;
};

inline void check_grid_in_hull(const Eigen::Ref<const Eigen::MatrixXd>& grid,
                               const Eigen::MatrixXd& w) {
  require(grid.cols() == w.cols(), errc::dimension_mismatch,
          "grid has " + std::to_string(grid.cols()) + " coordinates, data has " +
              std::to_string(w.cols()));
  require(grid.rows() > 0, errc::invalid_argument, "grid is empty");
  for (Eigen::Index l = 0; l < w.cols(); ++l) {
    double lo = w.col(l).minCoeff(), hi = w.col(l).maxCoeff();
    for (Eigen::Index g = 0; g < grid.rows(); ++g)
      require(grid(g, l) >= lo && grid(g, l) <= hi, errc::grid_outside_hull,
              "grid point " + std::to_string(g + 1) + " coordinate " + std::to_string(l + 1) +
                  " lies outside the observed range [" + format_double(lo) + ", " +
                  format_double(hi) + "]");
  }
}

// Curve of g on a grid with plug-in pointwise variance: a kernel density and
// a unit-aggregated residual second moment, combined as
//   SE^2(w0) = nu0^{d_w} * Psi(w0) / (rho(w0) * N*T*prod(h)),
//   Psi(w0)  = (N*T*prod(h))^{-1} sum_i [sum_t K((w_it-w0)/h) e_it]^2 / rho(w0),
// with unnormalized product kernels and the 1/prod(h) factors explicit.
inline GCurve g_curve_plugin(const FitResult& fit_result, const PanelDataset& ds,
                             const Eigen::MatrixXd& grid, double level = 0.95, int workers = 0) {
  require(level > 0.0 && level < 1.0, errc::invalid_argument, "ci level must lie in (0,1)");
  check_grid_in_hull(grid, ds.w());
  const Eigen::VectorXd& h = fit_result.bandwidths.h_est;
  LocalLinearSmoother smoother(ds.w(), h);
  Eigen::VectorXd partial = ds.y() - ds.x() * fit_result.beta_hat;
  GCurve curve;
  curve.grid = grid;
  curve.method = GCurve::Method::plug_in;
  curve.level = level;
  curve.g_hat = smoother.fit_values(grid, partial, workers).col(0);
  curve.se_pointwise.resize(grid.rows());
  double prod_h = 1.0;
  for (Eigen::Index l = 0; l < h.size(); ++l) prod_h *= h[l];
  double nt = static_cast<double>(ds.n_rows());
  double nu0_pow = std::pow(kKernelNu0, static_cast<double>(ds.d_w()));
  int n_units = ds.n_units(), n_periods = ds.n_periods();
  parallel_for(static_cast<std::size_t>(grid.rows()), workers, [&](std::size_t gi) {
    Eigen::Index g = static_cast<Eigen::Index>(gi);
    double rho_sum = 0.0, psi_sum = 0.0;
    for (int i = 0; i < n_units; ++i) {
      double unit_sum = 0.0;
      for (int t = 0; t < n_periods; ++t) {
        Eigen::Index r = static_cast<Eigen::Index>(i) * n_periods + t;
        double k = 1.0;
        for (int l = 0; l < ds.d_w(); ++l) {
          k *= epanechnikov((ds.w()(r, l) - grid(g, l)) / h[l]);
          if (k == 0.0) break;
        }
        if (k == 0.0) continue;
        rho_sum += k;
        unit_sum += k * fit_result.residuals[r];
      }
      psi_sum += unit_sum * unit_sum;
    }
    double rho = rho_sum / (nt * prod_h);
    if (!(rho > 0.0))
      raise(errc::insufficient_local_data,
            "no kernel mass at grid point " + std::to_string(g + 1));
    double psi = psi_sum / (nt * prod_h) / rho;
    curve.se_pointwise[g] = std::sqrt(nu0_pow * psi / (rho * nt * prod_h));
  });
  double z = normal_quantile(1.0 - (1.0 - level) / 2.0);
  curve.band_lo = curve.g_hat - z * curve.se_pointwise;
  curve.band_hi = curve.g_hat + z * curve.se_pointwise;
  return curve;
}

struct PooledFit {
  Eigen::VectorXd beta_hat;   // coefficients on the x block
  Eigen::MatrixXd vcov_beta;  // cluster-by-unit sandwich, x block
  double intercept = 0.0;
  Eigen::VectorXd coef_full;  // intercept, x block, then any augmentation
  Eigen::VectorXd residuals;
};

namespace detail {

inline PooledFit pooled_ols(const Eigen::MatrixXd& design, const Eigen::VectorXd& y, int n_units,
                            int n_periods, int d_x, const std::string& context) {
  Eigen::MatrixXd gram = design.transpose() * design;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
  double lam_max = es.eigenvalues().cwiseAbs().maxCoeff();
  require(lam_max > 0.0 && es.eigenvalues().minCoeff() > 1e-10 * lam_max, errc::singular_design,
          context + ": design matrix is rank-deficient");
  Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
  PooledFit out;
  out.coef_full = ldlt.solve(design.transpose() * y);
  out.residuals = y - design * out.coef_full;
  Eigen::MatrixXd gram_inv = ldlt.solve(Eigen::MatrixXd::Identity(design.cols(), design.cols()));
  Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(design.cols(), design.cols());
  for (int i = 0; i < n_units; ++i) {
    Eigen::Index lo = static_cast<Eigen::Index>(i) * n_periods;
    Eigen::VectorXd score =
        design.middleRows(lo, n_periods).transpose() * out.residuals.segment(lo, n_periods);
    meat.noalias() += score * score.transpose();
  }
  Eigen::MatrixXd vcov_raw = gram_inv * meat * gram_inv;
  Eigen::MatrixXd vcov_full = 0.5 * (vcov_raw + vcov_raw.transpose());
  out.intercept = out.coef_full[0];
  out.beta_hat = out.coef_full.segment(1, d_x);
  out.vcov_beta = vcov_full.block(1, 1, d_x, d_x);
  return out;
}

}  // namespace detail

// Pooled OLS of y on [1, x]; ignores the factor structure entirely.
inline PooledFit naive_fit(const PanelDataset& ds) {
  Eigen::MatrixXd design(ds.n_rows(), 1 + ds.d_x());
  design.col(0).setOnes();
  design.rightCols(ds.d_x()) = ds.x();
  return detail::pooled_ols(design, ds.y(), ds.n_units(), ds.n_periods(), ds.d_x(),
                            "pooled OLS");
}

// Pooled regression augmented with period cross-sectional averages of y and x.
inline PooledFit cce_pooled_fit(const PanelDataset& ds) {
  require(ds.n_units() >= ds.d_x() + 2, errc::invalid_argument,
          "cross-sectional-average augmentation needs N >= d_x + 2");
  for (int c = 0; c < ds.d_x(); ++c)
    require(!ds.time_only_x()[static_cast<std::size_t>(c)], errc::singular_design,
            "x column " + std::to_string(c + 1) +
                " varies only over time, so it is collinear with its own cross-sectional average");
  int n_units = ds.n_units(), n_periods = ds.n_periods(), d_x = ds.d_x();
  Eigen::VectorXd ybar = Eigen::VectorXd::Zero(n_periods);
  Eigen::MatrixXd xbar = Eigen::MatrixXd::Zero(n_periods, d_x);
  for (int t = 0; t < n_periods; ++t) {
    for (int i = 0; i < n_units; ++i) {
      Eigen::Index r = static_cast<Eigen::Index>(i) * n_periods + t;
      ybar[t] += ds.y()[r];
      xbar.row(t) += ds.x().row(r);
    }
  }
  ybar /= static_cast<double>(n_units);
  xbar /= static_cast<double>(n_units);
  Eigen::MatrixXd design(ds.n_rows(), 1 + d_x + 1 + d_x);
  design.col(0).setOnes();
  design.middleCols(1, d_x) = ds.x();
  for (int i = 0; i < n_units; ++i)
    for (int t = 0; t < n_periods; ++t) {
      Eigen::Index r = static_cast<Eigen::Index>(i) * n_periods + t;
      design(r, 1 + d_x) = ybar[t];
      design.row(r).tail(d_x) = xbar.row(t);
    }
  return detail::pooled_ols(design, ds.y(), n_units, n_periods, d_x,
                            "cross-sectional-average augmented regression");
}

}  // namespace panelfactor
