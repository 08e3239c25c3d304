#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "panelfactor/errors.hpp"
#include "panelfactor/kernels.hpp"
#include "panelfactor/panel_data.hpp"
#include "panelfactor/parallel.hpp"

namespace panelfactor {

struct LocalFit {
  double a = 0.0;            // fitted value at the evaluation point
  Eigen::VectorXd b;         // local slope
  double effective_n = 0.0;  // sum of K_h weights (1/h factors included)
};

// Local-linear smoother bound to (w, h). Each evaluation point solves the
// kernel-weighted least squares problem in the scaled basis [1, (w - w0)/h];
// rescaling keeps the normal matrix O(1) regardless of h. Candidate rows are
// windowed through an index sorted on the first coordinate, so the scan is
// proportional to the points actually under the kernel.
//
// The normal matrix gets a ridge of 1e-10 * trace before the Cholesky factor;
// two iterative-refinement steps against the unridged matrix then restore the
// clean solution to machine precision whenever the local problem is well
// posed. The refined residual is checked, and windows that are singular
// beyond the ridge floor raise InsufficientLocalData (bandwidth too small at
// that point). Local systems are always consistent, so rank-deficient but
// consistent windows (e.g. one point under the kernel) converge to the
// ridge-selected degenerate fit instead of failing.
class LocalLinearSmoother {
 public:
  LocalLinearSmoother(const Eigen::MatrixXd& w, Eigen::VectorXd h)
      : w_(w), h_(std::move(h)) {
    require(w_.rows() > 0, errc::invalid_argument, "smoother needs at least one row");
    require(h_.size() == w_.cols(), errc::dimension_mismatch,
            "got " + std::to_string(h_.size()) + " bandwidths for " +
                std::to_string(w_.cols()) + " smoothing coordinates");
    invh_.resize(h_.size());
    invh_prod_ = 1.0;
    for (Eigen::Index l = 0; l < h_.size(); ++l) {
      require(std::isfinite(h_[l]) && h_[l] > 0.0, errc::invalid_argument,
              "bandwidth " + std::to_string(l + 1) + " must be positive and finite");
      invh_[l] = 1.0 / h_[l];
      invh_prod_ *= invh_[l];
    }
    kd_ = std::pow(0.75, static_cast<double>(h_.size()));
    order_.resize(static_cast<std::size_t>(w_.rows()));
    for (std::size_t p = 0; p < order_.size(); ++p) order_[p] = static_cast<Eigen::Index>(p);
    std::sort(order_.begin(), order_.end(), [this](Eigen::Index a, Eigen::Index b) {
      double va = w_(a, 0), vb = w_(b, 0);
      return va != vb ? va < vb : a < b;
    });
    sorted_first_.resize(order_.size());
    for (std::size_t p = 0; p < order_.size(); ++p) sorted_first_[p] = w_(order_[p], 0);
  }

  const Eigen::MatrixXd& w() const { return w_; }
  const Eigen::VectorXd& h() const { return h_; }

  // fitted(g, c) = local-linear fit of targets.col(c) at eval_points.row(g).
  // Per-column accumulation order is fixed by the sorted window, so a batched
  // call and per-column calls produce bit-identical values.
  Eigen::MatrixXd fit_values(const Eigen::Ref<const Eigen::MatrixXd>& eval_points,
                             const Eigen::Ref<const Eigen::MatrixXd>& targets,
                             int workers = 0) const {
    require(eval_points.cols() == w_.cols(), errc::dimension_mismatch,
            "evaluation points have " + std::to_string(eval_points.cols()) +
                " coordinates, smoother has " + std::to_string(w_.cols()));
    require(targets.rows() == w_.rows(), errc::dimension_mismatch,
            "targets have " + std::to_string(targets.rows()) + " rows, smoother has " +
                std::to_string(w_.rows()));
    Eigen::MatrixXd fitted(eval_points.rows(), targets.cols());
    parallel_for(static_cast<std::size_t>(eval_points.rows()), workers, [&](std::size_t g) {
      Eigen::VectorXd w0 = eval_points.row(static_cast<Eigen::Index>(g)).transpose();
      Eigen::MatrixXd sol = solve_point(w0, targets, static_cast<Eigen::Index>(g), nullptr);
      fitted.row(static_cast<Eigen::Index>(g)) = sol.row(0);
    });
    return fitted;
  }

  LocalFit fit_at(const Eigen::VectorXd& w0, const Eigen::Ref<const Eigen::VectorXd>& target) const {
    require(w0.size() == w_.cols(), errc::dimension_mismatch,
            "evaluation point has " + std::to_string(w0.size()) + " coordinates, smoother has " +
                std::to_string(w_.cols()));
    require(target.size() == w_.rows(), errc::dimension_mismatch,
            "target has " + std::to_string(target.size()) + " rows, smoother has " +
                std::to_string(w_.rows()));
    double mass = 0.0;
    Eigen::MatrixXd sol = solve_point(w0, target, -1, &mass);
    LocalFit fit;
    fit.a = sol(0, 0);
    fit.b.resize(w_.cols());
    for (Eigen::Index l = 0; l < w_.cols(); ++l) fit.b[l] = sol(l + 1, 0) * invh_[l];
    fit.effective_n = mass * invh_prod_;
    return fit;
  }

 private:
  static constexpr double kRidge = 1e-10;

  // Solution columns in the scaled basis: row 0 holds fitted values, row 1+l
  // the slope with respect to (w_l - w0_l)/h_l.
  Eigen::MatrixXd solve_point(const Eigen::Ref<const Eigen::VectorXd>& w0,
                              const Eigen::Ref<const Eigen::MatrixXd>& targets,
                              Eigen::Index point_label, double* mass_out) const {
    const Eigen::Index dw = w_.cols();
    const Eigen::Index dim = dw + 1;
    const Eigen::Index m = targets.cols();
    auto lo_it = std::lower_bound(sorted_first_.begin(), sorted_first_.end(), w0[0] - h_[0]);
    auto hi_it = std::upper_bound(lo_it, sorted_first_.end(), w0[0] + h_[0]);
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(dim, dim);
    Eigen::MatrixXd R = Eigen::MatrixXd::Zero(dim, m);
    Eigen::VectorXd u(dw);
    double mass = 0.0;
    for (auto it = lo_it; it != hi_it; ++it) {
      Eigen::Index r = order_[static_cast<std::size_t>(it - sorted_first_.begin())];
      double kw = 1.0;
      for (Eigen::Index l = 0; l < dw; ++l) {
        double ul = (w_(r, l) - w0[l]) * invh_[l];
        if (std::abs(ul) > 1.0) {
          kw = 0.0;
          break;
        }
        u[l] = ul;
        kw *= 1.0 - ul * ul;
      }
      if (kw == 0.0) continue;
      kw *= kd_;
      mass += kw;
      M(0, 0) += kw;
      for (Eigen::Index a = 0; a < dw; ++a) {
        double kua = kw * u[a];
        M(0, a + 1) += kua;
        for (Eigen::Index b = a; b < dw; ++b) M(a + 1, b + 1) += kua * u[b];
      }
      for (Eigen::Index c = 0; c < m; ++c) {
        double tv = kw * targets(r, c);
        R(0, c) += tv;
        for (Eigen::Index a = 0; a < dw; ++a) R(a + 1, c) += tv * u[a];
      }
    }
    if (mass_out) *mass_out = mass;
    if (!(mass > 0.0) || !std::isfinite(mass))
      raise(errc::insufficient_local_data, "no kernel mass" + at_label(point_label) +
                                               "; the bandwidth is too small there");
    M = M.selfadjointView<Eigen::Upper>();
    double tr = M.trace();
    Eigen::MatrixXd P = M;
    P.diagonal().array() += kRidge * tr;
    Eigen::LLT<Eigen::MatrixXd> llt(P);
    if (llt.info() != Eigen::Success)
      raise(errc::insufficient_local_data,
            "local normal matrix could not be factored" + at_label(point_label));
    Eigen::MatrixXd sol = llt.solve(R);
    for (int step = 0; step < 2; ++step) sol += llt.solve(R - M * sol);
    Eigen::MatrixXd res = R - M * sol;
    double m_norm = M.cwiseAbs().maxCoeff();
    for (Eigen::Index c = 0; c < m; ++c) {
      double scale = R.col(c).cwiseAbs().maxCoeff() + m_norm * sol.col(c).cwiseAbs().maxCoeff();
      if (res.col(c).cwiseAbs().maxCoeff() > 1e-8 * scale + 1e-300)
        raise(errc::insufficient_local_data,
              "local solve is singular beyond the ridge floor" + at_label(point_label) +
                  "; the bandwidth is too small there");
    }
    return sol;
  }

  static std::string at_label(Eigen::Index point_label) {
    return point_label >= 0 ? " at evaluation point row " + std::to_string(point_label + 1)
                            : " at the requested point";
  }

  Eigen::MatrixXd w_;
  Eigen::VectorXd h_, invh_;
  std::vector<Eigen::Index> order_;
  std::vector<double> sorted_first_;
  double invh_prod_ = 1.0;
  double kd_ = 1.0;
};

// Convenience one-point fit; builds a throwaway smoother, so batch work
// should go through LocalLinearSmoother directly.
inline LocalFit fit_at_point(const Eigen::VectorXd& w0, const Eigen::MatrixXd& w,
                             const Eigen::VectorXd& target, const Eigen::VectorXd& h) {
  return LocalLinearSmoother(w, h).fit_at(w0, target);
}

struct ResidualizeResult {
  Eigen::VectorXd y_tilde;
  Eigen::MatrixXd x_tilde;
  Eigen::MatrixXd fitted;  // smoother applied to [y, x], columns in that order
};

// Kernel-residualizes y and every x column on w: out = (I - S) in, where S is
// the local-linear smoother matrix evaluated at the sample points.
inline ResidualizeResult residualize(const PanelDataset& ds, const Eigen::VectorXd& h_est,
                                     int workers = 0) {
  LocalLinearSmoother smoother(ds.w(), h_est);
  Eigen::MatrixXd targets(ds.n_rows(), 1 + ds.d_x());
  targets.col(0) = ds.y();
  targets.rightCols(ds.d_x()) = ds.x();
  ResidualizeResult out;
  out.fitted = smoother.fit_values(ds.w(), targets, workers);
  out.y_tilde = ds.y() - out.fitted.col(0);
  out.x_tilde = ds.x() - out.fitted.rightCols(ds.d_x());
  return out;
}

}  // namespace panelfactor
