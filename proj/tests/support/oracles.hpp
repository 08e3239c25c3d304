// Reference implementations kept deliberately naive: dense matrices, plain
// bases, literal loops, long double accumulation. They share no code with the
// production paths they check.
#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Dense>

namespace oracles {

inline double epan(double u) { return std::abs(u) <= 1.0 ? 0.75 * (1.0 - u * u) : 0.0; }

// Product kernel without 1/h factors, matching the library convention.
inline double product_kernel(const Eigen::VectorXd& v, const Eigen::VectorXd& h) {
  double k = 1.0;
  for (Eigen::Index l = 0; l < v.size(); ++l) k *= epan(v[l] / h[l]);
  return k;
}

// One row of the local-linear smoother matrix at w0: the first row of
// (D'KD)^{-1} D'K with the plain basis D_r = [1, w_r - w0].
inline Eigen::RowVectorXd smoother_row(const Eigen::VectorXd& w0, const Eigen::MatrixXd& w,
                                       const Eigen::VectorXd& h) {
  const Eigen::Index n = w.rows(), d = w.cols();
  Eigen::MatrixXd design(n, 1 + d);
  Eigen::VectorXd kvec(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    design(r, 0) = 1.0;
    design.row(r).tail(d) = (w.row(r).transpose() - w0).transpose();
    kvec[r] = product_kernel(w.row(r).transpose() - w0, h);
  }
  Eigen::MatrixXd dk = design.transpose() * kvec.asDiagonal();
  Eigen::MatrixXd theta_map = (dk * design).fullPivLu().solve(dk);
  return theta_map.row(0);
}

inline Eigen::MatrixXd smoother_matrix(const Eigen::MatrixXd& w, const Eigen::VectorXd& h) {
  Eigen::MatrixXd s(w.rows(), w.rows());
  for (Eigen::Index r = 0; r < w.rows(); ++r)
    s.row(r) = smoother_row(w.row(r).transpose(), w, h);
  return s;
}

// Profile least squares through the dense smoother matrix.
struct DenseFit {
  Eigen::VectorXd beta;
  Eigen::VectorXd g_at_sample;
  Eigen::VectorXd residuals;
};

inline DenseFit dense_profile_fit(const Eigen::VectorXd& y, const Eigen::MatrixXd& x,
                                  const Eigen::MatrixXd& w, const Eigen::VectorXd& h) {
  Eigen::MatrixXd s = smoother_matrix(w, h);
  Eigen::MatrixXd x_t = x - s * x;
  Eigen::VectorXd y_t = y - s * y;
  DenseFit out;
  out.beta = (x_t.transpose() * x_t).fullPivLu().solve(x_t.transpose() * y_t);
  Eigen::VectorXd partial = y - x * out.beta;
  out.g_at_sample = s * partial;
  out.residuals = partial - out.g_at_sample;
  return out;
}

// Literal four-nested-loop evaluation of the pairwise statistic sums in long
// double. Residual/covariate layout is unit-major, row i*T + t.
struct LoopVnt {
  double v_nt = 0.0;
  double upsilon0_sq = 0.0;
};

inline LoopVnt loop_vnt(const Eigen::VectorXd& residuals, const Eigen::MatrixXd& chi,
                        const Eigen::VectorXd& h, int n_units, int n_periods) {
  const int d = static_cast<int>(chi.cols());
  long double v = 0.0L, u = 0.0L;
  for (int i = 0; i < n_units; ++i)
    for (int j = 0; j < n_units; ++j) {
      if (i == j) continue;
      for (int t = 0; t < n_periods; ++t)
        for (int s = 0; s < n_periods; ++s) {
          Eigen::Index a = static_cast<Eigen::Index>(i) * n_periods + t;
          Eigen::Index b = static_cast<Eigen::Index>(j) * n_periods + s;
          long double k = 1.0L;
          for (int l = 0; l < d; ++l) {
            long double z = (static_cast<long double>(chi(a, l)) - chi(b, l)) / h[l];
            k *= (z <= 1.0L && z >= -1.0L) ? 0.75L * (1.0L - z * z) : 0.0L;
          }
          long double prod = static_cast<long double>(residuals[a]) * residuals[b];
          v += k * prod;
          u += 2.0L * k * k * prod * prod;  // doubled so the i<j halves match
        }
    }
  long double hprod = 1.0L;
  for (Eigen::Index l = 0; l < h.size(); ++l) hprod *= h[l];
  long double nt2 = static_cast<long double>(n_units) * n_units *
                    static_cast<long double>(n_periods) * n_periods;
  LoopVnt out;
  out.v_nt = static_cast<double>(v / (nt2 * hprod));
  out.upsilon0_sq = static_cast<double>(u / (nt2 * hprod));
  return out;
}

// Pooled OLS by explicit normal equations plus the cluster-by-unit sandwich.
struct LoopOls {
  Eigen::VectorXd coef;
  Eigen::MatrixXd vcov_full;
  Eigen::VectorXd residuals;
};

inline LoopOls loop_ols(const Eigen::MatrixXd& design, const Eigen::VectorXd& y, int n_units,
                        int n_periods) {
  LoopOls out;
  Eigen::MatrixXd gram = design.transpose() * design;
  Eigen::MatrixXd gram_inv = gram.fullPivLu().inverse();
  out.coef = gram_inv * (design.transpose() * y);
  out.residuals = y - design * out.coef;
  Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(design.cols(), design.cols());
  for (int i = 0; i < n_units; ++i) {
    Eigen::VectorXd score = Eigen::VectorXd::Zero(design.cols());
    for (int t = 0; t < n_periods; ++t) {
      Eigen::Index r = static_cast<Eigen::Index>(i) * n_periods + t;
      score += design.row(r).transpose() * out.residuals[r];
    }
    meat += score * score.transpose();
  }
  out.vcov_full = gram_inv * meat * gram_inv;
  return out;
}

// Simpson quadrature of f over [-1, 1].
template <typename F>
double simpson(F f, int intervals) {
  double h = 2.0 / intervals;
  double acc = f(-1.0) + f(1.0);
  for (int k = 1; k < intervals; ++k) acc += f(-1.0 + k * h) * (k % 2 ? 4.0 : 2.0);
  return acc * h / 3.0;
}

}  // namespace oracles
