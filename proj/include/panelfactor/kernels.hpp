#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include <Eigen/Dense>

#include "panelfactor/errors.hpp"

namespace panelfactor {

// Epanechnikov k(u) = 0.75 (1 - u^2) on |u| <= 1, the only built-in kernel.
inline constexpr double kKernelSupport = 1.0;  // compact support radius
inline constexpr double kKernelNu0 = 0.6;      // int k(u)^2 du
inline constexpr double kKernelMu2 = 0.2;      // int u^2 k(u) du

inline double epanechnikov(double u) {
  return std::abs(u) <= 1.0 ? 0.75 * (1.0 - u * u) : 0.0;
}

// Unnormalized product kernel prod_l k(v_l / h_l). Call sites own their 1/h
// factors: the test statistic divides by prod(h) explicitly, and smoother
// weights carry a common factor that cancels in the local solve.
inline double product_kernel(const Eigen::Ref<const Eigen::VectorXd>& v,
                             const Eigen::Ref<const Eigen::VectorXd>& h) {
  require(v.size() == h.size(), errc::dimension_mismatch,
          "product_kernel: point has " + std::to_string(v.size()) + " coordinates but " +
              std::to_string(h.size()) + " bandwidths were given");
  double k = 1.0;
  for (Eigen::Index l = 0; l < v.size(); ++l) {
    k *= epanechnikov(v[l] / h[l]);
    if (k == 0.0) return 0.0;
  }
  return k;
}

// Rule-of-thumb smoothing bandwidth 2.345 * sd * n^{-1/5}.
inline double silverman_bandwidth(double sd, std::int64_t n_obs) {
  require(n_obs >= 2, errc::invalid_argument, "bandwidth rule needs n >= 2");
  require(std::isfinite(sd) && sd > 0.0, errc::degenerate_scale,
          "bandwidth rule needs a strictly positive, finite scale");
  return 2.345 * sd * std::pow(static_cast<double>(n_obs), -0.2);
}

// Test bandwidth 2.345 * sd * n^{-2/(d+4)}; undersmooths relative to the
// estimation rate once d > 1.
inline double default_test_bandwidth(double sd, std::int64_t n_obs, int d) {
  require(d >= 1, errc::invalid_argument, "test bandwidth needs dimension d >= 1");
  require(n_obs >= 2, errc::invalid_argument, "bandwidth rule needs n >= 2");
  require(std::isfinite(sd) && sd > 0.0, errc::degenerate_scale,
          "bandwidth rule needs a strictly positive, finite scale");
  return 2.345 * sd * std::pow(static_cast<double>(n_obs), -2.0 / (static_cast<double>(d) + 4.0));
}

struct BandwidthSpec {
  Eigen::VectorXd h_est;   // one per smoothing coordinate
  Eigen::VectorXd h_test;  // one per test coordinate (regressors then smoothing covariates)
  enum class Source { rule_of_thumb, user_supplied };
  Source source = Source::rule_of_thumb;

  void validate() const {
    for (Eigen::Index l = 0; l < h_est.size(); ++l) {
      require(std::isfinite(h_est[l]) && h_est[l] > 0.0, errc::invalid_argument,
              "estimation bandwidth " + std::to_string(l + 1) + " must be positive and finite");
    }
    for (Eigen::Index l = 0; l < h_test.size(); ++l) {
      require(std::isfinite(h_test[l]) && h_test[l] > 0.0, errc::invalid_argument,
              "test bandwidth " + std::to_string(l + 1) + " must be positive and finite");
    }
  }
};

}  // namespace panelfactor
