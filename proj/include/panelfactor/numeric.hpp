#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "panelfactor/errors.hpp"

namespace panelfactor {

// Neumaier-compensated accumulator. Error stays ~2 ulp of sum|x| independent
// of length; callers that need order-independent totals use ExactSum instead.
class CompensatedSum {
 public:
  void add(double x) {
    double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

// Exact summation via a Shewchuk nonoverlapping expansion with fsum-style
// final rounding. The result is the correctly rounded sum of the inputs, so
// it is bit-identical under any reordering -- this is what makes pair-sum
// reductions invariant to unit relabeling and worker count.
class ExactSum {
 public:
  void add(double x) {
    std::size_t out = 0;
    for (std::size_t i = 0; i < parts_.size(); ++i) {
      double p = parts_[i];
      double hi = x + p;
      double v = hi - x;
      double lo = (p - v) + (x - (hi - v));
      if (lo != 0.0) parts_[out++] = lo;
      x = hi;
    }
    parts_.resize(out);
    parts_.push_back(x);
  }

  double value() const {
    // Round the expansion: top partial plus a correction, with the half-even
    // tie adjustment from CPython's fsum.
    std::ptrdiff_t n = static_cast<std::ptrdiff_t>(parts_.size());
    if (n == 0) return 0.0;
    double hi = parts_[--n];
    double lo = 0.0;
    while (n > 0) {
      double x = hi;
      double y = parts_[--n];
      hi = x + y;
      double yr = hi - x;
      lo = y - yr;
      if (lo != 0.0) break;
    }
    if (n > 0 && ((lo < 0.0 && parts_[n - 1] < 0.0) || (lo > 0.0 && parts_[n - 1] > 0.0))) {
      double y = lo * 2.0;
      double x = hi + y;
      if (y == x - hi) hi = x;
    }
    return hi;
  }

 private:
  std::vector<double> parts_;
};

inline double normal_cdf(double x) {
  return 0.5 * std::erfc(-x * 0.70710678118654752440);
}

// Inverse normal CDF: Acklam's rational approximation polished with one
// Halley step against erfc, good to ~1e-15 over (0,1).
inline double normal_quantile(double p) {
  require(p > 0.0 && p < 1.0, errc::invalid_argument, "quantile level must lie in (0,1)");
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double p_low = 0.02425;
  double x;
  if (p < p_low) {
    double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    double q = p - 0.5, r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  double e = normal_cdf(x) - p;
  double u = e * std::sqrt(2.0 * M_PI) * std::exp(0.5 * x * x);
  return x - u / (1.0 + 0.5 * x * u);
}

// Type-7 sample quantile (linear interpolation between order statistics).
inline double quantile_type7(std::vector<double> v, double p) {
  require(!v.empty(), errc::invalid_argument, "quantile of an empty sample");
  require(p >= 0.0 && p <= 1.0, errc::invalid_argument, "quantile level must lie in [0,1]");
  std::sort(v.begin(), v.end());
  double pos = p * static_cast<double>(v.size() - 1);
  std::size_t lo = static_cast<std::size_t>(pos);
  if (lo + 1 >= v.size()) return v.back();
  double frac = pos - static_cast<double>(lo);
  return v[lo] + frac * (v[lo + 1] - v[lo]);
}

inline double sample_sd(const Eigen::Ref<const Eigen::VectorXd>& v) {
  require(v.size() >= 2, errc::invalid_argument, "sd needs at least two observations");
  double mean = v.mean();
  double ss = (v.array() - mean).square().sum();
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

// Shortest round-trip decimal representation.
inline std::string format_double(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

}  // namespace panelfactor
