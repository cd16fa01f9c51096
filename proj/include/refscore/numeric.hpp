#pragma once

#include <cmath>
#include <limits>
#include <span>

namespace refscore::num {

inline constexpr double neg_inf = -std::numeric_limits<double>::infinity();

/// log(exp(a) + exp(b)) with the larger argument factored out.
inline double log_add_exp(double a, double b) noexcept {
  if (a < b) std::swap(a, b);
  if (b == neg_inf) return a;
  return a + std::log1p(std::exp(b - a));
}

/// log(exp(a) - exp(b)) for a >= b. Returns -inf when the difference is not positive.
inline double log_sub_exp(double a, double b) noexcept {
  if (b == neg_inf) return a;
  if (!(a > b)) return neg_inf;
  return a + std::log1p(-std::exp(b - a));
}

double log_sum_exp(std::span<const double> xs) noexcept;

/// log(1 / (1 + exp(-x))), accurate in both tails.
inline double log_sigmoid(double x) noexcept {
  return x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

inline double sigmoid(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double logit(double p) noexcept { return std::log(p) - std::log1p(-p); }

/// Standard normal quantile. Wichura's AS241 (PPND16) rational approximation,
/// relative accuracy about 1e-16 over the open unit interval.
double probit(double p);

double normal_cdf(double x) noexcept;

}  // namespace refscore::num
