#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>

namespace hpyts {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

inline double log_add_exp(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(-std::abs(a - b)));
}

inline double log_sum_exp(std::span<const double> xs) {
  double hi = kNegInf;
  for (double x : xs) hi = std::max(hi, x);
  if (hi == kNegInf) return kNegInf;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - hi);
  return hi + std::log(s);
}

// log of the rising factorial (a)_n = Gamma(a + n) / Gamma(a), a > 0.
inline double log_pochhammer(double a, double n) {
  if (n == 0.0) return 0.0;
  return std::lgamma(a + n) - std::lgamma(a);
}

inline double log_binomial(int n, int k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

inline double logit(double x) { return std::log(x) - std::log1p(-x); }

inline double inv_logit(double u) {
  return u >= 0.0 ? 1.0 / (1.0 + std::exp(-u)) : std::exp(u) / (1.0 + std::exp(u));
}

}  // namespace hpyts
