#pragma once

#include <cmath>

#include "tweetcluster/common.hpp"

namespace tweetcluster {

// Digamma via the upward recurrence into x >= 6, then the asymptotic series
// ln x - 1/(2x) - 1/(12x^2) + 1/(120x^4) - 1/(252x^6).
inline double digamma(double x) {
  if (!(x > 0.0)) throw InvalidInput("digamma: argument must be positive");
  double r = 0.0;
  while (x < 6.0) {
    r -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  return r + std::log(x) - 0.5 * inv -
         inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 / 252.0));
}

namespace detail {

// Continued fraction for the incomplete beta, evaluated with the modified
// Lentz scheme. Converges for x < (a+1)/(a+b+2).
inline double beta_cont_frac(double a, double b, double x) {
  constexpr double tiny = 1e-300;
  constexpr double eps = 1e-16;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 500; ++m) {
    const int m2 = 2 * m;
    double num = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + num * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1.0 + num / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    num = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + num * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1.0 + num / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::fabs(delta - 1.0) < eps) break;
  }
  return h;
}

}  // namespace detail

// Regularized incomplete beta I_x(a, b).
inline double betainc_reg(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) throw InvalidInput("betainc_reg: a, b must be positive");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front = a * std::log(x) + b * std::log1p(-x) + std::lgamma(a + b) -
                          std::lgamma(a) - std::lgamma(b);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return front * detail::beta_cont_frac(a, b, x) / a;
  }
  return 1.0 - front * detail::beta_cont_frac(b, a, 1.0 - x) / b;
}

// Upper tail P(F > f) of the F(d1, d2) distribution.
inline double f_distribution_tail(double d1, double d2, double f) {
  if (!(d1 > 0.0) || !(d2 > 0.0)) throw InvalidInput("f_distribution_tail: dof must be positive");
  if (f <= 0.0) return 1.0;
  const double x = d2 / (d2 + d1 * f);
  return betainc_reg(0.5 * d2, 0.5 * d1, x);
}

}  // namespace tweetcluster
