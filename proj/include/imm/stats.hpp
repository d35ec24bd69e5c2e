#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>

#include "imm/util.hpp"

namespace imm {

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x * M_SQRT1_2); }

// Upper tail P(Z > x); accurate far into the tail via erfc.
inline double normal_sf(double x) { return 0.5 * std::erfc(x * M_SQRT1_2); }

inline double normal_log_pdf(double x, double mean, double var) {
  double r = x - mean;
  return -0.5 * std::log(kTwoPi * var) - r * r / (2.0 * var);
}

inline double log_beta_fn(double a, double b) {
  return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
}

// log Beta(x; a, b) density on (0,1); -inf outside.
inline double beta_log_pdf(double x, double a, double b) {
  if (!(x > 0.0 && x < 1.0)) return kNegInf;
  return (a - 1.0) * std::log(x) + (b - 1.0) * std::log1p(-x) - log_beta_fn(a, b);
}

inline double beta_pdf(double x, double a, double b) {
  double lp = beta_log_pdf(x, a, b);
  return lp == kNegInf ? 0.0 : std::exp(lp);
}

// log of the log-normal(mu, s2) density evaluated at x > 0.
inline double lognormal_log_pdf(double x, double mu, double s2) {
  if (!(x > 0.0)) return kNegInf;
  double lx = std::log(x);
  double r = lx - mu;
  return -lx - 0.5 * std::log(kTwoPi * s2) - r * r / (2.0 * s2);
}

inline double logit(double p) { return std::log(p) - std::log1p(-p); }
inline double inv_logit(double u) { return 1.0 / (1.0 + std::exp(-u)); }

namespace detail {
inline double simpson_rec(const std::function<double(double)>& f, double a,
                          double b, double fa, double fm, double fb,
                          double whole, double tol, int depth) {
  double m = 0.5 * (a + b);
  double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  double flm = f(lm), frm = f(rm);
  double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  double delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * tol) {
    return left + right + delta / 15.0;
  }
  return simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}
}  // namespace detail

// Adaptive Simpson quadrature on [a, b].
inline double integrate_adaptive(const std::function<double(double)>& f,
                                 double a, double b, double tol = 1e-10,
                                 int max_depth = 48) {
  if (!(b > a)) return 0.0;
  double m = 0.5 * (a + b);
  double fa = f(a), fm = f(m), fb = f(b);
  double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return detail::simpson_rec(f, a, b, fa, fm, fb, whole, tol, max_depth);
}

}  // namespace imm
