#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "imm/geometry.hpp"
#include "imm/ou_kernel.hpp"
#include "imm/stats.hpp"
#include "imm/util.hpp"

namespace imm {

// Non-throwing Gaussian log density: -inf when the covariance is not
// numerically positive definite (degenerate site-fidelity steps, underflow).
inline double safe_mvn_logpdf(const Vec2& x, const Vec2& mean, const Mat2& cov) {
  double a = cov(0, 0), b = cov(0, 1), c = cov(1, 1);
  double det = a * c - b * b;
  if (!(det > 0.0) || !(a > 0.0)) return kNegInf;
  double dx = x.x() - mean.x(), dy = x.y() - mean.y();
  double q = (c * dx * dx - 2.0 * b * dx * dy + a * dy * dy) / det;
  return -std::log(kTwoPi) - 0.5 * std::log(det) - 0.5 * q;
}

// Movement and heterogeneity parameters of one subpopulation. Prior
// covariances are parameterized as log-variances (tau) plus a correlation in
// (0,1), which keeps every materialized matrix SPD.
struct SubpopParams {
  double theta = 1.0;
  double sigma2 = 1.0;
  Vec2 mu_w = Vec2::Zero();
  Vec2 mu_s = Vec2::Zero();
  double tau_w1 = 0.0, tau_w2 = 0.0, rho_w = 0.5;
  double tau_s1 = 0.0, tau_s2 = 0.0, rho_s = 0.5;
  double alpha[4] = {2.0, 2.0, 2.0, 2.0};

  OuRegimeParams ou() const { return {theta, sigma2}; }

  static Mat2 build_cov(double tau1, double tau2, double rho) {
    double off = rho * std::exp(0.5 * (tau1 + tau2));
    Mat2 m;
    m << std::exp(tau1), off, off, std::exp(tau2);
    return m;
  }
  Mat2 sigma_w() const { return build_cov(tau_w1, tau_w2, rho_w); }
  Mat2 sigma_s() const { return build_cov(tau_s1, tau_s2, rho_s); }
};

// Parameters shared across subpopulations: site-fidelity rates (per year),
// mixture weights, and the abundance error variance.
struct GlobalParams {
  double delta_w = 1.0;
  double delta_s = 1.0;
  double kappa2 = 1e-4;
  std::vector<double> eta;  // one weight per subpopulation

  // Each weight is at least 0.05; the remaining mass is a free simplex.
  static double eta_floor() { return 0.05; }
  static double eta_scale(std::size_t P) {
    return 1.0 - eta_floor() * static_cast<double>(P);
  }
};

// One posterior draw of all population-level parameters.
struct ParamDraw {
  std::vector<SubpopParams> subpops;
  GlobalParams global;
};

// One bird-year of latent attractive points. When `linked` is set the year
// directly follows an observed year, m1 coincides with the previous year's
// m3 and is not a free parameter (the stored m1 is ignored).
struct YearLatent {
  int year = 0;
  bool linked = false;
  Vec2 m1 = Vec2::Zero();
  Vec2 m2 = Vec2::Zero();
  Vec2 m3 = Vec2::Zero();
};

// Latent state of one bird: timing variables shared across its years, plus
// per-year attractive points ordered by calendar year.
struct LatentIndividual {
  std::string bird_id;
  int subpop = 0;  // 0-based index
  double a1 = 0.5;
  double a2 = 0.5;
  std::vector<YearLatent> years;

  const Vec2& m1_of(std::size_t k) const {
    if (years[k].linked) return years[k - 1].m3;
    return years[k].m1;
  }
};

// b1 = 151 a1 + 15 in (15,166); b2 = 154 a2 + 196 in (196,350).
inline TimingPair timing_from_latent(double a1, double a2) {
  if (!(a1 > 0.0 && a1 < 1.0 && a2 > 0.0 && a2 < 1.0)) {
    throw std::invalid_argument("timing_from_latent: a1, a2 must lie in (0,1)");
  }
  return TimingPair(151.0 * a1 + 15.0, 154.0 * a2 + 196.0);
}

inline void latent_from_timing(const TimingPair& t, double& a1, double& a2) {
  a1 = (t.spring_onset - 15.0) / 151.0;
  a2 = (t.fall_onset - 196.0) / 154.0;
}

inline double timing_log_prior(double a1, double a2, const SubpopParams& sp) {
  return beta_log_pdf(a1, sp.alpha[0], sp.alpha[1]) +
         beta_log_pdf(a2, sp.alpha[2], sp.alpha[3]);
}

// Joint prior of one bird's attractive points across its observed years.
// First observed year draws from the stationary laws; later years follow
// AR(1) links whose strength decays with the calendar gap. Consecutive years
// share m3 -> m1 exactly and contribute no density for m1.
inline double attractor_log_prior(const LatentIndividual& bird,
                                  const SubpopParams& sp,
                                  const GlobalParams& global) {
  if (bird.years.empty()) {
    throw std::invalid_argument("attractor_log_prior: bird has no years");
  }
  const Mat2 sw = sp.sigma_w();
  const Mat2 ss = sp.sigma_s();
  double lp = 0.0;
  for (std::size_t k = 0; k < bird.years.size(); ++k) {
    const YearLatent& yr = bird.years[k];
    const Vec2& m1 = bird.m1_of(k);
    if (k == 0) {
      lp += safe_mvn_logpdf(m1, sp.mu_w, sw);
      lp += safe_mvn_logpdf(yr.m2, sp.mu_s, ss);
    } else {
      const YearLatent& prev = bird.years[k - 1];
      int gap = yr.year - prev.year;
      if (gap < 1) {
        throw std::invalid_argument("attractor_log_prior: years must be sorted");
      }
      if (gap == 1) {
        if (!yr.linked) {
          throw std::invalid_argument(
              "attractor_log_prior: consecutive year must be linked");
        }
        // m1 == previous m3 by construction; no density term.
      } else {
        double e1 = std::exp(-global.delta_w * (gap - 1));
        lp += safe_mvn_logpdf(m1, e1 * prev.m3 + (1.0 - e1) * sp.mu_w,
                              (1.0 - e1 * e1) * sw);
      }
      double e2 = std::exp(-global.delta_s * gap);
      lp += safe_mvn_logpdf(yr.m2, e2 * prev.m2 + (1.0 - e2) * sp.mu_s,
                            (1.0 - e2 * e2) * ss);
    }
    double ew = std::exp(-global.delta_w);
    lp += safe_mvn_logpdf(yr.m3, ew * m1 + (1.0 - ew) * sp.mu_w,
                          (1.0 - ew * ew) * sw);
  }
  return lp;
}

// Rectangular support for the attractor-mean priors (the bounding box of the
// abundance grid's cell centers).
struct BBox {
  double xmin = 0.0, xmax = 1.0, ymin = 0.0, ymax = 1.0;
  bool contains(const Vec2& p) const {
    return p.x() >= xmin && p.x() <= xmax && p.y() >= ymin && p.y() <= ymax;
  }
  double log_area() const { return std::log((xmax - xmin) * (ymax - ymin)); }
};

namespace detail {
constexpr double kDiffuseVar = 1e6;  // variance of the diffuse log-scale priors
constexpr double kTauBound1 = 28.7;
constexpr double kTauBound2 = 29.5;

inline double alpha_log_prior(double alpha) {
  // ln(alpha) half-normal(0, kDiffuseVar) restricted to ln(alpha) >= 0.
  if (!(alpha >= 1.0)) return kNegInf;
  double la = std::log(alpha);
  return std::log(2.0) - 0.5 * std::log(kTwoPi * kDiffuseVar) -
         la * la / (2.0 * kDiffuseVar) - la;
}
}  // namespace detail

// Joint log prior of all population-level parameters. Returns -inf (never
// throws) outside the support.
inline double log_priors_population(const std::vector<SubpopParams>& subpops,
                                    const GlobalParams& global,
                                    const BBox& mu_support) {
  using detail::kDiffuseVar;
  double lp = 0.0;
  for (const SubpopParams& sp : subpops) {
    double w = std::exp(-sp.theta);
    if (!(w > 0.02 && w < 0.98)) return kNegInf;
    lp += -sp.theta - std::log(0.96);
    lp += lognormal_log_pdf(sp.sigma2, 0.0, kDiffuseVar);
    if (!std::isfinite(lp)) return kNegInf;
    if (!mu_support.contains(sp.mu_w) || !mu_support.contains(sp.mu_s)) {
      return kNegInf;
    }
    lp += -2.0 * mu_support.log_area();
    if (sp.tau_w1 > detail::kTauBound1 || sp.tau_s1 > detail::kTauBound1 ||
        sp.tau_w2 > detail::kTauBound2 || sp.tau_s2 > detail::kTauBound2) {
      return kNegInf;
    }
    if (!(sp.rho_w > 0.0 && sp.rho_w < 1.0 && sp.rho_s > 0.0 && sp.rho_s < 1.0)) {
      return kNegInf;
    }
    for (double a : sp.alpha) {
      lp += detail::alpha_log_prior(a);
      if (!std::isfinite(lp)) return kNegInf;
    }
  }
  lp += lognormal_log_pdf(global.delta_w, 0.0, kDiffuseVar);
  lp += lognormal_log_pdf(global.delta_s, 0.0, kDiffuseVar);
  lp += lognormal_log_pdf(global.kappa2, 0.0, kDiffuseVar);
  if (!std::isfinite(lp)) return kNegInf;

  if (global.eta.size() != subpops.size()) return kNegInf;
  double scale = GlobalParams::eta_scale(global.eta.size());
  if (!(scale > 0.0)) return kNegInf;
  double sum = 0.0;
  for (double e : global.eta) {
    if (e < GlobalParams::eta_floor() - 1e-12 ||
        e > GlobalParams::eta_floor() + scale + 1e-12) {
      return kNegInf;
    }
    sum += e;
  }
  if (std::abs(sum - 1.0) > 1e-9) return kNegInf;
  // Dirichlet(1) on the rescaled simplex: constant density on the support.
  return lp;
}

// marginal_transition specialization for a subpopulation parameter set.
inline Gaussian2D marginal_transition(const Vec2& x_t, double t, double delta,
                                      const SubpopParams& sp, double delta_w,
                                      const TimingPair& timing) {
  return marginal_transition(x_t, t, delta, sp.ou(), sp.mu_w, sp.sigma_w(),
                             sp.mu_s, sp.sigma_s(), delta_w, timing);
}

}  // namespace imm
