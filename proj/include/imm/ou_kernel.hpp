#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "imm/geometry.hpp"
#include "imm/rng.hpp"
#include "imm/util.hpp"

namespace imm {

// Mean-reversion rate (per day) and diffusion variance (km^2/day) of one
// Ornstein-Uhlenbeck regime. The same (theta, sigma2) applies to all three
// seasonal regimes of a subpopulation; only the attractive point switches.
struct OuRegimeParams {
  double theta = 1.0;
  double sigma2 = 1.0;

  double stationary_var() const { return sigma2 / (2.0 * theta); }
};

// Seasonal attractive points: winter (m1), summer (m2), second winter (m3).
struct AttractorSet {
  Vec2 m1 = Vec2::Zero();
  Vec2 m2 = Vec2::Zero();
  Vec2 m3 = Vec2::Zero();
};

// Day-of-year breakpoints at which the drift target switches m1->m2 (spring)
// and m2->m3 (fall). The canonical construction from latent timing variables
// (timing_from_latent) keeps spring_onset in (15,166) and fall_onset in
// (196,350); the kernel itself only requires spring_onset < fall_onset.
struct TimingPair {
  double spring_onset = 100.0;  // b1
  double fall_onset = 300.0;    // b2

  TimingPair() = default;
  TimingPair(double b1, double b2) : spring_onset(b1), fall_onset(b2) {
    if (!(b1 < b2)) throw std::invalid_argument("TimingPair: require b1 < b2");
  }
};

// Attractor weights of the exact transition over (t, t+delta). The weights
// and e^{-theta*delta} always sum to one.
struct GammaWeights {
  double g1 = 0.0;
  double g2 = 0.0;
  double g3 = 0.0;
  // Which of the six interval/breakpoint configurations applied:
  // 1: interval before b1            2: interval crosses b1
  // 3: interval inside (b1,b2)       4: interval crosses b2
  // 5: interval after b2             6: interval crosses both b1 and b2
  int regime_case = 0;
};

// Weights of the winter/summer/winter attractive points in the conditional
// mean of the transition x_{t+delta} | x_t. Six cases depending on how the
// interval (t, t+delta) sits relative to the migration onsets; boundary ties
// are resolved so that adjacent cases agree (the formulas are continuous
// across each shared boundary).
inline GammaWeights gamma_weights(double theta, double t, double delta,
                                  const TimingPair& timing) {
  if (!(delta > 0.0)) throw std::invalid_argument("gamma_weights: delta must be > 0");
  if (!(t >= 0.0)) throw std::invalid_argument("gamma_weights: t must be >= 0");
  if (t + delta > 365.0 + 1e-9) {
    throw std::invalid_argument("gamma_weights: interval must end by day 365");
  }
  const double b1 = timing.spring_onset;
  const double b2 = timing.fall_onset;
  const double u = t;
  const double v = t + delta;
  const double decay = -std::expm1(-theta * delta);  // 1 - e^{-theta*delta}

  GammaWeights w;
  if (v <= b1) {
    w.g1 = decay;
    w.regime_case = 1;
  } else if (u >= b2) {
    w.g3 = decay;
    w.regime_case = 5;
  } else if (u >= b1) {
    if (v <= b2) {
      w.g2 = decay;
      w.regime_case = 3;
    } else {
      w.g2 = -std::expm1(-theta * (b2 - u)) * std::exp(-theta * (v - b2));
      w.g3 = decay - w.g2;
      w.regime_case = 4;
    }
  } else if (v <= b2) {
    w.g1 = -std::expm1(-theta * (b1 - u)) * std::exp(-theta * (v - b1));
    w.g2 = -std::expm1(-theta * (v - b1));
    w.regime_case = 2;
  } else {
    w.g1 = -std::expm1(-theta * (b1 - u)) * std::exp(-theta * (v - b1));
    w.g2 = -std::expm1(-theta * (b2 - b1)) * std::exp(-theta * (v - b2));
    w.g3 = decay - w.g1 - w.g2;
    w.regime_case = 6;
  }
  return w;
}

// Exact conditional law of x_{t+delta} given x_t. Isotropic covariance
// regardless of regime crossings; the crossings only reweight the mean.
inline Gaussian2D transition(const Vec2& x_t, double t, double delta,
                             const OuRegimeParams& regimes,
                             const AttractorSet& attractors,
                             const TimingPair& timing) {
  GammaWeights g = gamma_weights(regimes.theta, t, delta, timing);
  double decay = std::exp(-regimes.theta * delta);
  Gaussian2D out;
  out.mean = decay * x_t + g.g1 * attractors.m1 + g.g2 * attractors.m2 +
             g.g3 * attractors.m3;
  double v = regimes.stationary_var() * (-std::expm1(-2.0 * regimes.theta * delta));
  out.cov = v * Mat2::Identity();
  return out;
}

// Pre-migration stationary law: N(m1, sigma^2/(2 theta) I).
inline Gaussian2D initial_law(const OuRegimeParams& regimes, const Vec2& m1) {
  Gaussian2D out;
  out.mean = m1;
  out.cov = regimes.stationary_var() * Mat2::Identity();
  return out;
}

// Transition with the first-year attractor heterogeneity integrated out:
// m1 ~ N(mu_w, Sigma_w), m2 ~ N(mu_s, Sigma_s), and m3 | m1 following the
// within-year site-fidelity step with rate delta_w.
inline Gaussian2D marginal_transition(const Vec2& x_t, double t, double delta,
                                      const OuRegimeParams& regimes,
                                      const Vec2& mu_w, const Mat2& sigma_w,
                                      const Vec2& mu_s, const Mat2& sigma_s,
                                      double delta_w, const TimingPair& timing) {
  if (!is_spd(sigma_w, -1e-12) || !is_spd(sigma_s, -1e-12)) {
    throw std::domain_error("marginal_transition: prior covariances must be PSD");
  }
  GammaWeights g = gamma_weights(regimes.theta, t, delta, timing);
  double decay = std::exp(-regimes.theta * delta);
  Gaussian2D out;
  out.mean = decay * x_t + (g.g1 + g.g3) * mu_w + g.g2 * mu_s;
  double v = regimes.stationary_var() * (-std::expm1(-2.0 * regimes.theta * delta));
  double cw = g.g1 * g.g1 + g.g3 * g.g3 +
              2.0 * g.g1 * g.g3 * std::exp(-delta_w);
  out.cov = v * Mat2::Identity() + (g.g2 * g.g2) * sigma_s + cw * sigma_w;
  return out;
}

// One simulated trajectory observed at the given (increasing) days, drawn
// exactly from the transition law. Deterministic for a fixed seed.
inline std::vector<Vec2> sample_path(const std::vector<double>& days,
                                     const OuRegimeParams& regimes,
                                     const AttractorSet& attractors,
                                     const TimingPair& timing, Rng& rng) {
  if (days.empty()) throw std::invalid_argument("sample_path: empty time list");
  std::vector<Vec2> xs;
  xs.reserve(days.size());
  xs.push_back(initial_law(regimes, attractors.m1).sample(rng));
  for (std::size_t j = 1; j < days.size(); ++j) {
    double dt = days[j] - days[j - 1];
    if (!(dt > 0.0)) throw std::invalid_argument("sample_path: days must increase");
    xs.push_back(transition(xs.back(), days[j - 1], dt, regimes, attractors, timing).sample(rng));
  }
  return xs;
}

inline std::vector<Vec2> sample_path(const std::vector<double>& days,
                                     const OuRegimeParams& regimes,
                                     const AttractorSet& attractors,
                                     const TimingPair& timing,
                                     std::uint64_t seed) {
  Rng rng = make_rng(seed);
  return sample_path(days, regimes, attractors, timing, rng);
}

namespace detail {
inline const Vec2& drift_target(double t, const AttractorSet& a,
                                const TimingPair& timing) {
  if (t < timing.spring_onset) return a.m1;
  if (t < timing.fall_onset) return a.m2;
  return a.m3;
}
}  // namespace detail

// Discretized reference simulation of the piecewise SDE, used as an oracle
// for the exact transition. Steps the state from t0 to t1 with step dt
// (last partial step shortened).
inline Vec2 euler_maruyama_step_to(Vec2 x, double t0, double t1, double dt,
                                   const OuRegimeParams& regimes,
                                   const AttractorSet& attractors,
                                   const TimingPair& timing, Rng& rng) {
  if (!(dt > 0.0)) throw std::invalid_argument("euler_maruyama: dt must be > 0");
  const double sigma = std::sqrt(regimes.sigma2);
  double t = t0;
  while (t < t1 - 1e-12) {
    double h = std::min(dt, t1 - t);
    const Vec2& m = detail::drift_target(t, attractors, timing);
    NormalPair z = normal_pair(rng);
    double sd = sigma * std::sqrt(h);
    x.x() += -regimes.theta * (x.x() - m.x()) * h + sd * z.z1;
    x.y() += -regimes.theta * (x.y() - m.y()) * h + sd * z.z2;
    t += h;
  }
  return x;
}

// Full path on the given observation days, initialized from the exact
// stationary law and advanced by Euler-Maruyama between days.
inline std::vector<Vec2> euler_maruyama_path(const std::vector<double>& days,
                                             double dt,
                                             const OuRegimeParams& regimes,
                                             const AttractorSet& attractors,
                                             const TimingPair& timing,
                                             std::uint64_t seed) {
  if (days.empty()) throw std::invalid_argument("euler_maruyama_path: empty time list");
  Rng rng = make_rng(seed);
  std::vector<Vec2> xs;
  xs.reserve(days.size());
  xs.push_back(initial_law(regimes, attractors.m1).sample(rng));
  for (std::size_t j = 1; j < days.size(); ++j) {
    xs.push_back(euler_maruyama_step_to(xs.back(), days[j - 1], days[j], dt,
                                        regimes, attractors, timing, rng));
  }
  return xs;
}

}  // namespace imm
