#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "imm/inference.hpp"
#include "imm/population.hpp"
#include "imm/rng.hpp"

namespace imm {

struct EssResult {
  double ess = 0.0;
  bool degenerate = false;
};

// Initial-monotone-positive-sequence autocorrelation estimator. A constant
// chain is flagged degenerate and reported at full size.
inline EssResult effective_sample_size(const std::vector<double>& x) {
  const std::size_t n = x.size();
  if (n < 100) {
    throw std::invalid_argument("effective_sample_size: need at least 100 samples");
  }
  double mean = 0.0;
  double lo = x[0], hi = x[0];
  for (double v : x) {
    mean += v;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  mean /= static_cast<double>(n);
  if (lo == hi) return {static_cast<double>(n), true};
  auto gamma = [&](std::size_t lag) {
    double s = 0.0;
    for (std::size_t i = 0; i + lag < n; ++i) {
      s += (x[i] - mean) * (x[i + lag] - mean);
    }
    return s / static_cast<double>(n);
  };
  double g0 = gamma(0);
  if (!(g0 > 0.0)) return {static_cast<double>(n), true};

  double sum_pairs = 0.0;
  double prev = kInf;
  for (std::size_t m = 0; 2 * m + 1 < n; ++m) {
    double pair = gamma(2 * m) + gamma(2 * m + 1);
    if (pair <= 0.0) break;
    pair = std::min(pair, prev);  // enforce monotone decrease
    sum_pairs += pair;
    prev = pair;
  }
  double var_mean = -g0 + 2.0 * sum_pairs;
  if (!(var_mean > 0.0)) return {static_cast<double>(n), false};
  double ess = static_cast<double>(n) * g0 / var_mean;
  return {std::clamp(ess, 1.0, static_cast<double>(n)), false};
}

// Posterior predictive check against the abundance data: chi-squared
// discrepancy of observed vs model-replicated rasters, one replicate per
// (sub-sampled) posterior draw.
inline double posterior_predictive_pvalue(const std::vector<ParamDraw>& draws,
                                          const AbundanceGrid& data, int Q,
                                          Rng& rng, std::size_t max_draws = 200) {
  if (draws.empty()) {
    throw std::invalid_argument("posterior_predictive_pvalue: no draws");
  }
  std::size_t stride = std::max<std::size_t>(1, draws.size() / max_draws);
  long n_used = 0, n_ge = 0;
  for (std::size_t di = 0; di < draws.size(); di += stride) {
    const ParamDraw& d = draws[di];
    HaltonDesign design = halton_design(Q, d.subpops);
    double disc_obs = 0.0, disc_rep = 0.0;
    double kappa = std::sqrt(d.global.kappa2);
    for (std::size_t w = 0; w < data.n_weeks(); ++w) {
      PopulationField field =
          population_field(data.week_days[w], d.subpops, d.global, design);
      Raster model = evaluate_on_grid(field, data.grid);
      const Raster& obs = data.values[w];
      for (std::size_t i = 0; i < model.size(); ++i) {
        double r = obs[i] - model[i];
        disc_obs += r * r / d.global.kappa2;
        double z = kappa * normal(rng);
        disc_rep += z * z / d.global.kappa2;
      }
    }
    if (disc_rep >= disc_obs) ++n_ge;
    ++n_used;
  }
  return static_cast<double>(n_ge) / static_cast<double>(n_used);
}

}  // namespace imm
