#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "imm/heterogeneity.hpp"
#include "imm/stats.hpp"

namespace imm {

// Radical inverse of index i (i >= 1) in the given base: reverse the base-b
// digits of i across the radix point. halton index 1 in base 2 is 1/2.
inline double radical_inverse(std::uint64_t i, std::uint64_t base) {
  double inv_base = 1.0 / static_cast<double>(base);
  double f = inv_base;
  double r = 0.0;
  while (i > 0) {
    r += f * static_cast<double>(i % base);
    i /= base;
    f *= inv_base;
  }
  return r;
}

// Deterministic timing design used to integrate over migration-timing
// heterogeneity: Q Halton points in (0,1)^2 (bases 2 and 3, starting at
// index 1), mapped to onset days, with self-normalized weights from each
// subpopulation's beta timing densities.
struct HaltonDesign {
  int Q = 0;
  std::vector<double> a1;               // base-2 component per point
  std::vector<double> a2;               // base-3 component per point
  std::vector<TimingPair> timings;      // mapped onset days per point
  std::vector<std::vector<double>> weights;  // [subpop][point], each row sums to 1
  std::vector<std::vector<double>> alphas_fingerprint;  // the alphas used

  bool matches(const std::vector<SubpopParams>& subpops) const {
    if (subpops.size() != alphas_fingerprint.size()) return false;
    for (std::size_t p = 0; p < subpops.size(); ++p) {
      for (int j = 0; j < 4; ++j) {
        if (subpops[p].alpha[j] != alphas_fingerprint[p][static_cast<std::size_t>(j)]) {
          return false;
        }
      }
    }
    return true;
  }
};

inline HaltonDesign halton_design(int Q, const std::vector<SubpopParams>& subpops) {
  if (Q < 1) throw std::invalid_argument("halton_design: Q must be >= 1");
  HaltonDesign d;
  d.Q = Q;
  for (int q = 1; q <= Q; ++q) {
    d.a1.push_back(radical_inverse(static_cast<std::uint64_t>(q), 2));
    d.a2.push_back(radical_inverse(static_cast<std::uint64_t>(q), 3));
    d.timings.push_back(timing_from_latent(d.a1.back(), d.a2.back()));
  }
  for (const SubpopParams& sp : subpops) {
    std::vector<double> w(static_cast<std::size_t>(Q));
    double total = 0.0;
    for (int q = 0; q < Q; ++q) {
      double g = beta_pdf(d.a1[static_cast<std::size_t>(q)], sp.alpha[0], sp.alpha[1]) *
                 beta_pdf(d.a2[static_cast<std::size_t>(q)], sp.alpha[2], sp.alpha[3]);
      w[static_cast<std::size_t>(q)] = g;
      total += g;
    }
    if (!(total > 0.0)) {
      throw std::domain_error("halton_design: beta weights vanish at all design points");
    }
    for (double& x : w) x /= total;
    d.weights.push_back(std::move(w));
    d.alphas_fingerprint.push_back({sp.alpha[0], sp.alpha[1], sp.alpha[2], sp.alpha[3]});
  }
  return d;
}

}  // namespace imm
