#pragma once

#include <vector>

#include "imm/grid.hpp"
#include "imm/heterogeneity.hpp"
#include "imm/simulate.hpp"

namespace testutil {

using namespace imm;

// Compact two-subpopulation world used across the suites: a 20x20 grid of
// 150 km cells with a resident and a migratory subpopulation.
inline SimScenario small_scenario(std::uint64_t seed = 7) {
  SimScenario sc;
  sc.seed = seed;
  sc.grid = {.origin_x = 0.0, .origin_y = 0.0, .cell_km = 150.0,
             .n_rows = 20, .n_cols = 20};
  sc.Q = 5;

  SubpopParams a;  // migratory
  a.theta = -std::log(0.6);
  a.sigma2 = 60.0;
  a.mu_w = {900.0, 700.0};
  a.mu_s = {1800.0, 2100.0};
  a.tau_w1 = 2.0 * std::log(110.0);
  a.tau_w2 = 2.0 * std::log(90.0);
  a.rho_w = 0.3;
  a.tau_s1 = 2.0 * std::log(120.0);
  a.tau_s2 = 2.0 * std::log(100.0);
  a.rho_s = 0.4;
  a.alpha[0] = 3.0; a.alpha[1] = 4.0; a.alpha[2] = 4.0; a.alpha[3] = 3.0;

  SubpopParams b;  // resident, farther north-east
  b.theta = -std::log(0.4);
  b.sigma2 = 40.0;
  b.mu_w = {2000.0, 1200.0};
  b.mu_s = {2250.0, 1500.0};
  b.tau_w1 = 2.0 * std::log(100.0);
  b.tau_w2 = 2.0 * std::log(120.0);
  b.rho_w = 0.5;
  b.tau_s1 = 2.0 * std::log(90.0);
  b.tau_s2 = 2.0 * std::log(110.0);
  b.rho_s = 0.2;
  b.alpha[0] = 2.0; b.alpha[1] = 2.0; b.alpha[2] = 2.5; b.alpha[3] = 2.0;

  sc.subpops = {a, b};
  sc.global.delta_w = 0.8;
  sc.global.delta_s = 1.2;
  sc.global.kappa2 = 1e-4;
  sc.global.eta = {0.45, 0.55};
  sc.clip_abundance_noise = false;

  // 30 bird-years: singles, consecutive pairs, and one gap bird per subpop
  int year = 2012;
  for (int p = 0; p < 2; ++p) {
    for (int i = 0; i < 10; ++i) {
      sc.birds.push_back({"B" + std::to_string(p) + "_" + std::to_string(i), p,
                          {year}});
    }
    sc.birds.push_back({"B" + std::to_string(p) + "_c", p, {year, year + 1}});
    sc.birds.push_back({"B" + std::to_string(p) + "_g", p, {year, year + 2, year + 3}});
  }
  sc.n_projects = 25;
  sc.turbines_per_project = 6;
  return sc;
}

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max(1e-300, std::abs(b));
}

}  // namespace testutil
