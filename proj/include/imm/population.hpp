#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "imm/grid.hpp"
#include "imm/halton.hpp"
#include "imm/heterogeneity.hpp"
#include "imm/ou_kernel.hpp"

namespace imm {

// Spatial law of one subpopulation at day t conditional on migration timing,
// with the initial location and the attractive points integrated out. At
// t = 0 this is the initial mixture component N(mu_w, sigma^2/(2 theta) I +
// Sigma_w); for t > 0 the attractor weights are evaluated over (0, t).
inline Gaussian2D subpop_field_conditional(double t, const SubpopParams& sp,
                                           double delta_w,
                                           const TimingPair& timing) {
  if (!(t >= 0.0 && t <= 365.0)) {
    throw std::invalid_argument("subpop_field_conditional: t must be in [0,365]");
  }
  const Mat2 sw = sp.sigma_w();
  const Mat2 ss = sp.sigma_s();
  const double sv = sp.ou().stationary_var();
  Gaussian2D out;
  if (t == 0.0) {
    out.mean = sp.mu_w;
    out.cov = sv * Mat2::Identity() + sw;
    return out;
  }
  GammaWeights g = gamma_weights(sp.theta, 0.0, t, timing);
  double decay = std::exp(-sp.theta * t);
  out.mean = (decay + g.g1 + g.g3) * sp.mu_w + g.g2 * sp.mu_s;
  double cw = decay * decay + g.g1 * g.g1 + g.g3 * g.g3 +
              2.0 * g.g1 * g.g3 * std::exp(-delta_w);
  out.cov = sv * Mat2::Identity() + (g.g2 * g.g2) * ss + cw * sw;
  return out;
}

struct FieldComponent {
  int subpop = 0;
  double weight = 0.0;
  Gaussian2D g;
};

// Population-level spatial density at one day: a Gaussian mixture over
// subpopulations and timing design points. Component weights sum to one, so
// the field integrates to one over the plane.
struct PopulationField {
  double time = 0.0;
  std::vector<FieldComponent> components;
};

inline PopulationField population_field(double t,
                                        const std::vector<SubpopParams>& subpops,
                                        const GlobalParams& global,
                                        const HaltonDesign& design) {
  if (!design.matches(subpops)) {
    throw std::invalid_argument(
        "population_field: design was built from different subpopulation parameters");
  }
  if (global.eta.size() != subpops.size()) {
    throw std::invalid_argument("population_field: eta size mismatch");
  }
  PopulationField field;
  field.time = t;
  for (std::size_t p = 0; p < subpops.size(); ++p) {
    for (int q = 0; q < design.Q; ++q) {
      FieldComponent c;
      c.subpop = static_cast<int>(p);
      c.weight = global.eta[p] * design.weights[p][static_cast<std::size_t>(q)];
      c.g = subpop_field_conditional(t, subpops[p], global.delta_w,
                                     design.timings[static_cast<std::size_t>(q)]);
      field.components.push_back(c);
    }
  }
  return field;
}

namespace detail {
constexpr double kGridLogCut = 60.0;     // drop cells > 60 nats below component peak
constexpr double kMinFieldEigen = 1e-12;  // km^2; density evaluation guard
}  // namespace detail

// Adds weight * N(mean, cov) evaluated at every cell center onto `out`.
// Rows are pruned to the cells within kGridLogCut nats of the component peak
// (the quadratic superlevel set), and densities along a row are advanced by
// a multiplicative recurrence so the inner loop carries no exp calls.
inline void accumulate_gaussian_on_grid(Raster& out, const GridSpec& grid,
                                        double weight, const Gaussian2D& comp) {
  const double s11 = comp.cov(0, 0), s12 = comp.cov(0, 1), s22 = comp.cov(1, 1);
  const double det = s11 * s22 - s12 * s12;
  if (!(det > 0.0) || min_eigenvalue(comp.cov) < detail::kMinFieldEigen) {
    throw std::domain_error("accumulate_gaussian_on_grid: near-degenerate covariance");
  }
  const double p11 = s22 / det, p12 = -s12 / det, p22 = s11 / det;
  const double k = weight / (kTwoPi * std::sqrt(det));
  const double h = grid.cell_km;
  const double dx0 = grid.origin_x - comp.mean.x();
  const double delta = -0.5 * p11 * h * h;
  const double rho = std::exp(2.0 * delta);
  const double T = detail::kGridLogCut;

  for (int row = 0; row < grid.n_rows; ++row) {
    const double dy = grid.origin_y + row * h - comp.mean.y();
    const double alpha = -0.5 * (p11 * dx0 * dx0 + 2.0 * p12 * dx0 * dy + p22 * dy * dy);
    const double beta = -(p11 * dx0 + p12 * dy) * h;
    // active cols: delta*c^2 + beta*c + (alpha + T) >= 0
    const double disc = beta * beta - 4.0 * delta * (alpha + T);
    if (!(disc > 0.0)) continue;
    const double sq = std::sqrt(disc);
    double lo = (-beta + sq) / (2.0 * delta);
    double hi = (-beta - sq) / (2.0 * delta);
    if (lo > hi) std::swap(lo, hi);
    int c0 = std::max(0, static_cast<int>(std::ceil(lo)));
    int c1 = std::min(grid.n_cols - 1, static_cast<int>(std::floor(hi)));
    if (c0 > c1) continue;
    double f = std::exp(alpha + beta * c0 + delta * static_cast<double>(c0) * c0);
    double r = std::exp(beta + delta * (2.0 * c0 + 1.0));
    double* cell = out.data() + static_cast<std::size_t>(row) * grid.n_cols + c0;
    for (int c = c0; c <= c1; ++c) {
      *cell++ += k * f;
      f *= r;
      r *= rho;
    }
  }
}

// Field density at all cell centers, normalized to sum to one over the grid.
inline Raster evaluate_on_grid(const PopulationField& field, const GridSpec& grid) {
  Raster out(static_cast<std::size_t>(grid.n_cells()), 0.0);
  for (const FieldComponent& c : field.components) {
    accumulate_gaussian_on_grid(out, grid, c.weight, c.g);
  }
  StableSum total;
  for (double v : out) total.add(v);
  double mass = total.value();
  if (!(mass > 0.0)) {
    throw std::domain_error("evaluate_on_grid: field carries no mass on the grid");
  }
  for (double& v : out) v /= mass;
  return out;
}

// Gaussian observation model for the weekly abundance rasters: every cell of
// every week is an unbiased noisy observation of the grid-normalized field.
inline double abundance_log_likelihood(const AbundanceGrid& data,
                                       const std::vector<Raster>& model_rasters,
                                       double kappa2) {
  if (!(kappa2 > 0.0)) throw std::invalid_argument("abundance_log_likelihood: kappa2 <= 0");
  if (model_rasters.size() != data.n_weeks()) {
    throw std::invalid_argument("abundance_log_likelihood: week count mismatch");
  }
  const double c = -0.5 * std::log(kTwoPi * kappa2);
  const double inv2k = 1.0 / (2.0 * kappa2);
  StableSum ll;
  for (std::size_t w = 0; w < data.n_weeks(); ++w) {
    const Raster& s = data.values[w];
    const Raster& m = model_rasters[w];
    if (s.size() != m.size()) {
      throw std::invalid_argument("abundance_log_likelihood: raster size mismatch");
    }
    for (std::size_t i = 0; i < s.size(); ++i) {
      double r = s[i] - m[i];
      ll.add(c - r * r * inv2k);
    }
  }
  return ll.value();
}

// The scaled-Poisson variant kept only as a diagnostic of its degeneracy:
// round(K*s) ~ Poisson(K*pi). Rounding is round-half-to-even. As K -> 0 all
// counts vanish and the log likelihood tends to 0 regardless of the field.
inline double scaled_poisson_diagnostic(const AbundanceGrid& data,
                                        const std::vector<Raster>& model_rasters,
                                        double K) {
  if (!(K > 0.0)) throw std::invalid_argument("scaled_poisson_diagnostic: K <= 0");
  StableSum ll;
  for (std::size_t w = 0; w < data.n_weeks(); ++w) {
    const Raster& s = data.values[w];
    const Raster& m = model_rasters[w];
    for (std::size_t i = 0; i < s.size(); ++i) {
      double count = std::nearbyint(K * s[i]);
      double lambda = K * m[i];
      if (count > 0.0) {
        if (!(lambda > 0.0)) return kNegInf;
        ll.add(count * std::log(lambda) - lambda - std::lgamma(count + 1.0));
      } else {
        ll.add(-lambda);
      }
    }
  }
  return ll.value();
}

}  // namespace imm
