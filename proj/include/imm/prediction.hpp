#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "imm/population.hpp"
#include "imm/risk.hpp"
#include "imm/telemetry.hpp"
#include "imm/wind.hpp"

namespace imm {

// Two held-out observations of one bird-year: the first observation of the
// year and the observation closest to a wind project.
struct ValidationPair {
  std::string bird_id;
  double t1 = 0.0;
  Vec2 v1 = Vec2::Zero();
  double t2 = 0.0;
  Vec2 v2 = Vec2::Zero();
};

inline std::vector<ValidationPair> extract_validation_pairs(
    const std::vector<Track>& tracks, const std::vector<WindProject>& projects) {
  if (projects.empty()) throw UserError("extract_validation_pairs: no projects");
  std::vector<ValidationPair> pairs;
  for (const Track& t : tracks) {
    if (t.obs.empty()) continue;
    const Observation& first = t.obs.front();
    const Observation* nearest = nullptr;
    double best = std::numeric_limits<double>::infinity();
    for (const Observation& o : t.obs) {
      for (const WindProject& w : projects) {
        double d = (o.loc - w.centroid).norm();
        if (d < best) {
          best = d;
          nearest = &o;
        }
      }
    }
    if (!nearest || nearest->day <= first.day) continue;
    pairs.push_back({t.bird_id, first.day, first.loc, nearest->day, nearest->loc});
  }
  return pairs;
}

// Gridded conditional law of the bird's location at t1 given that it sits at
// v2 at t2 > t1: the t1 field density times the timing-marginalized
// transition density to v2, summed over subpopulations and normalized over
// the grid.
inline Raster conditional_field(const Vec2& v2, double t2, double t1,
                                const std::vector<SubpopParams>& subpops,
                                const GlobalParams& global,
                                const HaltonDesign& design,
                                const GridSpec& grid) {
  if (!(t1 < t2)) throw std::invalid_argument("conditional_field: require t1 < t2");
  if (!design.matches(subpops)) {
    throw std::invalid_argument("conditional_field: design/parameter mismatch");
  }
  const double delta = t2 - t1;
  struct TransTerm {
    double w = 0.0;
    double decay = 0.0;
    Vec2 shift = Vec2::Zero();
    double p11 = 0.0, p12 = 0.0, p22 = 0.0;  // precision of the transition cov
    double lognorm = 0.0;
  };
  std::vector<std::vector<Gaussian2D>> field_comps(subpops.size());
  std::vector<std::vector<TransTerm>> trans(subpops.size());
  for (std::size_t p = 0; p < subpops.size(); ++p) {
    const SubpopParams& sp = subpops[p];
    for (int q = 0; q < design.Q; ++q) {
      const TimingPair& timing = design.timings[static_cast<std::size_t>(q)];
      double w = design.weights[p][static_cast<std::size_t>(q)];
      field_comps[p].push_back(subpop_field_conditional(t1, sp, global.delta_w, timing));

      Gaussian2D m = marginal_transition(Vec2::Zero(), t1, delta, sp,
                                         global.delta_w, timing);
      TransTerm tt;
      tt.w = w;
      tt.decay = std::exp(-sp.theta * delta);
      tt.shift = m.mean;  // attractor part; the x-term is zero above
      double det = m.cov(0, 0) * m.cov(1, 1) - m.cov(0, 1) * m.cov(1, 0);
      tt.p11 = m.cov(1, 1) / det;
      tt.p12 = -m.cov(0, 1) / det;
      tt.p22 = m.cov(0, 0) / det;
      tt.lognorm = -std::log(kTwoPi) - 0.5 * std::log(det);
      trans[p].push_back(tt);
    }
  }

  Raster out(static_cast<std::size_t>(grid.n_cells()), 0.0);
  for (int row = 0; row < grid.n_rows; ++row) {
    for (int col = 0; col < grid.n_cols; ++col) {
      Vec2 y = grid.center(row, col);
      double total = 0.0;
      for (std::size_t p = 0; p < subpops.size(); ++p) {
        double field_density = 0.0;
        double trans_density = 0.0;
        for (int q = 0; q < design.Q; ++q) {
          const auto qi = static_cast<std::size_t>(q);
          double w = design.weights[p][qi];
          const Gaussian2D& fg = field_comps[p][qi];
          field_density += w * std::exp(safe_mvn_logpdf(y, fg.mean, fg.cov));
          const TransTerm& tt = trans[p][qi];
          double dx = v2.x() - tt.decay * y.x() - tt.shift.x();
          double dy = v2.y() - tt.decay * y.y() - tt.shift.y();
          double quad = tt.p11 * dx * dx + 2.0 * tt.p12 * dx * dy + tt.p22 * dy * dy;
          trans_density += tt.w * std::exp(tt.lognorm - 0.5 * quad);
        }
        total += field_density * trans_density;
      }
      out[static_cast<std::size_t>(row) * grid.n_cols + col] = total;
    }
  }
  StableSum mass;
  for (double v : out) mass.add(v);
  if (!(mass.value() > 0.0)) {
    throw UserError("conditional_field: zero total mass (v2 implausible everywhere)");
  }
  for (double& v : out) v /= mass.value();
  return out;
}

// Probability-weighted mean distance between a normalized raster and the
// held-out location.
inline double weighted_distance(const Raster& weights, const GridSpec& grid,
                                const Vec2& truth) {
  StableSum s;
  for (int row = 0; row < grid.n_rows; ++row) {
    for (int col = 0; col < grid.n_cols; ++col) {
      double w = weights[static_cast<std::size_t>(row) * grid.n_cols + col];
      if (w != 0.0) s.add(w * (grid.center(row, col) - truth).norm());
    }
  }
  return s.value();
}

inline double mape_conditional(const ValidationPair& pair, const Raster& phi_hat,
                               const GridSpec& grid) {
  return weighted_distance(phi_hat, grid, pair.v1);
}

inline double mape_posterior_mean(const ValidationPair& pair,
                                  const Raster& field_hat, const GridSpec& grid) {
  return weighted_distance(field_hat, grid, pair.v1);
}

// Uses the abundance week whose day is nearest t1 (earlier week on ties).
inline double mape_ebird(const ValidationPair& pair, const AbundanceGrid& abundance) {
  if (abundance.n_weeks() == 0) throw UserError("mape_ebird: empty abundance grid");
  std::size_t best = 0;
  double bd = std::abs(abundance.week_days[0] - pair.t1);
  for (std::size_t w = 1; w < abundance.n_weeks(); ++w) {
    double d = std::abs(abundance.week_days[w] - pair.t1);
    if (d < bd) {
      bd = d;
      best = w;
    }
  }
  return weighted_distance(abundance.values[best], abundance.grid, pair.v1);
}

struct ValidationRow {
  ValidationPair pair;
  double mape_conditional = 0.0;
  double mape_posterior_mean = 0.0;
  double mape_ebird = 0.0;
};

struct ValidationSummary {
  std::vector<ValidationRow> rows;
  double median_conditional = 0.0, mean_conditional = 0.0, prop_conditional = 0.0;
  double median_posterior = 0.0, mean_posterior = 0.0, prop_posterior = 0.0;
  double median_ebird = 0.0, mean_ebird = 0.0, prop_ebird = 0.0;
};

namespace detail {
inline double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  std::size_t n = v.size();
  if (n == 0) return 0.0;
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}
}  // namespace detail

// Full three-way validation: posterior-mean conditional raster, posterior-
// mean population raster at t1, and the data-only raster. Lowest-MAPE credit
// is split equally among tied methods.
inline ValidationSummary validation_report(const std::vector<ValidationPair>& pairs,
                                           const std::vector<ParamDraw>& draws,
                                           const AbundanceGrid& abundance, int Q) {
  if (pairs.empty()) throw UserError("validation_report: no validation pairs");
  if (draws.empty()) throw UserError("validation_report: no posterior draws");
  const GridSpec& grid = abundance.grid;
  std::vector<HaltonDesign> designs;
  designs.reserve(draws.size());
  for (const ParamDraw& d : draws) designs.push_back(halton_design(Q, d.subpops));

  ValidationSummary summary;
  std::vector<double> vc, vp, ve;
  for (const ValidationPair& pr : pairs) {
    Raster phi_hat(static_cast<std::size_t>(grid.n_cells()), 0.0);
    Raster field_hat(static_cast<std::size_t>(grid.n_cells()), 0.0);
    for (std::size_t d = 0; d < draws.size(); ++d) {
      Raster phi = conditional_field(pr.v2, pr.t2, pr.t1, draws[d].subpops,
                                     draws[d].global, designs[d], grid);
      Raster fld = evaluate_on_grid(
          population_field(pr.t1, draws[d].subpops, draws[d].global, designs[d]), grid);
      for (std::size_t i = 0; i < phi_hat.size(); ++i) {
        phi_hat[i] += phi[i] / static_cast<double>(draws.size());
        field_hat[i] += fld[i] / static_cast<double>(draws.size());
      }
    }
    ValidationRow row;
    row.pair = pr;
    row.mape_conditional = mape_conditional(pr, phi_hat, grid);
    row.mape_posterior_mean = mape_posterior_mean(pr, field_hat, grid);
    row.mape_ebird = mape_ebird(pr, abundance);
    vc.push_back(row.mape_conditional);
    vp.push_back(row.mape_posterior_mean);
    ve.push_back(row.mape_ebird);
    summary.rows.push_back(row);
  }

  auto mean_of = [](const std::vector<double>& v) {
    StableSum s;
    for (double x : v) s.add(x);
    return s.value() / static_cast<double>(v.size());
  };
  summary.median_conditional = detail::median_of(vc);
  summary.median_posterior = detail::median_of(vp);
  summary.median_ebird = detail::median_of(ve);
  summary.mean_conditional = mean_of(vc);
  summary.mean_posterior = mean_of(vp);
  summary.mean_ebird = mean_of(ve);

  double n = static_cast<double>(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    double m = std::min({vc[i], vp[i], ve[i]});
    double tol = 1e-12 * std::max(1.0, m);
    int ties = 0;
    bool tc = vc[i] - m <= tol, tp = vp[i] - m <= tol, te = ve[i] - m <= tol;
    ties = (tc ? 1 : 0) + (tp ? 1 : 0) + (te ? 1 : 0);
    double credit = 1.0 / (n * ties);
    if (tc) summary.prop_conditional += credit;
    if (tp) summary.prop_posterior += credit;
    if (te) summary.prop_ebird += credit;
  }
  return summary;
}

}  // namespace imm
