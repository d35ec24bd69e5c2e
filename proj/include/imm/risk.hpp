#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "imm/bvn.hpp"
#include "imm/population.hpp"
#include "imm/wind.hpp"

namespace imm {

// Probability that an individual drawn from the field lies inside the
// square of the given side centered at the project location.
inline double presence_probability(const PopulationField& field,
                                   const Vec2& centroid, double square_side) {
  if (!(square_side > 0.0)) {
    throw std::invalid_argument("presence_probability: square side must be > 0");
  }
  Rect rect = Rect::square(centroid, square_side);
  double p = 0.0;
  for (const FieldComponent& c : field.components) {
    p += c.weight * gaussian_rectangle_mass(c.g.mean, c.g.cov, rect);
  }
  return std::clamp(p, 0.0, 1.0);
}

// Midpoint rule on [a, b] with step at most max_step (the step is shrunk to
// divide the interval evenly, which keeps constant integrands exact).
inline double integrate_midpoint(const std::function<double(double)>& f,
                                 double a, double b, double max_step) {
  if (!(max_step > 0.0)) throw std::invalid_argument("integrate_midpoint: step <= 0");
  int n = static_cast<int>(std::ceil((b - a) / max_step - 1e-12));
  n = std::max(1, n);
  double h = (b - a) / n;
  StableSum s;
  for (int i = 0; i < n; ++i) s.add(f(a + (i + 0.5) * h));
  return s.value() * h;
}

// Expected days per year spent inside the project square, by midpoint
// quadrature of the presence probability over [0, 365].
inline double occupancy_time(const std::function<PopulationField(double)>& field_at,
                             const Vec2& centroid, double square_side,
                             double time_step) {
  if (!(time_step > 0.0 && time_step <= 7.0)) {
    throw std::invalid_argument("occupancy_time: time step must be in (0, 7]");
  }
  return integrate_midpoint(
      [&](double t) { return presence_probability(field_at(t), centroid, square_side); },
      0.0, 365.0, time_step);
}

// Data-only approximation of the occupancy time: the year length times the
// mean of the raw fine-resolution weekly abundance in the cell containing
// the project centroid.
inline double ebird_occupancy_approx(const AbundanceGrid& fine_raw,
                                     const Vec2& centroid) {
  int row = 0, col = 0;
  if (!fine_raw.grid.locate(centroid, row, col)) {
    throw UserError("ebird_occupancy_approx: project centroid outside the raster");
  }
  std::size_t idx = static_cast<std::size_t>(row) * fine_raw.grid.n_cols + col;
  StableSum s;
  for (const Raster& r : fine_raw.values) s.add(r[idx]);
  return s.value() * 365.0 / static_cast<double>(fine_raw.n_weeks());
}

// Population dynamics conditioned on wintering at a fixed location m_w: the
// winter attractive points and the initial law collapse to m_w, and the
// subpopulation weights become the normalized first-winter prior densities
// at m_w.
struct ConditionedModel {
  Vec2 m_w = Vec2::Zero();
  std::vector<double> xi;
  std::vector<SubpopParams> subpops;
  GlobalParams global;
  HaltonDesign design;

  PopulationField field_at(double t) const {
    PopulationField field;
    field.time = t;
    for (std::size_t p = 0; p < subpops.size(); ++p) {
      const SubpopParams& sp = subpops[p];
      const Mat2 ss = sp.sigma_s();
      for (int q = 0; q < design.Q; ++q) {
        const TimingPair& timing = design.timings[static_cast<std::size_t>(q)];
        FieldComponent c;
        c.subpop = static_cast<int>(p);
        c.weight = xi[p] * design.weights[p][static_cast<std::size_t>(q)];
        double g1 = 0.0, g2 = 0.0, g3 = 0.0, decay = 1.0;
        if (t > 0.0) {
          GammaWeights g = gamma_weights(sp.theta, 0.0, t, timing);
          g1 = g.g1;
          g2 = g.g2;
          g3 = g.g3;
          decay = std::exp(-sp.theta * t);
        }
        c.g.mean = (decay + g1 + g3) * m_w + g2 * sp.mu_s;
        double v = sp.ou().stationary_var() * (-std::expm1(-2.0 * sp.theta * t));
        c.g.cov = v * Mat2::Identity() + (g2 * g2) * ss;
        field.components.push_back(c);
      }
    }
    return field;
  }
};

inline ConditionedModel conditioned_dynamics(const Vec2& m_w,
                                             const std::vector<SubpopParams>& subpops,
                                             const GlobalParams& global,
                                             const HaltonDesign& design) {
  if (!is_finite(m_w)) throw std::invalid_argument("conditioned_dynamics: m_w not finite");
  if (!design.matches(subpops)) {
    throw std::invalid_argument("conditioned_dynamics: design/parameter mismatch");
  }
  ConditionedModel m;
  m.m_w = m_w;
  m.subpops = subpops;
  m.global = global;
  m.design = design;
  std::vector<double> logd(subpops.size(), kNegInf);
  double best = kNegInf;
  for (std::size_t p = 0; p < subpops.size(); ++p) {
    logd[p] = safe_mvn_logpdf(m_w, subpops[p].mu_w, subpops[p].sigma_w());
    best = std::max(best, logd[p]);
  }
  // below -745 every density underflows to zero in double precision
  if (best < -745.0) {
    throw UserError(
        "conditioned_dynamics: all subpopulation weights vanish at the "
        "conditioning point; choose a wintering location closer to the "
        "fitted winter ranges");
  }
  double total = 0.0;
  m.xi.resize(subpops.size());
  for (std::size_t p = 0; p < subpops.size(); ++p) {
    m.xi[p] = std::exp(logd[p] - best);
    total += m.xi[p];
  }
  for (double& x : m.xi) x /= total;
  return m;
}

// Per-project posterior risk summary under one dynamics mode.
struct ProjectRisk {
  std::string project_id;
  Vec2 centroid = Vec2::Zero();
  double q_mean = 0.0;
  double q_lo = 0.0;   // 2.5% quantile across draws
  double q_hi = 0.0;   // 97.5% quantile across draws
  std::vector<double> p_mean;  // posterior-mean presence curve
};

struct RiskReport {
  std::vector<double> times;
  std::vector<ProjectRisk> projects;
  std::vector<std::size_t> top_indices;  // by posterior-mean occupancy, descending
};

namespace detail {
inline double quantile_sorted(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  if (v.empty()) return 0.0;
  double pos = q * (static_cast<double>(v.size()) - 1.0);
  std::size_t i = static_cast<std::size_t>(pos);
  if (i + 1 >= v.size()) return v.back();
  double w = pos - static_cast<double>(i);
  return (1.0 - w) * v[i] + w * v[i + 1];
}
}  // namespace detail

// Shared engine for population-level and county-conditioned risk reports:
// evaluates the presence curve of every project under every posterior draw,
// then summarizes across draws.
inline RiskReport risk_report(
    const std::vector<WindProject>& projects,
    const std::vector<ParamDraw>& draws,
    const std::function<std::function<PopulationField(double)>(const ParamDraw&)>&
        dynamics_for_draw,
    double square_side, double time_step, int top_k) {
  if (draws.empty()) throw std::invalid_argument("risk_report: no posterior draws");
  RiskReport rep;
  int n_steps = static_cast<int>(std::ceil(365.0 / time_step - 1e-12));
  double h = 365.0 / n_steps;
  for (int i = 0; i < n_steps; ++i) rep.times.push_back((i + 0.5) * h);

  std::vector<std::vector<double>> q_draws(projects.size(),
                                           std::vector<double>(draws.size(), 0.0));
  rep.projects.resize(projects.size());
  for (std::size_t r = 0; r < projects.size(); ++r) {
    rep.projects[r].project_id = projects[r].project_id;
    rep.projects[r].centroid = projects[r].centroid;
    rep.projects[r].p_mean.assign(rep.times.size(), 0.0);
  }
  for (std::size_t d = 0; d < draws.size(); ++d) {
    auto field_at = dynamics_for_draw(draws[d]);
    for (std::size_t ti = 0; ti < rep.times.size(); ++ti) {
      PopulationField field = field_at(rep.times[ti]);
      for (std::size_t r = 0; r < projects.size(); ++r) {
        double p = presence_probability(field, projects[r].centroid, square_side);
        rep.projects[r].p_mean[ti] += p / static_cast<double>(draws.size());
        q_draws[r][d] += p * h;
      }
    }
  }
  for (std::size_t r = 0; r < projects.size(); ++r) {
    double mean = 0.0;
    for (double q : q_draws[r]) mean += q;
    rep.projects[r].q_mean = mean / static_cast<double>(draws.size());
    rep.projects[r].q_lo = detail::quantile_sorted(q_draws[r], 0.025);
    rep.projects[r].q_hi = detail::quantile_sorted(q_draws[r], 0.975);
  }
  rep.top_indices.resize(projects.size());
  std::iota(rep.top_indices.begin(), rep.top_indices.end(), 0u);
  std::stable_sort(rep.top_indices.begin(), rep.top_indices.end(),
                   [&](std::size_t a, std::size_t b) {
                     return rep.projects[a].q_mean > rep.projects[b].q_mean;
                   });
  if (top_k > 0 && static_cast<std::size_t>(top_k) < rep.top_indices.size()) {
    rep.top_indices.resize(static_cast<std::size_t>(top_k));
  }
  return rep;
}

inline RiskReport population_risk_report(const std::vector<WindProject>& projects,
                                         const std::vector<ParamDraw>& draws,
                                         int Q, double square_side,
                                         double time_step, int top_k) {
  return risk_report(
      projects, draws,
      [Q](const ParamDraw& d) -> std::function<PopulationField(double)> {
        auto design = halton_design(Q, d.subpops);
        return [d, design](double t) {
          return population_field(t, d.subpops, d.global, design);
        };
      },
      square_side, time_step, top_k);
}

inline RiskReport county_risk_report(const Vec2& county_centroid,
                                     const std::vector<WindProject>& projects,
                                     const std::vector<ParamDraw>& draws,
                                     int Q, double square_side,
                                     double time_step, int top_k) {
  return risk_report(
      projects, draws,
      [Q, county_centroid](const ParamDraw& d) -> std::function<PopulationField(double)> {
        auto design = halton_design(Q, d.subpops);
        ConditionedModel cm = conditioned_dynamics(county_centroid, d.subpops, d.global, design);
        return [cm](double t) { return cm.field_at(t); };
      },
      square_side, time_step, top_k);
}

}  // namespace imm
