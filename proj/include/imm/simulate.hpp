#pragma once

#include <random>
#include <string>
#include <vector>

#include "imm/grid.hpp"
#include "imm/halton.hpp"
#include "imm/heterogeneity.hpp"
#include "imm/ou_kernel.hpp"
#include "imm/population.hpp"
#include "imm/rng.hpp"
#include "imm/telemetry.hpp"
#include "imm/wind.hpp"

namespace imm {

inline double sample_beta(double a, double b, Rng& rng) {
  std::gamma_distribution<double> ga(a, 1.0), gb(b, 1.0);
  double x = ga(rng), y = gb(rng);
  double v = x / (x + y);
  return std::clamp(v, 1e-9, 1.0 - 1e-9);
}

inline Vec2 sample_mvn(const Vec2& mean, const Mat2& cov, Rng& rng) {
  Gaussian2D g{mean, cov};
  return g.sample(rng);
}

struct SimBird {
  std::string id;
  int subpop = 0;           // 0-based
  std::vector<int> years;   // strictly increasing calendar years
};

struct SimScenario {
  std::vector<SubpopParams> subpops;
  GlobalParams global;
  GridSpec grid;
  std::vector<double> week_days = standard_week_days();
  int Q = 10;
  std::vector<SimBird> birds;
  std::vector<SimBird> validation_birds;
  double validation_keep_prob = 0.3;
  bool clip_abundance_noise = true;
  int n_projects = 30;
  int turbines_per_project = 8;
  std::uint64_t seed = 1;
};

struct SimOutput {
  std::vector<Track> fit_tracks;
  std::vector<Track> validation_tracks;
  std::vector<LatentIndividual> latents;             // fit birds
  std::vector<LatentIndividual> validation_latents;  // held-out birds
  AbundanceGrid abundance;
  std::vector<TurbineRecord> turbines;
};

// Draws one bird's latent timing and attractive points from the
// heterogeneity priors (year links included).
inline LatentIndividual simulate_latents(const SimBird& bird,
                                         const SubpopParams& sp,
                                         const GlobalParams& global, Rng& rng) {
  LatentIndividual lat;
  lat.bird_id = bird.id;
  lat.subpop = bird.subpop;
  lat.a1 = sample_beta(sp.alpha[0], sp.alpha[1], rng);
  lat.a2 = sample_beta(sp.alpha[2], sp.alpha[3], rng);
  const Mat2 sw = sp.sigma_w();
  const Mat2 ss = sp.sigma_s();
  for (std::size_t k = 0; k < bird.years.size(); ++k) {
    YearLatent yl;
    yl.year = bird.years[k];
    if (k == 0) {
      yl.m1 = sample_mvn(sp.mu_w, sw, rng);
      yl.m2 = sample_mvn(sp.mu_s, ss, rng);
    } else {
      const YearLatent& prev = lat.years[k - 1];
      int gap = yl.year - prev.year;
      if (gap == 1) {
        yl.linked = true;
        yl.m1 = prev.m3;  // mirrors the shared location; unused when linked
      } else {
        double e1 = std::exp(-global.delta_w * (gap - 1));
        yl.m1 = sample_mvn(e1 * prev.m3 + (1.0 - e1) * sp.mu_w,
                           (1.0 - e1 * e1) * sw, rng);
      }
      double e2 = std::exp(-global.delta_s * gap);
      yl.m2 = sample_mvn(e2 * prev.m2 + (1.0 - e2) * sp.mu_s,
                         (1.0 - e2 * e2) * ss, rng);
    }
    double ew = std::exp(-global.delta_w);
    const Vec2& m1 = yl.linked ? lat.years[k - 1].m3 : yl.m1;
    yl.m3 = sample_mvn(ew * m1 + (1.0 - ew) * sp.mu_w, (1.0 - ew * ew) * sw, rng);
    lat.years.push_back(yl);
  }
  return lat;
}

inline std::vector<double> daily_lattice() {
  std::vector<double> days;
  for (int d = 0; d < 365; ++d) days.push_back(static_cast<double>(d));
  return days;
}

inline SimOutput simulate_dataset(const SimScenario& sc) {
  SimOutput out;
  Rng rng_lat = make_rng(sc.seed, 1);
  Rng rng_path = make_rng(sc.seed, 2);
  Rng rng_ab = make_rng(sc.seed, 3);
  Rng rng_turb = make_rng(sc.seed, 4);
  Rng rng_val = make_rng(sc.seed, 5);

  const std::vector<double> full_days = daily_lattice();

  auto gen_tracks = [&](const std::vector<SimBird>& birds, bool validation,
                        std::vector<Track>& tracks,
                        std::vector<LatentIndividual>& latents, Rng& rng_obs) {
    for (const SimBird& bird : birds) {
      const SubpopParams& sp = sc.subpops[static_cast<std::size_t>(bird.subpop)];
      LatentIndividual lat = simulate_latents(bird, sp, sc.global, rng_lat);
      TimingPair timing = timing_from_latent(lat.a1, lat.a2);
      for (std::size_t k = 0; k < bird.years.size(); ++k) {
        AttractorSet att{lat.m1_of(k), lat.years[k].m2, lat.years[k].m3};
        std::vector<Vec2> path =
            sample_path(full_days, sp.ou(), att, timing, rng_path);
        Track t;
        t.bird_id = bird.id;
        t.year = bird.years[k];
        t.subpop = bird.subpop;
        for (std::size_t j = 0; j < full_days.size(); ++j) {
          if (validation) {
            // sparse observation keeps the year incomplete
            bool keep = uniform01(rng_obs) < sc.validation_keep_prob;
            if (!keep) continue;
          }
          t.obs.push_back({full_days[j], path[j]});
        }
        if (validation && t.obs.size() < 2) {
          t.obs.clear();
          t.obs.push_back({full_days[10], path[10]});
          t.obs.push_back({full_days[200], path[200]});
        }
        t.complete = !validation;
        tracks.push_back(std::move(t));
      }
      latents.push_back(std::move(lat));
    }
  };

  gen_tracks(sc.birds, false, out.fit_tracks, out.latents, rng_path);
  gen_tracks(sc.validation_birds, true, out.validation_tracks,
             out.validation_latents, rng_val);

  // weekly abundance: grid-normalized field plus cell noise
  HaltonDesign design = halton_design(sc.Q, sc.subpops);
  out.abundance.grid = sc.grid;
  out.abundance.week_days = sc.week_days;
  out.abundance.normalized = true;
  double kappa = std::sqrt(sc.global.kappa2);
  for (double day : sc.week_days) {
    PopulationField field = population_field(day, sc.subpops, sc.global, design);
    Raster r = evaluate_on_grid(field, sc.grid);
    for (double& v : r) v += kappa * normal(rng_ab);
    if (sc.clip_abundance_noise) {
      StableSum total;
      for (double& v : r) {
        if (v < 0.0) v = 0.0;
        total.add(v);
      }
      if (total.value() > 0.0) {
        for (double& v : r) v /= total.value();
      }
    }
    out.abundance.values.push_back(std::move(r));
  }

  // turbine fixture: project centers uniform over the grid, turbines packed
  // tightly around each center
  BBox bb = sc.grid.center_bbox();
  for (int pr = 0; pr < sc.n_projects; ++pr) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "P%03d", pr + 1);
    Vec2 center(bb.xmin + uniform01(rng_turb) * (bb.xmax - bb.xmin),
                bb.ymin + uniform01(rng_turb) * (bb.ymax - bb.ymin));
    for (int tb = 0; tb < sc.turbines_per_project; ++tb) {
      NormalPair z = normal_pair(rng_turb);
      out.turbines.push_back({buf, center + 2.0 * Vec2(z.z1, z.z2)});
    }
  }
  return out;
}

}  // namespace imm
