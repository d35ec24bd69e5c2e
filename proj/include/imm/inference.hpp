#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <map>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "imm/grid.hpp"
#include "imm/halton.hpp"
#include "imm/heterogeneity.hpp"
#include "imm/ou_kernel.hpp"
#include "imm/population.hpp"
#include "imm/rng.hpp"
#include "imm/telemetry.hpp"

namespace imm {

// ---------------------------------------------------------------------------
// data bundle

struct YearObs {
  int year = 0;
  std::vector<Observation> obs;
};

struct BirdData {
  std::string bird_id;
  int subpop = 0;
  std::vector<YearObs> years;
};

struct FitData {
  std::vector<BirdData> birds;
  AbundanceGrid abundance;  // normalized observations
  int P = 0;

  BBox mu_support() const { return abundance.grid.center_bbox(); }
  std::size_t n_bird_years() const {
    std::size_t n = 0;
    for (const auto& b : birds) n += b.years.size();
    return n;
  }
};

// Groups complete tracks into birds. A bird's years must share one
// subpopulation; disagreements between per-year labels are resolved by
// majority (earliest assignment wins ties).
inline FitData make_fit_data(const std::vector<Track>& tracks,
                             const AbundanceGrid& abundance, int P) {
  if (!abundance.normalized) {
    throw UserError("make_fit_data: abundance grid must be normalized");
  }
  std::map<std::string, std::vector<const Track*>> by_bird;
  for (const Track& t : tracks) {
    if (!t.complete) continue;
    if (t.subpop < 0 || t.subpop >= P) {
      throw UserError("make_fit_data: track " + t.bird_id + "/" +
                      std::to_string(t.year) + " lacks a subpopulation in 1.." +
                      std::to_string(P));
    }
    by_bird[t.bird_id].push_back(&t);
  }
  if (by_bird.empty()) throw UserError("make_fit_data: no complete tracks");
  FitData data;
  data.P = P;
  data.abundance = abundance;
  for (auto& [id, ts] : by_bird) {
    std::sort(ts.begin(), ts.end(),
              [](const Track* a, const Track* b) { return a->year < b->year; });
    std::map<int, int> votes;
    for (const Track* t : ts) votes[t->subpop]++;
    int subpop = ts.front()->subpop, best = 0;
    for (const Track* t : ts) {
      if (votes[t->subpop] > best) {
        best = votes[t->subpop];
        subpop = t->subpop;
      }
    }
    BirdData b;
    b.bird_id = id;
    b.subpop = subpop;
    for (const Track* t : ts) b.years.push_back({t->year, t->obs});
    data.birds.push_back(std::move(b));
  }
  return data;
}

// ---------------------------------------------------------------------------
// configuration

struct McmcConfig {
  int n_chains = 10;
  long n_iters = 300000;
  long swap_interval = 20000;
  double burn_in_fraction = 2.0 / 3.0;
  int thin = 10;
  int adapt_batch = 50;
  double target_scalar = 0.44;
  double target_vector = 0.234;
  double adapt_gain = 1.0;
  int Q = 10;
  std::uint64_t seed = 1;
  int threads = 1;
  long cache_check_interval = 0;  // >0: verify caches against a full recompute
  bool keep_latents = false;

  void validate() const {
    if (n_chains < 1 || n_iters < 1 || thin < 1 || adapt_batch < 1 || Q < 1) {
      throw UserError("mcmc config: counts must be positive");
    }
    if (swap_interval < 1 || n_iters % swap_interval != 0) {
      throw UserError("mcmc config: swap_interval must divide n_iters");
    }
    if (!(burn_in_fraction >= 0.0 && burn_in_fraction < 1.0)) {
      throw UserError("mcmc config: burn_in_fraction must be in [0,1)");
    }
  }
};

// ---------------------------------------------------------------------------
// chain state and caches

struct StepCoef {
  double a = 0.0;  // e^{-theta dt}
  double v = 0.0;  // transition variance per coordinate
  double g1 = 0.0, g2 = 0.0, g3 = 0.0;
};

struct YearCache {
  std::vector<StepCoef> steps;
  double init_var = 1.0;
  double loglik = 0.0;
};

struct ChainState {
  std::vector<SubpopParams> subpops;
  GlobalParams global;
  std::vector<LatentIndividual> latents;  // parallel to FitData::birds

  // caches
  std::vector<std::vector<YearCache>> telem;  // [bird][year]
  std::vector<double> attractor_lp;           // [bird]
  std::vector<double> timing_lp;              // [bird]
  double population_lp = 0.0;
  HaltonDesign design;
  std::vector<std::vector<Raster>> subpop_rasters;  // [p][week], timing-weighted
  double ssr = 0.0;                                 // abundance residual sum
  double abundance_ll = 0.0;
  double log_post = kNegInf;
};

namespace detail {

inline double iso2_logpdf(const Vec2& x, const Vec2& mean, double var) {
  double dx = x.x() - mean.x(), dy = x.y() - mean.y();
  return -std::log(kTwoPi * var) - (dx * dx + dy * dy) / (2.0 * var);
}

inline YearCache build_year_cache(const YearObs& yo, const SubpopParams& sp,
                                  const TimingPair& timing) {
  YearCache c;
  c.init_var = sp.ou().stationary_var();
  c.steps.resize(yo.obs.empty() ? 0 : yo.obs.size() - 1);
  for (std::size_t j = 0; j + 1 < yo.obs.size(); ++j) {
    double dt = yo.obs[j + 1].day - yo.obs[j].day;
    GammaWeights g = gamma_weights(sp.theta, yo.obs[j].day, dt, timing);
    StepCoef& s = c.steps[j];
    s.a = std::exp(-sp.theta * dt);
    s.v = c.init_var * (1.0 - s.a * s.a);
    s.g1 = g.g1;
    s.g2 = g.g2;
    s.g3 = g.g3;
  }
  return c;
}

inline double year_loglik(const YearObs& yo, const YearCache& c, const Vec2& m1,
                          const Vec2& m2, const Vec2& m3) {
  double ll = iso2_logpdf(yo.obs.front().loc, m1, c.init_var);
  for (std::size_t j = 0; j < c.steps.size(); ++j) {
    const StepCoef& s = c.steps[j];
    double mx = s.a * yo.obs[j].loc.x() + s.g1 * m1.x() + s.g2 * m2.x() + s.g3 * m3.x();
    double my = s.a * yo.obs[j].loc.y() + s.g1 * m1.y() + s.g2 * m2.y() + s.g3 * m3.y();
    double dx = yo.obs[j + 1].loc.x() - mx;
    double dy = yo.obs[j + 1].loc.y() - my;
    ll += -std::log(kTwoPi * s.v) - (dx * dx + dy * dy) / (2.0 * s.v);
  }
  return ll;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// parameter blocks

// Blocks of the Metropolis-Hastings sweep. Population blocks carry the
// abundance raster caches with them; latent blocks touch only their bird's
// telemetry terms and priors.
struct Block {
  enum class Kind {
    movement,       // (log theta, log sigma2) of one subpopulation
    winter_prior,   // (mu_w, tau_w1, tau_w2, logit rho_w)
    summer_prior,   // (mu_s, tau_s1, tau_s2, logit rho_s)
    timing_shapes,  // log alpha 1..4
    global_rates,   // (log delta_w, log delta_s)
    eta,            // pairwise mass transfer on the weight simplex
    kappa,          // log kappa^2
    attractors,     // one bird-year's attractive points
    timings         // one bird's (logit a1, logit a2)
  };
  Kind kind = Kind::movement;
  int subpop = -1;
  int bird = -1;
  int year_index = -1;
  int dim = 1;
  double target = 0.44;
  double log_scale = 0.0;
  long batch_accepts = 0;
  long batch_count = 0;
  long batches_done = 0;
  long total_accepts = 0;
  long total_proposals = 0;

  std::string name() const {
    switch (kind) {
      case Kind::movement: return "movement." + std::to_string(subpop + 1);
      case Kind::winter_prior: return "winter_prior." + std::to_string(subpop + 1);
      case Kind::summer_prior: return "summer_prior." + std::to_string(subpop + 1);
      case Kind::timing_shapes: return "timing_shapes." + std::to_string(subpop + 1);
      case Kind::global_rates: return "global_rates";
      case Kind::eta: return "eta";
      case Kind::kappa: return "kappa2";
      case Kind::attractors:
        return "attractors." + std::to_string(bird) + "." + std::to_string(year_index);
      case Kind::timings: return "timings." + std::to_string(bird);
    }
    return "?";
  }
};

// Log-adaptive proposal tuning: after each batch, nudge the log proposal
// scale toward the target acceptance rate with gain decaying as
// 1/sqrt(batch number).
inline void adapt_block(Block& b, bool accepted, int batch, double gain) {
  b.total_proposals++;
  if (accepted) {
    b.total_accepts++;
    b.batch_accepts++;
  }
  b.batch_count++;
  if (b.batch_count >= batch) {
    b.batches_done++;
    double rate =
        static_cast<double>(b.batch_accepts) / static_cast<double>(b.batch_count);
    b.log_scale +=
        gain / std::sqrt(static_cast<double>(b.batches_done)) * (rate - b.target);
    b.batch_accepts = 0;
    b.batch_count = 0;
  }
}

// ---------------------------------------------------------------------------
// sampler

class Sampler {
 public:
  Sampler(const FitData& data, const McmcConfig& cfg)
      : data_(&data), cfg_(cfg), bbox_(data.mu_support()) {
    if (data.P < 1) throw UserError("Sampler: data has no subpopulations");
  }

  const FitData& data() const { return *data_; }
  const McmcConfig& config() const { return cfg_; }
  const BBox& mu_support() const { return bbox_; }

  // Timing-weighted rasters of one subpopulation for every data week.
  std::vector<Raster> build_rasters_for(const SubpopParams& sp, double delta_w,
                                        const HaltonDesign& design, int p) const {
    const auto& weeks = data_->abundance.week_days;
    std::vector<Raster> out(weeks.size(),
                            Raster(static_cast<std::size_t>(
                                       data_->abundance.grid.n_cells()), 0.0));
    for (std::size_t w = 0; w < weeks.size(); ++w) {
      for (int q = 0; q < design.Q; ++q) {
        Gaussian2D comp = subpop_field_conditional(
            weeks[w], sp, delta_w, design.timings[static_cast<std::size_t>(q)]);
        accumulate_gaussian_on_grid(
            out[w], data_->abundance.grid,
            design.weights[static_cast<std::size_t>(p)][static_cast<std::size_t>(q)],
            comp);
      }
    }
    return out;
  }

  // Residual sum of squares of the abundance data against the eta-weighted,
  // grid-normalized field. `replace_p` >= 0 substitutes that subpopulation's
  // rasters with `replacement`. Returns -1 on a massless week.
  double compute_ssr(const std::vector<double>& eta,
                     const std::vector<std::vector<Raster>>& base, int replace_p,
                     const std::vector<Raster>* replacement) const {
    const auto& ab = data_->abundance;
    const std::size_t n_cells = static_cast<std::size_t>(ab.grid.n_cells());
    const std::size_t P = eta.size();
    std::vector<double> pi(n_cells);
    double ssr = 0.0;
    for (std::size_t w = 0; w < ab.n_weeks(); ++w) {
      double mass = 0.0;
      for (std::size_t i = 0; i < n_cells; ++i) pi[i] = 0.0;
      for (std::size_t p = 0; p < P; ++p) {
        const Raster& r = (static_cast<int>(p) == replace_p && replacement)
                              ? (*replacement)[w]
                              : base[p][w];
        const double e = eta[p];
        for (std::size_t i = 0; i < n_cells; ++i) pi[i] += e * r[i];
      }
      double m = 0.0;
      for (std::size_t i = 0; i < n_cells; ++i) m += pi[i];
      mass = m;
      if (!(mass > 0.0) || !std::isfinite(mass)) return -1.0;
      const Raster& obs = ab.values[w];
      double acc = 0.0;
      double inv = 1.0 / mass;
      for (std::size_t i = 0; i < n_cells; ++i) {
        double r = obs[i] - pi[i] * inv;
        acc += r * r;
      }
      ssr += acc;
    }
    return ssr;
  }

  double abundance_ll_from_ssr(double ssr, double kappa2) const {
    double n = static_cast<double>(data_->abundance.n_weeks()) *
               static_cast<double>(data_->abundance.grid.n_cells());
    return -0.5 * n * std::log(kTwoPi * kappa2) - ssr / (2.0 * kappa2);
  }

  // Recomputes every cache and the total log posterior from scratch.
  void rebuild_all(ChainState& s) const {
    const std::size_t nb = data_->birds.size();
    s.design = halton_design(cfg_.Q, s.subpops);
    s.telem.assign(nb, {});
    s.attractor_lp.assign(nb, 0.0);
    s.timing_lp.assign(nb, 0.0);
    for (std::size_t b = 0; b < nb; ++b) {
      const BirdData& bd = data_->birds[b];
      const LatentIndividual& lat = s.latents[b];
      const SubpopParams& sp = s.subpops[static_cast<std::size_t>(bd.subpop)];
      TimingPair timing = timing_from_latent(lat.a1, lat.a2);
      s.telem[b].resize(bd.years.size());
      for (std::size_t k = 0; k < bd.years.size(); ++k) {
        s.telem[b][k] = detail::build_year_cache(bd.years[k], sp, timing);
        s.telem[b][k].loglik =
            detail::year_loglik(bd.years[k], s.telem[b][k], lat.m1_of(k),
                                lat.years[k].m2, lat.years[k].m3);
      }
      s.attractor_lp[b] = attractor_log_prior(lat, sp, s.global);
      s.timing_lp[b] = timing_log_prior(lat.a1, lat.a2, sp);
    }
    s.population_lp = log_priors_population(s.subpops, s.global, bbox_);
    s.subpop_rasters.clear();
    for (std::size_t p = 0; p < s.subpops.size(); ++p) {
      s.subpop_rasters.push_back(build_rasters_for(
          s.subpops[p], s.global.delta_w, s.design, static_cast<int>(p)));
    }
    s.ssr = compute_ssr(s.global.eta, s.subpop_rasters, -1, nullptr);
    s.abundance_ll =
        s.ssr < 0.0 ? kNegInf : abundance_ll_from_ssr(s.ssr, s.global.kappa2);
    s.log_post = total_from_caches(s);
  }

  double total_from_caches(const ChainState& s) const {
    if (s.population_lp == kNegInf || s.abundance_ll == kNegInf) return kNegInf;
    StableSum t;
    for (std::size_t b = 0; b < data_->birds.size(); ++b) {
      for (const YearCache& yc : s.telem[b]) t.add(yc.loglik);
      t.add(s.attractor_lp[b]);
      t.add(s.timing_lp[b]);
    }
    t.add(s.population_lp);
    t.add(s.abundance_ll);
    return t.value();
  }

  ChainState init_state(std::uint64_t chain_seed) const;
  std::vector<Block> make_blocks() const;
  bool mh_step(ChainState& s, Block& block, Rng& rng) const;

  void sweep(ChainState& s, std::vector<Block>& blocks, Rng& rng) const {
    for (Block& b : blocks) {
      bool acc = mh_step(s, b, rng);
      adapt_block(b, acc, cfg_.adapt_batch, cfg_.adapt_gain);
    }
  }

 private:
  const FitData* data_;
  McmcConfig cfg_;
  BBox bbox_;
};

// --- initialization ----------------------------------------------------------

inline ChainState Sampler::init_state(std::uint64_t chain_seed) const {
  Rng rng = make_rng(chain_seed, 0xA11CE);
  const FitData& d = *data_;
  ChainState s;
  s.subpops.resize(static_cast<std::size_t>(d.P));
  s.latents.resize(d.birds.size());

  auto window_mean = [](const YearObs& yo, double lo, double hi,
                        double fallback_day) {
    Vec2 sum = Vec2::Zero();
    int n = 0;
    for (const Observation& o : yo.obs) {
      if (o.day >= lo && o.day <= hi) {
        sum += o.loc;
        ++n;
      }
    }
    if (n > 0) return Vec2(sum / n);
    const Observation* best = &yo.obs.front();
    for (const Observation& o : yo.obs) {
      if (std::abs(o.day - fallback_day) < std::abs(best->day - fallback_day)) {
        best = &o;
      }
    }
    return best->loc;
  };

  std::vector<std::vector<Vec2>> winter_pts(static_cast<std::size_t>(d.P));
  std::vector<std::vector<Vec2>> summer_pts(static_cast<std::size_t>(d.P));
  std::vector<int> counts(static_cast<std::size_t>(d.P), 0);
  for (std::size_t b = 0; b < d.birds.size(); ++b) {
    const BirdData& bd = d.birds[b];
    LatentIndividual& lat = s.latents[b];
    lat.bird_id = bd.bird_id;
    lat.subpop = bd.subpop;
    lat.a1 = 0.5;
    lat.a2 = 0.5;
    for (std::size_t k = 0; k < bd.years.size(); ++k) {
      YearLatent yl;
      yl.year = bd.years[k].year;
      yl.linked = k > 0 && bd.years[k].year == bd.years[k - 1].year + 1;
      yl.m1 = window_mean(bd.years[k], 0.0, 15.0, 0.0);
      yl.m2 = window_mean(bd.years[k], 167.0, 195.0, 181.0);
      yl.m3 = window_mean(bd.years[k], 350.0, 364.0, 364.0);
      lat.years.push_back(yl);
      winter_pts[static_cast<std::size_t>(bd.subpop)].push_back(yl.m1);
      summer_pts[static_cast<std::size_t>(bd.subpop)].push_back(yl.m2);
      counts[static_cast<std::size_t>(bd.subpop)]++;
    }
  }

  auto moments = [&](const std::vector<Vec2>& pts, Vec2& mean, double& t1,
                     double& t2, double& rho) {
    mean = Vec2::Zero();
    for (const Vec2& p : pts) mean += p;
    if (!pts.empty()) mean /= static_cast<double>(pts.size());
    double sxx = 1.0, syy = 1.0, sxy = 0.0;  // ridge floor of 1 km^2
    for (const Vec2& p : pts) {
      sxx += (p.x() - mean.x()) * (p.x() - mean.x());
      syy += (p.y() - mean.y()) * (p.y() - mean.y());
      sxy += (p.x() - mean.x()) * (p.y() - mean.y());
    }
    double n = static_cast<double>(std::max<std::size_t>(pts.size(), 2)) - 1.0;
    sxx /= n;
    syy /= n;
    sxy /= n;
    t1 = std::log(sxx);
    t2 = std::log(syy);
    rho = std::clamp(sxy / std::sqrt(sxx * syy), 0.05, 0.95);
  };

  for (int p = 0; p < d.P; ++p) {
    SubpopParams& sp = s.subpops[static_cast<std::size_t>(p)];
    moments(winter_pts[static_cast<std::size_t>(p)], sp.mu_w, sp.tau_w1,
            sp.tau_w2, sp.rho_w);
    moments(summer_pts[static_cast<std::size_t>(p)], sp.mu_s, sp.tau_s1,
            sp.tau_s2, sp.rho_s);

    // pooled winter lag-1 autocorrelation for the mean-reversion moments
    double num = 0.0, den = 0.0;
    for (std::size_t b = 0; b < d.birds.size(); ++b) {
      if (d.birds[b].subpop != p) continue;
      for (std::size_t k = 0; k < d.birds[b].years.size(); ++k) {
        const auto& obs = d.birds[b].years[k].obs;
        Vec2 m = s.latents[b].years[k].m1;
        for (std::size_t j = 0; j + 1 < obs.size(); ++j) {
          if (obs[j + 1].day > 15.0) break;
          if (obs[j + 1].day - obs[j].day != 1.0) continue;
          Vec2 u = obs[j].loc - m, w = obs[j + 1].loc - m;
          num += u.dot(w);
          den += u.dot(u);
        }
      }
    }
    double r = den > 0.0 ? std::clamp(num / den, 0.05, 0.95) : 0.5;
    sp.theta = -std::log(r);
    double resid2 = 0.0;
    long nresid = 0;
    for (std::size_t b = 0; b < d.birds.size(); ++b) {
      if (d.birds[b].subpop != p) continue;
      for (std::size_t k = 0; k < d.birds[b].years.size(); ++k) {
        const auto& obs = d.birds[b].years[k].obs;
        Vec2 m = s.latents[b].years[k].m1;
        for (std::size_t j = 0; j + 1 < obs.size(); ++j) {
          if (obs[j + 1].day > 15.0) break;
          if (obs[j + 1].day - obs[j].day != 1.0) continue;
          Vec2 e = (obs[j + 1].loc - m) - r * (obs[j].loc - m);
          resid2 += e.squaredNorm();
          nresid += 2;
        }
      }
    }
    double vres = nresid > 0 ? resid2 / static_cast<double>(nresid) : 1.0;
    sp.sigma2 = std::max(1e-6, vres * 2.0 * sp.theta / (1.0 - r * r));
    for (double& a : sp.alpha) a = 2.0;
  }

  // mixture weights from bird-year shares, projected into the constraint set
  double scale = GlobalParams::eta_scale(static_cast<std::size_t>(d.P));
  if (!(scale > 0.0)) {
    throw UserError("init_state: too many subpopulations for the weight floor");
  }
  std::vector<double> star(static_cast<std::size_t>(d.P));
  double tot = 0.0;
  for (int p = 0; p < d.P; ++p) {
    double prop = static_cast<double>(counts[static_cast<std::size_t>(p)]) /
                  static_cast<double>(d.n_bird_years());
    star[static_cast<std::size_t>(p)] =
        std::clamp((prop - GlobalParams::eta_floor()) / scale, 1e-4, 1.0);
    tot += star[static_cast<std::size_t>(p)];
  }
  s.global.eta.resize(static_cast<std::size_t>(d.P));
  for (int p = 0; p < d.P; ++p) {
    s.global.eta[static_cast<std::size_t>(p)] =
        GlobalParams::eta_floor() + scale * star[static_cast<std::size_t>(p)] / tot;
  }
  s.global.delta_w = 1.0;
  s.global.delta_s = 1.0;
  s.global.kappa2 = 1e-6;

  // light per-chain jitter so parallel chains explore from distinct points
  for (SubpopParams& sp : s.subpops) {
    sp.mu_w += Vec2(5.0 * normal(rng), 5.0 * normal(rng));
    sp.mu_s += Vec2(5.0 * normal(rng), 5.0 * normal(rng));
    sp.mu_w.x() = std::clamp(sp.mu_w.x(), bbox_.xmin, bbox_.xmax);
    sp.mu_w.y() = std::clamp(sp.mu_w.y(), bbox_.ymin, bbox_.ymax);
    sp.mu_s.x() = std::clamp(sp.mu_s.x(), bbox_.xmin, bbox_.xmax);
    sp.mu_s.y() = std::clamp(sp.mu_s.y(), bbox_.ymin, bbox_.ymax);
    double w = std::clamp(std::exp(-sp.theta), 0.03, 0.97);
    sp.theta = -std::log(w);
  }

  rebuild_all(s);
  // kappa2 from the actual residuals, then refresh the dependent terms
  double n = static_cast<double>(d.abundance.n_weeks()) *
             static_cast<double>(d.abundance.grid.n_cells());
  if (s.ssr >= 0.0) {
    s.global.kappa2 = std::max(1e-12, s.ssr / n);
    s.population_lp = log_priors_population(s.subpops, s.global, bbox_);
    s.abundance_ll = abundance_ll_from_ssr(s.ssr, s.global.kappa2);
    s.log_post = total_from_caches(s);
  }
  if (!std::isfinite(s.log_post)) {
    throw UserError("init_state: non-finite log posterior at initialization");
  }
  return s;
}

inline std::vector<Block> Sampler::make_blocks() const {
  std::vector<Block> blocks;
  auto add = [&](Block b) {
    b.target = b.dim == 1 ? cfg_.target_scalar : cfg_.target_vector;
    blocks.push_back(b);
  };
  for (int p = 0; p < data_->P; ++p) {
    add({.kind = Block::Kind::movement, .subpop = p, .dim = 2});
    add({.kind = Block::Kind::winter_prior, .subpop = p, .dim = 5});
    add({.kind = Block::Kind::summer_prior, .subpop = p, .dim = 5});
    add({.kind = Block::Kind::timing_shapes, .subpop = p, .dim = 4});
  }
  add({.kind = Block::Kind::global_rates, .dim = 2});
  if (data_->P > 1) add({.kind = Block::Kind::eta, .dim = 1});
  add({.kind = Block::Kind::kappa, .dim = 1});
  for (std::size_t b = 0; b < data_->birds.size(); ++b) {
    for (std::size_t k = 0; k < data_->birds[b].years.size(); ++k) {
      bool linked = k > 0 && data_->birds[b].years[k].year ==
                                 data_->birds[b].years[k - 1].year + 1;
      add({.kind = Block::Kind::attractors, .bird = static_cast<int>(b),
           .year_index = static_cast<int>(k), .dim = linked ? 4 : 6});
    }
    add({.kind = Block::Kind::timings, .bird = static_cast<int>(b), .dim = 2});
  }
  return blocks;
}

// --- Metropolis-Hastings step -------------------------------------------------

inline bool Sampler::mh_step(ChainState& s, Block& block, Rng& rng) const {
  const FitData& d = *data_;
  double z[6];
  auto propose = [&](int dim) {
    double sc = std::exp(block.log_scale);
    for (int i = 0; i < dim; i += 2) {
      NormalPair np = normal_pair(rng);
      z[i] = sc * np.z1;
      if (i + 1 < dim) z[i + 1] = sc * np.z2;
    }
  };
  auto accept = [&](double log_ratio) {
    return std::log(uniform01(rng)) < log_ratio;
  };

  switch (block.kind) {
    case Block::Kind::movement: {
      const auto p = static_cast<std::size_t>(block.subpop);
      propose(2);
      SubpopParams cand = s.subpops[p];
      cand.theta = std::exp(std::log(cand.theta) + z[0]);
      cand.sigma2 = std::exp(std::log(cand.sigma2) + z[1]);
      double jac = z[0] + z[1];

      std::vector<SubpopParams> cand_subpops = s.subpops;
      cand_subpops[p] = cand;
      double pop_lp = log_priors_population(cand_subpops, s.global, bbox_);
      if (pop_lp == kNegInf) return false;

      std::vector<std::vector<YearCache>> cand_telem;
      std::vector<std::size_t> touched;
      double d_tel = 0.0;
      for (std::size_t b = 0; b < d.birds.size(); ++b) {
        if (d.birds[b].subpop != block.subpop) continue;
        touched.push_back(b);
        const LatentIndividual& lat = s.latents[b];
        TimingPair timing = timing_from_latent(lat.a1, lat.a2);
        std::vector<YearCache> yc(d.birds[b].years.size());
        for (std::size_t k = 0; k < yc.size(); ++k) {
          yc[k] = detail::build_year_cache(d.birds[b].years[k], cand, timing);
          yc[k].loglik =
              detail::year_loglik(d.birds[b].years[k], yc[k], lat.m1_of(k),
                                  lat.years[k].m2, lat.years[k].m3);
          d_tel += yc[k].loglik - s.telem[b][k].loglik;
        }
        cand_telem.push_back(std::move(yc));
      }

      std::vector<Raster> rasters =
          build_rasters_for(cand, s.global.delta_w, s.design, block.subpop);
      double ssr = compute_ssr(s.global.eta, s.subpop_rasters, block.subpop, &rasters);
      if (ssr < 0.0) return false;
      double ab_ll = abundance_ll_from_ssr(ssr, s.global.kappa2);

      double delta = (pop_lp - s.population_lp) + d_tel + (ab_ll - s.abundance_ll);
      if (accept(delta + jac)) {
        s.subpops[p] = cand;
        for (std::size_t i = 0; i < touched.size(); ++i) {
          s.telem[touched[i]] = std::move(cand_telem[i]);
        }
        s.population_lp = pop_lp;
        s.subpop_rasters[p] = std::move(rasters);
        s.ssr = ssr;
        s.abundance_ll = ab_ll;
        s.log_post += delta;
        return true;
      }
      return false;
    }

    case Block::Kind::winter_prior:
    case Block::Kind::summer_prior: {
      const bool winter = block.kind == Block::Kind::winter_prior;
      const auto p = static_cast<std::size_t>(block.subpop);
      propose(5);
      SubpopParams cand = s.subpops[p];
      Vec2& mu = winter ? cand.mu_w : cand.mu_s;
      double& t1 = winter ? cand.tau_w1 : cand.tau_s1;
      double& t2 = winter ? cand.tau_w2 : cand.tau_s2;
      double& rho = winter ? cand.rho_w : cand.rho_s;
      double rho_old = rho;
      mu.x() += z[0];
      mu.y() += z[1];
      t1 += z[2];
      t2 += z[3];
      rho = inv_logit(logit(rho_old) + z[4]);
      double jac = std::log(rho * (1.0 - rho)) - std::log(rho_old * (1.0 - rho_old));

      std::vector<SubpopParams> cand_subpops = s.subpops;
      cand_subpops[p] = cand;
      double pop_lp = log_priors_population(cand_subpops, s.global, bbox_);
      if (pop_lp == kNegInf) return false;

      double d_prior = 0.0;
      std::vector<std::pair<std::size_t, double>> new_attr;
      for (std::size_t b = 0; b < d.birds.size(); ++b) {
        if (d.birds[b].subpop != block.subpop) continue;
        double lp = attractor_log_prior(s.latents[b], cand, s.global);
        new_attr.emplace_back(b, lp);
        d_prior += lp - s.attractor_lp[b];
      }

      std::vector<Raster> rasters =
          build_rasters_for(cand, s.global.delta_w, s.design, block.subpop);
      double ssr = compute_ssr(s.global.eta, s.subpop_rasters, block.subpop, &rasters);
      if (ssr < 0.0) return false;
      double ab_ll = abundance_ll_from_ssr(ssr, s.global.kappa2);

      double delta = (pop_lp - s.population_lp) + d_prior + (ab_ll - s.abundance_ll);
      if (accept(delta + jac)) {
        s.subpops[p] = cand;
        for (auto& [b, lp] : new_attr) s.attractor_lp[b] = lp;
        s.population_lp = pop_lp;
        s.subpop_rasters[p] = std::move(rasters);
        s.ssr = ssr;
        s.abundance_ll = ab_ll;
        s.log_post += delta;
        return true;
      }
      return false;
    }

    case Block::Kind::timing_shapes: {
      const auto p = static_cast<std::size_t>(block.subpop);
      propose(4);
      SubpopParams cand = s.subpops[p];
      double jac = 0.0;
      for (int i = 0; i < 4; ++i) {
        cand.alpha[i] = std::exp(std::log(cand.alpha[i]) + z[i]);
        jac += z[i];
      }
      std::vector<SubpopParams> cand_subpops = s.subpops;
      cand_subpops[p] = cand;
      double pop_lp = log_priors_population(cand_subpops, s.global, bbox_);
      if (pop_lp == kNegInf) return false;

      HaltonDesign cand_design;
      try {
        cand_design = halton_design(cfg_.Q, cand_subpops);
      } catch (const std::domain_error&) {
        return false;  // beta weights vanished at every design point
      }

      double d_timing = 0.0;
      std::vector<std::pair<std::size_t, double>> new_tim;
      for (std::size_t b = 0; b < d.birds.size(); ++b) {
        if (d.birds[b].subpop != block.subpop) continue;
        double lp = timing_log_prior(s.latents[b].a1, s.latents[b].a2, cand);
        new_tim.emplace_back(b, lp);
        d_timing += lp - s.timing_lp[b];
      }

      std::vector<Raster> rasters =
          build_rasters_for(cand, s.global.delta_w, cand_design, block.subpop);
      double ssr = compute_ssr(s.global.eta, s.subpop_rasters, block.subpop, &rasters);
      if (ssr < 0.0) return false;
      double ab_ll = abundance_ll_from_ssr(ssr, s.global.kappa2);

      double delta = (pop_lp - s.population_lp) + d_timing + (ab_ll - s.abundance_ll);
      if (accept(delta + jac)) {
        s.subpops[p] = cand;
        for (auto& [b, lp] : new_tim) s.timing_lp[b] = lp;
        s.population_lp = pop_lp;
        s.design = std::move(cand_design);
        s.subpop_rasters[p] = std::move(rasters);
        s.ssr = ssr;
        s.abundance_ll = ab_ll;
        s.log_post += delta;
        return true;
      }
      return false;
    }

    case Block::Kind::global_rates: {
      propose(2);
      GlobalParams cand = s.global;
      cand.delta_w = std::exp(std::log(cand.delta_w) + z[0]);
      cand.delta_s = std::exp(std::log(cand.delta_s) + z[1]);
      double jac = z[0] + z[1];

      double pop_lp = log_priors_population(s.subpops, cand, bbox_);
      if (pop_lp == kNegInf) return false;
      double d_prior = 0.0;
      std::vector<double> new_attr(d.birds.size());
      for (std::size_t b = 0; b < d.birds.size(); ++b) {
        new_attr[b] = attractor_log_prior(
            s.latents[b], s.subpops[static_cast<std::size_t>(d.birds[b].subpop)],
            cand);
        d_prior += new_attr[b] - s.attractor_lp[b];
      }

      std::vector<std::vector<Raster>> rasters;
      for (int p = 0; p < d.P; ++p) {
        rasters.push_back(build_rasters_for(
            s.subpops[static_cast<std::size_t>(p)], cand.delta_w, s.design, p));
      }
      double ssr = compute_ssr(s.global.eta, rasters, -1, nullptr);
      if (ssr < 0.0) return false;
      double ab_ll = abundance_ll_from_ssr(ssr, cand.kappa2);

      double delta = (pop_lp - s.population_lp) + d_prior + (ab_ll - s.abundance_ll);
      if (accept(delta + jac)) {
        s.global = cand;
        s.attractor_lp = std::move(new_attr);
        s.population_lp = pop_lp;
        s.subpop_rasters = std::move(rasters);
        s.ssr = ssr;
        s.abundance_ll = ab_ll;
        s.log_post += delta;
        return true;
      }
      return false;
    }

    case Block::Kind::eta: {
      const std::size_t P = s.global.eta.size();
      std::size_t i = rng() % P;
      std::size_t j = rng() % (P - 1);
      if (j >= i) ++j;
      propose(1);
      GlobalParams cand = s.global;
      cand.eta[i] += z[0];
      cand.eta[j] -= z[0];
      double pop_lp = log_priors_population(s.subpops, cand, bbox_);
      if (pop_lp == kNegInf) return false;
      double ssr = compute_ssr(cand.eta, s.subpop_rasters, -1, nullptr);
      if (ssr < 0.0) return false;
      double ab_ll = abundance_ll_from_ssr(ssr, cand.kappa2);
      double delta = (pop_lp - s.population_lp) + (ab_ll - s.abundance_ll);
      if (accept(delta)) {
        s.global = cand;
        s.population_lp = pop_lp;
        s.ssr = ssr;
        s.abundance_ll = ab_ll;
        s.log_post += delta;
        return true;
      }
      return false;
    }

    case Block::Kind::kappa: {
      propose(1);
      GlobalParams cand = s.global;
      cand.kappa2 = std::exp(std::log(cand.kappa2) + z[0]);
      double jac = z[0];
      double pop_lp = log_priors_population(s.subpops, cand, bbox_);
      if (pop_lp == kNegInf) return false;
      double ab_ll = abundance_ll_from_ssr(s.ssr, cand.kappa2);
      double delta = (pop_lp - s.population_lp) + (ab_ll - s.abundance_ll);
      if (accept(delta + jac)) {
        s.global = cand;
        s.population_lp = pop_lp;
        s.abundance_ll = ab_ll;
        s.log_post += delta;
        return true;
      }
      return false;
    }

    case Block::Kind::attractors: {
      const auto b = static_cast<std::size_t>(block.bird);
      const auto k = static_cast<std::size_t>(block.year_index);
      LatentIndividual cand = s.latents[b];
      YearLatent& yl = cand.years[k];
      propose(block.dim);
      int zi = 0;
      if (!yl.linked) {
        yl.m1 += Vec2(z[zi], z[zi + 1]);
        zi += 2;
      }
      yl.m2 += Vec2(z[zi], z[zi + 1]);
      zi += 2;
      yl.m3 += Vec2(z[zi], z[zi + 1]);

      const BirdData& bd = d.birds[b];
      const SubpopParams& sp = s.subpops[static_cast<std::size_t>(bd.subpop)];
      double attr_lp = attractor_log_prior(cand, sp, s.global);
      double delta = attr_lp - s.attractor_lp[b];

      double ll_k = detail::year_loglik(bd.years[k], s.telem[b][k], cand.m1_of(k),
                                        yl.m2, yl.m3);
      delta += ll_k - s.telem[b][k].loglik;
      // the next year borrows this m3 as its m1 when calendar-consecutive
      double ll_next = 0.0;
      bool has_next = k + 1 < bd.years.size() && cand.years[k + 1].linked;
      if (has_next) {
        ll_next = detail::year_loglik(bd.years[k + 1], s.telem[b][k + 1],
                                      cand.m1_of(k + 1), cand.years[k + 1].m2,
                                      cand.years[k + 1].m3);
        delta += ll_next - s.telem[b][k + 1].loglik;
      }
      if (accept(delta)) {
        s.latents[b] = std::move(cand);
        s.attractor_lp[b] = attr_lp;
        s.telem[b][k].loglik = ll_k;
        if (has_next) s.telem[b][k + 1].loglik = ll_next;
        s.log_post += delta;
        return true;
      }
      return false;
    }

    case Block::Kind::timings: {
      const auto b = static_cast<std::size_t>(block.bird);
      propose(2);
      LatentIndividual cand = s.latents[b];
      double a1_old = cand.a1, a2_old = cand.a2;
      cand.a1 = inv_logit(logit(a1_old) + z[0]);
      cand.a2 = inv_logit(logit(a2_old) + z[1]);
      double jac = std::log(cand.a1 * (1.0 - cand.a1)) +
                   std::log(cand.a2 * (1.0 - cand.a2)) -
                   std::log(a1_old * (1.0 - a1_old)) -
                   std::log(a2_old * (1.0 - a2_old));

      const BirdData& bd = d.birds[b];
      const SubpopParams& sp = s.subpops[static_cast<std::size_t>(bd.subpop)];
      double tim_lp = timing_log_prior(cand.a1, cand.a2, sp);
      if (tim_lp == kNegInf) return false;
      TimingPair timing = timing_from_latent(cand.a1, cand.a2);
      std::vector<YearCache> yc(bd.years.size());
      double delta = tim_lp - s.timing_lp[b];
      for (std::size_t k = 0; k < bd.years.size(); ++k) {
        yc[k] = detail::build_year_cache(bd.years[k], sp, timing);
        yc[k].loglik = detail::year_loglik(bd.years[k], yc[k], cand.m1_of(k),
                                           cand.years[k].m2, cand.years[k].m3);
        delta += yc[k].loglik - s.telem[b][k].loglik;
      }
      if (accept(delta + jac)) {
        s.latents[b] = std::move(cand);
        s.timing_lp[b] = tim_lp;
        s.telem[b] = std::move(yc);
        s.log_post += delta;
        return true;
      }
      return false;
    }
  }
  return false;
}

// ---------------------------------------------------------------------------
// multi-chain run with importance-resampling swaps

// Pooled importance resample: every chain independently redraws its state
// from the current states, weighted by exp(log posterior - max).
inline std::vector<std::size_t> importance_resample_indices(
    const std::vector<double>& log_posts, Rng& rng) {
  if (log_posts.size() < 2) {
    throw std::invalid_argument("importance_resample: need at least two chains");
  }
  double best = kNegInf;
  for (double lp : log_posts) best = std::max(best, lp);
  if (best == kNegInf) {
    throw std::runtime_error("importance_resample: all chains have -inf posterior");
  }
  std::vector<double> w(log_posts.size());
  double tot = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = std::exp(log_posts[i] - best);
    tot += w[i];
  }
  std::vector<std::size_t> pick(log_posts.size());
  for (std::size_t c = 0; c < pick.size(); ++c) {
    double u = uniform01(rng) * tot;
    double acc = 0.0;
    std::size_t idx = w.size() - 1;
    for (std::size_t i = 0; i < w.size(); ++i) {
      acc += w[i];
      if (u <= acc) {
        idx = i;
        break;
      }
    }
    pick[c] = idx;
  }
  return pick;
}

inline void importance_resample_swap(std::vector<ChainState>& chains, Rng& rng) {
  std::vector<double> lps;
  lps.reserve(chains.size());
  for (const ChainState& c : chains) lps.push_back(c.log_post);
  std::vector<std::size_t> pick = importance_resample_indices(lps, rng);
  std::vector<ChainState> next;
  next.reserve(chains.size());
  for (std::size_t c = 0; c < chains.size(); ++c) next.push_back(chains[pick[c]]);
  chains = std::move(next);
}

struct SampleRow {
  int chain = 0;
  long iter = 0;
  double log_post = 0.0;
  std::vector<double> values;
};

struct PosteriorSamples {
  std::vector<std::string> names;
  std::vector<SampleRow> rows;
  int P = 0;
};

struct RunDiagnostics {
  std::vector<std::string> block_names;
  std::vector<double> block_accept_rates;  // pooled over chains
  std::vector<long> swap_iters;
  std::vector<int> swap_changed;
};

inline std::vector<std::string> parameter_names(int P, bool latents,
                                                const FitData* data) {
  std::vector<std::string> names;
  for (int p = 1; p <= P; ++p) {
    std::string s = "." + std::to_string(p);
    for (const char* base :
         {"theta", "sigma2", "mu_w_x", "mu_w_y", "mu_s_x", "mu_s_y", "tau_w1",
          "tau_w2", "rho_w", "tau_s1", "tau_s2", "rho_s", "alpha1", "alpha2",
          "alpha3", "alpha4"}) {
      names.push_back(base + s);
    }
  }
  names.push_back("delta_w");
  names.push_back("delta_s");
  names.push_back("kappa2");
  for (int p = 1; p <= P; ++p) names.push_back("eta." + std::to_string(p));
  if (latents && data) {
    for (const BirdData& b : data->birds) {
      names.push_back("a1." + b.bird_id);
      names.push_back("a2." + b.bird_id);
      for (const YearObs& y : b.years) {
        std::string s = "." + b.bird_id + "." + std::to_string(y.year);
        for (const char* base : {"m1_x", "m1_y", "m2_x", "m2_y", "m3_x", "m3_y"}) {
          names.push_back(base + s);
        }
      }
    }
  }
  return names;
}

inline std::vector<double> flatten_state(const ChainState& s, bool latents) {
  std::vector<double> v;
  for (const SubpopParams& sp : s.subpops) {
    v.insert(v.end(), {sp.theta, sp.sigma2, sp.mu_w.x(), sp.mu_w.y(),
                       sp.mu_s.x(), sp.mu_s.y(), sp.tau_w1, sp.tau_w2, sp.rho_w,
                       sp.tau_s1, sp.tau_s2, sp.rho_s, sp.alpha[0], sp.alpha[1],
                       sp.alpha[2], sp.alpha[3]});
  }
  v.push_back(s.global.delta_w);
  v.push_back(s.global.delta_s);
  v.push_back(s.global.kappa2);
  for (double e : s.global.eta) v.push_back(e);
  if (latents) {
    for (const LatentIndividual& b : s.latents) {
      v.push_back(b.a1);
      v.push_back(b.a2);
      for (std::size_t k = 0; k < b.years.size(); ++k) {
        const Vec2& m1 = b.m1_of(k);
        v.insert(v.end(), {m1.x(), m1.y(), b.years[k].m2.x(), b.years[k].m2.y(),
                           b.years[k].m3.x(), b.years[k].m3.y()});
      }
    }
  }
  return v;
}

// Runs the configured chains with periodic importance-resampling swaps,
// discards burn-in, thins, and returns the kept draws.
inline PosteriorSamples run_mcmc(const FitData& data, const McmcConfig& cfg,
                                 RunDiagnostics* diag = nullptr) {
  cfg.validate();
  Sampler sampler(data, cfg);
  const int C = cfg.n_chains;
  std::vector<ChainState> chains;
  std::vector<std::vector<Block>> blocks(static_cast<std::size_t>(C));
  std::vector<Rng> rngs;
  for (int c = 0; c < C; ++c) {
    chains.push_back(
        sampler.init_state(mix_seed(cfg.seed, static_cast<std::uint64_t>(c))));
    blocks[static_cast<std::size_t>(c)] = sampler.make_blocks();
    rngs.push_back(make_rng(cfg.seed, 1000 + static_cast<std::uint64_t>(c)));
  }
  Rng swap_rng = make_rng(cfg.seed, 0x5A5A);

  const long burn =
      static_cast<long>(cfg.burn_in_fraction * static_cast<double>(cfg.n_iters));
  PosteriorSamples out;
  out.P = data.P;
  out.names = parameter_names(data.P, cfg.keep_latents, &data);
  std::vector<std::vector<SampleRow>> kept(static_cast<std::size_t>(C));

  auto advance_chain = [&](int c, long iter_begin, long iter_end) {
    auto ci = static_cast<std::size_t>(c);
    for (long it = iter_begin; it < iter_end; ++it) {
      sampler.sweep(chains[ci], blocks[ci], rngs[ci]);
      long iter = it + 1;
      if (cfg.cache_check_interval > 0 && iter % cfg.cache_check_interval == 0) {
        ChainState fresh = chains[ci];
        sampler.rebuild_all(fresh);
        if (std::abs(fresh.log_post - chains[ci].log_post) >
            1e-8 * (1.0 + std::abs(fresh.log_post))) {
          throw std::logic_error("cache coherence violated at iteration " +
                                 std::to_string(iter));
        }
      }
      if (iter > burn && (iter - burn) % cfg.thin == 0) {
        SampleRow row;
        row.chain = c;
        row.iter = iter;
        row.log_post = chains[ci].log_post;
        row.values = flatten_state(chains[ci], cfg.keep_latents);
        kept[ci].push_back(std::move(row));
      }
    }
  };

  const long n_segments = cfg.n_iters / cfg.swap_interval;
  for (long seg = 0; seg < n_segments; ++seg) {
    long lo = seg * cfg.swap_interval;
    long hi = lo + cfg.swap_interval;
    if (cfg.threads > 1 && C > 1) {
      std::vector<std::thread> ts;
      std::vector<std::exception_ptr> errs(static_cast<std::size_t>(C));
      for (int c = 0; c < C; ++c) {
        ts.emplace_back([&, c]() {
          try {
            advance_chain(c, lo, hi);
          } catch (...) {
            errs[static_cast<std::size_t>(c)] = std::current_exception();
          }
        });
      }
      for (auto& t : ts) t.join();
      for (auto& e : errs) {
        if (e) std::rethrow_exception(e);
      }
    } else {
      for (int c = 0; c < C; ++c) advance_chain(c, lo, hi);
    }
    if (seg + 1 < n_segments && C > 1) {
      std::vector<double> before;
      for (const ChainState& ch : chains) before.push_back(ch.log_post);
      importance_resample_swap(chains, swap_rng);
      if (diag) {
        int changed = 0;
        for (int c = 0; c < C; ++c) {
          if (chains[static_cast<std::size_t>(c)].log_post !=
              before[static_cast<std::size_t>(c)]) {
            ++changed;
          }
        }
        diag->swap_iters.push_back(hi);
        diag->swap_changed.push_back(changed);
      }
    }
  }

  for (int c = 0; c < C; ++c) {
    for (SampleRow& r : kept[static_cast<std::size_t>(c)]) {
      out.rows.push_back(std::move(r));
    }
  }
  if (diag) {
    std::map<std::string, std::pair<long, long>> agg;
    for (const auto& bs : blocks) {
      for (const Block& b : bs) {
        auto& a = agg[b.name()];
        a.first += b.total_accepts;
        a.second += b.total_proposals;
      }
    }
    for (const auto& [name, a] : agg) {
      diag->block_names.push_back(name);
      diag->block_accept_rates.push_back(
          a.second > 0
              ? static_cast<double>(a.first) / static_cast<double>(a.second)
              : 0.0);
    }
  }
  return out;
}

// Convenience wrapper matching the composition of the fitted model: used by
// tests to cross-check the incremental caches.
inline double log_posterior(const FitData& data, const McmcConfig& cfg,
                            ChainState& state) {
  Sampler sampler(data, cfg);
  sampler.rebuild_all(state);
  return state.log_post;
}

}  // namespace imm
