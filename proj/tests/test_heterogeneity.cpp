#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "imm/heterogeneity.hpp"
#include "imm/rng.hpp"
#include "imm/simulate.hpp"

using namespace imm;
using Catch::Approx;

TEST_CASE("timing map endpoints and inverse") {
  CHECK(timing_from_latent(1e-12, 0.5).spring_onset == Approx(15.0).margin(1e-6));
  CHECK(timing_from_latent(1.0 - 1e-12, 0.5).spring_onset ==
        Approx(166.0).margin(1e-6));
  CHECK(timing_from_latent(0.5, 0.5).fall_onset == Approx(273.0));
  double a1 = 0.0, a2 = 0.0;
  TimingPair t = timing_from_latent(0.37, 0.81);
  latent_from_timing(t, a1, a2);
  CHECK(a1 == Approx(0.37).margin(1e-15));
  CHECK(a2 == Approx(0.81).margin(1e-15));
  CHECK_THROWS_AS(timing_from_latent(0.0, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(timing_from_latent(0.5, 1.0), std::invalid_argument);
}

TEST_CASE("timing log prior values") {
  SubpopParams sp;
  sp.alpha[0] = sp.alpha[1] = sp.alpha[2] = sp.alpha[3] = 1.0;
  CHECK(timing_log_prior(0.3, 0.8, sp) == Approx(0.0).margin(1e-14));
  sp.alpha[0] = sp.alpha[1] = 2.0;
  sp.alpha[2] = sp.alpha[3] = 1.0;
  CHECK(timing_log_prior(0.5, 0.5, sp) == Approx(std::log(1.5)).epsilon(1e-12));
  CHECK(timing_log_prior(-0.1, 0.5, sp) == kNegInf);
}

TEST_CASE("timing prior: mean onset day matches the beta mean by sampling") {
  SubpopParams sp;
  sp.alpha[0] = 3.0;
  sp.alpha[1] = 5.0;
  Rng rng = make_rng(8);
  double acc = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    acc += timing_from_latent(sample_beta(3.0, 5.0, rng), 0.5).spring_onset;
  }
  double expected = 151.0 * 3.0 / 8.0 + 15.0;
  // beta(3,5) sd ~ 0.156 -> onset sd ~ 23.6
  CHECK(acc / n == Approx(expected).margin(3.0 * 151.0 * 0.156 / std::sqrt(n)));
}

namespace {
LatentIndividual two_year_bird(int y1, int y2, bool linked) {
  LatentIndividual b;
  b.bird_id = "b";
  b.a1 = 0.4;
  b.a2 = 0.6;
  YearLatent first;
  first.year = y1;
  first.m1 = {10.0, 20.0};
  first.m2 = {500.0, 600.0};
  first.m3 = {30.0, 10.0};
  b.years.push_back(first);
  YearLatent second;
  second.year = y2;
  second.linked = linked;
  second.m1 = {25.0, 15.0};
  second.m2 = {520.0, 580.0};
  second.m3 = {5.0, 30.0};
  b.years.push_back(second);
  return b;
}
}  // namespace

TEST_CASE("attractor prior: gap-year chain matches a hand-rolled density") {
  SubpopParams sp;
  sp.mu_w = {0.0, 0.0};
  sp.mu_s = {550.0, 550.0};
  sp.tau_w1 = std::log(900.0);
  sp.tau_w2 = std::log(400.0);
  sp.rho_w = 0.25;
  sp.tau_s1 = std::log(1600.0);
  sp.tau_s2 = std::log(2500.0);
  sp.rho_s = 0.4;
  GlobalParams g;
  g.delta_w = 0.6;
  g.delta_s = 0.9;

  // years 2011 and 2013: m1 exponent delta_w * 1, m2 exponent delta_s * 2
  LatentIndividual bird = two_year_bird(2011, 2013, false);
  double lp = attractor_log_prior(bird, sp, g);

  const Mat2 sw = sp.sigma_w();
  const Mat2 ss = sp.sigma_s();
  double expected = 0.0;
  expected += safe_mvn_logpdf(bird.years[0].m1, sp.mu_w, sw);
  expected += safe_mvn_logpdf(bird.years[0].m2, sp.mu_s, ss);
  double ew = std::exp(-g.delta_w);
  expected += safe_mvn_logpdf(
      bird.years[0].m3, ew * bird.years[0].m1 + (1 - ew) * sp.mu_w,
      (1 - ew * ew) * sw);
  double e1 = std::exp(-g.delta_w * 1.0);
  expected += safe_mvn_logpdf(
      bird.years[1].m1, e1 * bird.years[0].m3 + (1 - e1) * sp.mu_w,
      (1 - e1 * e1) * sw);
  double e2 = std::exp(-g.delta_s * 2.0);
  expected += safe_mvn_logpdf(
      bird.years[1].m2, e2 * bird.years[0].m2 + (1 - e2) * sp.mu_s,
      (1 - e2 * e2) * ss);
  expected += safe_mvn_logpdf(
      bird.years[1].m3, ew * bird.years[1].m1 + (1 - ew) * sp.mu_w,
      (1 - ew * ew) * sw);
  CHECK(lp == Approx(expected).epsilon(1e-12));
}

TEST_CASE("attractor prior: consecutive years contribute no m1 density") {
  SubpopParams sp;
  sp.mu_s = {550.0, 550.0};
  GlobalParams g;
  LatentIndividual bird = two_year_bird(2011, 2012, true);
  double lp1 = attractor_log_prior(bird, sp, g);
  bird.years[1].m1 = {9999.0, -9999.0};  // ignored when linked
  double lp2 = attractor_log_prior(bird, sp, g);
  CHECK(lp1 == lp2);

  LatentIndividual bad = two_year_bird(2011, 2012, false);
  CHECK_THROWS_AS(attractor_log_prior(bad, sp, g), std::invalid_argument);
  LatentIndividual empty;
  CHECK_THROWS_AS(attractor_log_prior(empty, sp, g), std::invalid_argument);
}

TEST_CASE("attractor prior: site-fidelity limits") {
  SubpopParams sp;
  sp.mu_w = {100.0, 100.0};
  sp.mu_s = {500.0, 500.0};
  sp.tau_w1 = std::log(400.0);
  sp.tau_w2 = std::log(400.0);
  sp.rho_w = 0.01;
  GlobalParams g;

  LatentIndividual bird;
  bird.years.push_back({2011, false, {140.0, 90.0}, {500.0, 500.0}, {0.0, 0.0}});

  // delta_w -> infinity: m3 prior tends to the stationary law, independent of m1
  g.delta_w = 60.0;
  bird.years[0].m3 = {120.0, 95.0};
  double lp_inf = attractor_log_prior(bird, sp, g);
  double stationary = safe_mvn_logpdf(bird.years[0].m3, sp.mu_w, sp.sigma_w());
  double ref = safe_mvn_logpdf(bird.years[0].m1, sp.mu_w, sp.sigma_w()) +
               safe_mvn_logpdf(bird.years[0].m2, sp.mu_s, sp.sigma_s()) + stationary;
  CHECK(lp_inf == Approx(ref).epsilon(1e-9));

  // delta_w -> 0: mass collapses onto m1; displaced m3 becomes impossible
  g.delta_w = 1e-9;
  double lp_zero = attractor_log_prior(bird, sp, g);
  CHECK(lp_zero < -1e6);
  bird.years[0].m3 = bird.years[0].m1;
  double lp_collapsed = attractor_log_prior(bird, sp, g);
  CHECK(lp_collapsed > lp_zero + 1e6);  // enormous density spike at m1
  CHECK(lp_collapsed > lp_inf);
}

TEST_CASE("attractor prior: k-th year summer point stays stationary by MC") {
  SubpopParams sp;
  sp.mu_s = {700.0, 300.0};
  sp.tau_s1 = std::log(2500.0);
  sp.tau_s2 = std::log(900.0);
  sp.rho_s = 0.35;
  GlobalParams g;
  g.delta_s = 0.8;
  g.delta_w = 0.5;

  SimBird plan{"b", 0, {2011, 2012, 2013, 2014}};
  Rng rng = make_rng(41);
  const int n = 60000;
  Vec2 acc = Vec2::Zero();
  double acc_xx = 0.0;
  for (int i = 0; i < n; ++i) {
    LatentIndividual lat = simulate_latents(plan, sp, g, rng);
    Vec2 m2 = lat.years[3].m2;
    acc += m2;
    acc_xx += (m2.x() - sp.mu_s.x()) * (m2.x() - sp.mu_s.x());
  }
  Vec2 mean = acc / n;
  double sd_x = std::sqrt(2500.0);
  CHECK(std::abs(mean.x() - sp.mu_s.x()) < 3.0 * sd_x / std::sqrt(n));
  CHECK(std::abs(mean.y() - sp.mu_s.y()) < 3.0 * 30.0 / std::sqrt(n));
  CHECK(acc_xx / n == Approx(2500.0).epsilon(0.05));
}

TEST_CASE("population priors: support rejections") {
  std::vector<SubpopParams> sps(2);
  GlobalParams g;
  g.eta = {0.45, 0.55};
  BBox bb{0.0, 3000.0, 0.0, 3000.0};
  for (SubpopParams& sp : sps) {
    sp.mu_w = {500.0, 500.0};
    sp.mu_s = {800.0, 900.0};
  }
  REQUIRE(std::isfinite(log_priors_population(sps, g, bb)));

  auto check_rejected = [&](auto&& mutate) {
    std::vector<SubpopParams> s2 = sps;
    GlobalParams g2 = g;
    mutate(s2, g2);
    CHECK(log_priors_population(s2, g2, bb) == kNegInf);
  };
  // e^{-theta} = 0.99 exceeds the upper support bound
  check_rejected([](auto& s, auto&) { s[0].theta = -std::log(0.99); });
  check_rejected([](auto& s, auto&) { s[0].theta = -std::log(0.01); });
  // tau above the printed variance caps
  check_rejected([](auto& s, auto&) { s[0].tau_w2 = 30.0; });
  check_rejected([](auto& s, auto&) { s[1].tau_s1 = 28.9; });
  // weight below the 5% floor
  check_rejected([](auto&, auto& gg) { gg.eta = {0.04, 0.96}; });
  check_rejected([](auto&, auto& gg) { gg.eta = {0.5, 0.4}; });
  // location outside the data bounding box
  check_rejected([](auto& s, auto&) { s[0].mu_w = {-10.0, 200.0}; });
  // correlation outside (0,1)
  check_rejected([](auto& s, auto&) { s[0].rho_w = -0.2; });
  // alpha below 1
  check_rejected([](auto& s, auto&) { s[0].alpha[2] = 0.8; });
  // non-positive variances
  check_rejected([](auto& s, auto&) { s[0].sigma2 = 0.0; });
  check_rejected([](auto&, auto& gg) { gg.kappa2 = -1.0; });
}

TEST_CASE("population priors: finite inside the support and never throwing") {
  Rng rng = make_rng(4);
  BBox bb{0.0, 3000.0, 0.0, 3000.0};
  for (int i = 0; i < 500; ++i) {
    std::vector<SubpopParams> sps(2);
    GlobalParams g;
    for (SubpopParams& sp : sps) {
      sp.theta = -std::log(0.02 + 0.96 * uniform01(rng));
      sp.sigma2 = std::exp(4.0 * normal(rng));
      sp.mu_w = {3000.0 * uniform01(rng), 3000.0 * uniform01(rng)};
      sp.mu_s = {3000.0 * uniform01(rng), 3000.0 * uniform01(rng)};
      sp.tau_w1 = 20.0 * uniform01(rng);
      sp.tau_w2 = 20.0 * uniform01(rng);
      sp.rho_w = uniform01(rng);
      sp.tau_s1 = 20.0 * uniform01(rng);
      sp.tau_s2 = 20.0 * uniform01(rng);
      sp.rho_s = uniform01(rng);
      for (double& a : sp.alpha) a = 1.0 + 5.0 * uniform01(rng);
    }
    g.delta_w = std::exp(normal(rng));
    g.delta_s = std::exp(normal(rng));
    g.kappa2 = std::exp(2.0 * normal(rng) - 8.0);
    double e1 = 0.05 + 0.9 * uniform01(rng) * 0.999;
    e1 = std::min(e1, 0.95 - 1e-6);
    g.eta = {e1, 1.0 - e1};
    double lp = log_priors_population(sps, g, bb);
    REQUIRE(std::isfinite(lp));
  }
}
