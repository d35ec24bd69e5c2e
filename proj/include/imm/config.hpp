#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "imm/grid.hpp"
#include "imm/inference.hpp"
#include "imm/projection.hpp"
#include "imm/simulate.hpp"
#include "imm/util.hpp"

namespace imm {

using Json = nlohmann::json;

// Run-wide configuration parsed from one json file. Validated up front and
// echoed verbatim (with a content digest) into every output directory.
struct RunConfig {
  std::string raw_text;
  Projection projection;
  GridSpec grid;
  std::vector<double> week_days = standard_week_days();
  int P = 4;
  int Q = 10;
  int completeness_threshold = 315;
  int kmeans_restarts = 50;
  std::uint64_t seed = 1;
  int threads = 1;
  McmcConfig mcmc;

  double risk_square_side = 2.8;
  double risk_time_step = 1.0;
  int risk_max_draws = 200;
  int risk_top_k = 40;
  int predict_max_draws = 50;

  bool has_scenario = false;
  SimScenario scenario;
};

namespace detail {

inline SubpopParams parse_subpop(const Json& j) {
  SubpopParams sp;
  sp.theta = j.at("theta").get<double>();
  sp.sigma2 = j.at("sigma2").get<double>();
  sp.mu_w = {j.at("mu_w").at(0).get<double>(), j.at("mu_w").at(1).get<double>()};
  sp.mu_s = {j.at("mu_s").at(0).get<double>(), j.at("mu_s").at(1).get<double>()};
  auto cov = [&](const char* sd_key, const char* rho_key, double& t1, double& t2,
                 double& rho) {
    double s1 = j.at(sd_key).at(0).get<double>();
    double s2 = j.at(sd_key).at(1).get<double>();
    t1 = 2.0 * std::log(s1);
    t2 = 2.0 * std::log(s2);
    rho = j.at(rho_key).get<double>();
  };
  cov("sd_w", "rho_w", sp.tau_w1, sp.tau_w2, sp.rho_w);
  cov("sd_s", "rho_s", sp.tau_s1, sp.tau_s2, sp.rho_s);
  for (int a = 0; a < 4; ++a) sp.alpha[a] = j.at("alpha").at(a).get<double>();
  return sp;
}

}  // namespace detail

inline RunConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw UserError("cannot open config: " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  RunConfig cfg;
  cfg.raw_text = ss.str();
  Json j;
  try {
    j = Json::parse(cfg.raw_text);
  } catch (const std::exception& e) {
    throw UserError(std::string("config parse error: ") + e.what());
  }

  if (j.contains("projection")) {
    const Json& p = j["projection"];
    std::string type = p.value("type", "planar");
    if (type == "planar") {
      cfg.projection.kind = Projection::Kind::planar;
    } else if (type == "laea") {
      cfg.projection.kind = Projection::Kind::laea;
      cfg.projection.lon0 = p.at("lon0").get<double>();
      cfg.projection.lat0 = p.at("lat0").get<double>();
    } else {
      throw UserError("config: unknown projection type " + type);
    }
  }
  if (!j.contains("grid")) throw UserError("config: missing grid section");
  {
    const Json& g = j["grid"];
    cfg.grid.origin_x = g.at("origin_x").get<double>();
    cfg.grid.origin_y = g.at("origin_y").get<double>();
    cfg.grid.cell_km = g.at("cell_km").get<double>();
    cfg.grid.n_rows = g.at("n_rows").get<int>();
    cfg.grid.n_cols = g.at("n_cols").get<int>();
    if (cfg.grid.n_rows < 1 || cfg.grid.n_cols < 1 || !(cfg.grid.cell_km > 0)) {
      throw UserError("config: malformed grid");
    }
  }
  if (j.contains("weeks")) {
    const Json& w = j["weeks"];
    double first = w.value("first", 4.0);
    double step = w.value("step", 7.0);
    int count = w.value("count", 52);
    cfg.week_days.clear();
    for (int k = 0; k < count; ++k) cfg.week_days.push_back(first + step * k);
  }
  cfg.P = j.value("P", 4);
  cfg.Q = j.value("Q", 10);
  cfg.completeness_threshold = j.value("completeness_threshold", 315);
  cfg.kmeans_restarts = j.value("kmeans_restarts", 50);
  cfg.seed = j.value("seed", 1ull);
  cfg.threads = j.value("threads", 1);
  if (cfg.P < 1 || cfg.Q < 1) throw UserError("config: P and Q must be positive");

  if (j.contains("mcmc")) {
    const Json& m = j["mcmc"];
    cfg.mcmc.n_chains = m.value("n_chains", 10);
    cfg.mcmc.n_iters = m.value("n_iters", 300000L);
    cfg.mcmc.swap_interval = m.value("swap_interval", 20000L);
    cfg.mcmc.burn_in_fraction = m.value("burn_in_fraction", 2.0 / 3.0);
    cfg.mcmc.thin = m.value("thin", 10);
    cfg.mcmc.adapt_batch = m.value("adapt_batch", 50);
    cfg.mcmc.target_scalar = m.value("target_scalar", 0.44);
    cfg.mcmc.target_vector = m.value("target_vector", 0.234);
    cfg.mcmc.adapt_gain = m.value("adapt_gain", 1.0);
    cfg.mcmc.cache_check_interval = m.value("cache_check_interval", 0L);
    cfg.mcmc.keep_latents = m.value("keep_latents", false);
  }
  cfg.mcmc.Q = cfg.Q;
  cfg.mcmc.seed = cfg.seed;
  cfg.mcmc.threads = cfg.threads;
  cfg.mcmc.validate();

  if (j.contains("risk")) {
    const Json& r = j["risk"];
    cfg.risk_square_side = r.value("square_side", 2.8);
    cfg.risk_time_step = r.value("time_step", 1.0);
    cfg.risk_max_draws = r.value("max_draws", 200);
    cfg.risk_top_k = r.value("top_k", 40);
  }
  if (j.contains("predict")) {
    cfg.predict_max_draws = j["predict"].value("max_draws", 50);
  }

  if (j.contains("simulate")) {
    const Json& s = j["simulate"];
    cfg.has_scenario = true;
    SimScenario& sc = cfg.scenario;
    sc.grid = cfg.grid;
    sc.week_days = cfg.week_days;
    sc.Q = cfg.Q;
    sc.seed = cfg.seed;
    for (const Json& sj : s.at("subpops")) {
      sc.subpops.push_back(detail::parse_subpop(sj));
    }
    if (static_cast<int>(sc.subpops.size()) != cfg.P) {
      throw UserError("config: simulate.subpops size must equal P");
    }
    sc.global.delta_w = s.at("delta_w").get<double>();
    sc.global.delta_s = s.at("delta_s").get<double>();
    sc.global.kappa2 = s.at("kappa2").get<double>();
    for (const Json& e : s.at("eta")) sc.global.eta.push_back(e.get<double>());
    if (static_cast<int>(sc.global.eta.size()) != cfg.P) {
      throw UserError("config: simulate.eta size must equal P");
    }
    std::string noise = s.value("noise", "clipped");
    if (noise == "clipped") {
      sc.clip_abundance_noise = true;
    } else if (noise == "gaussian") {
      sc.clip_abundance_noise = false;
    } else {
      throw UserError("config: simulate.noise must be clipped or gaussian");
    }
    int bird_counter = 0;
    for (const Json& bj : s.at("birds")) {
      int subpop = bj.at("subpop").get<int>() - 1;
      if (subpop < 0 || subpop >= cfg.P) {
        throw UserError("config: simulate.birds subpop out of range");
      }
      int count = bj.value("count", 1);
      std::vector<int> years;
      for (const Json& y : bj.at("years")) years.push_back(y.get<int>());
      for (int c = 0; c < count; ++c) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "B%04d", ++bird_counter);
        sc.birds.push_back({buf, subpop, years});
      }
    }
    if (s.contains("validation")) {
      const Json& v = s["validation"];
      sc.validation_keep_prob = v.value("keep_prob", 0.3);
      int vb_counter = 0;
      for (const Json& bj : v.at("birds")) {
        int subpop = bj.at("subpop").get<int>() - 1;
        int count = bj.value("count", 1);
        std::vector<int> years;
        for (const Json& y : bj.at("years")) years.push_back(y.get<int>());
        for (int c = 0; c < count; ++c) {
          char buf[16];
          std::snprintf(buf, sizeof(buf), "V%04d", ++vb_counter);
          sc.validation_birds.push_back({buf, subpop, years});
        }
      }
    }
    if (s.contains("projects")) {
      sc.n_projects = s["projects"].value("count", 30);
      sc.turbines_per_project = s["projects"].value("turbines_each", 8);
    }
  }
  return cfg;
}

inline std::string config_digest(const RunConfig& cfg) {
  Digest d;
  d.update(cfg.raw_text);
  return d.hex();
}

}  // namespace imm
