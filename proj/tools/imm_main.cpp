// Batch front end for the full-annual-cycle integrated movement model:
// simulate synthetic datasets, preprocess and cluster telemetry, fit the
// joint model, evaluate population dynamics, wind-project risk, and
// conditional location prediction.

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "imm/clustering.hpp"
#include "imm/config.hpp"
#include "imm/diagnostics.hpp"
#include "imm/grid.hpp"
#include "imm/inference.hpp"
#include "imm/png.hpp"
#include "imm/population.hpp"
#include "imm/prediction.hpp"
#include "imm/risk.hpp"
#include "imm/samples_io.hpp"
#include "imm/simulate.hpp"
#include "imm/telemetry.hpp"
#include "imm/util.hpp"
#include "imm/wind.hpp"

namespace fs = std::filesystem;
using namespace imm;

namespace {

struct Timer {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
        .count();
  }
};

void log_step(const std::string& cmd, const std::string& msg, const Timer& t) {
  std::fprintf(stderr, "[imm %s] %s (%.2fs)\n", cmd.c_str(), msg.c_str(),
               t.seconds());
}

void ensure_outdir(const std::string& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw UserError("cannot create output directory: " + out);
}

std::string file_digest(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw UserError("cannot open: " + path);
  Digest d;
  char buf[65536];
  while (is.read(buf, sizeof(buf)) || is.gcount() > 0) {
    d.update(buf, static_cast<std::size_t>(is.gcount()));
  }
  return d.hex();
}

// Echo the config and record content digests of every input this command
// consumed, so identical digests imply identical outputs.
void write_provenance(const RunConfig& cfg, const std::string& out,
                      const std::vector<std::string>& inputs) {
  std::ofstream echo(out + "/config.echo.json");
  echo << cfg.raw_text;
  std::ofstream dig(out + "/digest.txt");
  dig << "config " << config_digest(cfg) << '\n';
  for (const std::string& p : inputs) {
    dig << fs::path(p).filename().string() << ' ' << file_digest(p) << '\n';
  }
}

std::vector<Track> load_tracks_checked(const RunConfig& cfg,
                                       const std::string& path,
                                       const std::string& cmd) {
  Timer t;
  TelemetryReport rep;
  std::vector<Track> tracks =
      load_telemetry(path, cfg.projection, cfg.completeness_threshold, &rep);
  log_step(cmd, "loaded " + std::to_string(rep.n_tracks) + " tracks (" +
                    std::to_string(rep.n_complete) + " complete, " +
                    std::to_string(rep.rows_bad) + " malformed rows)", t);
  for (const std::string& e : rep.sample_errors) {
    std::fprintf(stderr, "[imm %s]   malformed: %s\n", cmd.c_str(), e.c_str());
  }
  return tracks;
}

AbundanceGrid load_abundance_checked(const RunConfig& cfg, const std::string& path) {
  AbundanceGrid g = read_abundance(path);
  if (!(g.grid == cfg.grid)) {
    throw UserError("abundance grid does not match the configured grid: " + path);
  }
  if (!g.normalized) g = normalize_abundance(g);
  return g;
}

// ---------------------------------------------------------------------------

int cmd_simulate(const RunConfig& cfg, const std::string& config_path,
                 const std::string& out) {
  if (!cfg.has_scenario) throw UserError("config lacks a simulate section");
  Timer t;
  ensure_outdir(out);
  SimOutput sim = simulate_dataset(cfg.scenario);
  write_telemetry(sim.fit_tracks, out + "/telemetry.csv", true);
  if (!sim.validation_tracks.empty()) {
    write_telemetry(sim.validation_tracks, out + "/telemetry_validation.csv", true);
  }
  write_abundance(sim.abundance, out + "/abundance.txt");
  write_turbines(sim.turbines, out + "/turbines.csv");

  Json truth;
  truth["seed"] = cfg.scenario.seed;
  truth["delta_w"] = cfg.scenario.global.delta_w;
  truth["delta_s"] = cfg.scenario.global.delta_s;
  truth["kappa2"] = cfg.scenario.global.kappa2;
  truth["eta"] = cfg.scenario.global.eta;
  for (const SubpopParams& sp : cfg.scenario.subpops) {
    Json js;
    js["theta"] = sp.theta;
    js["e_neg_theta"] = std::exp(-sp.theta);
    js["sigma2"] = sp.sigma2;
    js["mu_w"] = {sp.mu_w.x(), sp.mu_w.y()};
    js["mu_s"] = {sp.mu_s.x(), sp.mu_s.y()};
    js["tau_w"] = {sp.tau_w1, sp.tau_w2};
    js["rho_w"] = sp.rho_w;
    js["tau_s"] = {sp.tau_s1, sp.tau_s2};
    js["rho_s"] = sp.rho_s;
    js["alpha"] = {sp.alpha[0], sp.alpha[1], sp.alpha[2], sp.alpha[3]};
    truth["subpops"].push_back(js);
  }
  for (const LatentIndividual& b : sim.latents) {
    Json jb;
    jb["bird_id"] = b.bird_id;
    jb["subpop"] = b.subpop + 1;
    jb["a1"] = b.a1;
    jb["a2"] = b.a2;
    for (std::size_t k = 0; k < b.years.size(); ++k) {
      Json jy;
      jy["year"] = b.years[k].year;
      const Vec2& m1 = b.m1_of(k);
      jy["m1"] = {m1.x(), m1.y()};
      jy["m2"] = {b.years[k].m2.x(), b.years[k].m2.y()};
      jy["m3"] = {b.years[k].m3.x(), b.years[k].m3.y()};
      jb["years"].push_back(jy);
    }
    truth["latents"].push_back(jb);
  }
  std::ofstream(out + "/truth.json") << truth.dump(1) << '\n';
  write_provenance(cfg, out, {config_path});
  log_step("simulate",
           "wrote " + std::to_string(sim.fit_tracks.size()) + " fit tracks, " +
               std::to_string(sim.validation_tracks.size()) +
               " validation tracks, " +
               std::to_string(sim.abundance.n_weeks()) + " weeks",
           t);
  return 0;
}

int cmd_cluster(const RunConfig& cfg, const std::string& config_path,
                const std::string& telemetry_path, const std::string& out) {
  Timer t;
  ensure_outdir(out);
  std::vector<Track> tracks = load_tracks_checked(cfg, telemetry_path, "cluster");
  std::vector<Track> complete;
  for (Track& tr : tracks) {
    if (tr.complete) complete.push_back(tr);
  }
  if (complete.empty()) throw UserError("no complete tracks to cluster");
  cluster_tracks(complete, cfg.P, cfg.seed, cfg.kmeans_restarts);
  std::ofstream os(out + "/assignments.csv");
  os << "bird_id,year,subpop\n";
  std::vector<int> sizes(static_cast<std::size_t>(cfg.P), 0);
  for (const Track& tr : complete) {
    os << tr.bird_id << ',' << tr.year << ',' << (tr.subpop + 1) << '\n';
    sizes[static_cast<std::size_t>(tr.subpop)]++;
  }
  std::ofstream sum(out + "/cluster_summary.txt");
  for (int p = 0; p < cfg.P; ++p) {
    sum << "subpop " << (p + 1) << " n_bird_years "
        << sizes[static_cast<std::size_t>(p)] << '\n';
  }
  write_provenance(cfg, out, {config_path, telemetry_path});
  log_step("cluster", "assigned " + std::to_string(complete.size()) +
                          " complete bird-years into " + std::to_string(cfg.P) +
                          " subpopulations", t);
  return 0;
}

void apply_assignments(std::vector<Track>& tracks, const std::string& path) {
  std::ifstream is(path);
  if (!is) throw UserError("cannot open assignments: " + path);
  std::string line;
  std::getline(is, line);
  std::map<std::pair<std::string, int>, int> assign;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto f = detail::split_csv(line);
    if (f.size() < 3) throw UserError("assignments: short row: " + line);
    assign[{f[0], std::stoi(f[1])}] = std::stoi(f[2]) - 1;
  }
  for (Track& t : tracks) {
    auto it = assign.find({t.bird_id, t.year});
    if (it != assign.end()) t.subpop = it->second;
  }
}

int cmd_fit(const RunConfig& cfg, const std::string& config_path,
            const std::string& telemetry_path, const std::string& abundance_path,
            const std::string& assignments_path, const std::string& out) {
  Timer t;
  ensure_outdir(out);
  std::vector<Track> tracks = load_tracks_checked(cfg, telemetry_path, "fit");
  AbundanceGrid abundance = load_abundance_checked(cfg, abundance_path);
  if (abundance.week_days != cfg.week_days) {
    throw UserError("abundance weeks do not match the configured weeks");
  }

  std::vector<Track> complete;
  for (const Track& tr : tracks) {
    if (tr.complete) complete.push_back(tr);
  }
  if (!assignments_path.empty()) {
    apply_assignments(complete, assignments_path);
  }
  bool need_cluster = false;
  for (const Track& tr : complete) {
    if (tr.subpop < 0 || tr.subpop >= cfg.P) need_cluster = true;
  }
  if (need_cluster) {
    cluster_tracks(complete, cfg.P, cfg.seed, cfg.kmeans_restarts);
    log_step("fit", "clustered tracks (no usable assignments provided)", t);
  }

  FitData data = make_fit_data(complete, abundance, cfg.P);
  log_step("fit", "fit set: " + std::to_string(data.birds.size()) + " birds, " +
                      std::to_string(data.n_bird_years()) + " bird-years", t);

  RunDiagnostics diag;
  PosteriorSamples samples = run_mcmc(data, cfg.mcmc, &diag);
  log_step("fit", "mcmc finished: " + std::to_string(samples.rows.size()) +
                      " kept samples", t);
  write_samples(samples, out + "/samples.csv");

  // diagnostics: per-parameter ESS, block acceptance, swaps, ppp
  std::ofstream ds(out + "/diagnostics.txt");
  for (std::size_t i = 0; i < samples.names.size(); ++i) {
    std::vector<double> col;
    col.reserve(samples.rows.size());
    for (const SampleRow& r : samples.rows) col.push_back(r.values[i]);
    if (col.size() >= 100) {
      EssResult ess = effective_sample_size(col);
      ds << "ess " << samples.names[i] << ' ' << format_double(ess.ess)
         << (ess.degenerate ? " degenerate" : "") << '\n';
    }
  }
  for (std::size_t i = 0; i < diag.block_names.size(); ++i) {
    ds << "acceptance " << diag.block_names[i] << ' '
       << format_double(diag.block_accept_rates[i]) << '\n';
  }
  for (std::size_t i = 0; i < diag.swap_iters.size(); ++i) {
    ds << "swap_changed_chains iter " << diag.swap_iters[i] << ' '
       << diag.swap_changed[i] << '\n';
  }
  {
    Rng rng = make_rng(cfg.seed, 0x99D7);
    std::vector<ParamDraw> draws = draws_from_samples(samples, 100);
    double p = posterior_predictive_pvalue(draws, abundance, cfg.Q, rng, 100);
    ds << "posterior_predictive_pvalue " << format_double(p) << '\n';
  }
  write_provenance(cfg, out, {config_path, telemetry_path, abundance_path});
  log_step("fit", "wrote samples and diagnostics", t);
  return 0;
}

int cmd_dynamics(const RunConfig& cfg, const std::string& config_path,
                 const std::string& samples_path, const std::string& days_arg,
                 bool png, const std::string& out) {
  Timer t;
  ensure_outdir(out);
  PosteriorSamples samples = read_samples(samples_path);
  std::vector<ParamDraw> draws =
      draws_from_samples(samples, static_cast<std::size_t>(cfg.risk_max_draws));
  std::vector<double> days;
  std::stringstream ss(days_arg);
  std::string tok;
  while (std::getline(ss, tok, ',')) days.push_back(std::stod(tok));
  if (days.empty()) throw UserError("dynamics: no days given");

  for (double day : days) {
    Raster mean(static_cast<std::size_t>(cfg.grid.n_cells()), 0.0);
    for (const ParamDraw& d : draws) {
      HaltonDesign design = halton_design(cfg.Q, d.subpops);
      Raster r = evaluate_on_grid(population_field(day, d.subpops, d.global, design),
                                  cfg.grid);
      for (std::size_t i = 0; i < mean.size(); ++i) {
        mean[i] += r[i] / static_cast<double>(draws.size());
      }
    }
    char name[64];
    std::snprintf(name, sizeof(name), "/field_day%03d.txt", static_cast<int>(day));
    write_raster(cfg.grid, mean, day, out + name);
    if (png) {
      std::snprintf(name, sizeof(name), "/field_day%03d.png", static_cast<int>(day));
      write_raster_png(cfg.grid, mean, out + name);
    }
  }
  write_provenance(cfg, out, {config_path, samples_path});
  log_step("dynamics", "wrote " + std::to_string(days.size()) + " rasters", t);
  return 0;
}

void write_risk_tables(const RiskReport& rep, const std::string& prefix) {
  std::ofstream oc(prefix + "_occupancy.csv");
  oc << "rank,project_id,x_km,y_km,q_mean,q_lo,q_hi\n";
  std::map<std::string, int> rank_of;
  for (std::size_t r = 0; r < rep.top_indices.size(); ++r) {
    rank_of[rep.projects[rep.top_indices[r]].project_id] = static_cast<int>(r) + 1;
  }
  for (const ProjectRisk& pr : rep.projects) {
    auto it = rank_of.find(pr.project_id);
    oc << (it == rank_of.end() ? 0 : it->second) << ',' << pr.project_id << ','
       << format_double(pr.centroid.x()) << ',' << format_double(pr.centroid.y())
       << ',' << format_double(pr.q_mean) << ',' << format_double(pr.q_lo) << ','
       << format_double(pr.q_hi) << '\n';
  }
  std::ofstream op(prefix + "_presence.csv");
  op << "project_id,t,p_mean\n";
  for (const ProjectRisk& pr : rep.projects) {
    for (std::size_t ti = 0; ti < rep.times.size(); ++ti) {
      op << pr.project_id << ',' << format_double(rep.times[ti]) << ','
         << format_double(pr.p_mean[ti]) << '\n';
    }
  }
  // occupancy and presence are usually displayed on logarithmic axes
  std::ofstream(prefix + "_meta.txt")
      << "axes: log-scale recommended for q_mean and p_mean\n";
}

int cmd_risk(const RunConfig& cfg, const std::string& config_path,
             const std::string& samples_path, const std::string& turbines_path,
             const std::vector<std::string>& counties,
             const std::string& ebird_path, const std::string& out) {
  Timer t;
  ensure_outdir(out);
  PosteriorSamples samples = read_samples(samples_path);
  std::vector<ParamDraw> draws =
      draws_from_samples(samples, static_cast<std::size_t>(cfg.risk_max_draws));
  std::vector<WindProject> projects =
      aggregate_turbines(load_turbines(turbines_path, cfg.projection));
  log_step("risk", "aggregated " + std::to_string(projects.size()) + " projects", t);

  if (counties.empty()) {
    RiskReport rep =
        population_risk_report(projects, draws, cfg.Q, cfg.risk_square_side,
                               cfg.risk_time_step, cfg.risk_top_k);
    write_risk_tables(rep, out + "/population");
  } else {
    for (std::size_t ci = 0; ci < counties.size(); ++ci) {
      std::stringstream ss(counties[ci]);
      std::string xs, ys;
      if (!std::getline(ss, xs, ',') || !std::getline(ss, ys, ',')) {
        throw UserError("risk: county must be x_km,y_km");
      }
      Vec2 center(std::stod(xs), std::stod(ys));
      RiskReport rep =
          county_risk_report(center, projects, draws, cfg.Q, cfg.risk_square_side,
                             cfg.risk_time_step, cfg.risk_top_k);
      write_risk_tables(rep, out + "/county" + std::to_string(ci + 1));
    }
  }
  if (!ebird_path.empty()) {
    AbundanceGrid fine = read_abundance(ebird_path);
    std::ofstream os(out + "/ebird_occupancy.csv");
    os << "project_id,q_ebird\n";
    for (const WindProject& p : projects) {
      os << p.project_id << ','
         << format_double(ebird_occupancy_approx(fine, p.centroid)) << '\n';
    }
  }
  std::vector<std::string> inputs = {config_path, samples_path, turbines_path};
  if (!ebird_path.empty()) inputs.push_back(ebird_path);
  write_provenance(cfg, out, inputs);
  log_step("risk", "wrote risk tables", t);
  return 0;
}

int cmd_predict(const RunConfig& cfg, const std::string& config_path,
                const std::string& samples_path, const std::string& pair_arg,
                bool png, const std::string& out) {
  Timer t;
  ensure_outdir(out);
  PosteriorSamples samples = read_samples(samples_path);
  std::vector<ParamDraw> draws =
      draws_from_samples(samples, static_cast<std::size_t>(cfg.predict_max_draws));
  std::stringstream ss(pair_arg);
  std::string tok;
  std::vector<double> v;
  while (std::getline(ss, tok, ',')) v.push_back(std::stod(tok));
  if (v.size() != 4) throw UserError("predict: --pair must be t1,t2,x2,y2");
  double t1 = v[0], t2 = v[1];
  Vec2 v2(v[2], v[3]);

  Raster phi_hat(static_cast<std::size_t>(cfg.grid.n_cells()), 0.0);
  for (const ParamDraw& d : draws) {
    HaltonDesign design = halton_design(cfg.Q, d.subpops);
    Raster phi = conditional_field(v2, t2, t1, d.subpops, d.global, design, cfg.grid);
    for (std::size_t i = 0; i < phi.size(); ++i) {
      phi_hat[i] += phi[i] / static_cast<double>(draws.size());
    }
  }
  write_raster(cfg.grid, phi_hat, t1, out + "/conditional_field.txt");
  if (png) write_raster_png(cfg.grid, phi_hat, out + "/conditional_field.png");
  write_provenance(cfg, out, {config_path, samples_path});
  log_step("predict", "wrote conditional field raster", t);
  return 0;
}

int cmd_validate(const RunConfig& cfg, const std::string& config_path,
                 const std::string& samples_path, const std::string& telemetry_path,
                 const std::string& turbines_path, const std::string& abundance_path,
                 const std::string& pairs_path, const std::string& out) {
  Timer t;
  ensure_outdir(out);
  PosteriorSamples samples = read_samples(samples_path);
  std::vector<ParamDraw> draws =
      draws_from_samples(samples, static_cast<std::size_t>(cfg.predict_max_draws));
  AbundanceGrid abundance = load_abundance_checked(cfg, abundance_path);

  std::vector<ValidationPair> pairs;
  if (!pairs_path.empty()) {
    std::ifstream is(pairs_path);
    if (!is) throw UserError("cannot open pairs file: " + pairs_path);
    std::string line;
    std::getline(is, line);
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      auto f = detail::split_csv(line);
      if (f.size() < 7) throw UserError("pairs file: short row: " + line);
      pairs.push_back({f[0], std::stod(f[1]), Vec2(std::stod(f[2]), std::stod(f[3])),
                       std::stod(f[4]), Vec2(std::stod(f[5]), std::stod(f[6]))});
    }
  } else {
    if (telemetry_path.empty() || turbines_path.empty()) {
      throw UserError("validate: need --pairs or both --telemetry and --turbines");
    }
    std::vector<Track> tracks = load_tracks_checked(cfg, telemetry_path, "validate");
    std::vector<WindProject> projects =
        aggregate_turbines(load_turbines(turbines_path, cfg.projection));
    pairs = extract_validation_pairs(tracks, projects);
  }
  if (pairs.empty()) throw UserError("validate: no usable validation pairs");
  log_step("validate", "using " + std::to_string(pairs.size()) + " pairs", t);

  {
    std::ofstream os(out + "/pairs.csv");
    os << "bird_id,t1,x1,y1,t2,x2,y2\n";
    for (const ValidationPair& p : pairs) {
      os << p.bird_id << ',' << format_double(p.t1) << ',' << format_double(p.v1.x())
         << ',' << format_double(p.v1.y()) << ',' << format_double(p.t2) << ','
         << format_double(p.v2.x()) << ',' << format_double(p.v2.y()) << '\n';
    }
  }

  ValidationSummary summary = validation_report(pairs, draws, abundance, cfg.Q);
  {
    std::ofstream os(out + "/mape_values.csv");
    os << "bird_id,mape_conditional,mape_posterior_mean,mape_ebird\n";
    for (const ValidationRow& r : summary.rows) {
      os << r.pair.bird_id << ',' << format_double(r.mape_conditional) << ','
         << format_double(r.mape_posterior_mean) << ','
         << format_double(r.mape_ebird) << '\n';
    }
  }
  {
    std::ofstream os(out + "/validation_report.csv");
    os << "method,median_mape_km,mean_mape_km,proportion_lowest\n";
    os << "conditional," << format_double(summary.median_conditional) << ','
       << format_double(summary.mean_conditional) << ','
       << format_double(summary.prop_conditional) << '\n';
    os << "posterior_mean," << format_double(summary.median_posterior) << ','
       << format_double(summary.mean_posterior) << ','
       << format_double(summary.prop_posterior) << '\n';
    os << "ebird," << format_double(summary.median_ebird) << ','
       << format_double(summary.mean_ebird) << ','
       << format_double(summary.prop_ebird) << '\n';
  }
  std::vector<std::string> inputs = {config_path, samples_path, abundance_path};
  if (!telemetry_path.empty()) inputs.push_back(telemetry_path);
  if (!turbines_path.empty()) inputs.push_back(turbines_path);
  if (!pairs_path.empty()) inputs.push_back(pairs_path);
  write_provenance(cfg, out, inputs);
  log_step("validate", "wrote validation report", t);
  return 0;
}

int cmd_poisson_diag(const RunConfig& cfg, const std::string& config_path,
                     const std::string& samples_path,
                     const std::string& abundance_path, const std::string& ks,
                     const std::string& out) {
  Timer t;
  ensure_outdir(out);
  PosteriorSamples samples = read_samples(samples_path);
  ParamDraw mean = posterior_mean_draw(samples);
  AbundanceGrid abundance = load_abundance_checked(cfg, abundance_path);
  HaltonDesign design = halton_design(cfg.Q, mean.subpops);
  std::vector<Raster> fields;
  for (double day : abundance.week_days) {
    fields.push_back(evaluate_on_grid(
        population_field(day, mean.subpops, mean.global, design), abundance.grid));
  }
  std::ofstream os(out + "/scaled_poisson.csv");
  os << "K,log_likelihood\n";
  std::stringstream ss(ks);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    double K = std::stod(tok);
    os << format_double(K) << ','
       << format_double(scaled_poisson_diagnostic(abundance, fields, K)) << '\n';
  }
  write_provenance(cfg, out, {config_path, samples_path, abundance_path});
  log_step("poisson-diag", "wrote scaled-Poisson diagnostic", t);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"full-annual-cycle integrated movement model"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path, out_dir;
  std::uint64_t seed_override = 0;
  bool seed_given = false;
  int threads_override = 0;
  app.add_option("--config", config_path, "run configuration (json)")->required();
  app.add_option("--out", out_dir, "output directory")->required();
  auto* seed_opt = app.add_option("--seed", seed_override, "override config seed");
  app.add_option("--threads", threads_override, "override config threads");

  auto* sim = app.add_subcommand("simulate", "generate a synthetic dataset");

  std::string telemetry_path;
  auto* cluster = app.add_subcommand("cluster", "k-means subpopulation assignment");
  cluster->add_option("--telemetry", telemetry_path, "telemetry csv")->required();

  std::string abundance_path, assignments_path;
  auto* fit = app.add_subcommand("fit", "run the Bayesian fit");
  fit->add_option("--telemetry", telemetry_path, "telemetry csv");
  fit->add_option("--abundance", abundance_path, "abundance grid file");
  fit->add_option("--assignments", assignments_path, "cluster assignments csv");

  std::string days_arg = "4,186,361";
  bool png = false;
  std::string samples_path, turbines_path, ebird_path, pair_arg, pairs_path;
  auto* dynamics = app.add_subcommand("dynamics", "posterior-mean field rasters");
  dynamics->add_option("--samples", samples_path, "samples.csv from fit");
  dynamics->add_option("--days", days_arg, "comma-separated days of year");
  dynamics->add_flag("--png", png, "also write PNG heatmaps");

  std::vector<std::string> counties;
  auto* risk = app.add_subcommand("risk", "wind-project risk report");
  risk->add_option("--samples", samples_path, "samples.csv from fit")->required();
  risk->add_option("--turbines", turbines_path, "turbine csv")->required();
  risk->add_option("--county", counties,
                   "county centroid x_km,y_km (repeatable; conditioned mode)");
  risk->add_option("--ebird", ebird_path, "fine-resolution raw abundance file");

  auto* predict = app.add_subcommand("predict", "conditional location prediction");
  predict->add_option("--samples", samples_path, "samples.csv from fit")->required();
  predict->add_option("--pair", pair_arg, "t1,t2,x2,y2")->required();
  predict->add_flag("--png", png, "also write a PNG heatmap");

  auto* validate = app.add_subcommand("validate", "three-way MAPE validation");
  validate->add_option("--samples", samples_path, "samples.csv from fit")->required();
  validate->add_option("--telemetry", telemetry_path, "held-out telemetry csv");
  validate->add_option("--turbines", turbines_path, "turbine csv");
  validate->add_option("--abundance", abundance_path, "abundance grid file");
  validate->add_option("--pairs", pairs_path, "precomputed pairs csv");

  auto* pdiag = app.add_subcommand("poisson-diag",
                                   "scaled-Poisson likelihood degeneracy table");
  pdiag->add_option("--samples", samples_path, "samples.csv from fit")->required();
  pdiag->add_option("--abundance", abundance_path, "abundance grid file");
  std::string ks = "1e-9,1e-3,1,1e3";
  pdiag->add_option("--K", ks, "comma-separated scale factors");

  CLI11_PARSE(app, argc, argv);
  seed_given = seed_opt->count() > 0;

  try {
    RunConfig cfg = load_config(config_path);
    if (seed_given) {
      cfg.seed = seed_override;
      cfg.mcmc.seed = seed_override;
      if (cfg.has_scenario) cfg.scenario.seed = seed_override;
    }
    if (threads_override > 0) {
      cfg.threads = threads_override;
      cfg.mcmc.threads = threads_override;
    }

    if (sim->parsed()) return cmd_simulate(cfg, config_path, out_dir);
    if (cluster->parsed()) {
      return cmd_cluster(cfg, config_path, telemetry_path, out_dir);
    }
    if (fit->parsed()) {
      if (telemetry_path.empty() || abundance_path.empty()) {
        throw UserError("fit requires --telemetry and --abundance");
      }
      return cmd_fit(cfg, config_path, telemetry_path, abundance_path,
                     assignments_path, out_dir);
    }
    if (dynamics->parsed()) {
      if (samples_path.empty()) throw UserError("dynamics requires --samples");
      return cmd_dynamics(cfg, config_path, samples_path, days_arg, png, out_dir);
    }
    if (risk->parsed()) {
      return cmd_risk(cfg, config_path, samples_path, turbines_path, counties,
                      ebird_path, out_dir);
    }
    if (predict->parsed()) {
      return cmd_predict(cfg, config_path, samples_path, pair_arg, png, out_dir);
    }
    if (validate->parsed()) {
      if (abundance_path.empty()) throw UserError("validate requires --abundance");
      return cmd_validate(cfg, config_path, samples_path, telemetry_path,
                          turbines_path, abundance_path, pairs_path, out_dir);
    }
    if (pdiag->parsed()) {
      if (abundance_path.empty()) throw UserError("poisson-diag requires --abundance");
      return cmd_poisson_diag(cfg, config_path, samples_path, abundance_path, ks,
                              out_dir);
    }
    throw UserError("no subcommand given");
  } catch (const UserError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return 2;
  }
}
