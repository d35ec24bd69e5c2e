#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "imm/inference.hpp"
#include "imm/risk.hpp"
#include "imm/util.hpp"

namespace imm {

// samples.csv: one row per kept (chain, iteration); named columns for every
// population parameter (latents included only when the run kept them).
inline void write_samples(const PosteriorSamples& samples, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw UserError("cannot open for writing: " + path);
  os << "chain,iter,log_post";
  for (const std::string& n : samples.names) os << ',' << n;
  os << '\n';
  for (const SampleRow& r : samples.rows) {
    os << r.chain << ',' << r.iter << ',' << format_double(r.log_post);
    for (double v : r.values) os << ',' << format_double(v);
    os << '\n';
  }
}

inline PosteriorSamples read_samples(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw UserError("cannot open samples file: " + path);
  std::string line;
  if (!std::getline(is, line)) throw UserError("samples file is empty: " + path);
  auto header = detail::split_csv(line);
  if (header.size() < 4 || header[0] != "chain" || header[1] != "iter" ||
      header[2] != "log_post") {
    throw UserError("samples file: unexpected header: " + path);
  }
  PosteriorSamples s;
  s.names.assign(header.begin() + 3, header.end());
  int P = 0;
  for (const std::string& n : s.names) {
    if (n.rfind("eta.", 0) == 0) P = std::max(P, std::stoi(n.substr(4)));
  }
  s.P = P;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto f = detail::split_csv(line);
    if (f.size() != header.size()) throw UserError("samples file: ragged row");
    SampleRow r;
    r.chain = std::stoi(f[0]);
    r.iter = std::stol(f[1]);
    r.log_post = std::stod(f[2]);
    for (std::size_t i = 3; i < f.size(); ++i) r.values.push_back(std::stod(f[i]));
    s.rows.push_back(std::move(r));
  }
  if (s.rows.empty()) throw UserError("samples file has no rows: " + path);
  return s;
}

// Rebuilds the population-level parameter draw from one sample row.
inline ParamDraw draw_from_row(const PosteriorSamples& s, std::size_t row) {
  std::map<std::string, double> v;
  for (std::size_t i = 0; i < s.names.size(); ++i) {
    v[s.names[i]] = s.rows[row].values[i];
  }
  ParamDraw d;
  for (int p = 1; p <= s.P; ++p) {
    std::string suf = "." + std::to_string(p);
    SubpopParams sp;
    sp.theta = v.at("theta" + suf);
    sp.sigma2 = v.at("sigma2" + suf);
    sp.mu_w = {v.at("mu_w_x" + suf), v.at("mu_w_y" + suf)};
    sp.mu_s = {v.at("mu_s_x" + suf), v.at("mu_s_y" + suf)};
    sp.tau_w1 = v.at("tau_w1" + suf);
    sp.tau_w2 = v.at("tau_w2" + suf);
    sp.rho_w = v.at("rho_w" + suf);
    sp.tau_s1 = v.at("tau_s1" + suf);
    sp.tau_s2 = v.at("tau_s2" + suf);
    sp.rho_s = v.at("rho_s" + suf);
    for (int a = 0; a < 4; ++a) {
      sp.alpha[a] = v.at("alpha" + std::to_string(a + 1) + suf);
    }
    d.subpops.push_back(sp);
  }
  d.global.delta_w = v.at("delta_w");
  d.global.delta_s = v.at("delta_s");
  d.global.kappa2 = v.at("kappa2");
  for (int p = 1; p <= s.P; ++p) {
    d.global.eta.push_back(v.at("eta." + std::to_string(p)));
  }
  return d;
}

// Evenly sub-sampled parameter draws (at most `max_draws`).
inline std::vector<ParamDraw> draws_from_samples(const PosteriorSamples& s,
                                                 std::size_t max_draws) {
  std::size_t stride = std::max<std::size_t>(1, s.rows.size() / std::max<std::size_t>(1, max_draws));
  std::vector<ParamDraw> out;
  for (std::size_t i = 0; i < s.rows.size(); i += stride) {
    out.push_back(draw_from_row(s, i));
    if (out.size() >= max_draws) break;
  }
  return out;
}

inline ParamDraw posterior_mean_draw(const PosteriorSamples& s) {
  std::vector<double> acc(s.names.size(), 0.0);
  for (const SampleRow& r : s.rows) {
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += r.values[i];
  }
  PosteriorSamples mean = s;
  SampleRow row = s.rows.front();
  for (std::size_t i = 0; i < acc.size(); ++i) {
    row.values[i] = acc[i] / static_cast<double>(s.rows.size());
  }
  mean.rows = {row};
  return draw_from_row(mean, 0);
}

}  // namespace imm
