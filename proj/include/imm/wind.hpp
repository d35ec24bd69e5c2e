#pragma once

#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "imm/geometry.hpp"
#include "imm/projection.hpp"
#include "imm/telemetry.hpp"
#include "imm/util.hpp"

namespace imm {

struct TurbineRecord {
  std::string project_id;
  Vec2 loc = Vec2::Zero();
};

struct WindProject {
  std::string project_id;
  Vec2 centroid = Vec2::Zero();
  int turbine_count = 0;
};

// One project per distinct id; centroid is the arithmetic mean of its
// turbine locations. Output sorted by project id.
inline std::vector<WindProject> aggregate_turbines(
    const std::vector<TurbineRecord>& turbines) {
  struct Accum {
    Vec2 sum = Vec2::Zero();
    int n = 0;
  };
  std::map<std::string, Accum> groups;
  for (const TurbineRecord& t : turbines) {
    if (t.project_id.empty()) {
      throw UserError("aggregate_turbines: turbine without project id");
    }
    Accum& g = groups[t.project_id];
    g.sum += t.loc;
    g.n += 1;
  }
  std::vector<WindProject> out;
  for (const auto& [id, g] : groups) {
    out.push_back({id, g.sum / g.n, g.n});
  }
  return out;
}

// csv: project_id,{x_km,y_km | lon,lat}
inline std::vector<TurbineRecord> load_turbines(const std::string& path,
                                                const Projection& proj) {
  std::ifstream is(path);
  if (!is) throw UserError("cannot open turbine file: " + path);
  std::string line;
  if (!std::getline(is, line)) throw UserError("turbine file is empty: " + path);
  auto header = detail::split_csv(line);
  int c_id = detail::find_col(header, "project_id");
  int c_x = detail::find_col(header, "x_km");
  int c_y = detail::find_col(header, "y_km");
  bool geographic = false;
  if (c_x < 0 || c_y < 0) {
    c_x = detail::find_col(header, "lon");
    c_y = detail::find_col(header, "lat");
    geographic = true;
  }
  (void)geographic;
  if (c_id < 0 || c_x < 0 || c_y < 0) {
    throw UserError("turbine header must provide project_id and x_km/y_km or "
                    "lon/lat: " + path);
  }
  std::vector<TurbineRecord> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto f = detail::split_csv(line);
    if (static_cast<int>(f.size()) <= std::max({c_id, c_x, c_y})) {
      throw UserError("turbine file: short row: " + line);
    }
    TurbineRecord r;
    r.project_id = f[static_cast<std::size_t>(c_id)];
    r.loc = proj.forward(std::stod(f[static_cast<std::size_t>(c_x)]),
                         std::stod(f[static_cast<std::size_t>(c_y)]));
    out.push_back(std::move(r));
  }
  return out;
}

inline void write_turbines(const std::vector<TurbineRecord>& turbines,
                           const std::string& path) {
  std::ofstream os(path);
  if (!os) throw UserError("cannot open for writing: " + path);
  os << "project_id,x_km,y_km\n";
  for (const TurbineRecord& t : turbines) {
    os << t.project_id << ',' << format_double(t.loc.x()) << ','
       << format_double(t.loc.y()) << '\n';
  }
}

}  // namespace imm
