#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "imm/geometry.hpp"
#include "imm/heterogeneity.hpp"
#include "imm/util.hpp"

namespace imm {

// Planar raster layout. Cell (row, col) has its center at
// (origin_x + col*cell_km, origin_y + row*cell_km); origin refers to the
// center of cell (0, 0). Values are stored row-major.
struct GridSpec {
  double origin_x = 0.0;
  double origin_y = 0.0;
  double cell_km = 1.0;
  int n_rows = 1;
  int n_cols = 1;

  int n_cells() const { return n_rows * n_cols; }
  Vec2 center(int row, int col) const {
    return {origin_x + col * cell_km, origin_y + row * cell_km};
  }
  // Row/col of the cell whose square contains p; false when outside.
  bool locate(const Vec2& p, int& row, int& col) const {
    double c = (p.x() - origin_x) / cell_km + 0.5;
    double r = (p.y() - origin_y) / cell_km + 0.5;
    if (c < 0.0 || r < 0.0) return false;
    col = static_cast<int>(c);
    row = static_cast<int>(r);
    return row < n_rows && col < n_cols;
  }
  BBox center_bbox() const {
    return {origin_x, origin_x + (n_cols - 1) * cell_km,
            origin_y, origin_y + (n_rows - 1) * cell_km};
  }
  bool operator==(const GridSpec& o) const {
    return origin_x == o.origin_x && origin_y == o.origin_y &&
           cell_km == o.cell_km && n_rows == o.n_rows && n_cols == o.n_cols;
  }
};

using Raster = std::vector<double>;  // row-major, size n_rows*n_cols

// Weekly gridded relative abundance. `week_days` holds the day-of-year of
// each weekly snapshot (4, 11, ..., 361 for the canonical 52-week year).
struct AbundanceGrid {
  GridSpec grid;
  std::vector<double> week_days;
  std::vector<Raster> values;  // one raster per week
  bool normalized = false;

  std::size_t n_weeks() const { return week_days.size(); }
};

inline std::vector<double> standard_week_days() {
  std::vector<double> days;
  for (int k = 0; k < 52; ++k) days.push_back(4.0 + 7.0 * k);
  return days;
}

// Rescales every week to sum to one. Rejects negative cells and zero-mass
// weeks; preserves zeros and is idempotent.
inline AbundanceGrid normalize_abundance(const AbundanceGrid& raw) {
  AbundanceGrid out = raw;
  for (std::size_t w = 0; w < raw.values.size(); ++w) {
    StableSum total;
    for (double v : raw.values[w]) {
      if (v < 0.0) {
        throw UserError("normalize_abundance: negative cell in week " +
                        std::to_string(w));
      }
      total.add(v);
    }
    double mass = total.value();
    if (!(mass > 0.0)) {
      throw UserError("normalize_abundance: week " + std::to_string(w) +
                      " has zero total abundance");
    }
    for (double& v : out.values[w]) v /= mass;
  }
  out.normalized = true;
  return out;
}

// --- text schema -----------------------------------------------------------
//
//   abundance_grid v1
//   origin_x origin_y cell_km n_rows n_cols n_weeks normalized
//   week <day_of_year>
//   <n_rows lines of n_cols values>     (row 0 first)
//   week <day_of_year>
//   ...
//
// Values are written with %.17g so a write/read round trip is exact.

inline void write_abundance(const AbundanceGrid& g, std::ostream& os) {
  os << "abundance_grid v1\n";
  os << format_double(g.grid.origin_x) << ' ' << format_double(g.grid.origin_y)
     << ' ' << format_double(g.grid.cell_km) << ' ' << g.grid.n_rows << ' '
     << g.grid.n_cols << ' ' << g.week_days.size() << ' '
     << (g.normalized ? 1 : 0) << '\n';
  for (std::size_t w = 0; w < g.week_days.size(); ++w) {
    os << "week " << format_double(g.week_days[w]) << '\n';
    const Raster& r = g.values[w];
    for (int row = 0; row < g.grid.n_rows; ++row) {
      for (int col = 0; col < g.grid.n_cols; ++col) {
        if (col) os << ' ';
        os << format_double(r[static_cast<std::size_t>(row) * g.grid.n_cols + col]);
      }
      os << '\n';
    }
  }
}

inline void write_abundance(const AbundanceGrid& g, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw UserError("cannot open for writing: " + path);
  write_abundance(g, os);
}

inline AbundanceGrid read_abundance(std::istream& is, const std::string& what) {
  AbundanceGrid g;
  std::string magic, version;
  is >> magic >> version;
  if (magic != "abundance_grid" || version != "v1") {
    throw UserError(what + ": not an abundance_grid v1 file");
  }
  std::size_t n_weeks = 0;
  int norm_flag = 0;
  is >> g.grid.origin_x >> g.grid.origin_y >> g.grid.cell_km >>
      g.grid.n_rows >> g.grid.n_cols >> n_weeks >> norm_flag;
  if (!is || g.grid.n_rows <= 0 || g.grid.n_cols <= 0 || !(g.grid.cell_km > 0)) {
    throw UserError(what + ": malformed grid header");
  }
  g.normalized = norm_flag != 0;
  for (std::size_t w = 0; w < n_weeks; ++w) {
    std::string tag;
    double day = 0.0;
    is >> tag >> day;
    if (!is || tag != "week") throw UserError(what + ": expected week header");
    g.week_days.push_back(day);
    Raster r(static_cast<std::size_t>(g.grid.n_cells()));
    for (double& v : r) {
      is >> v;
      if (!is) throw UserError(what + ": truncated raster values");
    }
    g.values.push_back(std::move(r));
  }
  return g;
}

inline AbundanceGrid read_abundance(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw UserError("cannot open: " + path);
  return read_abundance(is, path);
}

// Single-raster export reusing the same schema with one week entry.
inline void write_raster(const GridSpec& grid, const Raster& r, double day,
                         const std::string& path, bool normalized = true) {
  AbundanceGrid g;
  g.grid = grid;
  g.week_days = {day};
  g.values = {r};
  g.normalized = normalized;
  write_abundance(g, path);
}

}  // namespace imm
