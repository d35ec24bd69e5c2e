#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "imm/geometry.hpp"
#include "imm/projection.hpp"
#include "imm/util.hpp"

namespace imm {

struct Observation {
  double day = 0.0;  // day of year, Jan 1 00:00 = 0
  Vec2 loc = Vec2::Zero();
};

// One bird-year of daily telemetry. `subpop` is a 0-based assignment
// (-1 until clustering or an input column provides one).
struct Track {
  std::string bird_id;
  int year = 0;
  std::vector<Observation> obs;
  int subpop = -1;
  bool complete = false;
};

struct TelemetryReport {
  std::size_t rows_ok = 0;
  std::size_t rows_bad = 0;
  std::size_t n_tracks = 0;
  std::size_t n_complete = 0;
  std::vector<std::string> sample_errors;  // first few malformed rows
};

namespace detail {

// Howard Hinnant's civil-date algorithm.
inline long days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  long era = (y >= 0 ? y : y - 399) / 400;
  unsigned yoe = static_cast<unsigned>(y - era * 400);
  unsigned doy = (153u * static_cast<unsigned>(m + (m > 2 ? -3 : 9)) + 2u) / 5u +
                 static_cast<unsigned>(d) - 1u;
  unsigned doe = yoe * 365u + yoe / 4u - yoe / 100u + doy;
  return era * 146097 + static_cast<long>(doe) - 719468;
}

// Accepts "YYYY-MM-DD[ T]HH:MM[:SS]", "YYYY-MM-DD", or the ordinal form
// "YYYY-DDD[.fff]" (day of year, 0-based). Returns false on parse failure.
inline bool parse_timestamp(const std::string& s, int& year, double& day) {
  int dashes = static_cast<int>(std::count(s.begin(), s.end(), '-'));
  if (dashes == 1) {
    int y = 0;
    double d = 0.0;
    if (std::sscanf(s.c_str(), "%d-%lf", &y, &d) != 2) return false;
    if (d < 0.0 || d > 365.9) return false;
    year = y;
    day = d;
  } else if (dashes == 2) {
    int y = 0, mo = 0, dd = 0, hh = 0, mi = 0, ss = 0;
    int n = std::sscanf(s.c_str(), "%d-%d-%d%*1[ T]%d:%d:%d", &y, &mo, &dd, &hh,
                        &mi, &ss);
    if (n < 3) return false;
    if (mo < 1 || mo > 12 || dd < 1 || dd > 31) return false;
    long doy = days_from_civil(y, mo, dd) - days_from_civil(y, 1, 1);
    if (doy < 0 || doy > 365) return false;
    year = y;
    day = static_cast<double>(doy) + (hh * 3600.0 + mi * 60.0 + ss) / 86400.0;
  } else {
    return false;
  }
  // Fold any leap-year overflow onto the final calendar day.
  if (day >= 365.0) day = 364.0 + (day - std::floor(day));
  return true;
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

inline int find_col(const std::vector<std::string>& header, const std::string& name) {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return static_cast<int>(i);
  }
  return -1;
}

}  // namespace detail

// Loads a telemetry csv (header: bird_id,timestamp,{x_km,y_km | lon,lat}
// [,subpop]), averages all fixes within each 24-hour day, splits tracks by
// calendar year, and flags tracks meeting the completeness rule: at least
// `completeness_threshold` distinct days including day 0 and day 364.
// Malformed rows are counted and reported, not fatal; an empty file is.
inline std::vector<Track> load_telemetry(const std::string& path,
                                         const Projection& proj,
                                         int completeness_threshold,
                                         TelemetryReport* report = nullptr) {
  std::ifstream is(path);
  if (!is) throw UserError("cannot open telemetry file: " + path);
  std::string line;
  if (!std::getline(is, line)) throw UserError("telemetry file is empty: " + path);
  auto header = detail::split_csv(line);
  int c_bird = detail::find_col(header, "bird_id");
  int c_ts = detail::find_col(header, "timestamp");
  int c_x = detail::find_col(header, "x_km");
  int c_y = detail::find_col(header, "y_km");
  bool geographic = false;
  if (c_x < 0 || c_y < 0) {
    c_x = detail::find_col(header, "lon");
    c_y = detail::find_col(header, "lat");
    geographic = true;
  }
  int c_sub = detail::find_col(header, "subpop");
  if (c_bird < 0 || c_ts < 0 || c_x < 0 || c_y < 0) {
    throw UserError("telemetry header must provide bird_id, timestamp and "
                    "x_km/y_km or lon/lat columns: " + path);
  }

  TelemetryReport rep;
  struct DayAccum {
    Vec2 sum = Vec2::Zero();
    int n = 0;
    int subpop = -1;
  };
  // (bird, year) -> day index -> accumulated fixes
  std::map<std::pair<std::string, int>, std::map<int, DayAccum>> acc;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto f = detail::split_csv(line);
    int need = std::max({c_bird, c_ts, c_x, c_y, c_sub});
    bool ok = static_cast<int>(f.size()) > need;
    int year = 0;
    double day = 0.0;
    double a = 0.0, b = 0.0;
    if (ok) ok = detail::parse_timestamp(f[static_cast<std::size_t>(c_ts)], year, day);
    if (ok) {
      try {
        a = std::stod(f[static_cast<std::size_t>(c_x)]);
        b = std::stod(f[static_cast<std::size_t>(c_y)]);
      } catch (...) {
        ok = false;
      }
    }
    if (!ok || !std::isfinite(a) || !std::isfinite(b)) {
      ++rep.rows_bad;
      if (rep.sample_errors.size() < 10) {
        rep.sample_errors.push_back("line " + std::to_string(lineno) + ": " + line);
      }
      continue;
    }
    ++rep.rows_ok;
    int day_index = std::min(static_cast<int>(day), 364);
    DayAccum& d = acc[{f[static_cast<std::size_t>(c_bird)], year}][day_index];
    d.sum += proj.forward(a, b);
    d.n += 1;
    if (c_sub >= 0) {
      try {
        d.subpop = std::stoi(f[static_cast<std::size_t>(c_sub)]) - 1;
      } catch (...) {
      }
    }
  }
  if (rep.rows_ok == 0) throw UserError("telemetry file has no valid rows: " + path);

  std::vector<Track> tracks;
  for (const auto& [key, days] : acc) {
    Track t;
    t.bird_id = key.first;
    t.year = key.second;
    bool has_first = false, has_last = false;
    for (const auto& [day_index, d] : days) {
      t.obs.push_back({static_cast<double>(day_index), d.sum / d.n});
      if (day_index == 0) has_first = true;
      if (day_index == 364) has_last = true;
      if (d.subpop >= 0) t.subpop = d.subpop;
    }
    t.complete = static_cast<int>(t.obs.size()) >= completeness_threshold &&
                 has_first && has_last;
    if (t.complete) ++rep.n_complete;
    tracks.push_back(std::move(t));
  }
  rep.n_tracks = tracks.size();
  if (report) *report = rep;
  return tracks;
}

inline void write_telemetry(const std::vector<Track>& tracks,
                            const std::string& path, bool with_subpop) {
  std::ofstream os(path);
  if (!os) throw UserError("cannot open for writing: " + path);
  os << "bird_id,timestamp,x_km,y_km";
  if (with_subpop) os << ",subpop";
  os << '\n';
  for (const Track& t : tracks) {
    for (const Observation& o : t.obs) {
      os << t.bird_id << ',' << t.year << '-' << format_double(o.day) << ','
         << format_double(o.loc.x()) << ',' << format_double(o.loc.y());
      if (with_subpop) os << ',' << (t.subpop + 1);
      os << '\n';
    }
  }
}

}  // namespace imm
