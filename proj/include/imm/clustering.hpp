#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "imm/rng.hpp"
#include "imm/telemetry.hpp"

namespace imm {

// Daily displacement from the January 1 location on a fixed 365-day lattice,
// with unobserved days filled by linear interpolation in time. Requires a
// complete track (day 0 and day 364 present), so interpolation is interior.
inline std::vector<double> displacement_features(const Track& track) {
  if (track.obs.empty() || track.obs.front().day != 0.0 ||
      track.obs.back().day != 364.0) {
    throw std::invalid_argument(
        "displacement_features: track must span day 0 through day 364");
  }
  std::vector<double> feat;
  feat.reserve(2 * 365);
  const Vec2 origin = track.obs.front().loc;
  std::size_t j = 0;
  for (int d = 0; d < 365; ++d) {
    double day = static_cast<double>(d);
    while (j + 1 < track.obs.size() && track.obs[j + 1].day <= day) ++j;
    Vec2 p;
    if (track.obs[j].day == day || j + 1 >= track.obs.size()) {
      p = track.obs[j].loc;
    } else {
      const Observation& a = track.obs[j];
      const Observation& b = track.obs[j + 1];
      double w = (day - a.day) / (b.day - a.day);
      p = (1.0 - w) * a.loc + w * b.loc;
    }
    feat.push_back(p.x() - origin.x());
    feat.push_back(p.y() - origin.y());
  }
  return feat;
}

struct KMeansResult {
  std::vector<int> assignment;
  std::vector<std::vector<double>> centroids;
  double wcss = std::numeric_limits<double>::infinity();
};

namespace detail {

inline double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

inline KMeansResult kmeans_once(const std::vector<std::vector<double>>& pts,
                                int k, Rng& rng) {
  const std::size_t n = pts.size();
  const std::size_t dim = pts[0].size();
  // k-means++ seeding
  std::vector<std::vector<double>> centroids;
  centroids.push_back(pts[rng() % n]);
  std::vector<double> d2(n);
  while (static_cast<int>(centroids.size()) < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& c : centroids) best = std::min(best, sq_dist(pts[i], c));
      d2[i] = best;
      total += best;
    }
    std::size_t pick = 0;
    if (total > 0.0) {
      double u = uniform01(rng) * total;
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        acc += d2[i];
        if (acc >= u) {
          pick = i;
          break;
        }
      }
    } else {
      pick = rng() % n;
    }
    centroids.push_back(pts[pick]);
  }

  KMeansResult res;
  res.assignment.assign(n, -1);
  res.centroids = centroids;
  for (int iter = 0; iter < 200; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        double d = sq_dist(pts[i], res.centroids[static_cast<std::size_t>(c)]);
        if (d < bd) {
          bd = d;
          best = c;
        }
      }
      if (res.assignment[i] != best) {
        res.assignment[i] = best;
        changed = true;
      }
    }
    if (!changed && iter > 0) break;
    std::vector<std::vector<double>> sums(static_cast<std::size_t>(k),
                                          std::vector<double>(dim, 0.0));
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (std::size_t i = 0; i < n; ++i) {
      auto& s = sums[static_cast<std::size_t>(res.assignment[i])];
      for (std::size_t j = 0; j < dim; ++j) s[j] += pts[i][j];
      counts[static_cast<std::size_t>(res.assignment[i])]++;
    }
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] == 0) continue;  // keep old centroid
      auto& ctr = res.centroids[static_cast<std::size_t>(c)];
      for (std::size_t j = 0; j < dim; ++j) {
        ctr[j] = sums[static_cast<std::size_t>(c)][j] / counts[static_cast<std::size_t>(c)];
      }
    }
  }
  res.wcss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    res.wcss += sq_dist(pts[i], res.centroids[static_cast<std::size_t>(res.assignment[i])]);
  }
  return res;
}

}  // namespace detail

// k-means with k-means++ seeding and `restarts` independent restarts; the
// restart with the lowest within-cluster sum of squares wins, ties broken by
// restart index. Deterministic for a fixed seed.
inline KMeansResult kmeans(const std::vector<std::vector<double>>& pts, int k,
                           std::uint64_t seed, int restarts = 50) {
  if (pts.empty()) throw std::invalid_argument("kmeans: no points");
  if (k < 1 || k > static_cast<int>(pts.size())) {
    throw std::invalid_argument("kmeans: k out of range");
  }
  KMeansResult best;
  for (int r = 0; r < restarts; ++r) {
    Rng rng = make_rng(seed, static_cast<std::uint64_t>(r));
    KMeansResult cur = detail::kmeans_once(pts, k, rng);
    if (cur.wcss < best.wcss) best = std::move(cur);
  }
  return best;
}

// Assigns each complete track to one of P subpopulations by clustering the
// displacement features. Writes 0-based labels into Track::subpop and
// returns them.
inline std::vector<int> cluster_tracks(std::vector<Track>& tracks, int P,
                                       std::uint64_t seed, int restarts = 50) {
  if (P < 1 || P > static_cast<int>(tracks.size())) {
    throw std::invalid_argument("cluster_tracks: P out of range");
  }
  std::vector<std::vector<double>> feats;
  feats.reserve(tracks.size());
  for (const Track& t : tracks) feats.push_back(displacement_features(t));
  KMeansResult res = kmeans(feats, P, seed, restarts);
  for (std::size_t i = 0; i < tracks.size(); ++i) tracks[i].subpop = res.assignment[i];
  return res.assignment;
}

}  // namespace imm
