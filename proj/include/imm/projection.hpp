#pragma once

#include <cmath>
#include <string>

#include "imm/geometry.hpp"
#include "imm/util.hpp"

namespace imm {

// Coordinate handling for input files. "planar" means coordinates are
// already easting/northing in km; "laea" applies a spherical Lambert
// azimuthal equal-area projection (R = 6371 km) about a configured center.
struct Projection {
  enum class Kind { planar, laea };
  Kind kind = Kind::planar;
  double lon0 = 0.0;
  double lat0 = 0.0;

  static constexpr double kEarthRadiusKm = 6371.0;

  Vec2 forward(double a, double b) const {
    if (kind == Kind::planar) return {a, b};
    double lam = a * kPi / 180.0, phi = b * kPi / 180.0;
    double lam0 = lon0 * kPi / 180.0, phi0 = lat0 * kPi / 180.0;
    double cosd = std::sin(phi0) * std::sin(phi) +
                  std::cos(phi0) * std::cos(phi) * std::cos(lam - lam0);
    double kq = std::sqrt(2.0 / std::max(1e-12, 1.0 + cosd));
    double x = kEarthRadiusKm * kq * std::cos(phi) * std::sin(lam - lam0);
    double y = kEarthRadiusKm * kq *
               (std::cos(phi0) * std::sin(phi) -
                std::sin(phi0) * std::cos(phi) * std::cos(lam - lam0));
    return {x, y};
  }
};

}  // namespace imm
