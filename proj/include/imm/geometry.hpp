#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

#include "imm/rng.hpp"
#include "imm/util.hpp"

namespace imm {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

inline bool is_finite(const Vec2& v) {
  return std::isfinite(v.x()) && std::isfinite(v.y());
}

inline double min_eigenvalue(const Mat2& m) {
  double tr = m(0, 0) + m(1, 1);
  double det = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
  double disc = std::sqrt(std::max(0.0, tr * tr / 4.0 - det));
  return tr / 2.0 - disc;
}

inline bool is_spd(const Mat2& m, double min_eig = 0.0) {
  if (std::abs(m(0, 1) - m(1, 0)) > 1e-9 * (1.0 + std::abs(m(0, 1)))) return false;
  return min_eigenvalue(m) > min_eig;
}

// Bivariate Gaussian with dense 2x2 covariance.
struct Gaussian2D {
  Vec2 mean = Vec2::Zero();
  Mat2 cov = Mat2::Identity();

  double log_density(const Vec2& x) const {
    double a = cov(0, 0), b = cov(0, 1), c = cov(1, 1);
    double det = a * c - b * b;
    if (!(det > 0.0) || !(a > 0.0)) {
      throw std::domain_error("Gaussian2D: covariance not positive definite");
    }
    double dx = x.x() - mean.x(), dy = x.y() - mean.y();
    double q = (c * dx * dx - 2.0 * b * dx * dy + a * dy * dy) / det;
    return -std::log(kTwoPi) - 0.5 * std::log(det) - 0.5 * q;
  }
  double density(const Vec2& x) const { return std::exp(log_density(x)); }

  // Lower Cholesky factor of the covariance.
  Mat2 chol() const {
    double a = cov(0, 0), b = cov(0, 1), c = cov(1, 1);
    if (!(a > 0.0)) throw std::domain_error("Gaussian2D: covariance not SPD");
    double l11 = std::sqrt(a);
    double l21 = b / l11;
    double rest = c - l21 * l21;
    if (!(rest >= 0.0)) throw std::domain_error("Gaussian2D: covariance not SPD");
    Mat2 l;
    l << l11, 0.0, l21, std::sqrt(rest);
    return l;
  }

  Vec2 sample(Rng& rng) const {
    Mat2 l = chol();
    NormalPair z = normal_pair(rng);
    return mean + l * Vec2(z.z1, z.z2);
  }
};

// Pushforward of N(mean, cov) through y = a*x + shift plus independent
// Gaussian noise: used to compose OU transitions (Chapman-Kolmogorov).
inline Gaussian2D affine_then_noise(const Gaussian2D& g, double a,
                                    const Vec2& shift, const Mat2& noise_cov) {
  Gaussian2D out;
  out.mean = a * g.mean + shift;
  out.cov = a * a * g.cov + noise_cov;
  return out;
}

}  // namespace imm
