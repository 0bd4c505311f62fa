#pragma once

#include "fracopt/geometry.hpp"
#include "fracopt/quadrature.hpp"

#include <cmath>
#include <functional>
#include <stdexcept>

namespace fracopt {

/// Normalization constant C(d,s) of the integral fractional Laplacian,
///   C(d,s) = 2^{2s} s Gamma(s + d/2) / (pi^{d/2} Gamma(1 - s)).
inline double normalization_constant(int d, double s) {
  if (d != 2) throw std::invalid_argument("normalization_constant: only d = 2 is supported");
  if (!(s > 0.0 && s < 1.0)) throw std::invalid_argument("normalization_constant: s must lie in (0,1)");
  return std::pow(2.0, 2.0 * s) * s * std::tgamma(s + 1.0) / (M_PI * std::tgamma(1.0 - s));
}

/// Weight of the analytic complement tail,
///   w_tail(r) = int_{|y| > R} |x - y|^{-2-2s} dy   with |x| = r < R.
/// Expanding the angular average in a Gauss hypergeometric series and
/// integrating the radial variable termwise gives
///   w_tail(r) = 2 pi sum_m [ ((1+s)_m / m! )^2 ] r^{2m} R^{-2s-2m} / (2s + 2m),
/// a geometric-type series in (r/R)^2.
inline double tail_weight(double r, double R, double s) {
  if (!(r >= 0.0 && r < R)) throw std::invalid_argument("tail_weight: requires 0 <= r < R");
  const double z = (r / R) * (r / R);
  double coeff = 1.0;  // ((1+s)_m / m!)^2 * z^m
  double sum = 0.0;
  for (int m = 0; m < 2000; ++m) {
    const double term = coeff / (2.0 * s + 2.0 * m);
    sum += term;
    if (term < 1e-17 * sum) break;
    const double ratio = (1.0 + s + m) / (m + 1.0);
    coeff *= ratio * ratio * z;
  }
  return 2.0 * M_PI * std::pow(R, -2.0 * s) * sum;
}

/// A C^2 function supported in the closed unit disc, with enough derivative
/// data to remove the principal value at interior points.
struct PointwiseField {
  std::function<double(const Vec2&)> value;
  std::function<double(const Vec2&)> laplacian;  // needed only near the evaluation point
};

struct FarFieldConfig {
  double ball_fraction = 0.05;  // delta = fraction * dist(x0, boundary)
  int angular_points = 192;
  int inner_panels = 24;   // log-spaced toward the excluded ball
  int outer_panels = 30;   // geometric toward the boundary kink
  int gauss_order = 10;
};

/// Direct numerical evaluation of the pointwise operator
///   (-Delta)^s f(x0) = C(2,s) p.v. int (f(x0) - f(y)) / |x0 - y|^{2+2s} dy
/// at an interior point of the unit disc. The principal value over B(x0,delta)
/// is replaced by its Taylor value -pi/2 * Lap f(x0) * delta^{2-2s}/(2-2s); the
/// rest of the disc is integrated in polar coordinates around x0 with geometric
/// grading toward the boundary, and the exterior ray integral is closed-form.
inline double pointwise_fractional_laplacian(const PointwiseField& f, const Vec2& x0, double s,
                                             const FarFieldConfig& cfg = {}) {
  const double r0 = x0.norm();
  if (!(r0 < 1.0)) throw std::invalid_argument("pointwise evaluation requires an interior point");
  const double delta = cfg.ball_fraction * (1.0 - r0);
  const double fx0 = f.value(x0);

  const double ball = -0.5 * f.laplacian(x0) * M_PI * std::pow(delta, 2.0 - 2.0 * s) / (2.0 - 2.0 * s);

  const auto& g = gauss_legendre(cfg.gauss_order);
  double angular_sum = 0.0;
  for (int j = 0; j < cfg.angular_points; ++j) {
    const double th = 2.0 * M_PI * j / cfg.angular_points;
    const Vec2 e{std::cos(th), std::sin(th)};
    const double b = x0.dot(e);
    const double Rth = -b + std::sqrt(b * b + 1.0 - r0 * r0);  // exit radius of the ray

    // panel breakpoints: log-spaced from delta to Rth/2 (the integrand grows
    // like r^{-2s} toward the ball), then geometric toward the boundary kink
    std::vector<double> brk;
    brk.push_back(delta);
    const double mid = 0.5 * Rth;
    for (int k = 1; k <= cfg.inner_panels; ++k)
      brk.push_back(delta * std::pow(mid / delta, static_cast<double>(k) / cfg.inner_panels));
    for (int k = 1; k < cfg.outer_panels; ++k)
      brk.push_back(Rth - (Rth - mid) * std::pow(0.5, k));
    brk.push_back(Rth);

    double ray = 0.0;
    for (size_t k = 0; k + 1 < brk.size(); ++k) {
      const double lo = brk[k], hi = brk[k + 1];
      for (const auto& q : g) {
        const double r = lo + (hi - lo) * q.x;
        ray += (hi - lo) * q.w * (fx0 - f.value(x0 + r * e)) * std::pow(r, -1.0 - 2.0 * s);
      }
    }
    ray += fx0 * std::pow(Rth, -2.0 * s) / (2.0 * s);  // exterior part of the ray, f = 0 there
    angular_sum += ray;
  }
  angular_sum *= 2.0 * M_PI / cfg.angular_points;

  return normalization_constant(2, s) * (ball + angular_sum);
}

}  // namespace fracopt
