#pragma once

#include "fracopt/geometry.hpp"

#include <cmath>
#include <map>
#include <stdexcept>
#include <vector>

namespace fracopt {

struct QuadPoint1D {
  double x;
  double w;
};

/// Gauss-Legendre rule on [0,1], exact for polynomials of degree 2n-1.
/// Nodes are found by Newton iteration on P_n with Chebyshev initial guesses.
inline const std::vector<QuadPoint1D>& gauss_legendre(int n) {
  if (n < 1 || n > 64) throw std::invalid_argument("gauss_legendre: order out of range");
  static std::map<int, std::vector<QuadPoint1D>> cache;
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;

  std::vector<QuadPoint1D> rule(n);
  for (int i = 0; i < n; ++i) {
    double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));  // guess on [-1,1]
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        double p2 = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    rule[n - 1 - i].x = 0.5 * (x + 1.0);
    rule[n - 1 - i].w = 1.0 / ((1.0 - x * x) * dp * dp);  // maps to [0,1] with total weight 1
  }
  return cache.emplace(n, std::move(rule)).first->second;
}

struct QuadPointTri {
  double r1, r2;  // reference coordinates, triangle {(0,0),(1,0),(1,1)}
  double w;       // weights sum to 1/2 (reference area)
};

/// Tensor Gauss rule on the collapsed square (Duffy map (a,b) -> (a, a*b)).
/// Exact for total degree <= 2n-2.
inline const std::vector<QuadPointTri>& triangle_rule(int n) {
  static std::map<int, std::vector<QuadPointTri>> cache;
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;

  const auto& g = gauss_legendre(n);
  std::vector<QuadPointTri> rule;
  rule.reserve(n * n);
  for (const auto& pa : g)
    for (const auto& pb : g) rule.push_back({pa.x, pa.x * pb.x, pa.w * pb.w * pa.x});
  return cache.emplace(n, std::move(rule)).first->second;
}

/// Smallest tensor rule exact for the given total polynomial degree.
inline const std::vector<QuadPointTri>& triangle_rule_degree(int degree) {
  return triangle_rule((degree + 2 + 1) / 2);
}

/// Integrates f over a physical triangle; f receives physical coordinates.
template <class F>
double integrate(const TriCoords& t, int n, F&& f) {
  const double jac = 2.0 * std::abs(signed_area(t));
  double sum = 0.0;
  for (const auto& q : triangle_rule(n)) sum += q.w * f(map_reference(t, q.r1, q.r2));
  return jac * sum;
}

/// As integrate(), but quadrisects the cell `levels` times first. Used on cells
/// where the integrand has a kink (boundary layer of the disc).
template <class F>
double integrate_subdivided(const TriCoords& t, int n, int levels, F&& f) {
  if (levels <= 0) return integrate(t, n, f);
  const Vec2 m01 = 0.5 * (t[0] + t[1]), m12 = 0.5 * (t[1] + t[2]), m20 = 0.5 * (t[2] + t[0]);
  double sum = 0.0;
  sum += integrate_subdivided(TriCoords{t[0], m01, m20}, n, levels - 1, f);
  sum += integrate_subdivided(TriCoords{m01, t[1], m12}, n, levels - 1, f);
  sum += integrate_subdivided(TriCoords{m20, m12, t[2]}, n, levels - 1, f);
  sum += integrate_subdivided(TriCoords{m01, m12, m20}, n, levels - 1, f);
  return sum;
}

/// Quadrature orders for the nonlocal pair assembly.
struct QuadratureConfig {
  int gauss_order_regular = 4;  // tensor order for disjoint pairs
  int duffy_order_singular = 5; // order inside the desingularizing transforms

  void validate() const {
    if (gauss_order_regular < 2 || duffy_order_singular < 2)
      throw std::invalid_argument("quadrature orders must be >= 2");
    if (duffy_order_singular < gauss_order_regular)
      throw std::invalid_argument("singular order must be >= regular order");
  }
};

}  // namespace fracopt
