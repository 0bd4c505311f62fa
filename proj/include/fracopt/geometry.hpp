#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>

namespace fracopt {

using Vec2 = Eigen::Vector2d;

/// Vertex coordinates of a triangle, counterclockwise.
using TriCoords = std::array<Vec2, 3>;

inline double cross2(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

inline double signed_area(const TriCoords& t) {
  return 0.5 * cross2(t[1] - t[0], t[2] - t[0]);
}

inline double diameter(const TriCoords& t) {
  return std::max({(t[1] - t[0]).norm(), (t[2] - t[1]).norm(), (t[0] - t[2]).norm()});
}

inline Vec2 centroid(const TriCoords& t) { return (t[0] + t[1] + t[2]) / 3.0; }

/// Affine map from the reference triangle {(0,0),(1,0),(1,1)} onto t.
inline Vec2 map_reference(const TriCoords& t, double r1, double r2) {
  return t[0] + r1 * (t[1] - t[0]) + r2 * (t[2] - t[1]);
}

/// Barycentric coordinates of p with respect to t.
inline std::array<double, 3> barycentric(const TriCoords& t, const Vec2& p) {
  const double a = 2.0 * signed_area(t);
  const double l0 = cross2(t[1] - p, t[2] - p) / a;
  const double l1 = cross2(t[2] - p, t[0] - p) / a;
  return {l0, l1, 1.0 - l0 - l1};
}

}  // namespace fracopt
