#pragma once

// Brute-force reference integrators for the nonlocal pair contributions and the
// complement tail. Everything here is deliberately independent of the
// production transforms in assembly.hpp: identical pairs go through polygon
// clipping plus Gauss-Jacobi radial quadrature, touching pairs through
// recursive quadrisection with Shanks extrapolation of the vanishing core, and
// disjoint pairs through high-order tensor Gauss.

#include "fracopt/geometry.hpp"
#include "fracopt/quadrature.hpp"

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

namespace oracle {

using fracopt::TriCoords;
using fracopt::Vec2;

struct AffineFn {
  double a = 0.0;
  Vec2 g{0.0, 0.0};
  double operator()(const Vec2& x) const { return a + g.dot(x); }
};

/// P1 hat on triangle t with value 1 at vertex k, as a global affine function.
inline AffineFn hat_fn(const TriCoords& t, int k) {
  const Vec2 p = t[(k + 1) % 3];
  const Vec2 e = t[(k + 2) % 3] - p;
  const double twoA = 2.0 * fracopt::signed_area(t);
  AffineFn f;
  f.g = Vec2{-e.y(), e.x()} / twoA;
  f.a = fracopt::cross2(e, p) / twoA * -1.0;
  return f;
}

// --- Gauss-Jacobi nodes for weight t^beta on [0,1] (Golub-Welsch) ----------

inline void gauss_jacobi01(int n, double beta, std::vector<double>& x, std::vector<double>& w) {
  const double al = 0.0, be = beta;
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  auto diag = [&](int k) {
    if (k == 0) return (be - al) / (al + be + 2.0);
    const double d = 2.0 * k + al + be;
    return (be * be - al * al) / (d * (d + 2.0));
  };
  auto offd = [&](int k) {  // k >= 1
    const double d = 2.0 * k + al + be;
    return std::sqrt(4.0 * k * (k + al) * (k + be) * (k + al + be) /
                     (d * d * (d + 1.0) * (d - 1.0)));
  };
  for (int k = 0; k < n; ++k) {
    J(k, k) = diag(k);
    if (k >= 1) J(k, k - 1) = J(k - 1, k) = offd(k);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  const double mu0 = std::pow(2.0, al + be + 1.0) * std::tgamma(al + 1.0) * std::tgamma(be + 1.0) /
                     std::tgamma(al + be + 2.0);
  x.resize(n);
  w.resize(n);
  for (int i = 0; i < n; ++i) {
    x[i] = 0.5 * (es.eigenvalues()[i] + 1.0);
    const double v0 = es.eigenvectors()(0, i);
    w[i] = mu0 * v0 * v0 / std::pow(2.0, be + 1.0);
  }
}

// --- convex polygon clipping ------------------------------------------------

/// Area of the intersection of triangle A with triangle B (Sutherland-Hodgman).
inline double intersection_area(const TriCoords& A, const TriCoords& B) {
  std::vector<Vec2> poly(A.begin(), A.end());
  for (int e = 0; e < 3 && !poly.empty(); ++e) {
    const Vec2 p = B[e], q = B[(e + 1) % 3];
    std::vector<Vec2> next;
    auto inside = [&](const Vec2& v) { return fracopt::cross2(q - p, v - p) >= 0.0; };
    for (size_t i = 0; i < poly.size(); ++i) {
      const Vec2 cur = poly[i], nxt = poly[(i + 1) % poly.size()];
      const bool ci = inside(cur), ni = inside(nxt);
      if (ci) next.push_back(cur);
      if (ci != ni) {
        const double t = fracopt::cross2(q - p, p - cur) / fracopt::cross2(q - p, nxt - cur);
        next.push_back(cur + t * (nxt - cur));
      }
    }
    poly = std::move(next);
  }
  double a2 = 0.0;
  for (size_t i = 1; i + 1 < poly.size(); ++i)
    a2 += fracopt::cross2(poly[i] - poly[0], poly[i + 1] - poly[0]);
  return 0.5 * std::abs(a2);
}

// --- local pair matrix over the union of involved nodes ---------------------

struct Local {
  std::vector<int> nodes;
  Eigen::MatrixXd m;
};

namespace detail {

struct PairFns {
  std::vector<AffineFn> on_a, on_b;  // per involved node
};

inline PairFns build_fns(const TriCoords& a, const std::array<int, 3>& na, const TriCoords& b,
                         const std::array<int, 3>& nb, const std::vector<int>& nodes) {
  PairFns f;
  for (int n : nodes) {
    AffineFn fa{}, fb{};
    for (int k = 0; k < 3; ++k) {
      if (na[k] == n) fa = hat_fn(a, k);
      if (nb[k] == n) fb = hat_fn(b, k);
    }
    f.on_a.push_back(fa);
    f.on_b.push_back(fb);
  }
  return f;
}

inline void tensor_leaf(const TriCoords& a, const TriCoords& b, const PairFns& f, double s, int n,
                        Eigen::MatrixXd& acc) {
  const auto& rule = fracopt::triangle_rule(n);
  const double jac = 4.0 * std::abs(fracopt::signed_area(a)) * std::abs(fracopt::signed_area(b));
  const int m = static_cast<int>(f.on_a.size());
  std::vector<double> d(m);
  for (const auto& qa : rule) {
    const Vec2 x = fracopt::map_reference(a, qa.r1, qa.r2);
    for (const auto& qb : rule) {
      const Vec2 y = fracopt::map_reference(b, qb.r1, qb.r2);
      const double k = jac * qa.w * qb.w * std::pow((x - y).squaredNorm(), -(1.0 + s));
      for (int i = 0; i < m; ++i) d[i] = f.on_a[i](x) - f.on_b[i](y);
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) acc(i, j) += k * d[i] * d[j];
    }
  }
}

inline bool share_vertex(const TriCoords& a, const TriCoords& b) {
  for (const auto& va : a)
    for (const auto& vb : b)
      if (va.x() == vb.x() && va.y() == vb.y()) return true;
  return false;
}

inline std::array<TriCoords, 4> quadrisect(const TriCoords& t) {
  const Vec2 m01 = 0.5 * (t[0] + t[1]), m12 = 0.5 * (t[1] + t[2]), m20 = 0.5 * (t[2] + t[0]);
  return {TriCoords{t[0], m01, m20}, TriCoords{m01, t[1], m12}, TriCoords{m20, m12, t[2]},
          TriCoords{m01, m12, m20}};
}

inline void recurse(const TriCoords& a, const TriCoords& b, const PairFns& f, double s, int depth,
                    int max_depth, std::vector<Eigen::MatrixXd>& by_depth) {
  if (!share_vertex(a, b)) {
    const double gap = (fracopt::centroid(a) - fracopt::centroid(b)).norm() -
                       0.5 * (fracopt::diameter(a) + fracopt::diameter(b));
    const double ratio = gap / std::max(fracopt::diameter(a), fracopt::diameter(b));
    const int n = ratio >= 2.0 ? 6 : (ratio >= 0.5 ? 10 : 12);
    tensor_leaf(a, b, f, s, n, by_depth[depth]);
    return;
  }
  if (depth == max_depth) return;  // drop the core, extrapolated later
  for (const auto& ca : quadrisect(a))
    for (const auto& cb : quadrisect(b)) recurse(ca, cb, f, s, depth + 1, max_depth, by_depth);
}

/// Iterated Aitken extrapolation of a sequence of prefix sums.
inline double shanks_limit(std::vector<double> v) {
  for (int sweep = 0; sweep < 2 && v.size() >= 3; ++sweep) {
    std::vector<double> next;
    for (size_t i = 0; i + 2 < v.size(); ++i) {
      const double d1 = v[i + 1] - v[i], d2 = v[i + 2] - v[i + 1];
      const double den = d2 - d1;
      next.push_back(std::abs(den) < 1e-300 ? v[i + 2] : v[i + 2] - d2 * d2 / den);
    }
    v = std::move(next);
  }
  return v.back();
}

}  // namespace detail

/// Identical pair: with z = x - y the pair integral becomes
///   int_{T-T} N(z) |z|^{-2-2s} |T cap (T+z)| dz,
/// evaluated in polar coordinates with corner-aligned angular panels, the
/// r^{1-2s} radial weight handled by Gauss-Jacobi, and the intersection area
/// obtained by polygon clipping.
inline Local pair_matrix_identical(const TriCoords& t, const std::array<int, 3>& nodes_in,
                                   double s) {
  Local out;
  out.nodes.assign(nodes_in.begin(), nodes_in.end());
  out.m = Eigen::MatrixXd::Zero(3, 3);

  std::array<Vec2, 3> grads;
  for (int k = 0; k < 3; ++k) grads[k] = hat_fn(t, k).g;

  // hexagon corner directions of T - T
  std::vector<double> angles;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      if (i != j) {
        const Vec2 d = t[i] - t[j];
        angles.push_back(std::atan2(d.y(), d.x()));
      }
  std::sort(angles.begin(), angles.end());
  angles.push_back(angles.front() + 2.0 * M_PI);

  // ray exit distance from the difference hexagon
  std::vector<Vec2> hex;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      if (i != j) hex.push_back(t[i] - t[j]);
  std::sort(hex.begin(), hex.end(), [](const Vec2& a, const Vec2& b) {
    return std::atan2(a.y(), a.x()) < std::atan2(b.y(), b.x());
  });
  auto ray_exit = [&](const Vec2& e) {
    for (size_t k = 0; k < hex.size(); ++k) {
      const Vec2 h0 = hex[k], h1 = hex[(k + 1) % hex.size()];
      const double den = fracopt::cross2(h1 - h0, e);
      if (std::abs(den) < 1e-300) continue;
      const double tau = fracopt::cross2(e, h0) / den;
      if (tau < -1e-12 || tau > 1.0 + 1e-12) continue;
      const Vec2 z = h0 + tau * (h1 - h0);
      const double rho = z.dot(e);
      if (rho > 0.0) return rho;
    }
    return 0.0;
  };

  std::vector<double> jx, jw;
  gauss_jacobi01(12, 1.0 - 2.0 * s, jx, jw);
  const auto& g = fracopt::gauss_legendre(16);

  for (size_t p = 0; p + 1 < angles.size(); ++p) {
    const double th0 = angles[p], th1 = angles[p + 1];
    if (th1 - th0 < 1e-14) continue;
    for (const auto& qa : g) {
      const double th = th0 + (th1 - th0) * qa.x;
      const Vec2 e{std::cos(th), std::sin(th)};
      const double rmax = ray_exit(e);
      double radial = 0.0;
      for (size_t i = 0; i < jx.size(); ++i) {
        const double rho = rmax * jx[i];
        const TriCoords shifted{t[0] + rho * e, t[1] + rho * e, t[2] + rho * e};
        radial += jw[i] * intersection_area(t, shifted);
      }
      radial *= std::pow(rmax, 2.0 - 2.0 * s);
      const double wz = (th1 - th0) * qa.w * radial;
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) out.m(i, j) += wz * grads[i].dot(e) * grads[j].dot(e);
    }
  }
  return out;
}

/// Any ordered pair of distinct triangles: subdivision plus extrapolation for
/// touching pairs, plain high-order tensor Gauss for disjoint ones.
inline Local pair_matrix_general(const TriCoords& a, const std::array<int, 3>& na,
                                 const TriCoords& b, const std::array<int, 3>& nb, double s,
                                 int max_depth = 9) {
  Local out;
  for (int n : na) out.nodes.push_back(n);
  for (int n : nb)
    if (std::find(out.nodes.begin(), out.nodes.end(), n) == out.nodes.end())
      out.nodes.push_back(n);
  const int m = static_cast<int>(out.nodes.size());
  const auto fns = detail::build_fns(a, na, b, nb, out.nodes);

  if (!detail::share_vertex(a, b)) {
    out.m = Eigen::MatrixXd::Zero(m, m);
    detail::tensor_leaf(a, b, fns, s, 16, out.m);
    return out;
  }

  std::vector<Eigen::MatrixXd> by_depth(max_depth + 1, Eigen::MatrixXd::Zero(m, m));
  detail::recurse(a, b, fns, s, 0, max_depth, by_depth);
  out.m = Eigen::MatrixXd::Zero(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) {
      std::vector<double> prefix;
      double acc = 0.0;
      for (const auto& lvl : by_depth) {
        acc += lvl(i, j);
        prefix.push_back(acc);
      }
      // the first couple of depths contain no leaves for strongly singular pairs
      prefix.erase(prefix.begin(), prefix.begin() + 2);
      out.m(i, j) = detail::shanks_limit(prefix);
    }
  return out;
}

/// Direct polar quadrature of the complement tail weight
/// int_{|y|>R} |x-y|^{-2-2s} dy, with a far cutoff and its leading correction.
inline double tail_weight(double r, double R, double s) {
  const double Rbig = 500.0;
  const auto& g = fracopt::gauss_legendre(10);
  const int n_ang = 256;
  double total = 0.0;
  double lo = R;
  while (lo < Rbig) {
    const double hi = std::min(lo * std::pow(2.0, 0.25), Rbig);
    for (const auto& q : g) {
      const double rho = lo + (hi - lo) * q.x;
      double ang = 0.0;
      for (int j = 0; j < n_ang; ++j) {
        const double th = 2.0 * M_PI * j / n_ang;
        ang += std::pow(rho * rho + r * r - 2.0 * rho * r * std::cos(th), -(1.0 + s));
      }
      ang *= 2.0 * M_PI / n_ang;
      total += (hi - lo) * q.w * rho * ang;
    }
    lo = hi;
  }
  total += 2.0 * M_PI * std::pow(Rbig, -2.0 * s) / (2.0 * s);
  return total;
}

}  // namespace oracle
