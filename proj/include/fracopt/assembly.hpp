#pragma once

#include "fracopt/fem.hpp"
#include "fracopt/fractional.hpp"
#include "fracopt/mesh.hpp"
#include "fracopt/mesh_io.hpp"
#include "fracopt/quadrature.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <future>
#include <stdexcept>
#include <thread>
#include <vector>

namespace fracopt {

/// Assembled operators on the interior-node space for one (mesh, s) pair.
struct OperatorSet {
  Eigen::MatrixXd A;  // dense fractional stiffness, realizes the bilinear form
  SpMat M;            // P1 mass
  double s = 0.0;
  double c_ds = 0.0;  // normalization constant C(2,s)
  Fingerprint mesh_fingerprint{};
  QuadratureConfig quad{};

  double energy_norm(const Vector& v) const { return std::sqrt(v.dot(A * v)); }
};

namespace detail {

// Per-triangle data for the pair loop.
struct PairTri {
  TriCoords c;
  std::array<int, 3> nodes;
  double area = 0.0;
  Vec2 cen{0.0, 0.0};
  double rad = 0.0;   // max distance centroid -> vertex
  double diam = 0.0;
};

inline PairTri make_pair_tri(const TriMesh& mesh, const std::array<int, 3>& t) {
  PairTri p;
  p.c = mesh.coords(t);
  p.nodes = t;
  p.area = std::abs(signed_area(p.c));
  p.cen = centroid(p.c);
  for (const auto& v : p.c) p.rad = std::max(p.rad, (v - p.cen).norm());
  p.diam = diameter(p.c);
  return p;
}

// Contribution of one ordered pair of triangles, as a symmetric local matrix
// over the involved mesh nodes.
struct LocalPair {
  int n = 0;
  std::array<int, 6> nodes{};
  std::array<double, 36> m{};  // row-major n x n

  void add(int i, int j, double v) { m[static_cast<size_t>(i) * n + j] += v; }
  double get(int i, int j) const { return m[static_cast<size_t>(i) * n + j]; }
};

inline double kern(double r2, double s) { return std::pow(r2, -(1.0 + s)); }

/// Identical pair, T = T'. With z the reference-coordinate difference, the
/// integrand N(z) |Bz|^{-2-2s} is homogeneous of degree -2s, and
/// int int_{That x That} G(xi - eta) = int_hex G(z) |That ∩ (That + z)| dz.
/// The intersection area is |That| (1 - l(z))^2 with l linear per hexagon
/// sector, so the radial direction integrates in closed form and only a 1D
/// integral over half the hexagon boundary remains:
///   I = 4|T|^2 B(s) sum_{k=1}^{3} int_0^1 G(seg_k(tau)) dtau,
///   B(s) = 2 / ((2-2s)(3-2s)(4-2s)).
inline LocalPair pair_identical(const PairTri& T, double s, int n_1d) {
  // reference gradients of the three hats
  static constexpr double grad[3][2] = {{-1.0, 0.0}, {1.0, -1.0}, {0.0, 1.0}};
  const Vec2 e0 = T.c[1] - T.c[0];  // columns of the reference Jacobian
  const Vec2 e1 = T.c[2] - T.c[1];
  static constexpr double segs[3][4] = {
      {1.0, 0.0, 1.0, 1.0},  // (1,0) -> (1,1)
      {1.0, 1.0, 0.0, 1.0},  // (1,1) -> (0,1)
      {0.0, 1.0, -1.0, 0.0}  // (0,1) -> (-1,0)
  };

  LocalPair out;
  out.n = 3;
  out.nodes = {T.nodes[0], T.nodes[1], T.nodes[2], -1, -1, -1};
  const auto& g = gauss_legendre(n_1d);
  double acc[3][3] = {};
  for (const auto& seg : segs) {
    for (const auto& q : g) {
      const double z0 = seg[0] + q.x * (seg[2] - seg[0]);
      const double z1 = seg[1] + q.x * (seg[3] - seg[1]);
      const Vec2 bz = z0 * e0 + z1 * e1;
      const double k = q.w * kern(bz.squaredNorm(), s);
      const double d[3] = {grad[0][0] * z0 + grad[0][1] * z1, grad[1][0] * z0 + grad[1][1] * z1,
                           grad[2][0] * z0 + grad[2][1] * z1};
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j <= i; ++j) acc[i][j] += k * d[i] * d[j];
    }
  }
  const double beta = 2.0 / ((2.0 - 2.0 * s) * (3.0 - 2.0 * s) * (4.0 - 2.0 * s));
  const double factor = 4.0 * T.area * T.area * beta;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) out.add(i, j, factor * acc[std::max(i, j)][std::min(i, j)]);
  return out;
}

/// Edge-adjacent pair sharing the edge (P,Q). In the difference coordinates
/// (u, v1, v2) = (t1 - t1', t2, t2') the integrand is homogeneous of degree
/// -2s, both scaling variables integrate in closed form, and four smooth 2D
/// integrals remain.
inline LocalPair pair_edge(const PairTri& Ta, const PairTri& Tb, int P, int Q, double s, int n_2d) {
  auto third = [](const PairTri& T, int p, int q) {
    for (int v : T.nodes)
      if (v != p && v != q) return v;
    throw std::logic_error("pair_edge: degenerate triangle pair");
  };
  const int Ca = third(Ta, P, Q), Cb = third(Tb, P, Q);

  auto coord_of = [](const PairTri& T, int node) {
    for (int i = 0; i < 3; ++i)
      if (T.nodes[i] == node) return T.c[i];
    throw std::logic_error("pair_edge: node not in triangle");
  };
  const Vec2 vP = coord_of(Ta, P), vQ = coord_of(Ta, Q);
  const Vec2 E = vQ - vP, c1 = coord_of(Ta, Ca) - vQ, c2 = coord_of(Tb, Cb) - vQ;

  LocalPair out;
  out.n = 4;
  out.nodes = {P, Q, Ca, Cb, -1, -1};
  // linear form per node: l = b*u + c*v1 - cp*v2  (case A); sign of b flips in case B
  const double bco[4] = {-1.0, 1.0, 0.0, 0.0};
  const double cco[4] = {0.0, -1.0, 1.0, 0.0};
  const double cpco[4] = {0.0, -1.0, 0.0, 1.0};

  double acc[4][4] = {};
  auto accumulate = [&](double u, double v1, double v2, double w, double sgn) {
    const Vec2 dx = sgn * u * E + v1 * c1 - v2 * c2;
    const double k = w * kern(dx.squaredNorm(), s);
    double d[4];
    for (int i = 0; i < 4; ++i) d[i] = sgn * bco[i] * u + cco[i] * v1 - cpco[i] * v2;
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j <= i; ++j) acc[i][j] += k * d[i] * d[j];
  };

  // simplex pieces A-i (v1 = 1) and B-i (v2 = 1)
  for (const auto& q : triangle_rule(n_2d)) {
    const double a = q.r1 - q.r2, b = q.r2;  // maps onto {a,b >= 0, a+b <= 1}
    accumulate(a, 1.0, b, q.w, 1.0);
    accumulate(a, b, 1.0, q.w, -1.0);
  }
  // square pieces A-ii (u + v2 = 1 scaled) and B-ii
  const auto& g = gauss_legendre(n_2d);
  for (const auto& qa : g)
    for (const auto& qb : g) {
      const double w = qa.w * qb.w;
      accumulate(qa.x, qb.x, 1.0 - qa.x, w, 1.0);
      accumulate(qa.x, 1.0 - qa.x, qb.x, w, -1.0);
    }

  const double factor = 4.0 * Ta.area * Tb.area / ((4.0 - 2.0 * s) * (3.0 - 2.0 * s));
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) out.add(i, j, factor * acc[std::max(i, j)][std::min(i, j)]);
  return out;
}

/// Vertex-adjacent pair sharing the vertex V. Joint scaling toward the shared
/// vertex integrates in closed form; two smooth 3D integrals remain.
inline LocalPair pair_vertex(const PairTri& Ta, const PairTri& Tb, int V, double s, int n_3d) {
  auto reorder = [](const PairTri& T, int v) {
    std::array<Vec2, 3> c;
    std::array<int, 3> n;
    int k = 0;
    for (int i = 0; i < 3; ++i)
      if (T.nodes[i] == v) {
        c[0] = T.c[i];
        n[0] = T.nodes[i];
      }
    for (int i = 0; i < 3; ++i)
      if (T.nodes[i] != v) {
        ++k;
        c[k] = T.c[i];
        n[k] = T.nodes[i];
      }
    return std::make_pair(c, n);
  };
  const auto [ca, na] = reorder(Ta, V);
  const auto [cb, nb] = reorder(Tb, V);
  const Vec2 ea1 = ca[1] - ca[0], ea2 = ca[2] - ca[1];
  const Vec2 eb1 = cb[1] - cb[0], eb2 = cb[2] - cb[1];

  LocalPair out;
  out.n = 5;
  out.nodes = {V, na[1], na[2], nb[1], nb[2], -1};
  // l_n = ba*ta1 + ca*ta2 - bb*tb1 - cb*tb2 per involved node
  const double ba[5] = {-1.0, 1.0, 0.0, 0.0, 0.0};
  const double caco[5] = {0.0, -1.0, 1.0, 0.0, 0.0};
  const double bb[5] = {-1.0, 0.0, 0.0, 1.0, 0.0};
  const double cbco[5] = {0.0, 0.0, 0.0, -1.0, 1.0};

  double acc[5][5] = {};
  auto accumulate = [&](double ta1, double ta2, double tb1, double tb2, double w) {
    const Vec2 dx = ta1 * ea1 + ta2 * ea2 - tb1 * eb1 - tb2 * eb2;
    const double k = w * kern(dx.squaredNorm(), s);
    double d[5];
    for (int i = 0; i < 5; ++i) d[i] = ba[i] * ta1 + caco[i] * ta2 - bb[i] * tb1 - cbco[i] * tb2;
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j <= i; ++j) acc[i][j] += k * d[i] * d[j];
  };

  const auto& g = gauss_legendre(n_3d);
  for (const auto& qw : g)
    for (const auto& q1 : g)
      for (const auto& q2 : g) {
        const double w = qw.w * q1.w * q2.w * qw.x;
        accumulate(1.0, q1.x, qw.x, qw.x * q2.x, w);
        accumulate(qw.x, qw.x * q1.x, 1.0, q2.x, w);
      }

  const double factor = 4.0 * Ta.area * Tb.area / (4.0 - 2.0 * s);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) out.add(i, j, factor * acc[std::max(i, j)][std::min(i, j)]);
  return out;
}

/// Disjoint pair: tensor Gauss with order raised as the pair gets closer.
inline LocalPair pair_disjoint(const PairTri& Ta, const PairTri& Tb, double s, int n_a, int n_b) {
  LocalPair out;
  out.n = 6;
  out.nodes = {Ta.nodes[0], Ta.nodes[1], Ta.nodes[2], Tb.nodes[0], Tb.nodes[1], Tb.nodes[2]};

  const auto& ra = triangle_rule(n_a);
  const auto& rb = triangle_rule(n_b);
  double acc[6][6] = {};
  for (const auto& qa : ra) {
    const Vec2 x = map_reference(Ta.c, qa.r1, qa.r2);
    const double pa[3] = {1.0 - qa.r1, qa.r1 - qa.r2, qa.r2};
    for (const auto& qb : rb) {
      const Vec2 y = map_reference(Tb.c, qb.r1, qb.r2);
      const double k = qa.w * qb.w * kern((x - y).squaredNorm(), s);
      const double d[6] = {pa[0], pa[1], pa[2], -(1.0 - qb.r1), -(qb.r1 - qb.r2), -qb.r2};
      for (int i = 0; i < 6; ++i)
        for (int j = 0; j <= i; ++j) acc[i][j] += k * d[i] * d[j];
    }
  }
  const double factor = 4.0 * Ta.area * Tb.area;
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) out.add(i, j, factor * acc[std::max(i, j)][std::min(i, j)]);
  return out;
}

// Orders calibrated against the brute-force oracle: relative pair error stays
// below 1e-6 down to separation ratio ~0.35, the smallest that occurs between
// non-touching cells of a quasi-uniform mesh.
inline int disjoint_order(const PairTri& Ta, const PairTri& Tb, const QuadratureConfig& quad) {
  const double gap = (Ta.cen - Tb.cen).norm() - Ta.rad - Tb.rad;
  const double ratio = gap / std::max(Ta.diam, Tb.diam);
  const int reg = quad.gauss_order_regular;
  if (ratio >= 8.0) return reg;
  if (ratio >= 2.0) return reg + 1;
  if (ratio >= 1.0) return reg + 2;
  if (ratio >= 0.35) return reg + 4;
  return reg + 6;
}

/// One ordered pair, dispatched on the number of shared mesh vertices.
inline LocalPair pair_integral(const PairTri& Ta, const PairTri& Tb, bool same, double s,
                               const QuadratureConfig& quad) {
  if (same) return pair_identical(Ta, s, std::max(8, 2 * quad.duffy_order_singular + 2));

  int shared[2], ns = 0;
  for (int va : Ta.nodes)
    for (int vb : Tb.nodes)
      if (va == vb && ns < 2) shared[ns++] = va;

  if (ns == 2) return pair_edge(Ta, Tb, shared[0], shared[1], s, quad.duffy_order_singular + 2);
  if (ns == 1) return pair_vertex(Ta, Tb, shared[0], s, quad.duffy_order_singular + 2);
  const int n = disjoint_order(Ta, Tb, quad);
  return pair_disjoint(Ta, Tb, s, n, n);
}

}  // namespace detail

/// Double-integral part of the form over (Omega union band)^2, counting both
/// orders of each pair: rows/cols follow node_to_row (-1 entries are skipped).
/// No C(d,s)/2 factor and no analytic tail; see assemble_fractional_stiffness.
/// The pair loop is a deterministic map-reduce: a fixed block partition of the
/// outer triangle index is reduced in block order, so the result is bit-stable
/// for any thread count.
inline Eigen::MatrixXd assemble_interaction_matrix(const TriMesh& mesh,
                                                   const std::vector<int>& node_to_row, int n_rows,
                                                   double s, const QuadratureConfig& quad,
                                                   int n_threads = 0) {
  quad.validate();
  std::vector<detail::PairTri> omega, band;
  omega.reserve(mesh.triangles.size());
  for (const auto& t : mesh.triangles) omega.push_back(detail::make_pair_tri(mesh, t));
  band.reserve(mesh.band_triangles.size());
  for (const auto& t : mesh.band_triangles) band.push_back(detail::make_pair_tri(mesh, t));

  const int nT = static_cast<int>(omega.size());
  // fixed block partition, a pure function of the mesh size
  const int n_blocks = n_rows <= 1200 ? 8 : (n_rows <= 2500 ? 4 : 2);

  auto run_block = [&](int begin, int end) {
    Eigen::MatrixXd Ab = Eigen::MatrixXd::Zero(n_rows, n_rows);
    auto scatter = [&](const detail::LocalPair& lp, double mult) {
      for (int i = 0; i < lp.n; ++i) {
        const int ri = node_to_row[lp.nodes[i]];
        if (ri < 0) continue;
        for (int j = 0; j < lp.n; ++j) {
          const int rj = node_to_row[lp.nodes[j]];
          if (rj >= 0) Ab(ri, rj) += mult * lp.get(i, j);
        }
      }
    };
    for (int a = begin; a < end; ++a) {
      scatter(detail::pair_integral(omega[a], omega[a], true, s, quad), 1.0);
      for (int b = a + 1; b < nT; ++b)
        scatter(detail::pair_integral(omega[a], omega[b], false, s, quad), 2.0);
      for (const auto& tb : band) scatter(detail::pair_integral(omega[a], tb, false, s, quad), 2.0);
    }
    return Ab;
  };

  std::vector<std::pair<int, int>> ranges;
  for (int blk = 0; blk < n_blocks; ++blk)
    ranges.emplace_back(blk * nT / n_blocks, (blk + 1) * nT / n_blocks);

  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n_rows, n_rows);
  const int hw = n_threads > 0 ? n_threads : static_cast<int>(std::thread::hardware_concurrency());
  if (hw <= 1) {
    for (const auto& [b, e] : ranges) A += run_block(b, e);
  } else {
    std::vector<std::future<Eigen::MatrixXd>> futs;
    for (const auto& [b, e] : ranges)
      futs.push_back(std::async(std::launch::async, run_block, b, e));
    for (auto& f : futs) A += f.get();  // fixed reduction order
  }

  // the accumulation is symmetric pairwise; make it exactly so
  for (int i = 0; i < n_rows; ++i)
    for (int j = 0; j < i; ++j) A(j, i) = A(i, j);
  return A;
}

struct AssemblyOptions {
  QuadratureConfig quad{};
  int tail_quad_order = 3;  // triangle rule order for the tail weighted mass
  int n_threads = 0;        // 0 = hardware concurrency
};

/// Dense fractional stiffness realizing the bilinear form on the dof space:
///   A_ij = C/2 [ iint_{(Omega u band)^2} (phi_i(x)-phi_i(y))(phi_j(x)-phi_j(y)) / |x-y|^{2+2s}
///              + 2 int phi_i phi_j w_tail(|x|) ],
/// with the complement weight split into the meshed band and the analytic
/// radial tail beyond R. Fails if the band is missing or A is not SPD.
inline OperatorSet assemble_fractional_stiffness(const TriMesh& mesh, const DofMap& dm, double s,
                                                 const AssemblyOptions& opts = {}) {
  if (mesh.band_triangles.empty())
    throw std::invalid_argument("assemble_fractional_stiffness: mesh has no band triangulation");
  if (!(s > 0.0 && s < 1.0)) throw std::invalid_argument("s must lie in (0,1)");

  OperatorSet ops;
  ops.s = s;
  ops.c_ds = normalization_constant(2, s);
  ops.quad = opts.quad;
  ops.mesh_fingerprint = mesh_fingerprint(mesh);

  Eigen::MatrixXd inter =
      assemble_interaction_matrix(mesh, dm.node_to_dof, dm.n_dofs, s, opts.quad, opts.n_threads);

  const double R = mesh.band_radius;
  SpMat tail = assemble_weighted_reaction(
      mesh, dm, [R, s](const Vec2& x) { return tail_weight(std::min(x.norm(), R * (1 - 1e-14)), R, s); },
      /*require_nonnegative=*/true);

  ops.A = 0.5 * ops.c_ds * (inter + 2.0 * Eigen::MatrixXd(tail));

  Eigen::LLT<Eigen::MatrixXd> llt(ops.A);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("assembled stiffness is not positive definite");

  ops.M = assemble_mass(mesh, dm);
  return ops;
}

}  // namespace fracopt
