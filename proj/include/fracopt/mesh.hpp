#pragma once

#include "fracopt/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <utility>
#include <vector>

namespace fracopt {

/// Conforming triangulation of a polygonal approximation of the domain, plus an
/// auxiliary band of triangles covering B(0,R) \ Omega for the complement term.
/// Immutable after construction; refine() returns a new mesh.
struct TriMesh {
  std::vector<Vec2> vertices;
  std::vector<std::array<int, 3>> triangles;       // Omega cells, counterclockwise
  std::vector<std::array<int, 3>> band_triangles;  // counterclockwise
  std::vector<bool> boundary_vertex_flags;         // vertex lies on the Omega boundary circle
  double band_radius = 0.0;                        // outer radius R of the band, 0 if no band
  double h = 0.0;                                  // max Omega cell diameter
  int level = 0;

  TriCoords coords(const std::array<int, 3>& t) const {
    return {vertices[t[0]], vertices[t[1]], vertices[t[2]]};
  }
  int n_vertices() const { return static_cast<int>(vertices.size()); }
  int n_cells() const { return static_cast<int>(triangles.size()); }
};

struct MeshLimits {
  int max_dofs = 5000;
  int max_omega_triangles = 20000;
};

struct DofMap {
  std::vector<int> interior_nodes;  // vertex index per dof, ascending
  std::vector<int> node_to_dof;     // -1 for non-dof vertices
  int n_dofs = 0;
};

namespace detail {

inline double compute_h(const TriMesh& m) {
  double h = 0.0;
  for (const auto& t : m.triangles) h = std::max(h, diameter(m.coords(t)));
  return h;
}

inline void check_limits(const TriMesh& m, const MeshLimits& limits) {
  if (m.n_cells() > limits.max_omega_triangles)
    throw std::invalid_argument("mesh exceeds the configured triangle cap");
  std::vector<bool> in_omega(m.vertices.size(), false);
  for (const auto& t : m.triangles)
    for (int v : t) in_omega[v] = true;
  int dofs = 0;
  for (size_t i = 0; i < m.vertices.size(); ++i)
    if (in_omega[i] && !m.boundary_vertex_flags[i]) ++dofs;
  if (dofs > limits.max_dofs) throw std::invalid_argument("mesh exceeds the configured DOF cap");
}

}  // namespace detail

/// Uniform quadrisection. Midpoints of Omega boundary edges are projected onto
/// the unit circle, midpoints of outer band rim edges onto the circle of radius R.
inline TriMesh refine(const TriMesh& mesh, const MeshLimits& limits = {}) {
  TriMesh out;
  out.vertices = mesh.vertices;
  out.boundary_vertex_flags = mesh.boundary_vertex_flags;
  out.band_radius = mesh.band_radius;
  out.level = mesh.level + 1;

  // edge -> (omega incidence, band incidence)
  std::map<std::pair<int, int>, std::pair<int, int>> edge_count;
  auto edge_key = [](int a, int b) { return std::make_pair(std::min(a, b), std::max(a, b)); };
  for (const auto& t : mesh.triangles)
    for (int e = 0; e < 3; ++e) edge_count[edge_key(t[e], t[(e + 1) % 3])].first++;
  for (const auto& t : mesh.band_triangles)
    for (int e = 0; e < 3; ++e) edge_count[edge_key(t[e], t[(e + 1) % 3])].second++;

  const double R = mesh.band_radius;
  std::map<std::pair<int, int>, int> midpoint;
  for (const auto& [key, count] : edge_count) {
    const auto [a, b] = key;
    Vec2 m = 0.5 * (mesh.vertices[a] + mesh.vertices[b]);
    bool flag = false;
    const bool ends_flagged = mesh.boundary_vertex_flags[a] && mesh.boundary_vertex_flags[b];
    if (count.first == 1 && ends_flagged) {
      m /= m.norm();  // Omega boundary edge, snap radially to the unit circle
      flag = true;
    } else if (count.first == 0 && count.second == 1 && R > 0.0 &&
               std::abs(mesh.vertices[a].norm() - R) < 1e-9 * R &&
               std::abs(mesh.vertices[b].norm() - R) < 1e-9 * R) {
      m *= R / m.norm();  // outer rim edge
    }
    midpoint[key] = out.n_vertices();
    out.vertices.push_back(m);
    out.boundary_vertex_flags.push_back(flag);
  }

  auto emit = [&](const std::array<int, 3>& t, std::vector<std::array<int, 3>>& dst) {
    const int mab = midpoint[edge_key(t[0], t[1])];
    const int mbc = midpoint[edge_key(t[1], t[2])];
    const int mca = midpoint[edge_key(t[2], t[0])];
    dst.push_back({t[0], mab, mca});
    dst.push_back({mab, t[1], mbc});
    dst.push_back({mca, mbc, t[2]});
    dst.push_back({mab, mbc, mca});
  };
  for (const auto& t : mesh.triangles) emit(t, out.triangles);
  for (const auto& t : mesh.band_triangles) emit(t, out.band_triangles);

  out.h = detail::compute_h(out);
  detail::check_limits(out, limits);
  return out;
}

/// Inscribed-polygon triangulation of the unit disc, refined `level` times,
/// with a conforming band covering B(0,R) \ Omega. The level-0 mesh is a
/// 6-triangle fan about the origin.
inline TriMesh make_disc_mesh(int level, double band_radius, const MeshLimits& limits = {}) {
  if (level < 0) throw std::invalid_argument("make_disc_mesh: level must be >= 0");
  if (!(band_radius > 1.0)) throw std::invalid_argument("make_disc_mesh: band radius must exceed 1");

  TriMesh m;
  m.band_radius = band_radius;
  m.vertices.push_back({0.0, 0.0});
  m.boundary_vertex_flags.push_back(false);
  for (int ring = 0; ring < 2; ++ring) {
    const double r = ring == 0 ? 1.0 : band_radius;
    for (int k = 0; k < 6; ++k) {
      const double th = M_PI / 3.0 * k;
      m.vertices.push_back({r * std::cos(th), r * std::sin(th)});
      m.boundary_vertex_flags.push_back(ring == 0);
    }
  }
  for (int k = 0; k < 6; ++k) {
    const int a = 1 + k, b = 1 + (k + 1) % 6;        // inner ring
    const int d = 7 + k, c = 7 + (k + 1) % 6;        // outer ring
    m.triangles.push_back({0, a, b});
    m.band_triangles.push_back({a, d, c});
    m.band_triangles.push_back({a, c, b});
  }
  m.h = detail::compute_h(m);
  detail::check_limits(m, limits);

  for (int l = 0; l < level; ++l) m = refine(m, limits);
  return m;
}

/// Interior-node numbering; discrete functions vanish on the boundary and are
/// extended by zero outside Omega, so boundary and band vertices carry no dof.
inline DofMap build_dofmap(const TriMesh& mesh) {
  DofMap dm;
  dm.node_to_dof.assign(mesh.vertices.size(), -1);
  std::vector<bool> in_omega(mesh.vertices.size(), false);
  for (const auto& t : mesh.triangles)
    for (int v : t) in_omega[v] = true;
  for (int v = 0; v < mesh.n_vertices(); ++v) {
    if (in_omega[v] && !mesh.boundary_vertex_flags[v]) {
      dm.node_to_dof[v] = static_cast<int>(dm.interior_nodes.size());
      dm.interior_nodes.push_back(v);
    }
  }
  dm.n_dofs = static_cast<int>(dm.interior_nodes.size());
  return dm;
}

// --- mesh audits ---------------------------------------------------------

/// Every edge of the meshed region belongs to one or two triangles, and edges
/// interior to the region to exactly two.
inline bool audit_conforming(const TriMesh& mesh) {
  std::map<std::pair<int, int>, int> count;
  auto edge_key = [](int a, int b) { return std::make_pair(std::min(a, b), std::max(a, b)); };
  auto scan = [&](const std::vector<std::array<int, 3>>& tris) {
    for (const auto& t : tris)
      for (int e = 0; e < 3; ++e) count[edge_key(t[e], t[(e + 1) % 3])]++;
  };
  scan(mesh.triangles);
  scan(mesh.band_triangles);
  for (const auto& [key, c] : count)
    if (c != 1 && c != 2) return false;
  return true;
}

inline double min_signed_area(const TriMesh& mesh) {
  double a = std::numeric_limits<double>::infinity();
  for (const auto& t : mesh.triangles) a = std::min(a, signed_area(mesh.coords(t)));
  for (const auto& t : mesh.band_triangles) a = std::min(a, signed_area(mesh.coords(t)));
  return a;
}

inline double max_boundary_snap_defect(const TriMesh& mesh) {
  double d = 0.0;
  for (int v = 0; v < mesh.n_vertices(); ++v)
    if (mesh.boundary_vertex_flags[v]) d = std::max(d, std::abs(mesh.vertices[v].norm() - 1.0));
  return d;
}

inline double omega_area(const TriMesh& mesh) {
  double a = 0.0;
  for (const auto& t : mesh.triangles) a += signed_area(mesh.coords(t));
  return a;
}

/// max h_T / min h_T over Omega cells.
inline double shape_ratio(const TriMesh& mesh) {
  double hmin = std::numeric_limits<double>::infinity(), hmax = 0.0;
  for (const auto& t : mesh.triangles) {
    const double d = diameter(mesh.coords(t));
    hmin = std::min(hmin, d);
    hmax = std::max(hmax, d);
  }
  return hmax / hmin;
}

}  // namespace fracopt
