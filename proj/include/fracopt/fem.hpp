#pragma once

#include "fracopt/mesh.hpp"
#include "fracopt/quadrature.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <functional>
#include <stdexcept>
#include <vector>

namespace fracopt {

using Vector = Eigen::VectorXd;
using SpMat = Eigen::SparseMatrix<double>;

/// Evaluates a dof vector as a P1 function; boundary and band vertices read 0.
class P1Evaluator {
 public:
  P1Evaluator(const TriMesh& mesh, const DofMap& dm, const Vector& u)
      : mesh_(mesh), dm_(dm), u_(u) {}

  double on_cell(int cell, double r1, double r2) const {
    const auto& t = mesh_.triangles[cell];
    const double b0 = 1.0 - r1, b1 = r1 - r2, b2 = r2;
    return b0 * nodal(t[0]) + b1 * nodal(t[1]) + b2 * nodal(t[2]);
  }

  double nodal(int vertex) const {
    const int d = dm_.node_to_dof[vertex];
    return d < 0 ? 0.0 : u_[d];
  }

 private:
  const TriMesh& mesh_;
  const DofMap& dm_;
  const Vector& u_;
};

/// P1 mass matrix on the interior-node space; exact per-element formula
/// |T|/12 * [[2,1,1],[1,2,1],[1,1,2]].
inline SpMat assemble_mass(const TriMesh& mesh, const DofMap& dm) {
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(mesh.triangles.size() * 9);
  for (const auto& t : mesh.triangles) {
    const double a = std::abs(signed_area(mesh.coords(t)));
    for (int i = 0; i < 3; ++i) {
      const int di = dm.node_to_dof[t[i]];
      if (di < 0) continue;
      for (int j = 0; j < 3; ++j) {
        const int dj = dm.node_to_dof[t[j]];
        if (dj < 0) continue;
        trip.emplace_back(di, dj, a / 12.0 * (i == j ? 2.0 : 1.0));
      }
    }
  }
  SpMat M(dm.n_dofs, dm.n_dofs);
  M.setFromTriplets(trip.begin(), trip.end());
  return M;
}

/// Weighted reaction matrix  int c(x) phi_i phi_j dx  by degree-4 quadrature.
/// The coefficient must be nonnegative at every quadrature point; a negative
/// value signals a broken nonlinearity evaluation upstream.
inline SpMat assemble_weighted_reaction(const TriMesh& mesh, const DofMap& dm,
                                        const std::function<double(const Vec2&, int, double, double)>& c,
                                        bool require_nonnegative = true) {
  const auto& rule = triangle_rule_degree(4);
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(mesh.triangles.size() * 9);
  for (int cell = 0; cell < mesh.n_cells(); ++cell) {
    const auto& t = mesh.triangles[cell];
    const auto co = mesh.coords(t);
    const double jac = 2.0 * std::abs(signed_area(co));
    double loc[3][3] = {};
    for (const auto& q : rule) {
      const Vec2 x = map_reference(co, q.r1, q.r2);
      const double cv = c(x, cell, q.r1, q.r2);
      if (require_nonnegative && cv < 0.0)
        throw std::runtime_error("assemble_weighted_reaction: negative coefficient value");
      const double b[3] = {1.0 - q.r1, q.r1 - q.r2, q.r2};
      const double wc = jac * q.w * cv;
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j <= i; ++j) loc[i][j] += wc * b[i] * b[j];
    }
    for (int i = 0; i < 3; ++i) {
      const int di = dm.node_to_dof[t[i]];
      if (di < 0) continue;
      for (int j = 0; j < 3; ++j) {
        const int dj = dm.node_to_dof[t[j]];
        if (dj < 0) continue;
        trip.emplace_back(di, dj, loc[std::max(i, j)][std::min(i, j)]);
      }
    }
  }
  SpMat R(dm.n_dofs, dm.n_dofs);
  R.setFromTriplets(trip.begin(), trip.end());
  return R;
}

inline SpMat assemble_weighted_reaction(const TriMesh& mesh, const DofMap& dm,
                                        const std::function<double(const Vec2&)>& c,
                                        bool require_nonnegative = true) {
  return assemble_weighted_reaction(
      mesh, dm, [&c](const Vec2& x, int, double, double) { return c(x); }, require_nonnegative);
}

inline bool cell_touches_boundary(const TriMesh& mesh, int cell) {
  for (int v : mesh.triangles[cell])
    if (mesh.boundary_vertex_flags[v]) return true;
  return false;
}

/// Load vector b_i = int f phi_i dx by degree-4 quadrature; cells touching the
/// boundary are quadrisected `boundary_subdiv` times first to resolve kinks.
inline Vector assemble_load(const TriMesh& mesh, const DofMap& dm,
                            const std::function<double(const Vec2&)>& f, int order = 3,
                            int boundary_subdiv = 0) {
  Vector b = Vector::Zero(dm.n_dofs);
  const auto& rule = triangle_rule(order);
  // integrate f * (each hat) on one triangle, optionally subdivided
  std::function<void(const TriCoords&, const std::array<double, 3>&,
                     const std::array<double, 3>&, const std::array<double, 3>&, int, double*)>
      accumulate = [&](const TriCoords& co, const std::array<double, 3>& h0,
                       const std::array<double, 3>& h1, const std::array<double, 3>& h2, int lev,
                       double* out) {
        if (lev > 0) {
          const Vec2 m01 = 0.5 * (co[0] + co[1]), m12 = 0.5 * (co[1] + co[2]),
                     m20 = 0.5 * (co[2] + co[0]);
          auto mid = [](const std::array<double, 3>& a, const std::array<double, 3>& b) {
            return std::array<double, 3>{0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1]),
                                         0.5 * (a[2] + b[2])};
          };
          const auto h01 = mid(h0, h1), h12 = mid(h1, h2), h20 = mid(h2, h0);
          accumulate({co[0], m01, m20}, h0, h01, h20, lev - 1, out);
          accumulate({m01, co[1], m12}, h01, h1, h12, lev - 1, out);
          accumulate({m20, m12, co[2]}, h20, h12, h2, lev - 1, out);
          accumulate({m01, m12, m20}, h01, h12, h20, lev - 1, out);
          return;
        }
        const double jac = 2.0 * std::abs(signed_area(co));
        for (const auto& q : rule) {
          const Vec2 x = map_reference(co, q.r1, q.r2);
          const double fb = jac * q.w * f(x);
          const double b0 = 1.0 - q.r1, b1 = q.r1 - q.r2, b2 = q.r2;
          out[0] += fb * (b0 * h0[0] + b1 * h1[0] + b2 * h2[0]);
          out[1] += fb * (b0 * h0[1] + b1 * h1[1] + b2 * h2[1]);
          out[2] += fb * (b0 * h0[2] + b1 * h1[2] + b2 * h2[2]);
        }
      };

  for (int cell = 0; cell < mesh.n_cells(); ++cell) {
    const auto& t = mesh.triangles[cell];
    double out[3] = {0.0, 0.0, 0.0};
    const int lev = cell_touches_boundary(mesh, cell) ? boundary_subdiv : 0;
    accumulate(mesh.coords(t), {1, 0, 0}, {0, 1, 0}, {0, 0, 1}, lev, out);
    for (int i = 0; i < 3; ++i) {
      const int di = dm.node_to_dof[t[i]];
      if (di >= 0) b[di] += out[i];
    }
  }
  return b;
}

/// Load of a piecewise constant control, exact:  b_i = sum_T q_T |T|/3.
inline Vector assemble_load_p0(const TriMesh& mesh, const DofMap& dm, const Vector& q_cells) {
  Vector b = Vector::Zero(dm.n_dofs);
  for (int cell = 0; cell < mesh.n_cells(); ++cell) {
    const auto& t = mesh.triangles[cell];
    const double w = std::abs(signed_area(mesh.coords(t))) / 3.0 * q_cells[cell];
    for (int i = 0; i < 3; ++i) {
      const int di = dm.node_to_dof[t[i]];
      if (di >= 0) b[di] += w;
    }
  }
  return b;
}

/// Exact cell averages of a P1 dof vector: mean of the three vertex values.
inline Vector cell_averages(const TriMesh& mesh, const DofMap& dm, const Vector& u) {
  Vector avg(mesh.n_cells());
  for (int cell = 0; cell < mesh.n_cells(); ++cell) {
    const auto& t = mesh.triangles[cell];
    double s = 0.0;
    for (int i = 0; i < 3; ++i) {
      const int di = dm.node_to_dof[t[i]];
      if (di >= 0) s += u[di];
    }
    avg[cell] = s / 3.0;
  }
  return avg;
}

/// int phi_i dx: one third of the supporting patch area, exact.
inline Vector integral_phi(const TriMesh& mesh, const DofMap& dm) {
  Vector v = Vector::Zero(dm.n_dofs);
  for (const auto& t : mesh.triangles) {
    const double a = std::abs(signed_area(mesh.coords(t))) / 3.0;
    for (int i = 0; i < 3; ++i) {
      const int di = dm.node_to_dof[t[i]];
      if (di >= 0) v[di] += a;
    }
  }
  return v;
}

inline Vector cell_areas(const TriMesh& mesh) {
  Vector a(mesh.n_cells());
  for (int cell = 0; cell < mesh.n_cells(); ++cell)
    a[cell] = std::abs(signed_area(mesh.coords(mesh.triangles[cell])));
  return a;
}

}  // namespace fracopt
