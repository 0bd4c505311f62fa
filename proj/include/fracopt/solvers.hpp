#pragma once

#include "fracopt/assembly.hpp"
#include "fracopt/fem.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>

namespace fracopt {

/// Mesh plus dof numbering for one refinement level.
struct Discretization {
  TriMesh mesh;
  DofMap dofmap;
};

inline Discretization make_discretization(TriMesh mesh) {
  DofMap dm = build_dofmap(mesh);
  return {std::move(mesh), std::move(dm)};
}

/// Carathéodory nonlinearity a(x,u) with its first two u-derivatives;
/// da/du must be nonnegative (monotone problem).
struct NonlinearitySpec {
  std::function<double(const Vec2&, double)> a;
  std::function<double(const Vec2&, double)> da_du;
  std::function<double(const Vec2&, double)> d2a_du2;

  static NonlinearitySpec zero() {
    return {[](const Vec2&, double) { return 0.0; }, [](const Vec2&, double) { return 0.0; },
            [](const Vec2&, double) { return 0.0; }};
  }
  static NonlinearitySpec cubic() {
    return {[](const Vec2&, double u) { return u * u * u; },
            [](const Vec2&, double u) { return 3.0 * u * u; },
            [](const Vec2&, double u) { return 6.0 * u; }};
  }
};

struct SolveReport {
  int iterations = 0;
  double final_residual = 0.0;
  bool converged = false;
  double max_abs_u = 0.0;  // monitors the uniform L-infinity boundedness hypothesis
};

struct SolveError : std::runtime_error {
  double last_residual;
  int iterations;
  SolveError(const std::string& what, double r, int it)
      : std::runtime_error(what), last_residual(r), iterations(it) {}
};

namespace detail {

/// int a(x, u_h(x)) phi_i dx by degree-4 quadrature; u_h interpolated P1.
inline Vector semilinear_term(const Discretization& d, const NonlinearitySpec& nl,
                              const Vector& u) {
  const P1Evaluator eval(d.mesh, d.dofmap, u);
  Vector out = Vector::Zero(d.dofmap.n_dofs);
  const auto& rule = triangle_rule_degree(4);
  for (int cell = 0; cell < d.mesh.n_cells(); ++cell) {
    const auto& t = d.mesh.triangles[cell];
    const auto co = d.mesh.coords(t);
    const double jac = 2.0 * std::abs(signed_area(co));
    double loc[3] = {};
    for (const auto& q : rule) {
      const Vec2 x = map_reference(co, q.r1, q.r2);
      const double av = jac * q.w * nl.a(x, eval.on_cell(cell, q.r1, q.r2));
      loc[0] += av * (1.0 - q.r1);
      loc[1] += av * (q.r1 - q.r2);
      loc[2] += av * q.r2;
    }
    for (int i = 0; i < 3; ++i) {
      const int di = d.dofmap.node_to_dof[t[i]];
      if (di >= 0) out[di] += loc[i];
    }
  }
  return out;
}

}  // namespace detail

/// The linearized operator A + int da/du(x,u_h) phi_i phi_j, factored once.
class LinearizedOperator {
 public:
  LinearizedOperator(const Discretization& d, const OperatorSet& ops, const NonlinearitySpec& nl,
                     const Vector& u) {
    const P1Evaluator eval(d.mesh, d.dofmap, u);
    const SpMat R = assemble_weighted_reaction(
        d.mesh, d.dofmap,
        [&](const Vec2& x, int cell, double r1, double r2) {
          return nl.da_du(x, eval.on_cell(cell, r1, r2));
        });
    K_ = ops.A + Eigen::MatrixXd(R);
    llt_.compute(K_);
    if (llt_.info() != Eigen::Success)
      throw std::runtime_error("linearized operator is not positive definite");
  }

  Vector solve(const Vector& b) const { return llt_.solve(b); }
  const Eigen::MatrixXd& matrix() const { return K_; }

 private:
  Eigen::MatrixXd K_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
};

/// Newton's method with exact Jacobian and Armijo backtracking for the
/// discrete semilinear state equation  A u + N(u) = rhs.
inline Vector solve_state(const Discretization& d, const OperatorSet& ops,
                          const NonlinearitySpec& nl, const Vector& rhs_load, double tol,
                          SolveReport* report = nullptr, int max_iter = 50) {
  Vector u = Vector::Zero(d.dofmap.n_dofs);
  SolveReport rep;
  auto residual = [&](const Vector& v) -> Vector {
    return ops.A * v + detail::semilinear_term(d, nl, v) - rhs_load;
  };
  Vector res = residual(u);
  double rnorm = res.norm();
  for (int it = 0; it < max_iter; ++it) {
    if (!std::isfinite(rnorm)) throw SolveError("state solve hit a non-finite residual", rnorm, it);
    if (rnorm <= tol) break;
    const LinearizedOperator lin(d, ops, nl, u);
    const Vector delta = lin.solve(-res);
    double alpha = 1.0;
    Vector u_trial, res_trial;
    double r_trial = 0.0;
    for (;;) {
      u_trial = u + alpha * delta;
      res_trial = residual(u_trial);
      r_trial = res_trial.norm();
      if (r_trial <= (1.0 - 1e-4 * alpha) * rnorm || alpha < 1e-4) break;
      alpha *= 0.5;
    }
    u = u_trial;
    res = res_trial;
    rnorm = r_trial;
    rep.iterations = it + 1;
  }
  rep.final_residual = rnorm;
  rep.converged = rnorm <= tol;
  rep.max_abs_u = u.size() ? u.cwiseAbs().maxCoeff() : 0.0;
  if (!rep.converged)
    throw SolveError("state Newton did not converge within " + std::to_string(max_iter) +
                         " iterations",
                     rnorm, rep.iterations);
  if (report) *report = rep;
  return u;
}

/// Adjoint solve: (A + R(da/du(.,u_h))) p = load(dL/du(.,u_h)). The right-hand
/// side integrand may carry a boundary kink, handled by cell subdivision.
inline Vector solve_adjoint(const Discretization& d, const OperatorSet& ops,
                            const NonlinearitySpec& nl, const Vector& u,
                            const std::function<double(const Vec2&, double)>& dL_du,
                            int boundary_subdiv = 2) {
  const LinearizedOperator lin(d, ops, nl, u);
  const P1Evaluator eval(d.mesh, d.dofmap, u);
  // evaluate dL/du(x, u_h(x)) cellwise so the interpolated state is available
  Vector b = Vector::Zero(d.dofmap.n_dofs);
  const auto& rule = triangle_rule_degree(4);
  for (int cell = 0; cell < d.mesh.n_cells(); ++cell) {
    const auto co = d.mesh.coords(d.mesh.triangles[cell]);
    const auto& t = d.mesh.triangles[cell];
    const int lev = cell_touches_boundary(d.mesh, cell) ? boundary_subdiv : 0;
    // P1 data of u on this cell for evaluation inside subdivided children
    const double uv[3] = {eval.nodal(t[0]), eval.nodal(t[1]), eval.nodal(t[2])};
    std::function<void(const TriCoords&, const std::array<Vec2, 3>&, int, double*)> rec =
        [&](const TriCoords& c, const std::array<Vec2, 3>& parent, int lv, double* out) {
          if (lv > 0) {
            const Vec2 m01 = 0.5 * (c[0] + c[1]), m12 = 0.5 * (c[1] + c[2]),
                       m20 = 0.5 * (c[2] + c[0]);
            rec({c[0], m01, m20}, parent, lv - 1, out);
            rec({m01, c[1], m12}, parent, lv - 1, out);
            rec({m20, m12, c[2]}, parent, lv - 1, out);
            rec({m01, m12, m20}, parent, lv - 1, out);
            return;
          }
          const double jac = 2.0 * std::abs(signed_area(c));
          for (const auto& q : rule) {
            const Vec2 x = map_reference(c, q.r1, q.r2);
            const auto bl = barycentric({parent[0], parent[1], parent[2]}, x);
            const double uval = bl[0] * uv[0] + bl[1] * uv[1] + bl[2] * uv[2];
            const double fv = jac * q.w * dL_du(x, uval);
            const auto bp = barycentric({parent[0], parent[1], parent[2]}, x);
            out[0] += fv * bp[0];
            out[1] += fv * bp[1];
            out[2] += fv * bp[2];
          }
        };
    double out[3] = {0.0, 0.0, 0.0};
    rec(co, {co[0], co[1], co[2]}, lev, out);
    for (int i = 0; i < 3; ++i) {
      const int di = d.dofmap.node_to_dof[t[i]];
      if (di >= 0) b[di] += out[i];
    }
  }
  return lin.solve(b);
}

/// phi = S'(q) w: same operator as the adjoint applied to a given load.
inline Vector solve_linearized(const Discretization& d, const OperatorSet& ops,
                               const NonlinearitySpec& nl, const Vector& u,
                               const Vector& w_load) {
  const LinearizedOperator lin(d, ops, nl, u);
  return lin.solve(w_load);
}

}  // namespace fracopt
