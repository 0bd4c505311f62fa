#pragma once

#include "fracopt/fem.hpp"
#include "fracopt/solvers.hpp"

#include <Eigen/Dense>
#include <Eigen/LU>

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

namespace fracopt {

/// Full problem data: fractional order, Tikhonov and sparsity weights, box
/// bounds with alpha < 0 < beta, nonlinearity, objective integrand and its
/// u-derivatives, and a manufactured forcing shift (zero for pure problems).
struct ProblemSpec {
  double s = 0.5;
  double lambda = 1.0;
  double mu = 0.25;
  double alpha = -1.0;
  double beta = 1.0;
  NonlinearitySpec nl = NonlinearitySpec::zero();
  std::function<double(const Vec2&, double)> L;
  std::function<double(const Vec2&, double)> dL_du;
  std::function<double(const Vec2&, double)> d2L_du2;
  std::function<double(const Vec2&)> forcing = [](const Vec2&) { return 0.0; };

  void validate() const {
    if (!(s > 0.0 && s < 1.0)) throw std::invalid_argument("ProblemSpec: s must lie in (0,1)");
    if (!(lambda > 0.0 && mu > 0.0))
      throw std::invalid_argument("ProblemSpec: lambda and mu must be positive");
    if (!(alpha < 0.0 && 0.0 < beta))
      throw std::invalid_argument("ProblemSpec: bounds must satisfy alpha < 0 < beta");
  }
};

enum class Scheme { fully_discrete, semidiscrete };

inline const char* scheme_name(Scheme s) {
  return s == Scheme::fully_discrete ? "fully_discrete" : "semidiscrete";
}

inline double proj_interval(double a, double b, double v) { return std::min(b, std::max(a, v)); }

/// eta(x) = Pi_[-1,1](-p(x)/mu), the unique subgradient of the L1 norm.
inline double eta_from_p_pointwise(double p, double mu) {
  return proj_interval(-1.0, 1.0, -p / mu);
}

/// q(x) = Pi_[alpha,beta](-(p - Pi_[-mu,mu](p))/lambda): soft-threshold then
/// clamp. Equals the coupled projection formulas with eta_from_p_pointwise;
/// in particular q = 0 exactly iff |p| <= mu (tie inclusive).
inline double q_from_p_pointwise(double p, const ProblemSpec& spec) {
  const double soft = p - proj_interval(-spec.mu, spec.mu, p);
  const double q = proj_interval(spec.alpha, spec.beta, -soft / spec.lambda);
  return q == 0.0 ? 0.0 : q;  // normalize -0
}

/// Cellwise projection update of the fully discrete scheme: exact cell
/// averages of the P1 adjoint, then the pointwise formulas per cell.
struct CellControl {
  Vector q;
  Vector eta;
};

inline CellControl q_update_fully_discrete(const Discretization& d, const Vector& p,
                                           const ProblemSpec& spec) {
  const Vector pavg = cell_averages(d.mesh, d.dofmap, p);
  CellControl out;
  out.q.resize(d.mesh.n_cells());
  out.eta.resize(d.mesh.n_cells());
  for (int c = 0; c < d.mesh.n_cells(); ++c) {
    out.q[c] = q_from_p_pointwise(pavg[c], spec);
    out.eta[c] = eta_from_p_pointwise(pavg[c], spec.mu);
  }
  return out;
}

/// Directional derivative of j(q) = ||q||_L1 at a P0 control in a P0 direction.
inline double directional_derivative_j(const Vector& q, const Vector& v, const Vector& areas) {
  double sum = 0.0;
  for (int c = 0; c < q.size(); ++c)
    sum += areas[c] * (q[c] != 0.0 ? (q[c] > 0.0 ? v[c] : -v[c]) : std::abs(v[c]));
  return sum;
}

/// Solution quadruple of one optimize run. For the semidiscrete scheme the
/// control is never materialized as a mesh field: q and eta stay empty and are
/// induced pointwise from p through the projection formulas.
struct ControlState {
  Scheme scheme = Scheme::fully_discrete;
  Vector q;    // P0 cells (fully discrete only)
  Vector eta;  // P0 cells (fully discrete only)
  Vector u;    // nodal
  Vector p;    // nodal
  double cost = 0.0;
  double residual_stationarity = 0.0;
};

namespace detail {

/// P0 -> dof load matrix, B_{iT} = |T|/3 for each dof vertex of T. Exact.
inline SpMat p0_load_matrix(const Discretization& d) {
  std::vector<Eigen::Triplet<double>> trip;
  for (int c = 0; c < d.mesh.n_cells(); ++c) {
    const auto& t = d.mesh.triangles[c];
    const double w = std::abs(signed_area(d.mesh.coords(t))) / 3.0;
    for (int i = 0; i < 3; ++i) {
      const int di = d.dofmap.node_to_dof[t[i]];
      if (di >= 0) trip.emplace_back(di, c, w);
    }
  }
  SpMat B(d.dofmap.n_dofs, d.mesh.n_cells());
  B.setFromTriplets(trip.begin(), trip.end());
  return B;
}

/// dof -> P0 exact cell-average matrix (1/3 per dof vertex).
inline SpMat cell_average_matrix(const Discretization& d) {
  std::vector<Eigen::Triplet<double>> trip;
  for (int c = 0; c < d.mesh.n_cells(); ++c) {
    const auto& t = d.mesh.triangles[c];
    for (int i = 0; i < 3; ++i) {
      const int di = d.dofmap.node_to_dof[t[i]];
      if (di >= 0) trip.emplace_back(c, di, 1.0 / 3.0);
    }
  }
  SpMat Avg(d.mesh.n_cells(), d.dofmap.n_dofs);
  Avg.setFromTriplets(trip.begin(), trip.end());
  return Avg;
}

/// Load of the implicitly defined semidiscrete control q(x) = Pi(p_h(x)).
inline Vector load_from_pointwise_control(const Discretization& d, const ProblemSpec& spec,
                                          const Vector& p, int order = 4) {
  const P1Evaluator pe(d.mesh, d.dofmap, p);
  Vector b = Vector::Zero(d.dofmap.n_dofs);
  const auto& rule = triangle_rule(order);
  for (int cell = 0; cell < d.mesh.n_cells(); ++cell) {
    const auto& t = d.mesh.triangles[cell];
    const double jac = 2.0 * std::abs(signed_area(d.mesh.coords(t)));
    double loc[3] = {};
    for (const auto& q : rule) {
      const double qv = q_from_p_pointwise(pe.on_cell(cell, q.r1, q.r2), spec);
      const double w = jac * q.w * qv;
      loc[0] += w * (1.0 - q.r1);
      loc[1] += w * (q.r1 - q.r2);
      loc[2] += w * q.r2;
    }
    for (int i = 0; i < 3; ++i) {
      const int di = d.dofmap.node_to_dof[t[i]];
      if (di >= 0) b[di] += loc[i];
    }
  }
  return b;
}

/// Quadrature L2 norm of q1(x) - q2(x) with both controls induced pointwise
/// from nodal adjoints (or one given as a P0 field when cells is non-null).
inline double pointwise_control_distance(const Discretization& d, const ProblemSpec& spec,
                                         const Vector& p1, const Vector& p2, int order = 4) {
  const P1Evaluator e1(d.mesh, d.dofmap, p1), e2(d.mesh, d.dofmap, p2);
  double sum = 0.0;
  const auto& rule = triangle_rule(order);
  for (int cell = 0; cell < d.mesh.n_cells(); ++cell) {
    const double jac = 2.0 * std::abs(signed_area(d.mesh.coords(d.mesh.triangles[cell])));
    for (const auto& q : rule) {
      const double a = q_from_p_pointwise(e1.on_cell(cell, q.r1, q.r2), spec);
      const double b = q_from_p_pointwise(e2.on_cell(cell, q.r1, q.r2), spec);
      sum += jac * q.w * (a - b) * (a - b);
    }
  }
  return std::sqrt(sum);
}

}  // namespace detail

/// Tracking-type objective integral by quadrature plus exact / quadrature
/// control norms: J = int L(x,u_h) + lambda/2 ||q||^2 + mu ||q||_L1.
inline double cost(const ProblemSpec& spec, const Discretization& d, const ControlState& state,
                   int boundary_subdiv = 2) {
  const P1Evaluator ue(d.mesh, d.dofmap, state.u);
  double jL = 0.0;
  const auto& rule = triangle_rule_degree(4);
  for (int cell = 0; cell < d.mesh.n_cells(); ++cell) {
    const auto& t = d.mesh.triangles[cell];
    const auto co = d.mesh.coords(t);
    const double uv[3] = {ue.nodal(t[0]), ue.nodal(t[1]), ue.nodal(t[2])};
    const int lev = cell_touches_boundary(d.mesh, cell) ? boundary_subdiv : 0;
    std::function<void(const TriCoords&, int)> rec = [&](const TriCoords& c, int lv) {
      if (lv > 0) {
        const Vec2 m01 = 0.5 * (c[0] + c[1]), m12 = 0.5 * (c[1] + c[2]), m20 = 0.5 * (c[2] + c[0]);
        rec({c[0], m01, m20}, lv - 1);
        rec({m01, c[1], m12}, lv - 1);
        rec({m20, m12, c[2]}, lv - 1);
        rec({m01, m12, m20}, lv - 1);
        return;
      }
      const double jac = 2.0 * std::abs(signed_area(c));
      for (const auto& q : rule) {
        const Vec2 x = map_reference(c, q.r1, q.r2);
        const auto bl = barycentric(co, x);
        const double u = bl[0] * uv[0] + bl[1] * uv[1] + bl[2] * uv[2];
        jL += jac * q.w * spec.L(x, u);
      }
    };
    rec(co, lev);
  }

  double l2 = 0.0, l1 = 0.0;
  if (state.scheme == Scheme::fully_discrete) {
    const Vector areas = cell_areas(d.mesh);
    for (int c = 0; c < state.q.size(); ++c) {
      l2 += areas[c] * state.q[c] * state.q[c];
      l1 += areas[c] * std::abs(state.q[c]);
    }
  } else {
    const P1Evaluator pe(d.mesh, d.dofmap, state.p);
    const auto& crule = triangle_rule(4);
    for (int cell = 0; cell < d.mesh.n_cells(); ++cell) {
      const double jac = 2.0 * std::abs(signed_area(d.mesh.coords(d.mesh.triangles[cell])));
      for (const auto& q : crule) {
        const double qv = q_from_p_pointwise(pe.on_cell(cell, q.r1, q.r2), spec);
        l2 += jac * q.w * qv * qv;
        l1 += jac * q.w * std::abs(qv);
      }
    }
  }
  return jL + 0.5 * spec.lambda * l2 + spec.mu * l1;
}

/// Projection-formula defect of a state: zero iff the discrete first-order
/// optimality structure holds exactly.
inline double stationarity_residual(const ControlState& state, const ProblemSpec& spec,
                                    const Discretization& d) {
  if (state.scheme == Scheme::fully_discrete) {
    const CellControl upd = q_update_fully_discrete(d, state.p, spec);
    const Vector areas = cell_areas(d.mesh);
    double sum = 0.0;
    for (int c = 0; c < state.q.size(); ++c) {
      const double r = state.q[c] - upd.q[c];
      sum += areas[c] * r * r;
    }
    return std::sqrt(sum);
  }
  // semidiscrete: the control IS the formula applied to the stored adjoint
  return detail::pointwise_control_distance(d, spec, state.p, state.p);
}

struct OcpOptions {
  double newton_tol = 1e-11;
  int max_outer = 100;
  int max_newton = 50;
  int boundary_subdiv = 2;
  bool use_ssn = true;
};

struct OcpReport {
  int outer_iterations = 0;
  int ssn_accepted = 0;
  int fallback_steps = 0;
  bool converged = false;
  double final_residual = 0.0;
  double state_residual = 0.0;
  double max_abs_u = 0.0;
  std::vector<double> residual_trace;
  std::vector<double> cost_trace;  // accepted iterates
};

struct OcpError : std::runtime_error {
  std::vector<double> residual_trace;
  OcpError(const std::string& what, std::vector<double> trace)
      : std::runtime_error(what), residual_trace(std::move(trace)) {}
};

/// Outer solve of the first-order optimality system by the reduced fixed point
/// q -> G(p(q)) (state solve, adjoint solve, projection update), accelerated
/// by a semismooth Newton step on the reduced residual and safeguarded by a
/// damped fixed-point fallback. Returns a state whose projection identities
/// hold exactly by construction.
inline ControlState solve_ocp(const ProblemSpec& spec, const Discretization& d,
                              const OperatorSet& ops, Scheme scheme, double tol,
                              const OcpOptions& opts = {}, OcpReport* report = nullptr) {
  spec.validate();
  const int m = d.mesh.n_cells();
  const Vector areas = cell_areas(d.mesh);
  const Vector f_load = assemble_load(d.mesh, d.dofmap, spec.forcing, 4, opts.boundary_subdiv);
  const SpMat B = detail::p0_load_matrix(d);
  const SpMat Avg = detail::cell_average_matrix(d);
  const int n = d.dofmap.n_dofs;

  OcpReport rep;

  // iterate data: control representation is q (fully discrete) or p (semidiscrete)
  Vector q = Vector::Zero(m);   // fully discrete control
  Vector pc = Vector::Zero(n);  // semidiscrete control carrier (previous adjoint)

  struct Sweep {
    Vector u, p;
    double residual = 0.0;
    SolveReport state_rep;
  };

  auto control_load = [&](const Vector& qv, const Vector& pv) {
    return scheme == Scheme::fully_discrete
               ? Vector(B * qv + f_load)
               : Vector(detail::load_from_pointwise_control(d, spec, pv) + f_load);
  };

  // one application of the fixed-point map: state + adjoint + residual of the
  // projection identity at the incoming control
  auto sweep = [&](const Vector& qv, const Vector& pv) {
    Sweep s;
    s.u = solve_state(d, ops, spec.nl, control_load(qv, pv), opts.newton_tol, &s.state_rep,
                      opts.max_newton);
    s.p = solve_adjoint(d, ops, spec.nl, s.u, spec.dL_du, opts.boundary_subdiv);
    if (scheme == Scheme::fully_discrete) {
      const CellControl upd = q_update_fully_discrete(d, s.p, spec);
      double sum = 0.0;
      for (int c = 0; c < m; ++c) {
        const double r = qv[c] - upd.q[c];
        sum += areas[c] * r * r;
      }
      s.residual = std::sqrt(sum);
    } else {
      s.residual = detail::pointwise_control_distance(d, spec, pv, s.p);
    }
    return s;
  };

  // cost of an iterate: its own control (q or the carrier adjoint) with the
  // state that control produced
  auto iterate_cost = [&](const Vector& qv, const Vector& pv, const Sweep& s) {
    ControlState tmp;
    tmp.scheme = scheme;
    tmp.u = s.u;
    if (scheme == Scheme::fully_discrete)
      tmp.q = qv;
    else
      tmp.p = pv;
    return cost(spec, d, tmp, opts.boundary_subdiv);
  };

  Sweep cur = sweep(q, pc);
  double cur_cost = iterate_cost(q, pc, cur);
  rep.residual_trace.push_back(cur.residual);
  rep.cost_trace.push_back(cur_cost);

  for (int outer = 0; outer < opts.max_outer; ++outer) {
    rep.outer_iterations = outer;
    if (cur.residual <= tol) {
      rep.converged = true;
      break;
    }

    // candidate controls, tried in order
    std::vector<std::pair<Vector, Vector>> candidates;

    if (opts.use_ssn) {
      // generalized derivative pieces at the current iterate
      const P1Evaluator ue(d.mesh, d.dofmap, cur.u), pe(d.mesh, d.dofmap, cur.p);
      const LinearizedOperator lin(d, ops, spec.nl, cur.u);
      // sensitivity of the adjoint load: C = M_{L_uu} - M_{a_uu p}
      const SpMat Csens =
          assemble_weighted_reaction(
              d.mesh, d.dofmap,
              [&](const Vec2& x, int cell, double r1, double r2) {
                const double uv = ue.on_cell(cell, r1, r2);
                return spec.d2L_du2(x, uv) - spec.nl.d2a_du2(x, uv) * pe.on_cell(cell, r1, r2);
              },
              /*require_nonnegative=*/false);

      Eigen::MatrixXd J(2 * n, 2 * n);
      J.topLeftCorner(n, n) = lin.matrix();
      J.bottomRightCorner(n, n) = lin.matrix();
      J.bottomLeftCorner(n, n) = -Eigen::MatrixXd(Csens);
      Eigen::VectorXd rhs = Eigen::VectorXd::Zero(2 * n);

      if (scheme == Scheme::fully_discrete) {
        const Vector pavg = Avg * cur.p;
        const CellControl upd = q_update_fully_discrete(d, cur.p, spec);
        Vector dgain = Vector::Zero(m);  // slope of the projection per cell
        for (int c = 0; c < m; ++c) {
          const bool active = std::abs(pavg[c]) > spec.mu && upd.q[c] > spec.alpha &&
                              upd.q[c] < spec.beta && upd.q[c] != 0.0;
          dgain[c] = active ? -1.0 / spec.lambda : 0.0;
        }
        const Vector r = q - upd.q;
        J.topRightCorner(n, n) = -Eigen::MatrixXd(B * dgain.asDiagonal() * Avg);
        rhs.head(n) = -(B * r);
        const Eigen::VectorXd sol = J.partialPivLu().solve(rhs);
        const Vector dq = -r + dgain.asDiagonal() * (Avg * sol.tail(n));
        candidates.emplace_back(q + dq, pc);
      } else {
        // active-branch indicator mass at quadrature points
        const SpMat Mact = assemble_weighted_reaction(
            d.mesh, d.dofmap,
            [&](const Vec2& x, int cell, double r1, double r2) {
              const double pv = pe.on_cell(cell, r1, r2);
              const double qv = q_from_p_pointwise(pv, spec);
              const bool active =
                  std::abs(pv) > spec.mu && qv > spec.alpha && qv < spec.beta && qv != 0.0;
              return active ? 1.0 : 0.0;
            },
            false);
        J.topRightCorner(n, n) = Eigen::MatrixXd(Mact) / spec.lambda;
        const Vector rp = pc - cur.p;  // p-residual of the fixed point
        rhs.tail(n) = -(lin.matrix() * rp);
        const Eigen::VectorXd sol = J.partialPivLu().solve(rhs);
        candidates.emplace_back(q, pc + sol.tail(n));
      }
    }

    // damped fixed-point fallback
    for (double theta : {1.0, 0.5, 0.25, 0.125, 0.0625, 0.03125, 0.015625}) {
      if (scheme == Scheme::fully_discrete) {
        const CellControl upd = q_update_fully_discrete(d, cur.p, spec);
        candidates.emplace_back(q + theta * (upd.q - q), pc);
      } else {
        candidates.emplace_back(q, pc + theta * (cur.p - pc));
      }
    }

    bool accepted = false;
    for (size_t ci = 0; ci < candidates.size(); ++ci) {
      const Sweep trial = sweep(candidates[ci].first, candidates[ci].second);
      Vector tq = candidates[ci].first;
      Vector tpc = candidates[ci].second;
      const double tcost = iterate_cost(tq, tpc, trial);
      const bool res_ok = trial.residual <= (1.0 - 1e-4) * cur.residual;
      const bool cost_ok = tcost <= cur_cost + 1e-12 * (1.0 + std::abs(cur_cost));
      if (res_ok && cost_ok) {
        q = std::move(tq);
        pc = std::move(tpc);
        cur = trial;
        cur_cost = tcost;
        rep.residual_trace.push_back(cur.residual);
        rep.cost_trace.push_back(cur_cost);
        if (opts.use_ssn && ci == 0)
          ++rep.ssn_accepted;
        else
          ++rep.fallback_steps;
        accepted = true;
        break;
      }
    }
    if (!accepted)
      throw OcpError("optimization stalled: no candidate step reduces the residual",
                     rep.residual_trace);
  }

  if (!rep.converged)
    throw OcpError("optimization exceeded the outer iteration limit", rep.residual_trace);

  // finalize with the control induced by the converged adjoint, so the
  // projection identities of the returned state hold exactly by construction
  ControlState st;
  st.scheme = scheme;
  st.u = cur.u;
  st.p = cur.p;
  if (scheme == Scheme::fully_discrete) {
    const CellControl upd = q_update_fully_discrete(d, cur.p, spec);
    st.q = upd.q;
    st.eta = upd.eta;
  }
  st.cost = cost(spec, d, st, opts.boundary_subdiv);
  st.residual_stationarity = stationarity_residual(st, spec, d);
  rep.final_residual = cur.residual;
  rep.state_residual = cur.state_rep.final_residual;
  rep.max_abs_u = cur.state_rep.max_abs_u;
  if (report) *report = rep;
  return st;
}

/// F'(q) w = int (p + lambda q) w dx for a P0 direction; exact quadrature.
inline double reduced_gradient_dot(const ProblemSpec& spec, const Discretization& d,
                                   const Vector& p, const Vector& q, const Vector& w) {
  const Vector pavg = cell_averages(d.mesh, d.dofmap, p);
  const Vector areas = cell_areas(d.mesh);
  double sum = 0.0;
  for (int c = 0; c < w.size(); ++c) sum += areas[c] * w[c] * (pavg[c] + spec.lambda * q[c]);
  return sum;
}

/// Smooth part F(q) = int L(x, S_h q) + lambda/2 ||q||^2 of the reduced cost,
/// via a fresh state solve (finite-difference reference for F').
inline double reduced_smooth_cost(const ProblemSpec& spec, const Discretization& d,
                                  const OperatorSet& ops, const Vector& q,
                                  double newton_tol = 1e-12, int boundary_subdiv = 2) {
  const Vector f_load = assemble_load(d.mesh, d.dofmap, spec.forcing, 4, boundary_subdiv);
  const SpMat B = detail::p0_load_matrix(d);
  const Vector u = solve_state(d, ops, spec.nl, Vector(B * q + f_load), newton_tol);
  ControlState st;
  st.scheme = Scheme::fully_discrete;
  st.q = q;
  st.u = u;
  const double with_controls = cost(spec, d, st, boundary_subdiv);
  const Vector areas = cell_areas(d.mesh);
  double l1 = 0.0;
  for (int c = 0; c < q.size(); ++c) l1 += areas[c] * std::abs(q[c]);
  return with_controls - spec.mu * l1;
}

/// Second-derivative quadratic form F''(q)(w,w) with phi_w from the linearized
/// state equation:
///   int ( d2L/du2 phi^2 + lambda w^2 - p d2a/du2 phi^2 ) dx.
inline double curvature_form(const ProblemSpec& spec, const Discretization& d,
                             const OperatorSet& ops, const ControlState& state, const Vector& w) {
  const SpMat B = detail::p0_load_matrix(d);
  const Vector phi = solve_linearized(d, ops, spec.nl, state.u, Vector(B * w));
  const P1Evaluator ue(d.mesh, d.dofmap, state.u), pe(d.mesh, d.dofmap, state.p),
      fe(d.mesh, d.dofmap, phi);
  double integral = 0.0;
  const auto& rule = triangle_rule_degree(4);
  for (int cell = 0; cell < d.mesh.n_cells(); ++cell) {
    const double jac = 2.0 * std::abs(signed_area(d.mesh.coords(d.mesh.triangles[cell])));
    for (const auto& qp : rule) {
      const Vec2 x = map_reference(d.mesh.coords(d.mesh.triangles[cell]), qp.r1, qp.r2);
      const double uv = ue.on_cell(cell, qp.r1, qp.r2);
      const double pv = pe.on_cell(cell, qp.r1, qp.r2);
      const double fv = fe.on_cell(cell, qp.r1, qp.r2);
      integral += jac * qp.w * (spec.d2L_du2(x, uv) * fv * fv - pv * spec.nl.d2a_du2(x, uv) * fv * fv);
    }
  }
  const Vector areas = cell_areas(d.mesh);
  double wl2 = 0.0;
  for (int c = 0; c < w.size(); ++c) wl2 += areas[c] * w[c] * w[c];
  return integral + spec.lambda * wl2;
}

}  // namespace fracopt
