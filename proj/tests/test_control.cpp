#include "fracopt/control.hpp"
#include "fracopt/manufactured.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

using namespace fracopt;

namespace {

struct Setup {
  Discretization d;
  OperatorSet ops;
};

Setup make_setup(int level, double s) {
  Discretization d = make_discretization(make_disc_mesh(level, 2.0));
  OperatorSet ops = assemble_fractional_stiffness(d.mesh, d.dofmap, s);
  return {std::move(d), std::move(ops)};
}

double urand(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * ((rng() >> 11) * 0x1.0p-53);
}

}  // namespace

TEST_CASE("interval projection") {
  CHECK(proj_interval(-1, 1, 0.5) == 0.5);
  CHECK(proj_interval(-1, 1, 2.0) == 1.0);
  CHECK(proj_interval(-1, 1, -3.0) == -1.0);
}

TEST_CASE("pointwise subgradient formula") {
  CHECK(eta_from_p_pointwise(0.3, 0.6) == Catch::Approx(-0.5).epsilon(1e-15));
  CHECK(eta_from_p_pointwise(0.9, 0.6) == -1.0);
  CHECK(eta_from_p_pointwise(-0.9, 0.6) == 1.0);
}

TEST_CASE("pointwise control formula") {
  ProblemSpec spec;
  spec.lambda = 1.0;
  spec.mu = 0.6;
  spec.alpha = -1.0;
  spec.beta = 1.0;
  CHECK(q_from_p_pointwise(0.5, spec) == 0.0);   // |p| <= mu
  CHECK(q_from_p_pointwise(0.6, spec) == 0.0);   // tie inclusive
  CHECK(q_from_p_pointwise(-0.6, spec) == 0.0);
  CHECK(q_from_p_pointwise(0.9, spec) == Catch::Approx(-0.3).epsilon(1e-14));
  CHECK(q_from_p_pointwise(2.0, spec) == -1.0);  // clamped at alpha
}

TEST_CASE("soft-threshold composite equals the coupled projection formulas") {
  std::mt19937_64 rng(42);
  ProblemSpec spec;
  spec.lambda = 0.7;
  spec.mu = 0.3;
  spec.alpha = -0.9;
  spec.beta = 1.4;
  for (int k = 0; k < 1000000; ++k) {
    const double p = urand(rng, -3.0, 3.0);
    const double eta = eta_from_p_pointwise(p, spec.mu);
    const double coupled = proj_interval(spec.alpha, spec.beta, -(p + spec.mu * eta) / spec.lambda);
    const double composite = q_from_p_pointwise(p, spec);
    if (std::abs(composite - coupled) > 1e-15) {
      INFO("p = " << p);
      REQUIRE(std::abs(composite - coupled) <= 1e-15);
    }
    // sparsity characterization, exact
    REQUIRE((composite == 0.0) == (std::abs(p) <= spec.mu));
  }
}

TEST_CASE("cellwise update of the fully discrete scheme") {
  const auto setup = make_setup(0, 0.5);  // 6-fan: one dof at the center
  ProblemSpec spec;
  spec.lambda = 1.0;
  spec.mu = 0.6;
  spec.alpha = -1.0;
  spec.beta = 1.0;

  // p constant per cell average: center value v gives average v/3 on each fan cell
  Vector p(1);

  p[0] = 1.8;  // cell averages 0.6: |avg| <= mu inclusive -> q = 0
  CellControl cc = q_update_fully_discrete(setup.d, p, spec);
  for (int c = 0; c < cc.q.size(); ++c) {
    CHECK(cc.q[c] == 0.0);
    CHECK(cc.eta[c] == Catch::Approx(-1.0).epsilon(1e-14));
  }

  p[0] = 2.7;  // averages 0.9 -> q = -0.3, eta = -1
  cc = q_update_fully_discrete(setup.d, p, spec);
  for (int c = 0; c < cc.q.size(); ++c) {
    CHECK(cc.q[c] == Catch::Approx(-0.3).epsilon(1e-13));
    CHECK(cc.eta[c] == -1.0);
  }

  p[0] = 0.9;  // averages 0.3 -> eta = -0.5, q = 0
  cc = q_update_fully_discrete(setup.d, p, spec);
  for (int c = 0; c < cc.q.size(); ++c) {
    CHECK(cc.eta[c] == Catch::Approx(-0.5).epsilon(1e-14));
    CHECK(cc.q[c] == 0.0);
  }
}

TEST_CASE("directional derivative of the L1 norm") {
  Vector areas(2);
  areas << 1.0, 1.0;

  Vector q(2), v(2);
  q << 1.0, 2.0;  // strictly positive
  v << 0.7, -0.2;
  CHECK(directional_derivative_j(q, v, areas) == Catch::Approx(0.5).epsilon(1e-14));  // int v

  q << 0.0, 0.0;
  CHECK(directional_derivative_j(q, v, areas) == Catch::Approx(0.9).epsilon(1e-14));  // ||v||_1

  q << 1.0, 0.0;
  v << 2.0, -3.0;
  CHECK(directional_derivative_j(q, v, areas) == Catch::Approx(5.0).epsilon(1e-14));
}

TEST_CASE("cost identities") {
  const double s = 0.5;
  const auto [spec, ex] = build_benchmark(s);

  SECTION("interpolated target makes the tracking term small and decreasing") {
    double prev = std::numeric_limits<double>::infinity();
    for (int level = 1; level <= 3; ++level) {
      const Discretization d = make_discretization(make_disc_mesh(level, 2.0));
      ControlState st;
      st.scheme = Scheme::fully_discrete;
      st.q = Vector::Zero(d.mesh.n_cells());
      st.u.resize(d.dofmap.n_dofs);
      for (int k = 0; k < d.dofmap.n_dofs; ++k)
        st.u[k] = ex.u_target(d.mesh.vertices[d.dofmap.interior_nodes[k]]);
      const double J = cost(spec, d, st);
      CHECK(J < prev);
      prev = J;
    }
    CHECK(prev < 0.2);
  }

  SECTION("control scaling: doubling q doubles L1 and quadruples the Tikhonov term") {
    const Discretization d = make_discretization(make_disc_mesh(2, 2.0));
    std::mt19937_64 rng(5);
    ControlState st;
    st.scheme = Scheme::fully_discrete;
    st.u = Vector::Zero(d.dofmap.n_dofs);
    st.q.resize(d.mesh.n_cells());
    for (int c = 0; c < st.q.size(); ++c) st.q[c] = urand(rng, -1.0, 1.0);

    const Vector areas = cell_areas(d.mesh);
    double l2 = 0.0, l1 = 0.0;
    for (int c = 0; c < st.q.size(); ++c) {
      l2 += areas[c] * st.q[c] * st.q[c];
      l1 += areas[c] * std::abs(st.q[c]);
    }
    const double j1 = cost(spec, d, st);
    ControlState st2 = st;
    st2.q *= 2.0;
    const double j2 = cost(spec, d, st2);
    CHECK(j2 - j1 ==
          Catch::Approx(3.0 * 0.5 * spec.lambda * l2 + spec.mu * l1).epsilon(1e-12));
  }
}

TEST_CASE("stationarity residual") {
  const auto setup = make_setup(2, 0.5);
  const auto [spec, ex] = build_benchmark(0.5);
  std::mt19937_64 rng(9);
  Vector p(setup.d.dofmap.n_dofs);
  for (int i = 0; i < p.size(); ++i) p[i] = urand(rng, -1.0, 1.0);

  ControlState st;
  st.scheme = Scheme::fully_discrete;
  st.p = p;
  const CellControl cc = q_update_fully_discrete(setup.d, p, spec);
  st.q = cc.q;
  st.eta = cc.eta;
  // one application of the update map from its own adjoint: residual is zero
  CHECK(stationarity_residual(st, spec, setup.d) == 0.0);

  // perturbing one cell changes the residual by delta * |T|^(1/2)
  const double delta = 1e-3;
  const int cell = 5;
  st.q[cell] += delta;
  const double area = cell_areas(setup.d.mesh)[cell];
  CHECK(stationarity_residual(st, spec, setup.d) ==
        Catch::Approx(delta * std::sqrt(area)).epsilon(1e-12));
}

TEST_CASE("large mu forces the zero control") {
  const double s = 0.8;
  auto [spec, ex] = build_benchmark(s);
  spec.mu = 10.0;  // |p| <= mu everywhere
  const auto setup = make_setup(2, s);
  for (Scheme scheme : {Scheme::fully_discrete, Scheme::semidiscrete}) {
    OcpReport rep;
    const ControlState st = solve_ocp(spec, setup.d, setup.ops, scheme, 1e-10, {}, &rep);
    CHECK(rep.converged);
    if (scheme == Scheme::fully_discrete) {
      for (int c = 0; c < st.q.size(); ++c) REQUIRE(st.q[c] == 0.0);
    } else {
      const P1Evaluator pe(setup.d.mesh, setup.d.dofmap, st.p);
      for (int c = 0; c < setup.d.mesh.n_cells(); ++c)
        REQUIRE(q_from_p_pointwise(pe.on_cell(c, 0.5, 0.25), spec) == 0.0);
    }
  }
}

TEST_CASE("manufactured optimization run satisfies the discrete optimality structure") {
  const double s = 0.8;
  const auto [spec, ex] = build_benchmark(s);
  const auto setup = make_setup(2, s);

  OcpReport rep;
  const ControlState st =
      solve_ocp(spec, setup.d, setup.ops, Scheme::fully_discrete, 1e-10, {}, &rep);
  CHECK(rep.converged);
  CHECK(st.residual_stationarity <= 1e-9);

  const Vector pavg = cell_averages(setup.d.mesh, setup.d.dofmap, st.p);
  int active_cells = 0;
  for (int c = 0; c < st.q.size(); ++c) {
    // box feasibility, exact
    REQUIRE(st.q[c] >= spec.alpha);
    REQUIRE(st.q[c] <= spec.beta);
    // sparsity identity, exact on every cell
    REQUIRE((st.q[c] == 0.0) == (std::abs(pavg[c]) <= spec.mu));
    // subgradient consistency
    REQUIRE(st.eta[c] >= -1.0);
    REQUIRE(st.eta[c] <= 1.0);
    if (st.q[c] > 0.0) REQUIRE(st.eta[c] == 1.0);
    if (st.q[c] < 0.0) REQUIRE(st.eta[c] == -1.0);
    if (st.q[c] != 0.0) ++active_cells;
  }
  CHECK(active_cells > 0);          // the control is genuinely active
  CHECK(active_cells < st.q.size());  // and genuinely sparse

  // cost is nonincreasing along accepted iterates
  for (size_t k = 0; k + 1 < rep.cost_trace.size(); ++k)
    CHECK(rep.cost_trace[k + 1] <= rep.cost_trace[k] + 1e-12 * (1.0 + std::abs(rep.cost_trace[k])));
}

TEST_CASE("semidiscrete and fully discrete controls converge to each other") {
  const double s = 0.8;
  const auto [spec, ex] = build_benchmark(s);
  double prev = std::numeric_limits<double>::infinity();
  for (int level = 1; level <= 3; ++level) {
    const auto setup = make_setup(level, s);
    const ControlState full =
        solve_ocp(spec, setup.d, setup.ops, Scheme::fully_discrete, 1e-10);
    const ControlState semi =
        solve_ocp(spec, setup.d, setup.ops, Scheme::semidiscrete, 1e-10);
    // quadrature distance between the P0 control and the induced pointwise one
    const P1Evaluator pe(setup.d.mesh, setup.d.dofmap, semi.p);
    double sum = 0.0;
    const auto& rule = triangle_rule(4);
    for (int cell = 0; cell < setup.d.mesh.n_cells(); ++cell) {
      const double jac =
          2.0 * std::abs(signed_area(setup.d.mesh.coords(setup.d.mesh.triangles[cell])));
      for (const auto& q : rule) {
        const double qs = q_from_p_pointwise(pe.on_cell(cell, q.r1, q.r2), spec);
        const double diff = qs - full.q[cell];
        sum += jac * q.w * diff * diff;
      }
    }
    const double dist = std::sqrt(sum);
    INFO("level " << level << " |q_semi - q_full| " << dist);
    CHECK(dist < prev);
    prev = dist;
  }
}

TEST_CASE("curvature form") {
  const double s = 0.5;
  const auto [spec, ex] = build_benchmark(s);
  const auto setup = make_setup(2, s);
  const ControlState st = solve_ocp(spec, setup.d, setup.ops, Scheme::fully_discrete, 1e-9);

  SECTION("zero direction gives zero") {
    CHECK(curvature_form(spec, setup.d, setup.ops, st, Vector::Zero(setup.d.mesh.n_cells())) ==
          0.0);
  }

  SECTION("linear state equation: F'' w^2 = ||phi||^2 + lambda ||w||^2") {
    ProblemSpec lin = spec;
    lin.nl = NonlinearitySpec::zero();  // d2a = 0
    ControlState base = st;
    std::mt19937_64 rng(17);
    Vector w(setup.d.mesh.n_cells());
    for (int c = 0; c < w.size(); ++c) w[c] = urand(rng, -1.0, 1.0);

    const double form = curvature_form(lin, setup.d, setup.ops, base, w);
    const SpMat B = detail::p0_load_matrix(setup.d);
    const Vector phi = solve_linearized(setup.d, setup.ops, lin.nl, base.u, Vector(B * w));
    const double phin2 = error_l2_p1(setup.d, phi, [](const Vec2&) { return 0.0; }, 0);
    const Vector areas = cell_areas(setup.d.mesh);
    double wl2 = 0.0;
    for (int c = 0; c < w.size(); ++c) wl2 += areas[c] * w[c] * w[c];
    CHECK(form == Catch::Approx(phin2 * phin2 + lin.lambda * wl2).epsilon(1e-9));
    CHECK(form > 0.0);
  }
}

TEST_CASE("derivative consistency by finite differences") {
  const double s = 0.5;
  const auto [spec, ex] = build_benchmark(s);
  const auto setup = make_setup(2, s);
  const SpMat B = detail::p0_load_matrix(setup.d);
  const Vector f_load = assemble_load(setup.d.mesh, setup.d.dofmap, spec.forcing, 4, 2);

  std::mt19937_64 rng(23);
  Vector q(setup.d.mesh.n_cells()), w(setup.d.mesh.n_cells());
  for (int c = 0; c < q.size(); ++c) q[c] = urand(rng, -0.4, 0.4);
  for (int c = 0; c < w.size(); ++c) w[c] = urand(rng, -1.0, 1.0);

  auto state_of = [&](const Vector& qv) {
    return solve_state(setup.d, setup.ops, spec.nl, Vector(B * qv + f_load), 1e-13);
  };
  auto fprime_w = [&](const Vector& qv) {
    const Vector u = state_of(qv);
    const Vector p = solve_adjoint(setup.d, setup.ops, spec.nl, u, spec.dL_du, 2);
    return reduced_gradient_dot(spec, setup.d, p, qv, w);
  };

  SECTION("F' matches forward differences of F with slope-1 decay") {
    const double f0 = reduced_smooth_cost(spec, setup.d, setup.ops, q);
    const double grad = fprime_w(q);
    std::vector<double> errs;
    for (double eps : {1e-3, 1e-4, 1e-5}) {
      const double fe = reduced_smooth_cost(spec, setup.d, setup.ops, Vector(q + eps * w));
      errs.push_back(std::abs((fe - f0) / eps - grad));
    }
    INFO("errors " << errs[0] << " " << errs[1] << " " << errs[2]);
    const double slope = 0.5 * std::log10(errs[0] / errs[2]);
    CHECK(slope > 0.7);
    CHECK(slope < 1.3);
  }

  SECTION("curvature form matches differences of F' with slope-1 decay") {
    const Vector u = state_of(q);
    const Vector p = solve_adjoint(setup.d, setup.ops, spec.nl, u, spec.dL_du, 2);
    ControlState st;
    st.scheme = Scheme::fully_discrete;
    st.q = q;
    st.u = u;
    st.p = p;
    const double form = curvature_form(spec, setup.d, setup.ops, st, w);
    const double g0 = fprime_w(q);
    std::vector<double> errs;
    for (double eps : {1e-3, 1e-4, 1e-5}) {
      const double ge = fprime_w(Vector(q + eps * w));
      errs.push_back(std::abs((ge - g0) / eps - form));
    }
    INFO("F'' = " << form << " errors " << errs[0] << " " << errs[1] << " " << errs[2]);
    const double slope = 0.5 * std::log10(errs[0] / errs[2]);
    CHECK(slope > 0.6);
    CHECK(slope < 1.4);
  }
}
