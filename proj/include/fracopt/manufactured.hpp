#pragma once

#include "fracopt/assembly.hpp"
#include "fracopt/control.hpp"
#include "fracopt/fractional.hpp"

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace fracopt {

/// Exact optimal quadruple of the unit-disc benchmark:
///   u(x) = p(x) = c_s (1 - |x|^2)^s_+,  c_s = 1 / (2^{2s} Gamma(1+s)^2),
/// with control and subgradient induced by the projection formulas, a forcing
/// shift that makes the state equation hold, and a tracking target that makes
/// the adjoint equation hold.
struct ExactSolution {
  double s = 0.5;
  double c_s = 0.0;
  double lambda = 1.0;
  double mu = 0.25;
  double alpha = -1.0;
  double beta = 1.0;

  double ubar(const Vec2& x) const {
    const double t = 1.0 - x.squaredNorm();
    return t > 0.0 ? c_s * std::pow(t, s) : 0.0;
  }
  double pbar(const Vec2& x) const { return ubar(x); }
  double eta(const Vec2& x) const { return proj_interval(-1.0, 1.0, -pbar(x) / mu); }
  double qbar(const Vec2& x) const {
    const double p = pbar(x);
    const double soft = p - proj_interval(-mu, mu, p);
    const double q = proj_interval(alpha, beta, -soft / lambda);
    return q == 0.0 ? 0.0 : q;
  }
  /// forcing shift: (-Lap)^s u + u^3 = qbar + f with (-Lap)^s ubar = 1
  double forcing(const Vec2& x) const {
    const double u = ubar(x);
    return 1.0 + u * u * u - qbar(x);
  }
  /// tracking target: the adjoint equation holds with p = u
  double u_target(const Vec2& x) const {
    const double u = ubar(x);
    return u - 1.0 - 3.0 * u * u * u;
  }
  /// Laplacian of ubar at an interior point (for the far-field check)
  double ubar_laplacian(const Vec2& x) const {
    const double r2 = x.squaredNorm();
    const double t = 1.0 - r2;
    if (t <= 0.0) return 0.0;
    return -4.0 * s * c_s * std::pow(t, s - 2.0) * (1.0 - s * r2);
  }

  /// closed-form norms: int ubar = pi c_s/(s+1),  ||ubar||_L2^2 = pi c_s^2/(2s+1)
  double integral_ubar() const { return M_PI * c_s / (s + 1.0); }
  double l2_norm_ubar() const { return std::sqrt(M_PI * c_s * c_s / (2.0 * s + 1.0)); }
  /// ||ubar||_s^2 = A(ubar,ubar) = int ubar, since (-Lap)^s ubar = 1
  double hs_norm_ubar() const { return std::sqrt(integral_ubar()); }
};

/// The benchmark configuration: lambda = 1, a(u) = u^3, L = (u - u_target)^2/2,
/// bounds [-1,1], and mu = 0.6 for s <= 0.5, mu = 0.25 for s > 0.5.
inline std::pair<ProblemSpec, ExactSolution> build_benchmark(double s) {
  if (!(s > 0.0 && s < 1.0)) throw std::invalid_argument("build_benchmark: s must lie in (0,1)");
  ExactSolution ex;
  ex.s = s;
  ex.c_s = 1.0 / (std::pow(2.0, 2.0 * s) * std::tgamma(1.0 + s) * std::tgamma(1.0 + s));
  ex.lambda = 1.0;
  ex.mu = s <= 0.5 ? 0.6 : 0.25;
  ex.alpha = -1.0;
  ex.beta = 1.0;

  ProblemSpec spec;
  spec.s = s;
  spec.lambda = ex.lambda;
  spec.mu = ex.mu;
  spec.alpha = ex.alpha;
  spec.beta = ex.beta;
  spec.nl = NonlinearitySpec::cubic();
  spec.L = [ex](const Vec2& x, double u) {
    const double diff = u - ex.u_target(x);
    return 0.5 * diff * diff;
  };
  spec.dL_du = [ex](const Vec2& x, double u) { return u - ex.u_target(x); };
  spec.d2L_du2 = [](const Vec2&, double) { return 1.0; };
  spec.forcing = [ex](const Vec2& x) { return ex.forcing(x); };
  return {spec, ex};
}

/// Energy-norm error by the duality trick: since (-Lap)^s ubar = 1,
///   ||ubar - u_h||_s^2 = int ubar - 2 int u_h + u_h' A u_h,
/// with int ubar closed-form and int u_h exact from patch areas.
enum class ExactField { state, adjoint };

inline double error_hs(const OperatorSet& ops, const Discretization& d, const Vector& u_h,
                       const ExactSolution& ex, ExactField /*which*/ = ExactField::state) {
  const Vector phi_int = integral_phi(d.mesh, d.dofmap);
  const double value =
      ex.integral_ubar() - 2.0 * phi_int.dot(u_h) + u_h.dot(ops.A * u_h);
  if (value < -1e-10)
    throw std::runtime_error("error_hs: negative norm square (assembly inconsistency): " +
                             std::to_string(value));
  return std::sqrt(std::max(value, 0.0));
}

namespace detail {

/// Quadrature of (exact - discrete)^2 with order-7 rules; cells touching the
/// boundary are quadrisected once to resolve the (1-|x|^2)^s kink.
template <class DiscreteFn>
double l2_error_quadrature(const Discretization& d,
                           const std::function<double(const Vec2&)>& exact,
                           const DiscreteFn& discrete, int boundary_subdiv = 1) {
  const auto& rule = triangle_rule_degree(7);
  double sum = 0.0;
  for (int cell = 0; cell < d.mesh.n_cells(); ++cell) {
    const auto co = d.mesh.coords(d.mesh.triangles[cell]);
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
        const double e = exact(x) - discrete(cell, x);
        sum += jac * q.w * e * e;
      }
    };
    rec(co, lev);
  }
  return std::sqrt(sum);
}

}  // namespace detail

/// L2 error of a P1 dof field against an exact evaluator.
inline double error_l2_p1(const Discretization& d, const Vector& u_h,
                          const std::function<double(const Vec2&)>& exact,
                          int boundary_subdiv = 1) {
  const P1Evaluator eval(d.mesh, d.dofmap, u_h);
  auto discrete = [&](int cell, const Vec2& x) {
    const auto co = d.mesh.coords(d.mesh.triangles[cell]);
    const auto b = barycentric(co, x);
    const auto& t = d.mesh.triangles[cell];
    return b[0] * eval.nodal(t[0]) + b[1] * eval.nodal(t[1]) + b[2] * eval.nodal(t[2]);
  };
  return detail::l2_error_quadrature(d, exact, discrete, boundary_subdiv);
}

/// L2 error of a P0 cell field against an exact evaluator.
inline double error_l2_p0(const Discretization& d, const Vector& cells,
                          const std::function<double(const Vec2&)>& exact,
                          int boundary_subdiv = 1) {
  auto discrete = [&](int cell, const Vec2&) { return cells[cell]; };
  return detail::l2_error_quadrature(d, exact, discrete, boundary_subdiv);
}

/// L2 error of the implicit semidiscrete control q(x) = Pi(p_h(x)).
inline double error_l2_pointwise_control(const Discretization& d, const ProblemSpec& spec,
                                         const Vector& p_h,
                                         const std::function<double(const Vec2&)>& exact,
                                         int boundary_subdiv = 1) {
  const P1Evaluator pe(d.mesh, d.dofmap, p_h);
  auto discrete = [&](int cell, const Vec2& x) {
    const auto co = d.mesh.coords(d.mesh.triangles[cell]);
    const auto b = barycentric(co, x);
    const auto& t = d.mesh.triangles[cell];
    const double pv =
        b[0] * pe.nodal(t[0]) + b[1] * pe.nodal(t[1]) + b[2] * pe.nodal(t[2]);
    return q_from_p_pointwise(pv, spec);
  };
  return detail::l2_error_quadrature(d, exact, discrete, boundary_subdiv);
}

/// As above for the implicit subgradient eta(x) = Pi_[-1,1](-p_h(x)/mu).
inline double error_l2_pointwise_eta(const Discretization& d, const ProblemSpec& spec,
                                     const Vector& p_h,
                                     const std::function<double(const Vec2&)>& exact,
                                     int boundary_subdiv = 1) {
  const P1Evaluator pe(d.mesh, d.dofmap, p_h);
  auto discrete = [&](int cell, const Vec2& x) {
    const auto co = d.mesh.coords(d.mesh.triangles[cell]);
    const auto b = barycentric(co, x);
    const auto& t = d.mesh.triangles[cell];
    const double pv =
        b[0] * pe.nodal(t[0]) + b[1] * pe.nodal(t[1]) + b[2] * pe.nodal(t[2]);
    return eta_from_p_pointwise(pv, spec.mu);
  };
  return detail::l2_error_quadrature(d, exact, discrete, boundary_subdiv);
}

// --- convergence records and experimental orders ---------------------------

constexpr std::array<const char*, 6> kErrorMetrics = {"err_u_s",  "err_p_s",  "err_u_l2",
                                                      "err_p_l2", "err_q_l2", "err_eta_l2"};

struct LevelErrors {
  int level = 0;
  double h = 0.0;
  int n_dofs = 0;
  std::array<double, 6> errors{};  // indexed like kErrorMetrics
};

struct ConvergenceRecord {
  Scheme scheme = Scheme::fully_discrete;
  double s = 0.0;
  std::vector<LevelErrors> levels;
};

/// EOC between two levels; NaN when either error is not positive.
inline double eoc_value(double e_coarse, double e_fine, double h_coarse, double h_fine) {
  if (!(e_coarse > 0.0) || !(e_fine > 0.0) || !(h_coarse > h_fine))
    return std::numeric_limits<double>::quiet_NaN();
  return std::log(e_coarse / e_fine) / std::log(h_coarse / h_fine);
}

struct EocRow {
  int level_from = 0, level_to = 0;
  std::array<double, 6> rates{};
};

inline std::vector<EocRow> eoc(const ConvergenceRecord& rec) {
  std::vector<EocRow> rows;
  for (size_t k = 0; k + 1 < rec.levels.size(); ++k) {
    const auto& a = rec.levels[k];
    const auto& b = rec.levels[k + 1];
    EocRow row;
    row.level_from = a.level;
    row.level_to = b.level;
    for (int m = 0; m < 6; ++m)
      row.rates[m] = eoc_value(a.errors[m], b.errors[m], a.h, b.h);
    rows.push_back(row);
  }
  return rows;
}

/// Far-field verification that (-Lap)^s applied to (1-|x|^2)^s_+ equals
/// 2^{2s} Gamma(1+s)^2 c_s = 1 at interior points; the whole benchmark hangs
/// on this identity.
inline double eigen_identity_defect(const ExactSolution& ex, const std::vector<Vec2>& points,
                                    const FarFieldConfig& cfg = {}) {
  PointwiseField f;
  f.value = [&ex](const Vec2& x) { return ex.ubar(x); };
  f.laplacian = [&ex](const Vec2& x) { return ex.ubar_laplacian(x); };
  double worst = 0.0;
  for (const auto& x0 : points)
    worst = std::max(worst, std::abs(pointwise_fractional_laplacian(f, x0, ex.s, cfg) - 1.0));
  return worst;
}

}  // namespace fracopt
