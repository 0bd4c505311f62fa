#include "fracopt/quadrature.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

using namespace fracopt;

TEST_CASE("Gauss-Legendre integrates monomials exactly") {
  for (int n : {1, 2, 4, 8, 16, 32}) {
    const auto& g = gauss_legendre(n);
    for (int p = 0; p <= 2 * n - 1; ++p) {
      double sum = 0.0;
      for (const auto& q : g) sum += q.w * std::pow(q.x, p);
      INFO("n = " << n << ", degree " << p);
      CHECK(sum == Catch::Approx(1.0 / (p + 1)).epsilon(1e-13));
    }
  }
}

TEST_CASE("triangle rule is exact up to total degree 2n-2") {
  // reference triangle {(0,0),(1,0),(1,1)}: int x^i y^j = 1/((j+1)(i+j+2))
  for (int n : {2, 3, 5, 8}) {
    const auto& rule = triangle_rule(n);
    for (int i = 0; i + 0 <= 2 * n - 2; ++i)
      for (int j = 0; i + j <= 2 * n - 2; ++j) {
        double sum = 0.0;
        for (const auto& q : rule) sum += q.w * std::pow(q.r1, i) * std::pow(q.r2, j);
        INFO("n = " << n << " monomial x^" << i << " y^" << j);
        CHECK(sum == Catch::Approx(1.0 / ((j + 1.0) * (i + j + 2.0))).epsilon(1e-12));
      }
  }
}

TEST_CASE("physical integration and subdivision agree") {
  const TriCoords t{Vec2{0.2, 0.1}, Vec2{1.1, 0.4}, Vec2{0.5, 1.3}};
  auto f = [](const Vec2& x) { return std::sin(x.x()) * std::exp(x.y()); };
  const double a = integrate(t, 8, f);
  const double b = integrate_subdivided(t, 8, 2, f);
  CHECK(a == Catch::Approx(b).epsilon(1e-10));
}

TEST_CASE("quadrature config validation") {
  QuadratureConfig q;
  CHECK_NOTHROW(q.validate());
  q.gauss_order_regular = 1;
  CHECK_THROWS_AS(q.validate(), std::invalid_argument);
  q = {};
  q.duffy_order_singular = 3;  // below regular order
  CHECK_THROWS_AS(q.validate(), std::invalid_argument);
}
