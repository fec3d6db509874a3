#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "cyclelab/errors.hpp"
#include "cyclelab/field.hpp"
#include "cyclelab/field_io.hpp"

using namespace cyclelab;

namespace {

const Poly2 X = Poly2::x();
const Poly2 Y = Poly2::y();

Poly2 random_poly(std::mt19937& rng, int degree, bool integer) {
  std::uniform_int_distribution<int> ci(-9, 9);
  std::uniform_real_distribution<double> cr(-2.0, 2.0);
  Poly2 p;
  for (int d = 0; d <= degree; ++d) {
    for (int i = 0; i <= d; ++i) {
      // Dyadic rationals keep sums and products exact.
      const double c = integer ? ci(rng) : std::ldexp(std::round(cr(rng) * 64.0), -6);
      p.add_term(i, d - i, c);
    }
  }
  // Force the requested degree.
  p.add_term(degree, 0, p.coeff(degree, 0) == 0.0 ? 1.0 : 0.0);
  return p;
}

VectorField random_field(std::mt19937& rng, int degree, bool integer = false) {
  return {random_poly(rng, degree, integer), random_poly(rng, degree, integer)};
}

double max_abs_coeff_diff(const Poly2& a, const Poly2& b) {
  double m = 0.0;
  const Poly2 diff = a - b;
  for (const auto& [k, c] : diff.terms()) m = std::max(m, std::abs(c));
  return m;
}

double max_abs_coeff(const Poly2& a) {
  double m = 0.0;
  for (const auto& [k, c] : a.terms()) m = std::max(m, std::abs(c));
  return m;
}

}  // namespace

TEST_CASE("evaluate") {
  CHECK(evaluate(Poly2{}, 3.7, -1.2) == 0.0);
  CHECK(evaluate(X * X + Y * Y, 3, 4) == 25.0);
  CHECK(evaluate(X * Y - 2.0 * X + Poly2::constant(1), 2, 5) == 7.0);
  // Sparse high-order term with gaps in both directions.
  const Poly2 f = Poly2::monomial(5, 0, 2) + Poly2::monomial(0, 3, -1) + Poly2::monomial(2, 2, 3);
  CHECK(f(2, 3) == 2 * 32 - 27 + 3 * 4 * 9);
  CHECK(CompiledPoly(f)(2, 3) == f(2, 3));
}

TEST_CASE("arithmetic is canonical") {
  const Poly2 zero = X + (-X);
  CHECK(zero.is_zero());
  CHECK(zero.degree() == -1);
  CHECK((X + Y) * (X - Y) == X * X - Y * Y);
  CHECK(scale(X * X * Y, 0.0).is_zero());
  CHECK(Poly2(Poly2::Terms{{{1, 1}, 0.0}, {{0, 0}, 2.0}}).terms().size() == 1);
}

TEST_CASE("degree of products") {
  std::mt19937 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const Poly2 f = random_poly(rng, 1 + trial % 4, false);
    const Poly2 g = random_poly(rng, 1 + trial % 3, false);
    CHECK(mul(f, g).degree() == f.degree() + g.degree());
  }
}

TEST_CASE("rotate") {
  const VectorField F{X * X - Y, X * Y + Poly2::constant(2)};
  CHECK(rotate(F, 0.0) == F);
  const VectorField quarter = rotate(F, std::numbers::pi / 2);
  CHECK(max_abs_coeff_diff(quarter.p(), -F.q()) < 1e-15);
  CHECK(max_abs_coeff_diff(quarter.q(), F.p()) < 1e-15);
  CHECK(rotate(F, 0.3).degree() == F.degree());

  SUBCASE("zeros are preserved") {
    const VectorField V = van_der_pol(1.0);
    for (double a : {0.1, 1.0, -2.5}) {
      const Vec2 v = rotate(V, a)(Vec2{0, 0});
      CHECK(v.x == 0.0);
      CHECK(v.y == 0.0);
    }
  }

  SUBCASE("composition matches the angle sum") {
    std::mt19937 rng(5);
    for (int trial = 0; trial < 10; ++trial) {
      const VectorField R = random_field(rng, 3);
      const double a = 0.37 * (trial + 1), b = -0.21 * trial;
      const VectorField lhs = rotate(rotate(R, a), b);
      const VectorField rhs = rotate(R, a + b);
      const double scale = std::max(max_abs_coeff(rhs.p()), max_abs_coeff(rhs.q()));
      CHECK(max_abs_coeff_diff(lhs.p(), rhs.p()) <= 1e-12 * scale);
      CHECK(max_abs_coeff_diff(lhs.q(), rhs.q()) <= 1e-12 * scale);
    }
  }
}

TEST_CASE("translate") {
  const VectorField F{X, Y};
  CHECK(translate(F, {0, 0}) == F);
  const VectorField G = translate(F, {1, 2});
  CHECK(G == VectorField{X + Poly2::constant(1), Y + Poly2::constant(2)});

  std::mt19937 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const VectorField R = random_field(rng, 1 + trial % 5, true);
    const Vec2 p{double(trial % 5 - 2), double(trial % 3 - 1)};
    const VectorField T = translate(R, p);
    CHECK(T.degree() == R.degree());
    const Vec2 at0 = T({0, 0});
    const Vec2 atp = R(p);
    CHECK(at0.x == atp.x);
    CHECK(at0.y == atp.y);
    CHECK(translate(T, -p) == R);
  }
}

TEST_CASE("mul_linear") {
  CHECK(mul_linear(VectorField{Poly2::constant(1), Poly2{}}, 1, 0) == VectorField{X, Poly2{}});
  CHECK_THROWS_AS(mul_linear(van_der_pol(1), 0, 0), ZeroLinearForm);

  std::mt19937 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    VectorField R = random_field(rng, 1 + trial % 4);
    const Vec2 c = R({0, 0});
    const double a = -c.y, b = c.x;
    if (a == 0.0 && b == 0.0) continue;
    const VectorField M = mul_linear(R, a, b);
    CHECK(M.degree() == R.degree() + 1);
    const Mat2 J = jacobian(M, {0, 0});
    CHECK(J(0, 0) == doctest::Approx(a * b));
    CHECK(J(0, 1) == doctest::Approx(b * b));
    CHECK(J(1, 0) == doctest::Approx(-a * a));
    CHECK(J(1, 1) == doctest::Approx(-a * b));
    CHECK(std::abs(J.trace()) <= 1e-12 * (a * a + b * b));
    CHECK(std::abs(J.det()) <= 1e-12 * (a * a + b * b) * (a * a + b * b));
  }
}

TEST_CASE("jacobian") {
  const Mat2 I = jacobian(VectorField{X, Y}, {0, 0});
  CHECK(I == Mat2{{{{1, 0}, {0, 1}}}});
  const Mat2 R = jacobian(VectorField{-Y, X}, {0, 0});
  CHECK(R == Mat2{{{{0, -1}, {1, 0}}}});

  // X_{ε,δ} = ((ax+(b+ε)y)P, ((a+δ)x+by)Q) built with polynomial ops, compared
  // against the hand expansion [[ab, (b+ε)b], [−(a+δ)a, −ab]]:
  // trace 0 and det = ab(aε + bδ + εδ).
  std::mt19937 rng(19);
  for (int trial = 0; trial < 10; ++trial) {
    const VectorField Yf = random_field(rng, 2);
    const double a = -Yf.q().coeff(0, 0), b = Yf.p().coeff(0, 0);
    const double eps = 0.01 * (trial - 5), delta = -0.013 * (trial - 3);
    const Poly2 l1 = a * X + (b + eps) * Y;
    const Poly2 l2 = (a + delta) * X + b * Y;
    const VectorField Xed{l1 * Yf.p(), l2 * Yf.q()};
    const Mat2 J = jacobian(Xed, {0, 0});
    CHECK(J(0, 0) == doctest::Approx(a * b));
    CHECK(J(0, 1) == doctest::Approx((b + eps) * b));
    CHECK(J(1, 0) == doctest::Approx(-(a + delta) * a));
    CHECK(J.trace() == doctest::Approx(0.0).epsilon(1e-12).scale(1.0 + std::abs(a * b)));
    CHECK(J.det() == doctest::Approx(a * b * (a * eps + b * delta + eps * delta)));
  }
}

TEST_CASE("divergence") {
  CHECK(divergence(VectorField{X, Y}) == Poly2::constant(2));
  CHECK(divergence(VectorField{-Y, X}).is_zero());
  const double mu = 1.5;
  CHECK(divergence(van_der_pol(mu)) == Poly2::constant(mu) - mu * X * X);

  std::mt19937 rng(23);
  for (int trial = 0; trial < 10; ++trial) {
    const VectorField A = random_field(rng, 3), B = random_field(rng, 2);
    CHECK(divergence(A + B) == divergence(A) + divergence(B));
  }
}

TEST_CASE("leading_signs and nudge_leading") {
  auto ls = leading_signs(VectorField{X * X, Y * Y});
  CHECK(ls.first == 1.0);
  CHECK(ls.second == 0.0);
  ls = leading_signs(VectorField{X * X + Y, X * X - Poly2::constant(1)});
  CHECK(ls.first == 1.0);
  CHECK(ls.second == 1.0);

  const VectorField ok{X * X + Y, X * X - Poly2::constant(1)};
  CHECK(nudge_leading(ok, 0.5) == ok);
  const VectorField nudged = nudge_leading(VectorField{X * X, Y}, 1e-6);
  CHECK(nudged == VectorField{X * X, Y + 1e-6 * X * X});

  std::mt19937 rng(29);
  for (int trial = 0; trial < 10; ++trial) {
    VectorField R = random_field(rng, 3);
    R = VectorField{R.p() - R.p().coeff(3, 0) * Poly2::monomial(3, 0), R.q()};
    const auto [p, q] = leading_signs(nudge_leading(R, 1e-9));
    CHECK(p != 0.0);
    CHECK(q != 0.0);
  }
}

TEST_CASE("sin ring closed form") {
  const SinRingField ring = sin_ring(3);
  CHECK(ring({0, 0}) == Vec2{0, 0});
  const double r = std::sqrt(std::numbers::pi);
  const Vec2 v = ring({r, 0});
  CHECK(std::abs(v.x) < 1e-14);
  CHECK(v.y == doctest::Approx(r));
  CHECK_THROWS(sin_ring(0));
}

TEST_CASE("field file format") {
  const VectorField V = van_der_pol(1.0);
  const std::string text = format_field(V, "van der Pol");
  CHECK(parse_field(text) == V);

  CHECK(parse_field("# comment\ndegree 1\nP 1 0 2.5e0 # trailing\nQ 0 1 -1\n") ==
        VectorField{2.5 * X, -Y});

  SUBCASE("round trip preserves every bit") {
    std::mt19937 rng(31);
    std::uniform_real_distribution<double> u(-1e3, 1e3);
    for (int trial = 0; trial < 20; ++trial) {
      Poly2 p, q;
      for (int k = 0; k < 8; ++k) {
        p.add_term(k % 4, k / 4, u(rng) * std::pow(10.0, trial % 7 - 3));
        q.add_term(k / 3, k % 3, u(rng) / 7.0);
      }
      const VectorField F{p, q};
      CHECK(parse_field(format_field(F)) == F);
    }
  }

  SUBCASE("errors carry line numbers") {
    CHECK_THROWS_WITH_AS(parse_field(""), "no P/Q lines", ParseError);
    CHECK_THROWS_WITH_AS(parse_field("degree 1\nP 1 0 abc\n"), "line 2: bad coefficient 'abc'",
                         ParseError);
    CHECK_THROWS_WITH_AS(parse_field("degree 1\nR 1 0 1\n"), "line 2: unknown record 'R'",
                         ParseError);
    CHECK_THROWS_AS(parse_field("degree 2\nP 1 0 1\n"), ParseError);
    CHECK_THROWS_AS(parse_field("degree 1\nP 1 0 1\nP 1 0 2\n"), ParseError);
  }
}
