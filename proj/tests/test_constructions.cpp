#include <doctest.h>

#include <cmath>
#include <random>

#include "cyclelab/constructions.hpp"
#include "cyclelab/errors.hpp"
#include "oracles.hpp"

using namespace cyclelab;

namespace {

ConstructionConfig quick() {
  ConstructionConfig c;
  c.detect.grid_points = 200;
  return c;
}

double line_distance(Vec2 p, Vec2 dir) { return std::abs(wedge(p, dir)) / norm(dir); }

// A settled RK4 orbit re-crosses the record's section at s*. Unstable cycles
// are approached in reversed time.
void confirm_by_transient(const PlanarField& X, const CycleRecord& c) {
  CAPTURE(c.point.x);
  CAPTURE(c.point.y);
  const double sigma = c.exponent < 0 ? 1.0 : -1.0;
  const double rate = std::max(std::abs(c.exponent), 1e-3);
  const int periods = static_cast<int>(std::ceil(30.0 / rate)) + 3;
  const Vec2 start = c.point + 1e-3 * std::max(1.0, norm(c.point)) * c.section.direction();
  // Strongly contracting cycles need a finer fixed step.
  const auto r = oracle::settle(X, sigma, start, c.section, c.orientation,
                                  c.period / (4000 * std::max(1.0, rate / 20)), periods);
  REQUIRE(r.has_value());
  CHECK(r->s == doctest::Approx(c.s_star).epsilon(1e-6));
  CHECK(r->period == doctest::Approx(c.period).epsilon(1e-6));
}

}  // namespace

TEST_CASE("L1 of the radial normal forms") {
  // r' = a r³ in polar coordinates; the first focal value equals a.
  const Poly2 r2 = Poly2::monomial(2, 0) + Poly2::monomial(0, 2);
  for (double a : {-1.0, 0.5}) {
    const VectorField X(-Poly2::y() + a * r2 * Poly2::x(), Poly2::x() + a * r2 * Poly2::y());
    CHECK(lyapunov_L1(X) == doctest::Approx(a).epsilon(1e-12));
  }
  const VectorField centre(-Poly2::y(), Poly2::x());
  CHECK(std::abs(lyapunov_L1(centre)) < 1e-14);
  CHECK_THROWS_AS(lyapunov_L1(VectorField(Poly2::x(), Poly2::y())), NotMonodromicLinearType);
}

TEST_CASE("focus frame conjugates to a rotation") {
  Mat2 J;
  J(0, 0) = 0.3;
  J(0, 1) = 2.0;
  J(1, 0) = -0.545;
  J(1, 1) = -0.3;
  const FocusFrame F = focus_frame(J);
  CHECK(F.omega == doctest::Approx(1.0).epsilon(1e-12));
  const Mat2 R = F.T_inv * J * F.T;
  CHECK(std::abs(R(0, 0)) < 1e-12);
  CHECK(std::abs(R(1, 1)) < 1e-12);
  CHECK(R(0, 1) == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(R(1, 0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("sign of L1 agrees with the displacement near a weak focus") {
  // Oracle: D(s) = V₃ s³ + O(s⁴) with sign V₃ = sign L1.
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  int checked = 0;
  for (int trial = 0; trial < 20; ++trial) {
    Poly2 p = 0.3 * Poly2::x() + 2.0 * Poly2::y();
    Poly2 q = -0.545 * Poly2::x() - 0.3 * Poly2::y();
    for (int d = 2; d <= 3; ++d) {
      for (int i = 0; i <= d; ++i) {
        p.add_term(i, d - i, U(rng));
        q.add_term(i, d - i, U(rng));
      }
    }
    const VectorField X(p, q);
    const double L1 = lyapunov_L1(X);
    if (std::abs(L1) < 0.05) continue;
    const double D = displacement(X, Section({0, 0}, {1, 0}, 1), 0.02, IntegratorConfig{});
    CAPTURE(trial);
    CHECK((D > 0) == (L1 > 0));
    ++checked;
  }
  CHECK(checked >= 10);
}

TEST_CASE("perturbed product linear part") {
  // Product rule at the origin with Y(0) = (P0, Q0).
  const VectorField Y(Poly2::monomial(0, 0, 1.5) + Poly2::x() * Poly2::y(),
                      Poly2::monomial(0, 0, -0.7) + Poly2::monomial(2, 0));
  const double a = 0.7, b = 1.5, e = 0.01 * b, d = 0.01 * a;
  const Mat2 J = jacobian(perturbed_product(Y, a, b, e, d), {0, 0});
  CHECK(J(0, 0) == doctest::Approx(a * 1.5));
  CHECK(J(0, 1) == doctest::Approx((b + e) * 1.5));
  CHECK(J(1, 0) == doctest::Approx((a + d) * -0.7));
  CHECK(J(1, 1) == doctest::Approx(b * -0.7));
  // With (a, b) = (−Q0, P0): trace 0 and det = a²b²·m(2 + m) for ε = mb, δ = ma.
  const Mat2 K = jacobian(perturbed_product(Y, 0.7, 1.5, 0.015, 0.007), {0, 0});
  CHECK(std::abs(K.trace()) < 1e-14);
  CHECK(K.det() == doctest::Approx(0.49 * 2.25 * 0.01 * 2.01).epsilon(1e-12));
}

TEST_CASE("clear regular point") {
  const double ball = 3.0;
  {
    const VectorField X(Poly2::x(), Poly2::x() + Poly2::y());
    const auto [Y, p] = find_clear_regular_point(X, ball);
    CHECK(Y.p() == X.p());
    CHECK(Y.q() == X.q());
    CHECK(norm(p) > ball);
    CHECK(line_distance(p, Y(p)) > ball);
  }
  {
    // Radial lines all pass through the origin; the leading nudge tilts them.
    const VectorField X(Poly2::x(), Poly2::y());
    const auto [Y, p] = find_clear_regular_point(X, ball);
    CHECK(norm(p) > ball);
    CHECK(line_distance(p, Y(p)) > ball);
    CHECK(std::abs(Y.q().coeff(1, 0)) <= 1e-2);
  }
  CHECK_THROWS_AS(find_clear_regular_point(VectorField(Poly2::x(), Poly2::y()), 0.0),
                  std::invalid_argument);
}

TEST_CASE("hyperbolize splits even cycles and keeps odd ones") {
  for (int k : {2, 3}) {
    CAPTURE(k);
    const auto X = polar_multiplicity_field(k);
    ConstructionConfig cfg = quick();
    cfg.region = Region::disk({0, 0}, 1.5);
    const auto rep = detect_cycles(X, cfg.region, cfg.detect);
    REQUIRE(rep.pi() == 1);
    const auto res = hyperbolize(X, rep, cfg);
    CHECK(res.report.success);
    CHECK(res.report.after.pi_h() == (k == 2 ? 2 : 1));
    CHECK(res.report.after.pi() == res.report.after.pi_h());
    if (k == 2) {
      // r² = 1 ± sqrt(tan α) on the rotated family.
      const double t = std::sqrt(std::tan(res.alpha));
      CHECK(res.report.after.cycles[0].s_star == doctest::Approx(std::sqrt(1 - t)).epsilon(1e-7));
      CHECK(res.report.after.cycles[1].s_star == doctest::Approx(std::sqrt(1 + t)).epsilon(1e-7));
      // The opposite rotation destroys the double cycle.
      const auto other = detect_cycles(rotate(X, -res.alpha), cfg.region, cfg.detect);
      CHECK(other.pi() == 0);
    }
  }
}

TEST_CASE("hyperbolize leaves hyperbolic input alone") {
  ConstructionConfig cfg = quick();
  const auto X = van_der_pol(1.0);
  const auto rep = detect_cycles(X, cfg.region, cfg.detect);
  const auto res = hyperbolize(X, rep, cfg);
  CHECK(res.alpha == 0.0);
  CHECK(res.report.after.pi_h() == 1);
}

TEST_CASE("degree bump adds a Hopf cycle to van der Pol") {
  const auto X = van_der_pol(1.0);
  const auto rep = degree_bump(X, quick());
  REQUIRE(rep.success);
  REQUIRE(rep.bump.has_value());
  CHECK(rep.output.degree() == 4);
  CHECK(rep.after.pi_h() >= 2);
  const auto* lz = rep.stage("linear-zeros");
  REQUIRE(lz != nullptr);
  CHECK(std::abs(*lz->get("det")) <= 1e-9);
  const auto& bp = *rep.bump;
  CHECK(bp.eta * bp.L1 < 0);
  CHECK(norm(bp.p) > bp.ball_radius);
  // The linear part of the output at the origin is a weak-focus rotation plus η.
  const Mat2 J = jacobian(rep.output, {0, 0});
  CHECK(J.trace() == doctest::Approx(bp.eta).epsilon(1e-9));
  CHECK(J.det() > 0);
  for (const auto& c : rep.after.cycles) confirm_by_transient(rep.output, c);
}

TEST_CASE("degree bump refuses non-hyperbolic input") {
  ConstructionConfig cfg = quick();
  cfg.region = Region::disk({0, 0}, 1.5);
  try {
    degree_bump(polar_multiplicity_field(2), cfg);
    FAIL("expected StageFailure");
  } catch (const StageFailure& e) {
    CHECK(e.stage() == "precondition:hyperbolize-first");
  }
}

TEST_CASE("radial bump") {
  ConstructionConfig cfg = quick();
  cfg.region = Region::disk({-3, 0}, 3.5);
  const auto X = translate(van_der_pol(1.0), {3, 0});
  const auto rep = radial_bump(X, cfg);
  REQUIRE(rep.success);
  CHECK(rep.output.degree() == 5);
  CHECK(rep.after.pi_h() >= 2);
  const auto* rad = rep.stage("radial");
  REQUIRE(rad != nullptr);
  CHECK(*rad->get("max_s_shift") <= 1e-8);
  CHECK(std::abs(*rad->get("det0")) == 0.0);
  // Origin is a weak focus of (x²+y²)X + ω(−y, x); L1 = div X(0)/2.
  const auto* ly = rep.stage("lyapunov");
  REQUIRE(ly != nullptr);
  CHECK(*ly->get("L1") == doctest::Approx(0.5 * divergence(X)(0, 0)).epsilon(1e-9));
  for (const auto& c : rep.after.cycles) confirm_by_transient(rep.output, c);
}

TEST_CASE("quadrant transform gives one copy per quadrant") {
  const auto rep = quadrant_transform(van_der_pol(1.0), quick());
  REQUIRE(rep.success);
  CHECK(rep.output.degree() == 7);
  REQUIRE(rep.after.pi() == 4);
  const auto* tr = rep.stage("translate");
  REQUIRE(tr != nullptr);
  const Vec2 q{*tr->get("q.x"), *tr->get("q.y")};
  // The cycle of X has the same amplitude as van der Pol and its exponent is
  // invariant under the orbital equivalence (u, v) ↦ (u², v²) on each quadrant.
  const auto vdp = detect_cycles(van_der_pol(1.0), Region::disk({0, 0}, 4), quick().detect);
  REQUIRE(vdp.pi() == 1);
  const auto& ref = vdp.cycles[0];
  int seen[4] = {0, 0, 0, 0};
  for (const auto& m : rep.quadrants) {
    const auto& c = rep.after.cycles[m.cycle];
    CAPTURE(m.quadrant);
    ++seen[m.quadrant - 1];
    CHECK(m.source == 0);
    CHECK(std::abs(c.exponent) == doctest::Approx(std::abs(ref.exponent)).epsilon(1e-6));
    const double umax = c.point.x > 0 ? c.bbox_max.x : -c.bbox_min.x;
    CHECK(umax * umax + q.x == doctest::Approx(ref.bbox_max.x).epsilon(1e-6));
    confirm_by_transient(rep.output, c);
  }
  for (int k = 0; k < 4; ++k) CHECK(seen[k] == 1);
}

TEST_CASE("quadrant transform needs cycles") {
  ConstructionConfig cfg = quick();
  cfg.region = Region::disk({0, 0}, 1);
  CHECK_THROWS_AS(quadrant_transform(VectorField(-Poly2::y(), Poly2::x() - Poly2::y()), cfg),
                  StageFailure);
}
