#include "cyclelab/field.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "cyclelab/errors.hpp"

namespace cyclelab {

VectorField::VectorField(Poly2 p, Poly2 q)
    : p_(std::move(p)),
      q_(std::move(q)),
      cp_(p_),
      cq_(q_),
      cpx_(p_.dx()),
      cpy_(p_.dy()),
      cqx_(q_.dx()),
      cqy_(q_.dy()) {}

Vec2 VectorField::operator()(Vec2 z) const { return {cp_(z.x, z.y), cq_(z.x, z.y)}; }

double VectorField::divergence(Vec2 z) const {
  return cpx_(z.x, z.y) + cqy_(z.x, z.y);
}

Mat2 VectorField::jacobian(Vec2 z) const {
  Mat2 m;
  m(0, 0) = cpx_(z.x, z.y);
  m(0, 1) = cpy_(z.x, z.y);
  m(1, 0) = cqx_(z.x, z.y);
  m(1, 1) = cqy_(z.x, z.y);
  return m;
}

std::string VectorField::describe() const {
  return "P = " + p_.to_string() + "; Q = " + q_.to_string();
}

double SinRingField::suggested_radius() const {
  return std::sqrt(k_max_ * std::numbers::pi) + 1.0;
}

Vec2 SinRingField::operator()(Vec2 z) const {
  const double s = std::sin(z.x * z.x + z.y * z.y);
  return {-z.y + z.x * s, z.x + z.y * s};
}

double SinRingField::divergence(Vec2 z) const {
  const double r2 = z.x * z.x + z.y * z.y;
  return 2.0 * std::sin(r2) + 2.0 * r2 * std::cos(r2);
}

Mat2 SinRingField::jacobian(Vec2 z) const {
  const double r2 = z.x * z.x + z.y * z.y;
  const double s = std::sin(r2);
  const double c = std::cos(r2);
  Mat2 m;
  m(0, 0) = s + 2.0 * z.x * z.x * c;
  m(0, 1) = -1.0 + 2.0 * z.x * z.y * c;
  m(1, 0) = 1.0 + 2.0 * z.x * z.y * c;
  m(1, 1) = s + 2.0 * z.y * z.y * c;
  return m;
}

std::string SinRingField::describe() const {
  return "ring:" + std::to_string(k_max_) +
         " (x' = -y + x sin(x^2+y^2), y' = x + y sin(x^2+y^2))";
}

SinRingField sin_ring(int k_max) {
  if (k_max < 1) throw std::invalid_argument("sin_ring: k_max must be >= 1");
  return SinRingField(k_max);
}

VectorField rotate(const VectorField& X, double alpha) {
  const double c = std::cos(alpha);
  const double s = std::sin(alpha);
  return {c * X.p() - s * X.q(), c * X.q() + s * X.p()};
}

VectorField translate(const VectorField& X, Vec2 p) {
  return {translate(X.p(), p.x, p.y), translate(X.q(), p.x, p.y)};
}

VectorField mul_linear(const VectorField& X, double a, double b) {
  if (a == 0.0 && b == 0.0) throw ZeroLinearForm();
  const Poly2 form = Poly2::monomial(1, 0, a) + Poly2::monomial(0, 1, b);
  return form * X;
}

VectorField operator+(const VectorField& a, const VectorField& b) {
  return {a.p() + b.p(), a.q() + b.q()};
}

VectorField operator*(double s, const VectorField& a) { return {s * a.p(), s * a.q()}; }

VectorField operator*(const Poly2& f, const VectorField& X) {
  return {f * X.p(), f * X.q()};
}

Mat2 jacobian(const VectorField& X, Vec2 p) { return X.jacobian(p); }

Poly2 divergence(const VectorField& X) { return X.p().dx() + X.q().dy(); }

std::pair<double, double> leading_signs(const VectorField& X) {
  const int n = X.degree();
  if (n < 0) return {0.0, 0.0};
  return {X.p().coeff(n, 0), X.q().coeff(n, 0)};
}

VectorField nudge_leading(const VectorField& X, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("nudge_leading: eps must be > 0");
  const auto [pl, ql] = leading_signs(X);
  if (pl != 0.0 && ql != 0.0) return X;
  const int n = std::max(X.degree(), 0);
  Poly2 p = X.p();
  Poly2 q = X.q();
  if (pl == 0.0) p.add_term(n, 0, eps);
  if (ql == 0.0) q.add_term(n, 0, eps);
  return {std::move(p), std::move(q)};
}

VectorField van_der_pol(double mu) {
  Poly2 q = Poly2::monomial(1, 0, -1.0) + Poly2::monomial(0, 1, mu) +
            Poly2::monomial(2, 1, -mu);
  return {Poly2::y(), std::move(q)};
}

VectorField polar_multiplicity_field(int k) {
  const Poly2 r2m1 = Poly2::monomial(2, 0) + Poly2::monomial(0, 2) - Poly2::constant(1.0);
  const Poly2 g = r2m1.pow(k);
  return {-Poly2::y() + Poly2::x() * g, Poly2::x() + Poly2::y() * g};
}

}  // namespace cyclelab
