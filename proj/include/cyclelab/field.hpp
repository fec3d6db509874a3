#pragma once

#include <algorithm>
#include <string>
#include <utility>

#include "cyclelab/geometry.hpp"
#include "cyclelab/poly2.hpp"

namespace cyclelab {

// Evaluation interface shared by polynomial and closed-form planar fields.
// Implementations must be deterministic and smooth on bounded regions.
class PlanarField {
 public:
  virtual ~PlanarField() = default;
  virtual Vec2 operator()(Vec2 z) const = 0;
  virtual double divergence(Vec2 z) const = 0;
  virtual Mat2 jacobian(Vec2 z) const = 0;
  virtual std::string describe() const = 0;
};

// Polynomial system x' = P(x, y), y' = Q(x, y). Immutable after
// construction; derivative evaluators are compiled eagerly.
class VectorField final : public PlanarField {
 public:
  VectorField() : VectorField(Poly2{}, Poly2{}) {}
  VectorField(Poly2 p, Poly2 q);

  const Poly2& p() const { return p_; }
  const Poly2& q() const { return q_; }
  int degree() const { return std::max(p_.degree(), q_.degree()); }

  Vec2 operator()(Vec2 z) const override;
  double divergence(Vec2 z) const override;
  Mat2 jacobian(Vec2 z) const override;
  std::string describe() const override;

  friend bool operator==(const VectorField& a, const VectorField& b) {
    return a.p_ == b.p_ && a.q_ == b.q_;
  }

 private:
  Poly2 p_, q_;
  CompiledPoly cp_, cq_, cpx_, cpy_, cqx_, cqy_;
};

// x' = -y + x sin(x²+y²), y' = x + y sin(x²+y²). Analytic, not polynomial;
// its limit cycles are the circles x²+y² = kπ.
class SinRingField final : public PlanarField {
 public:
  explicit SinRingField(int k_max = 1) : k_max_(k_max) {}
  int k_max() const { return k_max_; }
  // Disk radius that contains the first k_max cycles with margin.
  double suggested_radius() const;

  Vec2 operator()(Vec2 z) const override;
  double divergence(Vec2 z) const override;
  Mat2 jacobian(Vec2 z) const override;
  std::string describe() const override;

 private:
  int k_max_;
};

SinRingField sin_ring(int k_max);

// (P cos α − Q sin α, Q cos α + P sin α).
VectorField rotate(const VectorField& X, double alpha);
// Y(x, y) = X(x + p.x, y + p.y).
VectorField translate(const VectorField& X, Vec2 p);
// ((ax + by) P, (ax + by) Q). Throws ZeroLinearForm when a = b = 0.
VectorField mul_linear(const VectorField& X, double a, double b);
VectorField operator+(const VectorField& a, const VectorField& b);
VectorField operator*(double s, const VectorField& a);
// Multiplies both components by the same polynomial.
VectorField operator*(const Poly2& f, const VectorField& X);

Mat2 jacobian(const VectorField& X, Vec2 p);
Poly2 divergence(const VectorField& X);

// (P_n(1,0), Q_n(1,0)) with n = degree(X).
std::pair<double, double> leading_signs(const VectorField& X);
// Adds eps·xⁿ to each component whose leading value at (1,0) vanishes.
VectorField nudge_leading(const VectorField& X, double eps);

// Built-in named fields.
VectorField van_der_pol(double mu);
// (−y + x(r²−1)^k, x + y(r²−1)^k); the unit circle is a cycle of
// multiplicity k.
VectorField polar_multiplicity_field(int k);

}  // namespace cyclelab
