#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

namespace cyclelab {

// Sparse bivariate polynomial with real coefficients, keyed by the exponent
// pair (i, j) of x^i y^j. Canonical form: no stored coefficient is exactly
// zero, so degree() is well defined (-1 for the zero polynomial).
class Poly2 {
 public:
  using Key = std::pair<int, int>;
  using Terms = std::map<Key, double>;

  Poly2() = default;
  explicit Poly2(Terms terms);

  static Poly2 constant(double c);
  static Poly2 monomial(int i, int j, double c = 1.0);
  static Poly2 x() { return monomial(1, 0); }
  static Poly2 y() { return monomial(0, 1); }

  const Terms& terms() const { return terms_; }
  double coeff(int i, int j) const;
  // Adds c to the (i, j) coefficient, keeping canonical form.
  void add_term(int i, int j, double c);
  void set_coeff(int i, int j, double c);

  bool is_zero() const { return terms_.empty(); }
  int degree() const;

  // Nested Horner: outer in y, inner in x.
  double operator()(double x, double y) const;

  // Terms of total degree exactly d.
  Poly2 homogeneous_part(int d) const;
  Poly2 dx() const;
  Poly2 dy() const;

  friend Poly2 operator+(const Poly2& a, const Poly2& b);
  friend Poly2 operator-(const Poly2& a, const Poly2& b);
  friend Poly2 operator-(const Poly2& a);
  friend Poly2 operator*(const Poly2& a, const Poly2& b);
  friend Poly2 operator*(double s, const Poly2& a);
  friend bool operator==(const Poly2& a, const Poly2& b) = default;

  Poly2 pow(int k) const;

  std::string to_string() const;

 private:
  Terms terms_;
};

inline Poly2 add(const Poly2& a, const Poly2& b) { return a + b; }
inline Poly2 mul(const Poly2& a, const Poly2& b) { return a * b; }
inline Poly2 scale(const Poly2& a, double s) { return s * a; }
inline double evaluate(const Poly2& f, double x, double y) { return f(x, y); }

// f(x + px, y + py), expanded with exact integer binomials.
Poly2 translate(const Poly2& f, double px, double py);

// f(xs(x,y), ys(x,y)).
Poly2 substitute(const Poly2& f, const Poly2& xs, const Poly2& ys);

// Flattened evaluator used in integration inner loops. Rows are powers of y,
// each row a dense coefficient array in x evaluated by Horner.
class CompiledPoly {
 public:
  CompiledPoly() = default;
  explicit CompiledPoly(const Poly2& p);
  double operator()(double x, double y) const;

 private:
  std::vector<std::vector<double>> rows_;
};

}  // namespace cyclelab
