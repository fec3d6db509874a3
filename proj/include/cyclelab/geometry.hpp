#pragma once

#include <array>
#include <cmath>

namespace cyclelab {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator-(Vec2 a) { return {-a.x, -a.y}; }
  friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend bool operator==(Vec2, Vec2) = default;
};

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
// z-component of the planar cross product a ∧ b.
inline double wedge(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }

// Row-major 2x2 matrix.
struct Mat2 {
  std::array<std::array<double, 2>, 2> a{};

  double& operator()(int i, int j) { return a[i][j]; }
  double operator()(int i, int j) const { return a[i][j]; }
  double trace() const { return a[0][0] + a[1][1]; }
  double det() const { return a[0][0] * a[1][1] - a[0][1] * a[1][0]; }
  Vec2 operator*(Vec2 v) const {
    return {a[0][0] * v.x + a[0][1] * v.y, a[1][0] * v.x + a[1][1] * v.y};
  }
  Mat2 operator*(const Mat2& m) const {
    Mat2 r;
    for (int i = 0; i < 2; ++i) {
      for (int j = 0; j < 2; ++j) r.a[i][j] = a[i][0] * m.a[0][j] + a[i][1] * m.a[1][j];
    }
    return r;
  }
  friend bool operator==(const Mat2&, const Mat2&) = default;
};

}  // namespace cyclelab
