#pragma once

#include <cmath>
#include <stdexcept>

#include "cyclelab/geometry.hpp"

namespace cyclelab {

// Transversal segment base + s·direction, |s| <= half_length. The direction
// is normalised on construction.
class Section {
 public:
  Section() = default;
  Section(Vec2 base, Vec2 direction, double half_length)
      : base_(base), half_length_(half_length) {
    const double n = norm(direction);
    if (!(n > 0.0)) throw std::invalid_argument("Section: zero direction");
    if (!(half_length > 0.0)) throw std::invalid_argument("Section: half_length must be > 0");
    direction_ = (1.0 / n) * direction;
  }

  Vec2 base() const { return base_; }
  Vec2 direction() const { return direction_; }
  // Left normal; normal()·f is the signed crossing rate of the flow f.
  Vec2 normal() const { return {-direction_.y, direction_.x}; }
  double half_length() const { return half_length_; }

  Vec2 point(double s) const { return base_ + s * direction_; }
  double coordinate(Vec2 p) const { return dot(direction_, p - base_); }
  double offset(Vec2 p) const { return dot(normal(), p - base_); }
  bool contains(double s) const { return std::abs(s) <= half_length_; }

  friend bool operator==(const Section&, const Section&) = default;

 private:
  Vec2 base_{};
  Vec2 direction_{1.0, 0.0};
  double half_length_ = 1.0;
};

}  // namespace cyclelab
