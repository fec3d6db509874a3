#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cyclelab/cycles.hpp"
#include "cyclelab/field.hpp"

namespace cyclelab {

struct Stage {
  std::string name;
  // Ordered (name, value) pairs chosen or measured by the stage.
  std::vector<std::pair<std::string, double>> params;
  bool verified = false;
  std::string note;

  Stage& set(std::string key, double value) {
    params.emplace_back(std::move(key), value);
    return *this;
  }
  std::optional<double> get(const std::string& key) const;
};

struct BumpParameters {
  Vec2 p;
  double a = 0.0;
  double b = 0.0;
  double eps = 0.0;
  double delta = 0.0;
  double L1 = 0.0;
  double eta = 0.0;
  double ball_radius = 0.0;
};

struct QuadrantMatch {
  int cycle = 0;     // index into after.cycles
  int quadrant = 0;  // 1..4, counter-clockwise from (+,+)
  int source = -1;   // index into before.cycles, -1 if unmatched
};

struct ConstructionReport {
  std::string construction;
  VectorField input;
  VectorField output;
  std::vector<Stage> stages;
  DetectionReport before;
  DetectionReport after;
  bool success = false;
  // pi_h the construction claims for `after`.
  int target_pi_h = 0;
  std::optional<BumpParameters> bump;
  std::vector<QuadrantMatch> quadrants;

  const Stage* stage(const std::string& name) const;
};

struct ConstructionConfig {
  DetectConfig detect;
  // Detection region for the input field.
  Region region = Region::disk({0, 0}, 4);
  // B radius = ball_margin · (max distance of a cycle point from the origin).
  double ball_margin = 1.5;
  double lyapunov_threshold = 1e-8;
  double coefficient_kick = 1e-6;
  // Shuffles the coefficient sweep order when set.
  std::optional<std::uint64_t> seed;
  double alpha_start = 0.1;
  double alpha_min = 1e-6;
  double eps_start = 1e-2;
  double eps_min = 1e-12;
  int hopf_attempts = 16;
  // Minimum |sin 2φ| for the direction φ of (a, b) at the regular point.
  double regular_point_conditioning = 0.5;
  // Relative s* tolerance when matching a cycle across a perturbation.
  double match_tolerance = 0.2;
};

// Linear normalisation at the origin: T with T⁻¹ J T = [[0, −ω], [ω, 0]].
struct FocusFrame {
  Mat2 T;
  Mat2 T_inv;
  double omega = 0.0;
};

// Throws NotMonodromicLinearType unless trace ≈ 0 and det > 0.
FocusFrame focus_frame(const Mat2& J);

// First focal value at the origin. L₁ < 0 ⟺ stable weak focus.
double lyapunov_L1(const VectorField& X);

// ((ax+(b+ε)y)P, ((a+δ)x+by)Q).
VectorField perturbed_product(const VectorField& Y, double a, double b, double eps, double delta);

// Lemma L1 search along the positive x-axis. Throws SearchExhausted.
std::pair<VectorField, Vec2> find_clear_regular_point(const VectorField& X, double ball_radius,
                                                      const ConstructionConfig& cfg = {});

struct HyperbolizeResult {
  double alpha = 0.0;
  VectorField field;
  ConstructionReport report;
};

// Throws NoImprovingRotation.
HyperbolizeResult hyperbolize(const VectorField& X, const DetectionReport& report,
                              const ConstructionConfig& cfg);

// Throw StageFailure.
ConstructionReport degree_bump(const VectorField& Z, const ConstructionConfig& cfg);
ConstructionReport radial_bump(const VectorField& X, const ConstructionConfig& cfg);
// Throws CycleNotInQuadrant or StageFailure.
ConstructionReport quadrant_transform(const VectorField& X, const ConstructionConfig& cfg);

}  // namespace cyclelab
