#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cyclelab/field.hpp"
#include "cyclelab/section.hpp"

namespace cyclelab {

struct IntegratorConfig {
  double rel_tol = 1e-10;
  double abs_tol = 1e-12;
  double max_step = 1.0;
  double max_time = 1000.0;
  int max_steps = 200000;
  // |state| beyond this raises BlowUp.
  double blowup_bound = 1e6;
  // A crossing is accepted only if |f·n|/|f| exceeds this.
  double min_crossing_angle = 1e-3;

  void validate() const;
  IntegratorConfig halved() const;
};

// Integrated state: position plus the running integral of the divergence.
using FlowState = std::array<double, 3>;

// One Dormand–Prince step with its continuous extension.
struct DenseSegment {
  double t0 = 0.0;
  double dt = 0.0;
  std::array<FlowState, 5> coeffs{};

  double t1() const { return t0 + dt; }
  FlowState at(double t) const;
  Vec2 point_at(double t) const {
    const auto s = at(t);
    return {s[0], s[1]};
  }
};

struct Trajectory {
  std::vector<double> times;
  std::vector<Vec2> points;
  // Cumulative functionals at each sample time; "divergence" is always set.
  std::map<std::string, std::vector<double>> functionals;
  std::vector<DenseSegment> segments;

  double end_time() const { return times.empty() ? 0.0 : times.back(); }
  Vec2 point_at(double t) const;
};

enum class FlowStatus { kOk, kMaxTime, kStepLimit, kBlowUp, kTangential };

const char* to_string(FlowStatus s);

// Integrates from t = 0 to cfg.max_time. Throws StepLimitExceeded or BlowUp.
Trajectory integrate(const PlanarField& X, Vec2 x0, const IntegratorConfig& cfg);

struct Crossing {
  Vec2 point;
  double time = 0.0;
  double s = 0.0;
  // ∫ div dt from the start to the crossing.
  double divergence_integral = 0.0;
  Vec2 velocity;
};

struct CrossingAttempt {
  FlowStatus status = FlowStatus::kOk;
  Crossing crossing;
  std::string message;
  // Filled when requested; truncated at the crossing time.
  std::optional<Trajectory> trajectory;

  bool ok() const { return status == FlowStatus::kOk; }
};

// First crossing of the section segment with sign(n·f) == direction, after
// leaving the start point. Non-throwing variant for hot loops.
CrossingAttempt try_next_crossing(const PlanarField& X, Vec2 start, const Section& section,
                                  int direction, const IntegratorConfig& cfg,
                                  bool keep_trajectory = false);

// Throws NoCrossing, TangentialCrossing, BlowUp or StepLimitExceeded.
Crossing next_crossing(const PlanarField& X, Vec2 start, const Section& section,
                       int direction, const IntegratorConfig& cfg);

enum class Integrand {
  kDivergence,
  // exp(−∫₀ᵗ div dτ)·(P²+Q²), the rotated-family derivative integrand.
  kPerko,
};

struct PathIntegral {
  double value = 0.0;
  // Smallest integrand value over all quadrature nodes.
  double min_sample = 0.0;
  std::size_t samples = 0;
};

// Gauss–Legendre quadrature on each dense segment of the trajectory.
PathIntegral path_integral(const PlanarField& X, const Trajectory& traj, Integrand integrand);

}  // namespace cyclelab
