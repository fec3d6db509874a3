#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cyclelab/field.hpp"
#include "cyclelab/flow.hpp"
#include "cyclelab/section.hpp"

namespace cyclelab {

// Disk (inner == 0) or annulus centred at `center`.
struct Region {
  Vec2 center{};
  double inner = 0.0;
  double outer = 1.0;

  static Region disk(Vec2 c, double r);
  static Region annulus(Vec2 c, double r0, double r1);
  // "disk:cx,cy,r" or "annulus:cx,cy,r0,r1"; throws std::invalid_argument.
  static Region parse(std::string_view spec);
  std::string to_string() const;

  bool is_annulus() const { return inner > 0.0; }
  bool contains(Vec2 p) const;
  // Largest t >= 0 with base + t·dir inside the outer circle (0 if outside).
  double ray_exit(Vec2 base, Vec2 dir) const;

  friend bool operator==(const Region&, const Region&) = default;
};

struct DetectConfig {
  IntegratorConfig integrator;
  // Uniform samples per ray.
  int grid_points = 400;
  // Extra log-spaced samples between focus_refine_min·L and L/grid_points,
  // where weak foci hide small cycles.
  int focus_refine_points = 40;
  double focus_refine_min = 1e-6;
  double exponent_threshold = 1e-6;
  // |D(s*)| bound for a confirmed cycle.
  double root_tol = 1e-9;
  // |D| bound at a tangency (even multiplicity) candidate.
  double touch_tol = 1e-8;
  // |D| below annulus_tol on annulus_run consecutive uniform samples flags a
  // period annulus.
  double annulus_tol = 1e-9;
  int annulus_run = 10;
  // Displacements below noise_factor·(abs_tol + rel_tol·|point|) carry no sign.
  double noise_factor = 10.0;
  int equilibrium_seeds = 12;
  int ray_directions = 16;
  std::vector<Vec2> anchors;
  // When non-empty, replaces the automatically cast sections.
  std::vector<Section> sections;
  // Stencil half-width for multiplicity fits, relative to max(1, |s*|).
  double multiplicity_halfwidth = 0.01;
  int multiplicity_points = 11;
  // Continuation window for duff_probe, relative to max(1, |s*|).
  double duff_window = 0.1;
  int duff_points = 21;
  int threads = 1;
  bool keep_plot_data = false;
};

struct Equilibrium {
  Vec2 point;
  Mat2 jacobian;
};

struct CycleRecord {
  Section section;
  int section_index = 0;
  double s_star = 0.0;
  Vec2 point;
  double period = 0.0;
  // ∫₀ᵀ div dt along one period.
  double exponent = 0.0;
  // 0 = unknown (ill-conditioned fit).
  int multiplicity_estimate = 1;
  bool hyperbolic = true;
  // Crossing direction: sign(n·f) at the section point.
  int orientation = 1;
  // Finite-difference-free slope of the return map from the variational
  // formula; equals exp(exponent) on a closed orbit.
  double return_slope = 1.0;
  double residual = 0.0;
  Vec2 bbox_min;
  Vec2 bbox_max;
  // Evenly spaced in time over one period.
  std::vector<Vec2> orbit;
};

struct PlotSeries {
  int section_index = 0;
  std::vector<std::pair<double, double>> samples;  // (s, D(s))
};

struct DetectionReport {
  std::string field;
  Region region;
  std::vector<Equilibrium> equilibria;
  std::vector<Section> sections;
  std::vector<CycleRecord> cycles;
  std::vector<std::string> diagnostics;
  // Grid samples whose orbit never returned (escape, blow-up, max_time).
  int escaped_samples = 0;
  std::vector<PlotSeries> plot;

  int pi() const { return static_cast<int>(cycles.size()); }
  int pi_h() const;
};

struct DisplacementSample {
  FlowStatus status = FlowStatus::kOk;
  std::string message;
  double s = 0.0;
  double value = 0.0;  // s' − s
  double s_return = 0.0;
  double period = 0.0;
  double divergence_integral = 0.0;
  double slope = 1.0;  // dP/ds of the return map
  int orientation = 1;
  bool ok() const { return status == FlowStatus::kOk; }
};

DisplacementSample evaluate_displacement(const PlanarField& X, const Section& section, double s,
                                         const IntegratorConfig& cfg);
// s' − s for the first return to the section. Throws NoReturn.
double displacement(const PlanarField& X, const Section& section, double s,
                    const IntegratorConfig& cfg);
// D(α, s) for the rotated family.
double displacement_alpha(const VectorField& X, double alpha, const Section& section, double s,
                          const IntegratorConfig& cfg);

// Newton from a seed grid; sorted by (x, y).
std::vector<Equilibrium> find_equilibria(const PlanarField& X, const Region& region,
                                         const DetectConfig& cfg);

DetectionReport detect_cycles(const PlanarField& X, const Region& region, const DetectConfig& cfg);

// Order of the zero of D at s_star from a least-squares fit on a symmetric
// stencil; 1 without fitting when the cycle is hyperbolic. Throws
// IllConditioned.
int multiplicity_estimate(const PlanarField& X, const Section& section, double s_star,
                          const DetectConfig& cfg);

// All cycle roots in [lo, hi] on the section (sign changes and tangencies).
std::vector<double> local_roots(const PlanarField& X, const Section& section, double lo, double hi,
                                int points, const DetectConfig& cfg);

struct DuffPoint {
  double alpha = 0.0;
  // Continuation of the tracked root, absent when it disappeared.
  std::optional<double> s_star;
  // Every root in the continuation window.
  std::vector<double> roots;
};

// Continues record.s_star through the rotated family X_α. Throws LostTrack.
std::vector<DuffPoint> duff_probe(const VectorField& X, const CycleRecord& record,
                                  std::span<const double> alpha_grid, const DetectConfig& cfg);

// C = 1 integral ∫₀ᵀ exp(−∫₀ᵗ div)·(P²+Q²) dt along the orbit through
// point(s) up to its first return. Throws NoReturn.
PathIntegral perko_alpha_derivative(const PlanarField& X, const Section& section, double s,
                                    const IntegratorConfig& cfg);

// Central difference of D(α, s) in α at α = 0.
double alpha_derivative_fd(const VectorField& X, const Section& section, double s, double step,
                           const IntegratorConfig& cfg);

}  // namespace cyclelab
