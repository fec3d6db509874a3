#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cyclelab/constructions.hpp"
#include "cyclelab/cycles.hpp"

namespace cyclelab {

// Everything one CLI run depends on. Round-trips through to_text/from_text
// bit-exactly.
struct ExperimentConfig {
  // detect | bump | radial | quadrant | hyperbolize | duff
  std::string command = "detect";
  // File path or built-in: vdp:<mu>, ring:<k>, polar2, polar3.
  std::string field;
  // Empty selects the command default (disk:0,0,4; the suggested radius for ring:<k>).
  std::string region;
  std::string out;
  std::string report;
  // Prefix for CSV plot data (displacement samples and cycle orbits).
  std::string plot;
  int threads = 1;
  std::optional<std::uint64_t> seed;

  double rel_tol = IntegratorConfig{}.rel_tol;
  double abs_tol = IntegratorConfig{}.abs_tol;
  double max_time = IntegratorConfig{}.max_time;
  int max_steps = IntegratorConfig{}.max_steps;
  double min_crossing_angle = IntegratorConfig{}.min_crossing_angle;
  int grid_points = DetectConfig{}.grid_points;
  double root_tol = DetectConfig{}.root_tol;
  double exponent_threshold = DetectConfig{}.exponent_threshold;

  int cycle = 0;
  double alpha_min = -0.05;
  double alpha_max = 0.05;
  double alpha_step = 0.005;

  std::string to_text() const;
  // Throws ParseError.
  static ExperimentConfig from_text(const std::string& text);

  DetectConfig detect_config() const;
  ConstructionConfig construction_config() const;
  Region resolved_region() const;
  // alpha_min, alpha_min + step, …, alpha_max (inclusive, by count).
  std::vector<double> alpha_grid() const;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

// Built-in name or field file. Throws ParseError or std::invalid_argument.
std::unique_ptr<PlanarField> load_field(const std::string& spec);
// As load_field but rejects non-polynomial fields.
VectorField load_polynomial_field(const std::string& spec);

std::string detection_json(const DetectionReport& r);
std::string construction_json(const ConstructionReport& r);
// section,s,D rows.
std::string displacement_csv(const DetectionReport& r);
// cycle,k,x,y rows.
std::string orbit_csv(const DetectionReport& r);
// alpha,s_star,roots rows; s_star empty when the cycle is gone.
std::string duff_csv(std::span<const DuffPoint> pts);

// Runs one experiment. Exit codes: 0 clean / success, 1 I/O or parse error,
// 2 diagnostics present (detect) or construction unsuccessful, 3 stage failure
// or lost track.
int run_experiment(const ExperimentConfig& cfg, std::ostream& out, std::ostream& err);

}  // namespace cyclelab
