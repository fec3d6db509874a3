#include "cyclelab/harness.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include "cyclelab/errors.hpp"
#include "cyclelab/field_io.hpp"

namespace cyclelab {

namespace {

using Json = nlohmann::ordered_json;

Json vec(Vec2 v) { return Json::array({v.x, v.y}); }

Json mat(const Mat2& m) {
  return Json::array({Json::array({m(0, 0), m(0, 1)}), Json::array({m(1, 0), m(1, 1)})});
}

// JSON has no inf/nan; keep them visible as strings.
Json num(double v) {
  if (std::isfinite(v)) return v;
  return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
}

Json section_json(const Section& s) {
  Json j;
  j["base"] = vec(s.base());
  j["direction"] = vec(s.direction());
  j["half_length"] = s.half_length();
  return j;
}

Json cycle_json(const CycleRecord& c) {
  Json j;
  j["section_index"] = c.section_index;
  j["s_star"] = c.s_star;
  j["point"] = vec(c.point);
  j["period"] = c.period;
  j["exponent"] = num(c.exponent);
  j["multiplicity_estimate"] = c.multiplicity_estimate;
  j["hyperbolic"] = c.hyperbolic;
  j["orientation"] = c.orientation;
  j["return_slope"] = num(c.return_slope);
  j["residual"] = c.residual;
  j["bbox_min"] = vec(c.bbox_min);
  j["bbox_max"] = vec(c.bbox_max);
  return j;
}

Json detection(const DetectionReport& r) {
  Json j;
  j["field"] = r.field;
  j["region"] = r.region.to_string();
  j["pi"] = r.pi();
  j["pi_h"] = r.pi_h();
  Json eq = Json::array();
  for (const auto& e : r.equilibria) {
    Json x;
    x["point"] = vec(e.point);
    x["jacobian"] = mat(e.jacobian);
    x["det"] = e.jacobian.det();
    x["trace"] = e.jacobian.trace();
    eq.push_back(x);
  }
  j["equilibria"] = eq;
  Json secs = Json::array();
  for (const auto& s : r.sections) secs.push_back(section_json(s));
  j["sections"] = secs;
  Json cyc = Json::array();
  for (const auto& c : r.cycles) cyc.push_back(cycle_json(c));
  j["cycles"] = cyc;
  j["escaped_samples"] = r.escaped_samples;
  j["diagnostics"] = r.diagnostics;
  return j;
}

Json construction(const ConstructionReport& r) {
  Json j;
  j["construction"] = r.construction;
  j["success"] = r.success;
  j["target_pi_h"] = r.target_pi_h;
  j["input_degree"] = r.input.degree();
  j["output_degree"] = r.output.degree();
  j["input"] = format_field(r.input);
  j["output"] = format_field(r.output);
  Json stages = Json::array();
  for (const auto& s : r.stages) {
    Json st;
    st["name"] = s.name;
    st["verified"] = s.verified;
    st["note"] = s.note;
    Json params = Json::array();
    for (const auto& [k, v] : s.params) params.push_back(Json::array({k, num(v)}));
    st["params"] = params;
    stages.push_back(st);
  }
  j["stages"] = stages;
  if (r.bump) {
    const auto& b = *r.bump;
    Json bp;
    bp["p"] = vec(b.p);
    bp["a"] = b.a;
    bp["b"] = b.b;
    bp["eps"] = b.eps;
    bp["delta"] = b.delta;
    bp["L1"] = b.L1;
    bp["eta"] = b.eta;
    bp["ball_radius"] = b.ball_radius;
    j["bump"] = bp;
  }
  if (!r.quadrants.empty()) {
    Json qs = Json::array();
    for (const auto& q : r.quadrants) {
      qs.push_back(Json{{"cycle", q.cycle}, {"quadrant", q.quadrant}, {"source", q.source}});
    }
    j["quadrants"] = qs;
  }
  j["before"] = detection(r.before);
  j["after"] = detection(r.after);
  return j;
}

std::string fmt17(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  f << text;
  if (!f) throw std::runtime_error("write to " + path + " failed");
}

template <class T>
void take(const Json& j, const char* key, T& dst) {
  if (j.contains(key)) dst = j.at(key).get<T>();
}

}  // namespace

std::string ExperimentConfig::to_text() const {
  Json j;
  j["command"] = command;
  j["field"] = field;
  j["region"] = region;
  j["out"] = out;
  j["report"] = report;
  j["plot"] = plot;
  j["threads"] = threads;
  j["seed"] = seed ? Json(*seed) : Json(nullptr);
  j["rel_tol"] = rel_tol;
  j["abs_tol"] = abs_tol;
  j["max_time"] = max_time;
  j["max_steps"] = max_steps;
  j["min_crossing_angle"] = min_crossing_angle;
  j["grid_points"] = grid_points;
  j["root_tol"] = root_tol;
  j["exponent_threshold"] = exponent_threshold;
  j["cycle"] = cycle;
  j["alpha_min"] = alpha_min;
  j["alpha_max"] = alpha_max;
  j["alpha_step"] = alpha_step;
  return j.dump(2) + "\n";
}

ExperimentConfig ExperimentConfig::from_text(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ParseError(0, std::string("config: ") + e.what());
  }
  if (!j.is_object()) throw ParseError(0, "config: expected an object");
  ExperimentConfig c;
  static const char* known[] = {"command",  "field",     "region",    "out",       "report",
                                "plot",     "threads",   "seed",      "rel_tol",   "abs_tol",
                                "max_time", "max_steps", "min_crossing_angle",     "grid_points",
                                "root_tol", "exponent_threshold",     "cycle",     "alpha_min",
                                "alpha_max", "alpha_step"};
  for (const auto& [k, v] : j.items()) {
    if (std::find(std::begin(known), std::end(known), k) == std::end(known)) {
      throw ParseError(0, "config: unknown key '" + k + "'");
    }
  }
  try {
    take(j, "command", c.command);
    take(j, "field", c.field);
    take(j, "region", c.region);
    take(j, "out", c.out);
    take(j, "report", c.report);
    take(j, "plot", c.plot);
    take(j, "threads", c.threads);
    if (j.contains("seed") && !j.at("seed").is_null()) c.seed = j.at("seed").get<std::uint64_t>();
    take(j, "rel_tol", c.rel_tol);
    take(j, "abs_tol", c.abs_tol);
    take(j, "max_time", c.max_time);
    take(j, "max_steps", c.max_steps);
    take(j, "min_crossing_angle", c.min_crossing_angle);
    take(j, "grid_points", c.grid_points);
    take(j, "root_tol", c.root_tol);
    take(j, "exponent_threshold", c.exponent_threshold);
    take(j, "cycle", c.cycle);
    take(j, "alpha_min", c.alpha_min);
    take(j, "alpha_max", c.alpha_max);
    take(j, "alpha_step", c.alpha_step);
  } catch (const Json::exception& e) {
    throw ParseError(0, std::string("config: ") + e.what());
  }
  return c;
}

DetectConfig ExperimentConfig::detect_config() const {
  DetectConfig d;
  d.integrator.rel_tol = rel_tol;
  d.integrator.abs_tol = abs_tol;
  d.integrator.max_time = max_time;
  d.integrator.max_steps = max_steps;
  d.integrator.min_crossing_angle = min_crossing_angle;
  d.grid_points = grid_points;
  d.root_tol = root_tol;
  d.exponent_threshold = exponent_threshold;
  d.threads = std::max(1, threads);
  d.keep_plot_data = !plot.empty();
  return d;
}

ConstructionConfig ExperimentConfig::construction_config() const {
  ConstructionConfig c;
  c.detect = detect_config();
  c.region = resolved_region();
  c.seed = seed;
  return c;
}

Region ExperimentConfig::resolved_region() const {
  if (!region.empty()) return Region::parse(region);
  if (field.rfind("ring:", 0) == 0) {
    const auto X = load_field(field);
    return Region::disk({0, 0}, static_cast<const SinRingField&>(*X).suggested_radius());
  }
  return Region::disk({0, 0}, 4);
}

std::vector<double> ExperimentConfig::alpha_grid() const {
  if (!(alpha_step > 0.0) || alpha_max < alpha_min) {
    throw std::invalid_argument("alpha range needs alpha_min <= alpha_max and alpha_step > 0");
  }
  const long n = std::lround(std::floor((alpha_max - alpha_min) / alpha_step + 1e-9)) + 1;
  // On the step lattice when alpha_min lies on it, so α = 0 comes out exactly.
  const double k0 = std::round(alpha_min / alpha_step);
  const bool lattice = std::abs(k0 * alpha_step - alpha_min) <= 1e-12 * std::max(1.0, std::abs(alpha_min));
  std::vector<double> g;
  for (long i = 0; i < n; ++i) {
    const double k = static_cast<double>(i);
    g.push_back(lattice ? (k0 + k) * alpha_step : alpha_min + k * alpha_step);
  }
  return g;
}

std::unique_ptr<PlanarField> load_field(const std::string& spec) {
  auto number = [&](std::size_t from) {
    const std::string body = spec.substr(from);
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(body, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != body.size()) throw std::invalid_argument("bad number in field spec '" + spec + "'");
    return v;
  };
  if (spec.rfind("vdp:", 0) == 0) return std::make_unique<VectorField>(van_der_pol(number(4)));
  if (spec.rfind("ring:", 0) == 0) {
    const double k = number(5);
    if (k < 1 || k != std::floor(k)) throw std::invalid_argument("ring:<k> needs an integer k >= 1");
    return std::make_unique<SinRingField>(sin_ring(static_cast<int>(k)));
  }
  if (spec == "polar2") return std::make_unique<VectorField>(polar_multiplicity_field(2));
  if (spec == "polar3") return std::make_unique<VectorField>(polar_multiplicity_field(3));
  if (spec.empty()) throw std::invalid_argument("no field given");
  return std::make_unique<VectorField>(read_field_file(spec));
}

VectorField load_polynomial_field(const std::string& spec) {
  auto X = load_field(spec);
  if (auto* v = dynamic_cast<VectorField*>(X.get())) return *v;
  throw std::invalid_argument("'" + spec + "' is not a polynomial field");
}

std::string detection_json(const DetectionReport& r) { return detection(r).dump(2) + "\n"; }

std::string construction_json(const ConstructionReport& r) { return construction(r).dump(2) + "\n"; }

std::string displacement_csv(const DetectionReport& r) {
  std::ostringstream os;
  os << "section,s,D\n";
  for (const auto& p : r.plot) {
    for (const auto& [s, d] : p.samples) os << p.section_index << ',' << fmt17(s) << ',' << fmt17(d) << '\n';
  }
  return os.str();
}

std::string orbit_csv(const DetectionReport& r) {
  std::ostringstream os;
  os << "cycle,k,x,y\n";
  for (std::size_t i = 0; i < r.cycles.size(); ++i) {
    const auto& o = r.cycles[i].orbit;
    for (std::size_t k = 0; k < o.size(); ++k) {
      os << i << ',' << k << ',' << fmt17(o[k].x) << ',' << fmt17(o[k].y) << '\n';
    }
  }
  return os.str();
}

std::string duff_csv(std::span<const DuffPoint> pts) {
  std::ostringstream os;
  os << "alpha,s_star,roots\n";
  for (const auto& p : pts) {
    os << fmt17(p.alpha) << ',';
    if (p.s_star) os << fmt17(*p.s_star);
    os << ',' << p.roots.size() << '\n';
  }
  return os.str();
}

int run_experiment(const ExperimentConfig& cfg, std::ostream& out, std::ostream& err) {
  try {
    const std::string& cmd = cfg.command;
    if (cmd == "detect") {
      const auto X = load_field(cfg.field);
      const DetectionReport rep = detect_cycles(*X, cfg.resolved_region(), cfg.detect_config());
      const std::string text = detection_json(rep);
      if (cfg.out.empty()) out << text;
      else write_text(cfg.out, text);
      if (!cfg.plot.empty()) {
        write_text(cfg.plot + "_displacement.csv", displacement_csv(rep));
        write_text(cfg.plot + "_orbits.csv", orbit_csv(rep));
      }
      for (const auto& d : rep.diagnostics) err << "diagnostic: " << d << '\n';
      return rep.diagnostics.empty() ? 0 : 2;
    }
    if (cmd == "duff") {
      const VectorField X = load_polynomial_field(cfg.field);
      const DetectConfig dc = cfg.detect_config();
      const DetectionReport rep = detect_cycles(X, cfg.resolved_region(), dc);
      if (cfg.cycle < 0 || cfg.cycle >= rep.pi()) {
        err << "error: cycle index " << cfg.cycle << " out of range (" << rep.pi() << " detected)\n";
        return 1;
      }
      const auto grid = cfg.alpha_grid();
      try {
        const auto pts = duff_probe(X, rep.cycles[cfg.cycle], grid, dc);
        const std::string text = duff_csv(pts);
        if (cfg.out.empty()) out << text;
        else write_text(cfg.out, text);
      } catch (const LostTrack& e) {
        err << "lost track: " << e.what() << "; last good alpha " << fmt17(e.last_good_alpha()) << '\n';
        return 3;
      }
      return 0;
    }
    if (cmd == "bump" || cmd == "radial" || cmd == "quadrant" || cmd == "hyperbolize") {
      const VectorField X = load_polynomial_field(cfg.field);
      const ConstructionConfig cc = cfg.construction_config();
      ConstructionReport rep;
      try {
        if (cmd == "bump") rep = degree_bump(X, cc);
        else if (cmd == "radial") rep = radial_bump(X, cc);
        else if (cmd == "quadrant") rep = quadrant_transform(X, cc);
        else rep = hyperbolize(X, detect_cycles(X, cc.region, cc.detect), cc).report;
      } catch (const StageFailure& e) {
        err << "stage: " << e.stage() << '\n' << e.what() << '\n';
        return 3;
      } catch (const NoImprovingRotation& e) {
        err << "stage: search\n" << e.what() << "; best alpha " << fmt17(e.best_alpha()) << '\n';
        return 3;
      } catch (const CycleNotInQuadrant& e) {
        err << "stage: translate\n" << e.what() << '\n';
        return 3;
      }
      if (!cfg.out.empty()) write_field_file(cfg.out, rep.output, rep.construction);
      const std::string text = construction_json(rep);
      if (!cfg.report.empty()) write_text(cfg.report, text);
      else if (cfg.out.empty()) out << text;
      return rep.success ? 0 : 2;
    }
    err << "error: unknown command '" << cmd << "'\n";
    return 1;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::runtime_error& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace cyclelab
