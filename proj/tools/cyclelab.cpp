#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "cyclelab/errors.hpp"
#include "cyclelab/harness.hpp"

using cyclelab::ExperimentConfig;

namespace {

void common_options(CLI::App* sub, ExperimentConfig& c, int& ring) {
  sub->add_option("--field", c.field, "field file or built-in (vdp:<mu>, ring:<k>, polar2, polar3)");
  sub->add_option("--ring", ring, "shorthand for --field ring:<N>");
  sub->add_option("--region", c.region, "disk:cx,cy,r or annulus:cx,cy,r0,r1");
  sub->add_option("--out", c.out, "output file");
  sub->add_option("--threads", c.threads, "worker threads (default: $CYCLELAB_THREADS or 1)");
  sub->add_option("--rel-tol", c.rel_tol, "integrator relative tolerance")->capture_default_str();
  sub->add_option("--abs-tol", c.abs_tol, "integrator absolute tolerance")->capture_default_str();
  sub->add_option("--max-time", c.max_time, "integration time limit per return")->capture_default_str();
  sub->add_option("--max-steps", c.max_steps, "step limit per return")->capture_default_str();
  sub->add_option("--min-angle", c.min_crossing_angle, "minimum flow/section angle")->capture_default_str();
  sub->add_option("--grid", c.grid_points, "uniform samples per section")->capture_default_str();
  sub->add_option("--root-tol", c.root_tol, "|D| bound for a confirmed cycle")->capture_default_str();
  sub->add_option("--exponent-threshold", c.exponent_threshold, "|h| above which a cycle is hyperbolic")
      ->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Limit-cycle detection and degree-raising constructions for planar polynomial fields"};
  app.require_subcommand(1);

  ExperimentConfig c;
  int ring = 0;
  std::string config_in, config_out;
  std::uint64_t seed = 0;
  app.add_option("--config", config_in, "load an experiment config (command-line flags override it)");
  app.add_option("--save-config", config_out, "write the effective config and exit");

  auto* detect = app.add_subcommand("detect", "detect limit cycles in a region");
  common_options(detect, c, ring);
  detect->add_option("--plot", c.plot, "CSV prefix for displacement samples and orbits");

  for (const char* name : {"bump", "radial", "quadrant", "hyperbolize"}) {
    auto* sub = app.add_subcommand(name, std::string("run the ") + name + " construction");
    common_options(sub, c, ring);
    sub->add_option("--report", c.report, "construction report (JSON)");
    sub->add_option("--seed", seed, "shuffle the coefficient sweep order");
  }

  auto* duff = app.add_subcommand("duff", "continue a cycle through the rotated family (CSV)");
  common_options(duff, c, ring);
  duff->add_option("--cycle", c.cycle, "index of the detected cycle")->capture_default_str();
  duff->add_option("--alpha-min", c.alpha_min)->capture_default_str();
  duff->add_option("--alpha-max", c.alpha_max)->capture_default_str();
  duff->add_option("--alpha-step", c.alpha_step)->capture_default_str();

  // The config file is loaded before parsing so explicit flags override it.
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--config" && i + 1 < argc) config_in = argv[i + 1];
    else if (a.rfind("--config=", 0) == 0) config_in = a.substr(9);
  }
  if (!config_in.empty()) {
    std::ifstream f(config_in);
    if (!f) {
      std::cerr << "error: cannot open config " << config_in << '\n';
      return 1;
    }
    std::stringstream ss;
    ss << f.rdbuf();
    try {
      c = ExperimentConfig::from_text(ss.str());
    } catch (const cyclelab::ParseError& e) {
      std::cerr << "error: " << e.what() << '\n';
      return 1;
    }
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  for (auto* sub : app.get_subcommands()) c.command = sub->get_name();
  if (ring > 0) c.field = "ring:" + std::to_string(ring);
  for (auto* sub : app.get_subcommands()) {
    if (const auto* o = sub->get_option_no_throw("--seed"); o && o->count() > 0) c.seed = seed;
    if (!sub->count("--threads") && config_in.empty()) {
      if (const char* env = std::getenv("CYCLELAB_THREADS")) {
        try {
          c.threads = std::max(1, std::stoi(env));
        } catch (const std::exception&) {
          std::cerr << "error: CYCLELAB_THREADS must be an integer\n";
          return 1;
        }
      }
    }
  }

  if (!config_out.empty()) {
    std::ofstream f(config_out);
    f << c.to_text();
    return f ? 0 : 1;
  }
  return cyclelab::run_experiment(c, std::cout, std::cerr);
}
