#include <doctest.h>

#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "cyclelab/errors.hpp"
#include "cyclelab/field_io.hpp"
#include "cyclelab/harness.hpp"

using namespace cyclelab;
namespace fs = std::filesystem;

namespace {

fs::path scratch() {
  const fs::path d = fs::temp_directory_path() / "cyclelab_harness_test";
  fs::create_directories(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

struct Run {
  int code;
  std::string out, err;
};

Run run(const ExperimentConfig& c) {
  std::ostringstream out, err;
  const int code = run_experiment(c, out, err);
  return {code, out.str(), err.str()};
}

int cli(const std::string& args) {
  const std::string cmd = std::string(CYCLELAB_CLI) + " " + args + " > /dev/null 2>&1";
  const int st = std::system(cmd.c_str());
  return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.push_back("");
    rows.push_back(cells);
  }
  return rows;
}

}  // namespace

TEST_CASE("experiment config round-trips bit-exactly") {
  ExperimentConfig c;
  c.command = "duff";
  c.field = "vdp:1.25";
  c.region = "annulus:0.1,-0.2,0.5,3";
  c.rel_tol = 1.0 / 3.0;
  c.abs_tol = 1e-13 * 0.7;
  c.alpha_min = -0.1 / 3.0;
  c.alpha_step = 0.1 + 0.2;
  c.seed = 0xfedcba9876543210ULL;
  c.threads = 3;
  const ExperimentConfig back = ExperimentConfig::from_text(c.to_text());
  CHECK(back == c);
  CHECK(back.to_text() == c.to_text());
  CHECK(ExperimentConfig::from_text(ExperimentConfig{}.to_text()) == ExperimentConfig{});
  CHECK_THROWS_AS(ExperimentConfig::from_text("{\"bogus\": 1}"), ParseError);
  CHECK_THROWS_AS(ExperimentConfig::from_text("{\"threads\": \"two\"}"), ParseError);
  CHECK_THROWS_AS(ExperimentConfig::from_text("not json"), ParseError);
}

TEST_CASE("alpha grid") {
  ExperimentConfig c;
  const auto g = c.alpha_grid();
  REQUIRE(g.size() == 21);
  CHECK(g[10] == 0.0);
  CHECK(g.front() == doctest::Approx(-0.05));
  CHECK(g.back() == doctest::Approx(0.05));
  c.alpha_min = c.alpha_max = 0.0;
  CHECK(c.alpha_grid() == std::vector<double>{0.0});
  c.alpha_step = 0.0;
  CHECK_THROWS_AS(c.alpha_grid(), std::invalid_argument);
}

TEST_CASE("built-in field names") {
  CHECK(load_polynomial_field("vdp:2") == van_der_pol(2.0));
  CHECK(load_polynomial_field("polar3") == polar_multiplicity_field(3));
  CHECK(dynamic_cast<SinRingField*>(load_field("ring:4").get()) != nullptr);
  CHECK_THROWS_AS(load_field("vdp:x"), std::invalid_argument);
  CHECK_THROWS_AS(load_field("ring:0"), std::invalid_argument);
  CHECK_THROWS_AS(load_polynomial_field("ring:2"), std::invalid_argument);
}

TEST_CASE("detect writes a report and reports exit codes") {
  const fs::path dir = scratch();
  ExperimentConfig c;
  c.field = "vdp:1";
  c.region = "disk:0,0,4";
  c.out = (dir / "vdp.json").string();
  c.plot = (dir / "vdp").string();
  const Run r = run(c);
  CHECK(r.code == 0);
  const auto j = nlohmann::json::parse(slurp(c.out));
  CHECK(j["pi"] == 1);
  CHECK(j["pi_h"] == 1);
  CHECK(j["cycles"][0]["exponent"].get<double>() < 0);
  CHECK(fs::file_size(dir / "vdp_displacement.csv") > 100);
  CHECK(csv_rows(slurp(dir / "vdp_orbits.csv")).size() == 256);

  ExperimentConfig ring;
  ring.field = "ring:5";
  ring.region = "disk:0,0,4.2";
  const Run rr = run(ring);
  CHECK(rr.code == 0);
  CHECK(nlohmann::json::parse(rr.out)["pi"] == 5);

  // Centre: the period-annulus diagnostic gives exit 2.
  write_field_file(dir / "centre.vf", VectorField(-Poly2::y(), Poly2::x()));
  ExperimentConfig centre;
  centre.field = (dir / "centre.vf").string();
  centre.region = "disk:0,0,2";
  CHECK(run(centre).code == 2);
}

TEST_CASE("malformed inputs exit 1 with a message") {
  const fs::path dir = scratch();
  std::ofstream(dir / "empty.vf").close();
  ExperimentConfig c;
  c.field = (dir / "empty.vf").string();
  Run r = run(c);
  CHECK(r.code == 1);
  CHECK(r.err.find("no P/Q lines") != std::string::npos);

  std::ofstream(dir / "bad.vf") << "degree 1\nP 1 0 1\nQ 0 1 zz\n";
  c.field = (dir / "bad.vf").string();
  r = run(c);
  CHECK(r.code == 1);
  CHECK(r.err.find("line 3") != std::string::npos);

  c.field = "vdp:1";
  c.region = "disk:0,0";
  CHECK(run(c).code == 1);
  c.region = "";
  c.field = (dir / "missing.vf").string();
  CHECK(run(c).code == 1);
  c.command = "nonsense";
  CHECK(run(c).code == 1);
}

TEST_CASE("repeated runs are byte-identical, whatever the thread count") {
  ExperimentConfig c;
  c.field = "ring:3";
  c.region = "disk:0,0,3.3";
  const Run a = run(c), b = run(c);
  c.threads = 3;
  const Run t = run(c);
  CHECK(a.out == b.out);
  CHECK(a.out == t.out);
}

TEST_CASE("hyperbolize writes a field that re-parses exactly") {
  const fs::path dir = scratch();
  ExperimentConfig c;
  c.command = "hyperbolize";
  c.field = "polar2";
  c.region = "disk:0,0,1.5";
  c.grid_points = 200;
  c.out = (dir / "h.vf").string();
  c.report = (dir / "h.json").string();
  const Run r = run(c);
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(slurp(c.report));
  CHECK(j["success"] == true);
  CHECK(j["after"]["pi_h"] == 2);
  const VectorField written = read_field_file(c.out);
  CHECK(written == parse_field(j["output"].get<std::string>()));
  CHECK(parse_field(format_field(written)) == written);
  // Same config twice gives the same report bytes.
  const std::string first = slurp(c.report);
  REQUIRE(run(c).code == 0);
  CHECK(slurp(c.report) == first);
}

TEST_CASE("bump refuses a non-hyperbolic cycle with exit 3") {
  ExperimentConfig c;
  c.command = "bump";
  c.field = "polar2";
  c.region = "disk:0,0,1.5";
  c.grid_points = 200;
  const Run r = run(c);
  CHECK(r.code == 3);
  CHECK(r.err.find("stage: precondition:hyperbolize-first") != std::string::npos);
}

TEST_CASE("duff CSV") {
  ExperimentConfig c;
  c.command = "duff";
  c.field = "vdp:1";
  c.region = "disk:0,0,4";
  Run r = run(c);
  REQUIRE(r.code == 0);
  auto rows = csv_rows(r.out);
  REQUIRE(rows.size() == 21);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    REQUIRE(!rows[i][1].empty());
    CHECK(std::stod(rows[i][1]) > std::stod(rows[i - 1][1]));
  }

  // A single α = 0 matches detection.
  c.alpha_min = c.alpha_max = 0.0;
  r = run(c);
  rows = csv_rows(r.out);
  REQUIRE(rows.size() == 1);
  const auto rep = detect_cycles(van_der_pol(1.0), Region::disk({0, 0}, 4), c.detect_config());
  CHECK(std::stod(rows[0][1]) == rep.cycles[0].s_star);

  // The double cycle of polar2 disappears on one side.
  c.field = "polar2";
  c.region = "disk:0,0,1.5";
  c.alpha_min = -0.002;
  c.alpha_max = 0.002;
  c.alpha_step = 0.001;
  r = run(c);
  REQUIRE(r.code == 0);
  rows = csv_rows(r.out);
  REQUIRE(rows.size() == 5);
  CHECK(rows[0][1].empty());
  CHECK(rows[1][1].empty());
  CHECK(!rows[3][1].empty());
  CHECK(!rows[4][1].empty());

  c.field = "vdp:1";
  c.region = "disk:0,0,4";
  c.alpha_min = -0.05;
  c.alpha_max = 0.05;
  c.alpha_step = 0.005;
  c.cycle = 4;
  CHECK(run(c).code == 1);
}

TEST_CASE("command-line front end") {
  const fs::path dir = scratch();
  CHECK(cli("detect --ring 2 --region disk:0,0,3.3") == 0);
  std::ofstream(dir / "empty2.vf").close();
  CHECK(cli("detect --field " + (dir / "empty2.vf").string()) == 1);
  CHECK(cli("detect --field vdp:1 --region nowhere") == 1);
  CHECK(cli("frobnicate") == 1);
  CHECK(cli("bump --field polar2 --region disk:0,0,1.5 --grid 200") == 3);

  // Saved configs reload to the same effective config; flags override them.
  const std::string cfg = (dir / "c.json").string();
  REQUIRE(cli("--save-config " + cfg + " duff --field vdp:1 --alpha-step 0.01") == 0);
  const auto loaded = ExperimentConfig::from_text(slurp(cfg));
  CHECK(loaded.command == "duff");
  CHECK(loaded.alpha_step == 0.01);
  CHECK(!loaded.seed.has_value());
  const std::string seeded = (dir / "s.json").string();
  REQUIRE(cli("--save-config " + seeded + " radial --field vdp:1 --seed 9") == 0);
  CHECK(ExperimentConfig::from_text(slurp(seeded)).seed == std::optional<std::uint64_t>(9));
  const std::string cfg2 = (dir / "c2.json").string();
  REQUIRE(cli("--config " + cfg + " --save-config " + cfg2 + " duff --alpha-step 0.02") == 0);
  const auto over = ExperimentConfig::from_text(slurp(cfg2));
  CHECK(over.field == "vdp:1");
  CHECK(over.alpha_step == 0.02);
  const std::string out = (dir / "d.csv").string();
  CHECK(cli("--config " + cfg + " duff --out " + out) == 0);
  CHECK(csv_rows(slurp(out)).size() == 11);
}
