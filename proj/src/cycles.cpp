#include "cyclelab/cycles.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <Eigen/Dense>
#include <boost/math/tools/minima.hpp>
#include <boost/math/tools/roots.hpp>

#include "cyclelab/errors.hpp"

namespace cyclelab {

namespace {

constexpr double kPi = std::numbers::pi;

template <class F>
void parallel_for(int n, int threads, F&& fn) {
  threads = std::clamp(threads, 1, std::max(1, n));
  if (threads == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (int i = next++; i < n; i = next++) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

std::vector<double> parse_numbers(std::string_view body, std::string_view spec) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos <= body.size()) {
    const std::size_t end = std::min(body.find(',', pos), body.size());
    std::string_view tok = body.substr(pos, end - pos);
    while (!tok.empty() && tok.front() == ' ') tok.remove_prefix(1);
    while (!tok.empty() && tok.back() == ' ') tok.remove_suffix(1);
    if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (tok.empty() || ec != std::errc() || ptr != tok.data() + tok.size()) {
      throw std::invalid_argument("bad region '" + std::string(spec) + "'");
    }
    out.push_back(v);
    pos = end + 1;
    if (end == body.size()) break;
  }
  return out;
}

double noise_floor(const Section& sec, double s, const DetectConfig& cfg) {
  return cfg.noise_factor *
         (cfg.integrator.abs_tol + cfg.integrator.rel_tol * std::max(1.0, norm(sec.point(s))));
}

// −X: same orbits traversed backwards, so repelling cycles become attracting.
class Reversed final : public PlanarField {
 public:
  explicit Reversed(const PlanarField& X) : X_(X) {}
  Vec2 operator()(Vec2 z) const override { return -X_(z); }
  double divergence(Vec2 z) const override { return -X_.divergence(z); }
  Mat2 jacobian(Vec2 z) const override {
    Mat2 J = X_.jacobian(z);
    for (auto& row : J.a) {
      for (double& v : row) v = -v;
    }
    return J;
  }
  std::string describe() const override { return "reversed " + X_.describe(); }

 private:
  const PlanarField& X_;
};

int sign_of(double v) { return v > 0.0 ? 1 : (v < 0.0 ? -1 : 0); }

struct EvalFailed {};

// D(s) that throws EvalFailed instead of returning a failed sample; used
// inside the Boost solvers.
struct DisplacementFn {
  const PlanarField& X;
  const Section& sec;
  const IntegratorConfig& cfg;
  DisplacementSample operator()(double s) const {
    DisplacementSample d = evaluate_displacement(X, sec, s, cfg);
    if (!d.ok()) throw EvalFailed{};
    return d;
  }
};

struct ScanOutput {
  std::vector<DisplacementSample> samples;
  std::vector<double> roots;
  std::vector<std::string> diagnostics;
  int failed = 0;
};

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

double refine_weak(const DisplacementFn& D, double s, double window, const DetectConfig& cfg) {
  // A non-hyperbolic cycle of odd order is a sign change of D and a double
  // root of D'; the D' minimum locates it better than the sign change does.
  auto absd = [&](double x) { return std::abs(D(x).slope - 1.0); };
  try {
    const auto [xm, fm] =
        boost::math::tools::brent_find_minima(absd, s - window, s + window, 40);
    if (fm < absd(s) && std::abs(D(xm).value) < cfg.root_tol) return xm;
  } catch (const EvalFailed&) {
  }
  return s;
}

std::vector<double> scan_section(const PlanarField& X, const Section& sec,
                                 const std::vector<double>& svals, std::vector<char> uniform,
                                 const DetectConfig& cfg, ScanOutput& out) {
  const int n = static_cast<int>(svals.size());
  out.samples.assign(n, {});
  const Reversed back(X);
  parallel_for(n, cfg.threads, [&](int i) {
    DisplacementSample d = evaluate_displacement(X, sec, svals[i], cfg.integrator);
    if (!d.ok()) {
      // Orbits that escape forward often return backward; P(s) > s exactly
      // when P⁻¹(s) < s, so −D_back carries the sign of D.
      const DisplacementSample b = evaluate_displacement(back, sec, svals[i], cfg.integrator);
      if (b.ok()) {
        d = b;
        d.value = -b.value;
        d.slope = 1.0 / b.slope;
        d.orientation = -b.orientation;
      }
    }
    out.samples[i] = d;
  });
  const auto& S = out.samples;
  for (const auto& d : S) out.failed += d.ok() ? 0 : 1;

  // Period annuli: long runs of vanishing displacement on the uniform grid.
  std::vector<char> in_annulus(n, 0);
  {
    int run_start = -1;
    auto close_run = [&](int end) {
      if (run_start < 0) return;
      int count = 0;
      for (int k = run_start; k < end; ++k) count += uniform[k] ? 1 : 0;
      if (count >= cfg.annulus_run) {
        for (int k = run_start; k < end; ++k) in_annulus[k] = 1;
        out.diagnostics.push_back("period annulus suspected for s in [" + fmt(svals[run_start]) +
                                  ", " + fmt(svals[end - 1]) + "]");
      }
      run_start = -1;
    };
    for (int i = 0; i < n; ++i) {
      const bool small = S[i].ok() && std::abs(S[i].value) < cfg.annulus_tol;
      if (!uniform[i]) {
        if (!small) close_run(i);
        continue;
      }
      if (small) {
        if (run_start < 0) run_start = i;
      } else {
        close_run(i);
      }
    }
    close_run(n);
  }

  const DisplacementFn Df{X, sec, cfg.integrator};
  const DisplacementFn& D = Df;
  std::vector<double> roots;
  auto usable = [&](int i) { return S[i].ok() && !in_annulus[i]; };

  // Root in [a, b] from a sign change of D; nullopt after a diagnostic.
  auto refine = [&](double a, double b, double da, double db) -> std::optional<double> {
    double s = 0.0;
    // D rising through zero marks a repelling cycle; the backward return
    // map contracts there and resolves it to full accuracy.
    const bool repelling = da < db;
    const DisplacementFn Dr{back, sec, cfg.integrator};
    const DisplacementFn& D = repelling ? Dr : Df;
    try {
      auto f = [&](double x) { return D(x).value; };
      auto tol = [&](double lo, double hi) {
        return std::abs(hi - lo) <= 1e-14 * std::max(1.0, std::abs(lo));
      };
      std::uintmax_t iters = 200;
      const double fa = repelling ? f(a) : da, fb = repelling ? f(b) : db;
      const auto [lo, hi] = boost::math::tools::toms748_solve(f, a, b, fa, fb, tol, iters);
      s = 0.5 * (lo + hi);
      // Newton polish with the variational slope.
      DisplacementSample d = D(s);
      for (int it = 0; it < 3 && std::abs(d.slope - 1.0) > 1e-6; ++it) {
        const double s2 = s - d.value / (d.slope - 1.0);
        if (!(s2 > a && s2 < b)) break;
        const DisplacementSample d2 = D(s2);
        if (std::abs(d2.value) >= std::abs(d.value)) break;
        s = s2;
        d = d2;
      }
      if (std::abs(d.slope - 1.0) < 1e-3) {
        s = refine_weak(D, s, 1e-3 * std::max(1.0, std::abs(s)), cfg);
        d = D(s);
      }
      if (std::abs(d.value) >= cfg.root_tol) {
        out.diagnostics.push_back("unconfirmed root near s=" + fmt(s) +
                                  " (|D|=" + fmt(std::abs(d.value)) + ")");
        return std::nullopt;
      }
    } catch (const std::exception& e) {
      out.diagnostics.push_back(std::string("bracket refinement failed (") + e.what() + ") on [" +
                                fmt(a) + ", " + fmt(b) + "]");
      return std::nullopt;
    } catch (const EvalFailed&) {
      out.diagnostics.push_back("evaluation failed while refining bracket [" + fmt(a) + ", " +
                                fmt(b) + "]");
      return std::nullopt;
    }
    return s;
  };

  // Sign changes between consecutive samples that clear the noise floor;
  // samples inside the noise in between carry no sign and are skipped. Across
  // a tangency the flow reverses and D changes sign without a cycle, so the
  // orientation must agree along the whole run.
  {
    int prev = -1;
    for (int i = 0; i < n; ++i) {
      if (!usable(i)) {
        prev = -1;
        continue;
      }
      if (prev >= 0 && S[i].orientation != S[i - 1].orientation) prev = -1;
      if (std::abs(S[i].value) < noise_floor(sec, svals[i], cfg)) continue;
      if (prev >= 0 && sign_of(S[prev].value) * sign_of(S[i].value) < 0) {
        if (auto r = refine(svals[prev], svals[i], S[prev].value, S[i].value)) roots.push_back(*r);
      }
      prev = i;
    }
  }

  for (int i = 0; i + 1 < n; ++i) {
    if (!usable(i) || !usable(i + 1)) continue;
    const double a = svals[i], b = svals[i + 1];
    const double da = S[i].value, db = S[i + 1].value;
    if (S[i].orientation != S[i + 1].orientation) continue;
    if (sign_of(da) * sign_of(db) > 0) {
      // Tangency: D' changes sign while |D| has a local minimum that is
      // clearly above the noise on both sides.
      const double pa = S[i].slope - 1.0, pb = S[i + 1].slope - 1.0;
      if (sign_of(pa) * sign_of(pb) >= 0) continue;
      if (i == 0 || i + 2 >= n || !usable(i - 1) || !usable(i + 2)) continue;
      const double dl = S[i - 1].value, dr = S[i + 2].value;
      if (sign_of(dl) != sign_of(da) || sign_of(dr) != sign_of(da)) continue;
      if (std::abs(dl) < noise_floor(sec, svals[i - 1], cfg) ||
          std::abs(dr) < noise_floor(sec, svals[i + 2], cfg)) {
        continue;
      }
      // Orientation of the hump: |D| must decrease towards the candidate.
      if (sign_of(da) * pa > 0) continue;
      try {
        auto fp = [&](double x) { return D(x).slope - 1.0; };
        auto tol = [&](double lo, double hi) {
          return std::abs(hi - lo) <= 1e-13 * std::max(1.0, std::abs(lo));
        };
        std::uintmax_t iters = 200;
        const auto [lo, hi] = boost::math::tools::toms748_solve(fp, a, b, pa, pb, tol, iters);
        const double s = 0.5 * (lo + hi);
        const double dv = D(s).value;
        if (std::abs(dv) < std::max(cfg.touch_tol, noise_floor(sec, s, cfg))) roots.push_back(s);
      } catch (const EvalFailed&) {
        out.diagnostics.push_back("evaluation failed while refining tangency near s=" + fmt(a));
      }
    }
  }
  std::sort(roots.begin(), roots.end());
  std::vector<double> merged;
  for (double r : roots) {
    if (!merged.empty() && std::abs(r - merged.back()) < 1e-7 * std::max(1.0, std::abs(r))) {
      continue;
    }
    merged.push_back(r);
  }
  return merged;
}

double transversality(const PlanarField& X, const Section& sec) {
  const double L = sec.half_length();
  double q = std::numeric_limits<double>::infinity();
  for (double frac : {1e-4, 1e-3, 1e-2, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0}) {
    const Vec2 f = X(sec.point(frac * L));
    const double fn = norm(f);
    q = std::min(q, fn > 0.0 ? std::abs(dot(sec.normal(), f)) / fn : 0.0);
  }
  return q;
}

CycleRecord build_record(const PlanarField& X, const Section& sec, int index, double s,
                         const DetectConfig& cfg, std::vector<std::string>& diag) {
  CycleRecord r;
  r.section = sec;
  r.section_index = index;
  r.s_star = s;
  r.point = sec.point(s);
  // Follow a repelling cycle backwards in time so rounding does not grow
  // by the return slope over one period.
  const Reversed back(X);
  const DisplacementSample fwd = evaluate_displacement(X, sec, s, cfg.integrator);
  const DisplacementSample bwd = evaluate_displacement(back, sec, s, cfg.integrator);
  const bool reversed =
      bwd.ok() && (!fwd.ok() || std::abs(bwd.value) < std::abs(fwd.value) ||
                   (std::abs(fwd.value) <= cfg.root_tol && fwd.slope > 1.0));
  const PlanarField& F = reversed ? static_cast<const PlanarField&>(back) : X;
  const DisplacementSample& d = reversed ? bwd : fwd;
  if (!d.ok()) throw NoReturn("cycle at s=" + fmt(s) + " did not return: " + d.message);
  const double sign = reversed ? -1.0 : 1.0;
  r.orientation = reversed ? -d.orientation : d.orientation;
  r.residual = d.value;
  r.return_slope = reversed ? 1.0 / d.slope : d.slope;
  CrossingAttempt a = try_next_crossing(F, r.point, sec, d.orientation, cfg.integrator, true);
  if (!a.ok() || !a.trajectory) {
    throw NoReturn("cycle at s=" + fmt(s) + " did not return: " + a.message);
  }
  r.period = a.crossing.time;
  r.exponent = sign * path_integral(F, *a.trajectory, Integrand::kDivergence).value;
  r.hyperbolic = std::abs(r.exponent) > cfg.exponent_threshold;
  constexpr int kOrbitSamples = 256;
  r.orbit.reserve(kOrbitSamples);
  r.bbox_min = r.bbox_max = r.point;
  for (int k = 0; k < kOrbitSamples; ++k) {
    const double t = reversed ? r.period * (kOrbitSamples - k) / kOrbitSamples
                              : r.period * k / kOrbitSamples;
    r.orbit.push_back(k == 0 ? r.point : a.trajectory->point_at(t));
  }
  for (const auto& seg : a.trajectory->segments) {
    for (int k = 0; k <= 8; ++k) {
      const double t = std::min(seg.t0 + seg.dt * k / 8.0, r.period);
      const Vec2 p = seg.point_at(t);
      r.bbox_min = {std::min(r.bbox_min.x, p.x), std::min(r.bbox_min.y, p.y)};
      r.bbox_max = {std::max(r.bbox_max.x, p.x), std::max(r.bbox_max.y, p.y)};
    }
  }
  // A root where the ray passes through a focus has a vanishing orbit.
  const Vec2 extent = r.bbox_max - r.bbox_min;
  if (std::max(extent.x, extent.y) < 1e-6 * std::max(1.0, norm(r.point))) {
    throw NoReturn("root at s=" + fmt(s) + " collapses onto an equilibrium");
  }
  if (r.hyperbolic) {
    r.multiplicity_estimate = 1;
  } else {
    try {
      r.multiplicity_estimate = multiplicity_estimate(X, sec, s, cfg);
    } catch (const IllConditioned& e) {
      r.multiplicity_estimate = 0;
      diag.push_back(std::string("multiplicity fit ill-conditioned at s=") + fmt(s) + ": " +
                     e.what());
    }
  }
  return r;
}

// True when the orbit of `b` passes through a.point (same closed orbit).
bool same_cycle(const PlanarField& X, const CycleRecord& a, const CycleRecord& b,
                const IntegratorConfig& cfg) {
  if (std::abs(a.period - b.period) > 1e-5 * std::max(1.0, a.period)) return false;
  const Reversed back(X);
  const PlanarField& F = b.return_slope > 1.0 ? static_cast<const PlanarField&>(back) : X;
  Vec2 start = b.point;
  double elapsed = 0.0;
  for (int dir : {1, -1}) {
    start = b.point;
    elapsed = 0.0;
    for (int hop = 0; hop < 16; ++hop) {
      IntegratorConfig c = cfg;
      c.max_time = b.period * 1.01 - elapsed;
      if (!(c.max_time > 0.0)) break;
      const CrossingAttempt x = try_next_crossing(F, start, a.section, dir, c);
      if (!x.ok()) break;
      if (std::abs(x.crossing.s - a.s_star) < 1e-6 * std::max(1.0, std::abs(a.s_star))) {
        return true;
      }
      elapsed += x.crossing.time;
      start = x.crossing.point;
    }
  }
  return false;
}

std::vector<double> window_grid(double lo, double hi, int points) {
  std::vector<double> g;
  points = std::max(points, 3);
  for (int k = 0; k < points; ++k) g.push_back(lo + (hi - lo) * k / (points - 1));
  return g;
}

}  // namespace

Region Region::disk(Vec2 c, double r) {
  if (!(r > 0.0)) throw std::invalid_argument("disk radius must be > 0");
  return Region{c, 0.0, r};
}

Region Region::annulus(Vec2 c, double r0, double r1) {
  if (!(r0 > 0.0) || !(r1 > r0)) throw std::invalid_argument("annulus needs 0 < r0 < r1");
  return Region{c, r0, r1};
}

Region Region::parse(std::string_view spec) {
  const auto colon = spec.find(':');
  if (colon == std::string_view::npos) {
    throw std::invalid_argument("bad region '" + std::string(spec) + "'");
  }
  const auto kind = spec.substr(0, colon);
  const auto v = parse_numbers(spec.substr(colon + 1), spec);
  if (kind == "disk" && v.size() == 3) return disk({v[0], v[1]}, v[2]);
  if (kind == "annulus" && v.size() == 4) return annulus({v[0], v[1]}, v[2], v[3]);
  throw std::invalid_argument("bad region '" + std::string(spec) + "'");
}

std::string Region::to_string() const {
  std::ostringstream os;
  os.precision(17);
  if (is_annulus()) {
    os << "annulus:" << center.x << "," << center.y << "," << inner << "," << outer;
  } else {
    os << "disk:" << center.x << "," << center.y << "," << outer;
  }
  return os.str();
}

bool Region::contains(Vec2 p) const {
  const double r = norm(p - center);
  return r <= outer && r >= inner;
}

double Region::ray_exit(Vec2 base, Vec2 dir) const {
  const double dn = norm(dir);
  if (!(dn > 0.0)) return 0.0;
  const Vec2 d = (1.0 / dn) * dir;
  const Vec2 w = base - center;
  const double b = dot(d, w);
  const double c = dot(w, w) - outer * outer;
  const double disc = b * b - c;
  if (disc < 0.0) return 0.0;
  return std::max(0.0, -b + std::sqrt(disc));
}

int DetectionReport::pi_h() const {
  return static_cast<int>(
      std::count_if(cycles.begin(), cycles.end(), [](const CycleRecord& c) { return c.hyperbolic; }));
}

DisplacementSample evaluate_displacement(const PlanarField& X, const Section& section, double s,
                                         const IntegratorConfig& cfg) {
  DisplacementSample out;
  out.s = s;
  const Vec2 p0 = section.point(s);
  const Vec2 f0 = X(p0);
  const double fn0 = norm(f0);
  const double rate0 = dot(section.normal(), f0);
  if (!(fn0 > 0.0) || std::abs(rate0) / fn0 <= cfg.min_crossing_angle) {
    out.status = FlowStatus::kTangential;
    out.message = "flow tangent to section at start";
    return out;
  }
  out.orientation = rate0 > 0.0 ? 1 : -1;
  const CrossingAttempt a = try_next_crossing(X, p0, section, out.orientation, cfg);
  if (!a.ok()) {
    out.status = a.status;
    out.message = a.message;
    return out;
  }
  out.s_return = a.crossing.s;
  out.value = a.crossing.s - s;
  out.period = a.crossing.time;
  out.divergence_integral = a.crossing.divergence_integral;
  out.slope = std::exp(out.divergence_integral) * rate0 / dot(section.normal(), a.crossing.velocity);
  return out;
}

double displacement(const PlanarField& X, const Section& section, double s,
                    const IntegratorConfig& cfg) {
  if (!section.contains(s)) throw std::invalid_argument("displacement: s outside section");
  const DisplacementSample d = evaluate_displacement(X, section, s, cfg);
  if (!d.ok()) throw NoReturn("no return from s=" + fmt(s) + ": " + d.message);
  return d.value;
}

double displacement_alpha(const VectorField& X, double alpha, const Section& section, double s,
                          const IntegratorConfig& cfg) {
  return displacement(rotate(X, alpha), section, s, cfg);
}

std::vector<Equilibrium> find_equilibria(const PlanarField& X, const Region& region,
                                         const DetectConfig& cfg) {
  const double R = region.outer;
  const int n = std::max(2, cfg.equilibrium_seeds);
  std::vector<Vec2> seeds{region.center};
  for (const Vec2& a : cfg.anchors) seeds.push_back(a);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      seeds.push_back({region.center.x - R + 2.0 * R * (i + 0.5) / n,
                       region.center.y - R + 2.0 * R * (j + 0.5) / n});
    }
  }
  const double dedupe = 1e-5 * std::max(1.0, R);
  std::vector<Equilibrium> out;
  for (Vec2 z : seeds) {
    bool converged = false;
    for (int it = 0; it < 80; ++it) {
      const Vec2 f = X(z);
      const Mat2 J = X.jacobian(z);
      const double det = J.det();
      if (!std::isfinite(det) || det == 0.0) break;
      const Vec2 dz{(J(1, 1) * f.x - J(0, 1) * f.y) / det, (-J(1, 0) * f.x + J(0, 0) * f.y) / det};
      z = z - dz;
      if (!std::isfinite(z.x) || !std::isfinite(z.y) || norm(z - region.center) > 4.0 * R) break;
      if (norm(dz) <= 1e-14 * std::max(1.0, norm(z))) {
        converged = true;
        break;
      }
    }
    if (!converged) {
      const Vec2 f = X(z);
      const double scale = std::max(1.0, norm(z));
      converged = std::isfinite(norm(f)) && norm(f) <= 1e-11 * scale;
    }
    if (!converged || norm(z - region.center) > R) continue;
    const bool dup = std::any_of(out.begin(), out.end(),
                                 [&](const Equilibrium& e) { return norm(e.point - z) < dedupe; });
    if (!dup) out.push_back({z, X.jacobian(z)});
  }
  std::sort(out.begin(), out.end(), [](const Equilibrium& a, const Equilibrium& b) {
    return a.point.x != b.point.x ? a.point.x < b.point.x : a.point.y < b.point.y;
  });
  return out;
}

DetectionReport detect_cycles(const PlanarField& X, const Region& region, const DetectConfig& cfg) {
  cfg.integrator.validate();
  DetectionReport rep;
  rep.field = X.describe();
  rep.region = region;
  rep.equilibria = find_equilibria(X, region, cfg);

  if (!cfg.sections.empty()) {
    rep.sections = cfg.sections;
  } else {
    std::vector<Vec2> anchors;
    for (const auto& e : rep.equilibria) {
      if (e.jacobian.det() > 0.0) anchors.push_back(e.point);
    }
    for (const Vec2& a : cfg.anchors) anchors.push_back(a);
    if (anchors.empty()) {
      anchors.push_back(region.center);
      rep.diagnostics.push_back("no index +1 equilibrium in region; casting from the centre");
    }
    for (const Vec2& a : anchors) {
      double best_q = -1.0;
      Section best;
      for (int k = 0; k < std::max(1, cfg.ray_directions); ++k) {
        const double th = 2.0 * kPi * k / std::max(1, cfg.ray_directions);
        const Vec2 d{std::cos(th), std::sin(th)};
        const double L = region.ray_exit(a, d);
        if (!(L > 0.0)) continue;
        const Section sec(a, d, L);
        const double q = transversality(X, sec);
        if (q > best_q + 1e-12) {
          best_q = q;
          best = sec;
        }
      }
      if (best_q < 0.0) continue;
      if (best_q <= cfg.integrator.min_crossing_angle) {
        rep.diagnostics.push_back("no transversal ray from anchor (" + fmt(a.x) + ", " +
                                  fmt(a.y) + ")");
      }
      rep.sections.push_back(best);
    }
  }

  for (int k = 0; k < static_cast<int>(rep.sections.size()); ++k) {
    const Section& sec = rep.sections[k];
    const double L = sec.half_length();
    const int N = std::max(4, cfg.grid_points);
    std::vector<std::pair<double, char>> grid;
    for (int i = 1; i <= N; ++i) grid.push_back({L * i / N, 1});
    if (cfg.focus_refine_points > 0) {
      const double lo = std::log(cfg.focus_refine_min * L), hi = std::log(L / N);
      const int M = cfg.focus_refine_points;
      for (int i = 0; i < M; ++i) grid.push_back({std::exp(lo + (hi - lo) * i / M), 0});
    }
    std::sort(grid.begin(), grid.end());
    std::vector<double> svals;
    std::vector<char> uniform;
    for (const auto& [s, u] : grid) {
      if (!region.contains(sec.point(s))) continue;
      svals.push_back(s);
      uniform.push_back(u);
    }
    ScanOutput scan;
    const auto roots = scan_section(X, sec, svals, uniform, cfg, scan);
    rep.escaped_samples += scan.failed;
    for (auto& d : scan.diagnostics) rep.diagnostics.push_back("section " + std::to_string(k) + ": " + d);
    if (cfg.keep_plot_data) {
      PlotSeries ps;
      ps.section_index = k;
      for (const auto& d : scan.samples) {
        if (d.ok()) ps.samples.push_back({d.s, d.value});
      }
      rep.plot.push_back(std::move(ps));
    }
    for (double s : roots) {
      CycleRecord r;
      try {
        r = build_record(X, sec, k, s, cfg, rep.diagnostics);
      } catch (const NoReturn& e) {
        rep.diagnostics.push_back(e.what());
        continue;
      }
      const bool dup = std::any_of(rep.cycles.begin(), rep.cycles.end(), [&](const CycleRecord& c) {
        return (c.section_index == k && std::abs(c.s_star - s) < 1e-7 * std::max(1.0, s)) ||
               same_cycle(X, c, r, cfg.integrator);
      });
      if (!dup) rep.cycles.push_back(std::move(r));
    }
  }
  return rep;
}

int multiplicity_estimate(const PlanarField& X, const Section& section, double s_star,
                          const DetectConfig& cfg) {
  const DisplacementSample d0 = evaluate_displacement(X, section, s_star, cfg.integrator);
  if (!d0.ok()) throw IllConditioned("no return at the cycle point");
  if (std::abs(d0.divergence_integral) > cfg.exponent_threshold) return 1;

  double hw = cfg.multiplicity_halfwidth * std::max(1.0, std::abs(s_star));
  const double room = section.half_length() - std::abs(s_star);
  hw = std::min(hw, 0.9 * room);
  if (std::abs(s_star) > 0.0) hw = std::min(hw, 0.5 * std::abs(s_star));
  if (!(hw > 1e-8)) throw IllConditioned("stencil collapsed near the section end");

  const int m = std::max(7, cfg.multiplicity_points);
  constexpr int kDegree = 5;
  Eigen::MatrixXd A(m, kDegree + 1);
  Eigen::VectorXd b(m);
  for (int i = 0; i < m; ++i) {
    const double t = -1.0 + 2.0 * i / (m - 1);
    const DisplacementSample d = evaluate_displacement(X, section, s_star + hw * t, cfg.integrator);
    if (!d.ok()) throw IllConditioned("stencil evaluation failed: " + d.message);
    double p = 1.0;
    for (int k = 0; k <= kDegree; ++k, p *= t) A(i, k) = p;
    b(i) = d.value;
  }
  const Eigen::VectorXd c = A.colPivHouseholderQr().solve(b);
  const double cmax = c.cwiseAbs().maxCoeff();
  if (!(cmax > noise_floor(section, s_star, cfg))) {
    throw IllConditioned("displacement below noise on the whole stencil");
  }
  int order = -1;
  for (int k = 0; k <= kDegree; ++k) {
    if (std::abs(c(k)) >= 0.05 * cmax) {
      order = k;
      break;
    }
  }
  if (order <= 0) throw IllConditioned("fit does not vanish at the cycle point");
  return order;
}

std::vector<double> local_roots(const PlanarField& X, const Section& section, double lo, double hi,
                                int points, const DetectConfig& cfg) {
  lo = std::max(lo, -section.half_length());
  hi = std::min(hi, section.half_length());
  if (!(hi > lo)) return {};
  const auto grid = window_grid(lo, hi, points);
  ScanOutput scan;
  // Windows are too short for a period-annulus verdict.
  DetectConfig c = cfg;
  c.annulus_run = std::numeric_limits<int>::max();
  return scan_section(X, section, grid, std::vector<char>(grid.size(), 1), c, scan);
}

std::vector<DuffPoint> duff_probe(const VectorField& X, const CycleRecord& record,
                                  std::span<const double> alpha_grid, const DetectConfig& cfg) {
  const int n = static_cast<int>(alpha_grid.size());
  std::vector<DuffPoint> out(n);
  if (n == 0) return out;
  int start = 0;
  for (int i = 1; i < n; ++i) {
    if (std::abs(alpha_grid[i]) < std::abs(alpha_grid[start])) start = i;
  }
  std::vector<int> up, down;
  for (int i = 0; i < n; ++i) (alpha_grid[i] >= alpha_grid[start] ? up : down).push_back(i);
  std::sort(up.begin(), up.end(), [&](int a, int b) { return alpha_grid[a] < alpha_grid[b]; });
  std::sort(down.begin(), down.end(), [&](int a, int b) { return alpha_grid[a] > alpha_grid[b]; });

  const double w = cfg.duff_window * std::max(1.0, std::abs(record.s_star));
  for (const auto* branch : {&up, &down}) {
    double prev = record.s_star;
    double last_good = alpha_grid[start];
    for (int idx : *branch) {
      const double alpha = alpha_grid[idx];
      const VectorField Y = rotate(X, alpha);
      Section sec = record.section;
      std::vector<double> roots;
      bool evaluated = false;
      for (int attempt = 0; attempt < 2 && !evaluated; ++attempt) {
        const auto grid = window_grid(std::max(prev - w, -sec.half_length()),
                                      std::min(prev + w, sec.half_length()), cfg.duff_points);
        int ok = 0;
        for (double s : grid) ok += evaluate_displacement(Y, sec, s, cfg.integrator).ok() ? 1 : 0;
        if (ok >= 2) {
          roots = local_roots(Y, sec, prev - w, prev + w, cfg.duff_points, cfg);
          evaluated = true;
        } else {
          sec = Section(sec.base(), sec.direction(), 2.0 * sec.half_length());
        }
      }
      if (!evaluated) {
        throw LostTrack("continuation window failed at alpha=" + fmt(alpha), last_good);
      }
      DuffPoint& p = out[idx];
      p.alpha = alpha;
      p.roots = roots;
      if (alpha == 0.0) {
        p.s_star = record.s_star;
      } else if (!roots.empty()) {
        const double best = *std::min_element(roots.begin(), roots.end(), [&](double a, double b) {
          return std::abs(a - prev) < std::abs(b - prev);
        });
        if (std::abs(best - prev) <= w) p.s_star = best;
      }
      if (p.s_star) {
        prev = *p.s_star;
        last_good = alpha;
      }
    }
  }
  return out;
}

PathIntegral perko_alpha_derivative(const PlanarField& X, const Section& section, double s,
                                    const IntegratorConfig& cfg) {
  const Vec2 p0 = section.point(s);
  const int dir = dot(section.normal(), X(p0)) >= 0.0 ? 1 : -1;
  const CrossingAttempt a = try_next_crossing(X, p0, section, dir, cfg, true);
  if (!a.ok() || !a.trajectory) throw NoReturn("no return from s=" + fmt(s) + ": " + a.message);
  return path_integral(X, *a.trajectory, Integrand::kPerko);
}

double alpha_derivative_fd(const VectorField& X, const Section& section, double s, double step,
                           const IntegratorConfig& cfg) {
  if (!(step > 0.0)) throw std::invalid_argument("alpha_derivative_fd: step must be > 0");
  return (displacement_alpha(X, step, section, s, cfg) -
          displacement_alpha(X, -step, section, s, cfg)) /
         (2.0 * step);
}

}  // namespace cyclelab
