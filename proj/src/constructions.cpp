#include "cyclelab/constructions.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>
#include <tuple>

#include "cyclelab/errors.hpp"

namespace cyclelab {

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

double max_abs(const Mat2& J) {
  double m = 0.0;
  for (const auto& row : J.a) {
    for (double v : row) m = std::max(m, std::abs(v));
  }
  return m;
}

double cycle_extent(const DetectionReport& rep, Vec2 center) {
  double r = 0.0;
  for (const auto& c : rep.cycles) {
    for (const Vec2& p : c.orbit) r = std::max(r, norm(p - center));
  }
  return r;
}

bool all_hyperbolic(const DetectionReport& rep) {
  return std::all_of(rep.cycles.begin(), rep.cycles.end(),
                     [](const CycleRecord& c) { return c.hyperbolic; });
}

int hyperbolic_inside(const DetectionReport& rep, Vec2 center, double radius) {
  int n = 0;
  for (const auto& c : rep.cycles) {
    if (!c.hyperbolic) continue;
    bool inside = true;
    for (const Vec2& p : c.orbit) inside = inside && norm(p - center) < radius;
    n += inside ? 1 : 0;
  }
  return n;
}

// Every hyperbolic cycle of `before` has a counterpart in `after` on the same
// section with nearby s*.
bool originals_refound(const DetectionReport& before, const DetectionReport& after, double tol) {
  for (const auto& c : before.cycles) {
    if (!c.hyperbolic) continue;
    const bool found = std::any_of(after.cycles.begin(), after.cycles.end(), [&](const CycleRecord& d) {
      return d.section_index == c.section_index &&
             std::abs(d.s_star - c.s_star) <= tol * std::max(1.0, std::abs(c.s_star));
    });
    if (!found) return false;
  }
  return true;
}

Region shifted(const Region& r, Vec2 by) { return Region{r.center + by, r.inner, r.outer}; }

// Smallest ε in {0, 1e-9, 1e-8, …} making P_n(1,0)·Q_n(1,0) ≠ 0.
std::pair<VectorField, double> leading_nudge(const VectorField& X, double start = 0.0) {
  for (double eps = start; eps <= 1e-2 * (1 + 1e-9); eps = eps == 0.0 ? 1e-9 : eps * 10.0) {
    const VectorField Y = eps == 0.0 ? X : nudge_leading(X, eps);
    const auto [p, q] = leading_signs(Y);
    if (p * q != 0.0) return {Y, eps};
  }
  throw SearchExhausted("no leading nudge up to 1e-2 makes P_n(1,0)Q_n(1,0) nonzero");
}

double line_distance(Vec2 p, Vec2 dir) { return std::abs(wedge(p, dir)) / norm(dir); }

// Regular point with |Y(p)| small and the (a, b) direction away from the
// axes, on circles of radius 2·ball·2^k.
std::optional<Vec2> conditioned_regular_point(const VectorField& Y, double ball,
                                              const ConstructionConfig& cfg) {
  constexpr int kAngles = 48;
  for (int k = 0; k < 12; ++k) {
    const double R = 2.0 * ball * std::ldexp(1.0, k);
    std::optional<Vec2> best;
    double best_norm = std::numeric_limits<double>::infinity();
    for (int j = 0; j < kAngles; ++j) {
      const double phi = 2.0 * std::numbers::pi * j / kAngles;
      const Vec2 p{R * std::cos(phi), R * std::sin(phi)};
      const Vec2 f = Y(p);
      const double fn = norm(f);
      if (!(fn > 0.0) || !std::isfinite(fn)) continue;
      if (line_distance(p, f) <= ball) continue;
      if (2.0 * std::abs(f.x * f.y) / (fn * fn) < cfg.regular_point_conditioning) continue;
      if (fn < best_norm) {
        best_norm = fn;
        best = p;
      }
    }
    if (best) return best;
  }
  return std::nullopt;
}

std::vector<std::tuple<int, int, int>> nonlinear_slots(const VectorField& X, int degree,
                                                       const std::optional<std::uint64_t>& seed) {
  std::vector<std::tuple<int, int, int>> slots;
  for (int comp = 0; comp < 2; ++comp) {
    for (int i = 0; i <= degree; ++i) {
      for (int j = 0; i + j <= degree; ++j) {
        if (i + j >= 2) slots.emplace_back(comp, i, j);
      }
    }
  }
  (void)X;
  if (seed) {
    std::mt19937_64 rng(*seed);
    std::shuffle(slots.begin(), slots.end(), rng);
  }
  return slots;
}

// Stage 6: L₁ with a deterministic coefficient sweep when it is too small.
std::pair<VectorField, double> nondegenerate_L1(const VectorField& X, const ConstructionConfig& cfg,
                                                Stage& st) {
  double L1 = lyapunov_L1(X);
  st.set("L1_initial", L1);
  if (std::abs(L1) >= cfg.lyapunov_threshold) return {X, L1};
  for (const auto& [comp, i, j] : nonlinear_slots(X, X.degree(), cfg.seed)) {
    for (double sgn : {1.0, -1.0}) {
      Poly2 p = X.p(), q = X.q();
      (comp == 0 ? p : q).add_term(i, j, sgn * cfg.coefficient_kick);
      const VectorField Y(p, q);
      const double l = lyapunov_L1(Y);
      if (std::abs(l) >= cfg.lyapunov_threshold) {
        st.set("kick_component", comp).set("kick_i", i).set("kick_j", j).set("kick", sgn * cfg.coefficient_kick);
        return {Y, l};
      }
    }
  }
  throw StageFailure("lyapunov", "no single coefficient kick makes |L1| >= " + fmt(cfg.lyapunov_threshold));
}

double nearest_other_equilibrium(const VectorField& X, double radius, const DetectConfig& dcfg) {
  double d = std::numeric_limits<double>::infinity();
  for (const auto& e : find_equilibria(X, Region::disk({0, 0}, radius), dcfg)) {
    const double r = norm(e.point);
    if (r > 1e-6) d = std::min(d, r);
  }
  return std::isfinite(d) ? d : radius;
}

double frame_norm(const FocusFrame& F) {
  double s = 0.0;
  for (const auto& row : F.T.a) {
    for (double v : row) s += v * v;
  }
  return std::sqrt(s / 2.0);
}

struct HopfOutcome {
  VectorField field;
  double eta = 0.0;
  DetectionReport after;
  int attempts = 0;
};

// Adds η·x to the first component with sign(η) = −sign(L₁), halving |η| until
// a hyperbolic cycle appears near the origin and the old cycles survive.
std::optional<HopfOutcome> hopf_unfold(const VectorField& X, double L1, double r_target, double d_min,
                                       const Region& final_region, int required_pi_h,
                                       const ConstructionConfig& cfg, Stage& st) {
  const FocusFrame F = focus_frame(jacobian(X, {0, 0}));
  const double rn = r_target / frame_norm(F);
  double eta = -2.0 * L1 * rn * rn;
  st.set("r_target", r_target).set("eta_initial", eta).set("d_min", d_min);
  const double local_r = std::min(0.5 * d_min, 10.0 * r_target);
  for (int k = 0; k < cfg.hopf_attempts; ++k, eta *= 0.5) {
    const VectorField Y(X.p() + Poly2::monomial(1, 0, eta), X.q());
    const DetectionReport local = detect_cycles(Y, Region::disk({0, 0}, local_r), cfg.detect);
    if (local.pi_h() < 1) continue;
    DetectionReport after = detect_cycles(Y, final_region, cfg.detect);
    if (after.pi_h() >= required_pi_h) return HopfOutcome{Y, eta, std::move(after), k + 1};
  }
  return std::nullopt;
}

// Rays for Y from the four preimages of each anchor of X, kept inside the
// open quadrant: the axes carry folded copies of the same orbits.
std::vector<Section> quadrant_sections(const VectorField& Y, const DetectionReport& before,
                                       const Region& region, int directions) {
  std::vector<Section> out;
  directions = std::max(1, directions);
  for (const auto& xs : before.sections) {
    const Vec2 a = xs.base();
    if (!(a.x > 0.0 && a.y > 0.0)) continue;
    for (const Vec2 sg : {Vec2{1, 1}, Vec2{-1, 1}, Vec2{-1, -1}, Vec2{1, -1}}) {
      const Vec2 b{sg.x * std::sqrt(a.x), sg.y * std::sqrt(a.y)};
      double best_q = -1.0;
      Section best;
      for (int k = 0; k < directions; ++k) {
        const double th = 2.0 * std::numbers::pi * k / directions;
        const Vec2 d{std::cos(th), std::sin(th)};
        double L = region.ray_exit(b, d);
        if (d.x * b.x < 0.0) L = std::min(L, -0.99 * b.x / d.x);
        if (d.y * b.y < 0.0) L = std::min(L, -0.99 * b.y / d.y);
        if (!(L > 0.0)) continue;
        const Section sec(b, d, L);
        double q = std::numeric_limits<double>::infinity();
        for (int i = 1; i <= 20; ++i) {
          const Vec2 f = Y(sec.point(L * i / 20.0));
          const double fn = norm(f);
          q = std::min(q, fn > 0.0 ? std::abs(dot(sec.normal(), f)) / fn : 0.0);
        }
        if (q > best_q + 1e-12) {
          best_q = q;
          best = sec;
        }
      }
      if (best_q >= 0.0) out.push_back(best);
    }
  }
  return out;
}

}  // namespace

std::optional<double> Stage::get(const std::string& key) const {
  for (const auto& [k, v] : params) {
    if (k == key) return v;
  }
  return std::nullopt;
}

const Stage* ConstructionReport::stage(const std::string& name) const {
  for (const auto& s : stages) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

FocusFrame focus_frame(const Mat2& J) {
  const double scale = std::max(1.0, max_abs(J));
  const double tr = J.trace();
  if (std::abs(tr) > 1e-9 * scale) {
    throw NotMonodromicLinearType("trace " + fmt(tr) + " is not zero");
  }
  // Remove the rounding-level trace so the frame is exact for J₀ = J − tr/2·I.
  const double j11 = 0.5 * (J(0, 0) - J(1, 1));
  const double j12 = J(0, 1), j21 = J(1, 0);
  const double det = -j11 * j11 - j12 * j21;
  if (!(det > 0.0)) throw NotMonodromicLinearType("determinant " + fmt(det) + " is not positive");
  FocusFrame F;
  F.omega = std::sqrt(det);
  // Columns v, u of the eigenvector u + iv for iω, scaled to unit size.
  Vec2 u, v;
  if (std::abs(j12) >= std::abs(j21)) {
    u = {j12 / F.omega, -j11 / F.omega};
    v = {0.0, 1.0};
  } else {
    u = {j11 / F.omega, j21 / F.omega};
    v = {1.0, 0.0};
  }
  F.T(0, 0) = v.x;
  F.T(1, 0) = v.y;
  F.T(0, 1) = u.x;
  F.T(1, 1) = u.y;
  const double d = F.T.det();
  F.T_inv(0, 0) = F.T(1, 1) / d;
  F.T_inv(0, 1) = -F.T(0, 1) / d;
  F.T_inv(1, 0) = -F.T(1, 0) / d;
  F.T_inv(1, 1) = F.T(0, 0) / d;
  return F;
}

double lyapunov_L1(const VectorField& X) {
  const Mat2 J = jacobian(X, {0, 0});
  const Vec2 f0 = X({0, 0});
  if (norm(f0) > 1e-9 * std::max(1.0, max_abs(J))) {
    throw NotMonodromicLinearType("origin is not a singularity");
  }
  const FocusFrame F = focus_frame(J);
  const Poly2 xs = F.T(0, 0) * Poly2::x() + F.T(0, 1) * Poly2::y();
  const Poly2 ys = F.T(1, 0) * Poly2::x() + F.T(1, 1) * Poly2::y();
  const Poly2 ps = substitute(X.p(), xs, ys);
  const Poly2 qs = substitute(X.q(), xs, ys);
  const Poly2 f = F.T_inv(0, 0) * ps + F.T_inv(0, 1) * qs;
  const Poly2 g = F.T_inv(1, 0) * ps + F.T_inv(1, 1) * qs;
  const double w = F.omega;
  const double fxx = 2 * f.coeff(2, 0), fxy = f.coeff(1, 1), fyy = 2 * f.coeff(0, 2);
  const double gxx = 2 * g.coeff(2, 0), gxy = g.coeff(1, 1), gyy = 2 * g.coeff(0, 2);
  const double fxxx = 6 * f.coeff(3, 0), fxyy = 2 * f.coeff(1, 2);
  const double gxxy = 2 * g.coeff(2, 1), gyyy = 6 * g.coeff(0, 3);
  return (fxxx + fxyy + gxxy + gyyy +
          (fxy * (fxx + fyy) - gxy * (gxx + gyy) - fxx * gxx + fyy * gyy) / w) /
         16.0;
}

VectorField perturbed_product(const VectorField& Y, double a, double b, double eps, double delta) {
  const Poly2 l1 = a * Poly2::x() + (b + eps) * Poly2::y();
  const Poly2 l2 = (a + delta) * Poly2::x() + b * Poly2::y();
  return VectorField(l1 * Y.p(), l2 * Y.q());
}

std::pair<VectorField, Vec2> find_clear_regular_point(const VectorField& X, double ball_radius,
                                                      const ConstructionConfig&) {
  if (!(ball_radius > 0.0)) throw std::invalid_argument("ball_radius must be > 0");
  double eps_floor = 0.0;
  for (;;) {
    const auto [Y, eps] = leading_nudge(X, eps_floor);
    for (double x = std::max(2.0 * ball_radius, 1.0); x <= 1e9 * ball_radius; x *= 2.0) {
      const Vec2 p{x, 0.0};
      const Vec2 f = Y(p);
      if (norm(f) > 0.0 && line_distance(p, f) > ball_radius) return {Y, p};
    }
    // The nudged leading angle is too shallow to clear B; strengthen it.
    if (eps >= 1e-2) break;
    eps_floor = eps == 0.0 ? 1e-9 : eps * 10.0;
  }
  throw SearchExhausted("no regular point clears the ball up to x = 1e9·ball");
}

HyperbolizeResult hyperbolize(const VectorField& X, const DetectionReport& report,
                              const ConstructionConfig& cfg) {
  HyperbolizeResult out;
  out.field = X;
  ConstructionReport& rep = out.report;
  rep.construction = "hyperbolize";
  rep.input = X;
  rep.before = report;

  int h = 0, m_odd = 0, m_plus = 0, m_minus = 0, unknown = 0;
  Stage probe{"probe-even", {}, true, ""};
  DetectConfig dcfg = cfg.detect;
  dcfg.sections = report.sections;
  constexpr double kProbe = 1e-3;
  for (std::size_t i = 0; i < report.cycles.size(); ++i) {
    const auto& c = report.cycles[i];
    if (c.hyperbolic) {
      ++h;
      continue;
    }
    if (c.multiplicity_estimate % 2 == 1) {
      ++m_odd;
      continue;
    }
    if (c.multiplicity_estimate == 0) ++unknown;
    const double w = cfg.detect.duff_window * std::max(1.0, std::abs(c.s_star));
    auto roots_at = [&](double alpha) {
      return local_roots(rotate(X, alpha), c.section, c.s_star - w, c.s_star + w,
                         cfg.detect.duff_points, cfg.detect)
          .size();
    };
    const std::size_t rp = roots_at(kProbe), rm = roots_at(-kProbe);
    probe.set("cycle", static_cast<double>(i)).set("roots_plus", rp).set("roots_minus", rm);
    if (rp >= 2 && rp > rm) ++m_plus;
    else if (rm >= 2 && rm > rp) ++m_minus;
  }
  Stage cls{"classify", {}, true, ""};
  cls.set("h", h).set("m_odd", m_odd).set("m_plus", m_plus).set("m_minus", m_minus).set("unknown", unknown);
  rep.target_pi_h = h + m_odd + 2 * std::max(m_plus, m_minus);
  cls.set("target_pi_h", rep.target_pi_h);
  rep.stages.push_back(cls);
  if (!probe.params.empty()) rep.stages.push_back(probe);

  if (static_cast<int>(report.cycles.size()) == h) {
    rep.output = X;
    rep.after = report;
    rep.success = true;
    rep.stages.push_back(Stage{"search", {{"alpha", 0.0}}, true, "all cycles already hyperbolic"});
    return out;
  }

  const double first_sign = m_minus > m_plus ? -1.0 : 1.0;
  Stage search{"search", {}, false, ""};
  double best_alpha = 0.0;
  int best_pi_h = -1;
  for (double sgn : {first_sign, -first_sign}) {
    for (double mag = cfg.alpha_start; mag >= cfg.alpha_min; mag *= 0.5) {
      const double alpha = sgn * mag;
      const VectorField Y = rotate(X, alpha);
      DetectionReport after = detect_cycles(Y, report.region, dcfg);
      const int ph = after.pi_h();
      search.set("alpha", alpha).set("pi_h", ph);
      if (ph > best_pi_h) {
        best_pi_h = ph;
        best_alpha = alpha;
      }
      const bool all_hyp = ph == after.pi();
      if (ph >= rep.target_pi_h && all_hyp && originals_refound(report, after, cfg.match_tolerance)) {
        search.verified = true;
        search.note = "alpha=" + fmt(alpha);
        rep.stages.push_back(search);
        out.alpha = alpha;
        out.field = Y;
        rep.output = Y;
        rep.after = std::move(after);
        rep.success = true;
        return out;
      }
    }
  }
  throw NoImprovingRotation("no rotation reaches pi_h >= " + std::to_string(rep.target_pi_h) +
                                " (best " + std::to_string(best_pi_h) + ")",
                            best_alpha);
}

ConstructionReport degree_bump(const VectorField& Z, const ConstructionConfig& cfg) {
  ConstructionReport rep;
  rep.construction = "degree_bump";
  rep.input = Z;
  const int n = Z.degree();

  rep.before = detect_cycles(Z, cfg.region, cfg.detect);
  {
    Stage st{"precondition", {}, true, ""};
    st.set("pi", rep.before.pi()).set("pi_h", rep.before.pi_h());
    if (!all_hyperbolic(rep.before)) {
      throw StageFailure("precondition:hyperbolize-first",
                         "input has non-hyperbolic cycles; run hyperbolize first");
    }
    rep.stages.push_back(st);
  }
  rep.target_pi_h = rep.before.pi_h() + 1;

  // 1. B contains every cycle.
  const double extent = cycle_extent(rep.before, {0, 0});
  const double ball = extent > 0.0 ? cfg.ball_margin * extent : 1.0;
  rep.stages.push_back(Stage{"ball", {{"radius", ball}, {"cycle_extent", extent}}, true, ""});

  // 2. Regular point whose flow line misses B.
  BumpParameters bp;
  bp.ball_radius = ball;
  VectorField Y;
  {
    Stage st{"regular-point", {}, false, ""};
    double nudge = 0.0;
    std::tie(Y, nudge) = leading_nudge(Z);
    std::optional<Vec2> p = conditioned_regular_point(Y, ball, cfg);
    if (p) {
      st.note = "conditioned circle search";
    } else {
      try {
        auto [Yc, pc] = find_clear_regular_point(Z, ball, cfg);
        Y = Yc;
        p = pc;
      } catch (const SearchExhausted& e) {
        throw StageFailure("regular-point", e.what());
      }
      st.note = "x-axis search";
    }
    bp.p = *p;
    const Vec2 f = Y(bp.p);
    st.set("nudge", nudge).set("p.x", bp.p.x).set("p.y", bp.p.y);
    st.set("line_distance", line_distance(bp.p, f));
    st.verified = norm(f) > 0.0 && line_distance(bp.p, f) > ball;
    rep.stages.push_back(st);
    if (!st.verified) throw StageFailure("regular-point", "line through p meets B");
  }

  // 3. Translate p to the origin and multiply by ax + by.
  const VectorField Yt = translate(Y, bp.p);
  bp.a = -Yt.q().coeff(0, 0);
  bp.b = Yt.p().coeff(0, 0);
  const VectorField X = mul_linear(Yt, bp.a, bp.b);
  {
    Stage st{"multiply", {{"a", bp.a}, {"b", bp.b}, {"degree", X.degree()}}, X.degree() == n + 1, ""};
    rep.stages.push_back(st);
    if (!st.verified) throw StageFailure("multiply", "degree is not n+1");
  }

  // 4. det and trace of DX(0) vanish.
  {
    const Mat2 J = jacobian(X, {0, 0});
    const double det = J.det(), tr = J.trace();
    Stage st{"linear-zeros", {{"det", det}, {"trace", tr}}, std::abs(det) <= 1e-9 && std::abs(tr) <= 1e-9, ""};
    rep.stages.push_back(st);
    if (!st.verified) throw StageFailure("linear-zeros", "det=" + fmt(det) + " trace=" + fmt(tr));
  }

  // 5. ε = m·b, δ = m·a gives det = a²b²·m(2+m) > 0 and trace 0.
  const Vec2 ball_center = -bp.p;
  VectorField Xed;
  {
    Stage st{"eps-delta", {}, false, ""};
    for (double m = cfg.eps_start; m >= cfg.eps_min; m *= 0.5) {
      const VectorField cand = perturbed_product(Yt, bp.a, bp.b, m * bp.b, m * bp.a);
      const Mat2 J = jacobian(cand, {0, 0});
      st.set("m", m).set("det", J.det());
      if (!(J.det() > 0.0)) continue;
      const DetectionReport inB = detect_cycles(cand, Region::disk(ball_center, ball), cfg.detect);
      const int kept = hyperbolic_inside(inB, ball_center, ball);
      st.set("pi_h_in_B", kept);
      if (kept >= rep.before.pi_h()) {
        Xed = cand;
        bp.eps = m * bp.b;
        bp.delta = m * bp.a;
        st.verified = true;
        break;
      }
    }
    st.set("eps", bp.eps).set("delta", bp.delta);
    rep.stages.push_back(st);
    if (!st.verified) throw StageFailure("eps-delta", "no eps, delta keeps the cycles in B");
  }

  // 6. First Lyapunov constant.
  {
    Stage st{"lyapunov", {}, false, ""};
    std::tie(Xed, bp.L1) = nondegenerate_L1(Xed, cfg, st);
    st.set("L1", bp.L1);
    st.verified = true;
    rep.stages.push_back(st);
  }

  // 7. Hopf unfolding; 8. final detection.
  {
    Stage st{"hopf", {}, false, ""};
    const double reach = norm(bp.p) + ball;
    const double d_min = nearest_other_equilibrium(Xed, reach, cfg.detect);
    const Region final_region = Region::disk(0.5 * ball_center, 1.02 * (0.5 * norm(bp.p) + ball));
    auto res = hopf_unfold(Xed, bp.L1, 0.1 * d_min, d_min, final_region, rep.target_pi_h, cfg, st);
    if (!res) {
      rep.stages.push_back(st);
      throw StageFailure("hopf", "no eta produced a Hopf cycle while keeping the others");
    }
    bp.eta = res->eta;
    st.set("eta", bp.eta).set("attempts", res->attempts).set("sign_product", (bp.eta > 0 ? 1 : -1) * (bp.L1 > 0 ? 1 : -1));
    st.verified = bp.eta * bp.L1 < 0.0;
    rep.stages.push_back(st);
    rep.output = res->field;
    rep.after = std::move(res->after);
  }
  const bool deg_ok = rep.output.degree() == n + 1;
  rep.success = deg_ok && rep.after.pi_h() >= rep.target_pi_h;
  rep.stages.push_back(Stage{"final",
                             {{"degree", rep.output.degree()}, {"pi_h", rep.after.pi_h()},
                              {"target_pi_h", rep.target_pi_h}},
                             rep.success,
                             ""});
  rep.bump = bp;
  if (!rep.success) throw StageFailure("final", "pi_h or degree check failed");
  return rep;
}

ConstructionReport radial_bump(const VectorField& X0, const ConstructionConfig& cfg) {
  ConstructionReport rep;
  rep.construction = "radial_bump";
  rep.input = X0;
  const int n = X0.degree();

  VectorField X = X0;
  Region region = cfg.region;
  DetectionReport before = detect_cycles(X, region, cfg.detect);
  {
    // Move the origin off every cycle and off the equilibria of X.
    Stage st{"translate", {}, true, ""};
    bool clear = norm(X({0, 0})) > 1e-6;
    Vec2 lo{1e300, 1e300}, hi{-1e300, -1e300};
    for (const auto& c : before.cycles) {
      const Vec2 pad = 0.1 * (c.bbox_max - c.bbox_min);
      if (c.bbox_min.x - pad.x <= 0 && c.bbox_max.x + pad.x >= 0 && c.bbox_min.y - pad.y <= 0 &&
          c.bbox_max.y + pad.y >= 0) {
        clear = false;
      }
      lo = {std::min(lo.x, c.bbox_min.x), std::min(lo.y, c.bbox_min.y)};
      hi = {std::max(hi.x, c.bbox_max.x), std::max(hi.y, c.bbox_max.y)};
    }
    Vec2 q{0, 0};
    if (!clear) {
      const double w = before.cycles.empty() ? 1.0 : hi.x - lo.x;
      const double cy = before.cycles.empty() ? 0.0 : 0.5 * (lo.y + hi.y);
      q = {(before.cycles.empty() ? 0.0 : hi.x) + std::max(1.0, 0.5 * w), cy};
      X = translate(X, q);
      region = shifted(region, -q);
      // Keep the new origin inside the detection region.
      region.outer = std::max(region.outer, norm(region.center) + 0.25 * region.outer);
      before = detect_cycles(X, region, cfg.detect);
    }
    st.set("q.x", q.x).set("q.y", q.y);
    rep.stages.push_back(st);
  }
  rep.before = before;
  rep.target_pi_h = before.pi_h() + 1;
  const Vec2 X0val = X({0, 0});
  const double speed0 = norm(X0val);
  if (!(speed0 > 0.0)) throw StageFailure("translate", "origin is an equilibrium of X");

  // Cycles of r²X are the cycles of X.
  const Poly2 r2 = Poly2::monomial(2, 0) + Poly2::monomial(0, 2);
  const VectorField Y = r2 * X;
  DetectConfig same = cfg.detect;
  same.sections = before.sections;
  {
    const DetectionReport ry = detect_cycles(Y, region, same);
    double worst = 0.0;
    bool matched = ry.pi() >= before.pi();
    for (const auto& c : before.cycles) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& d : ry.cycles) {
        if (d.section_index == c.section_index) best = std::min(best, std::abs(d.s_star - c.s_star));
      }
      worst = std::max(worst, best);
    }
    matched = matched && worst <= 1e-8;
    const Mat2 J = jacobian(Y, {0, 0});
    Stage st{"radial", {{"degree", Y.degree()}, {"max_s_shift", before.cycles.empty() ? 0.0 : worst}, {"det0", J.det()}},
             matched && Y.degree() == n + 2, ""};
    rep.stages.push_back(st);
    if (!st.verified) throw StageFailure("radial", "cycles of (x²+y²)X differ from those of X");
  }

  // Rotation term ω(−y, x) makes the origin a monodromic weak focus.
  VectorField Yw;
  double omega = 0.1 * speed0;
  {
    Stage st{"rotation-term", {}, false, ""};
    for (int k = 0; k < 12; ++k, omega *= 0.5) {
      const VectorField cand(Y.p() - omega * Poly2::y(), Y.q() + omega * Poly2::x());
      const DetectionReport rc = detect_cycles(cand, region, same);
      st.set("omega", omega).set("pi_h", rc.pi_h());
      if (rc.pi_h() >= before.pi_h() && originals_refound(before, rc, cfg.match_tolerance)) {
        Yw = cand;
        st.verified = true;
        break;
      }
    }
    rep.stages.push_back(st);
    if (!st.verified) throw StageFailure("rotation-term", "cycles of X did not persist");
  }

  double L1 = 0.0;
  {
    Stage st{"lyapunov", {}, false, ""};
    st.set("div_X0", divergence(X)(0, 0));
    std::tie(Yw, L1) = nondegenerate_L1(Yw, cfg, st);
    st.set("L1", L1);
    st.verified = true;
    rep.stages.push_back(st);
  }

  {
    Stage st{"hopf", {}, false, ""};
    const double r_target = 0.1 * omega / speed0;
    const double reach = region.outer + norm(region.center);
    const double d_min = nearest_other_equilibrium(Yw, reach, cfg.detect);
    Region final_region = region;
    if (!final_region.contains({0, 0}) || final_region.is_annulus()) {
      final_region = Region::disk(region.center, std::max(region.outer, norm(region.center) + 5 * r_target));
    }
    auto res = hopf_unfold(Yw, L1, std::min(r_target, 0.1 * d_min), d_min, final_region,
                           rep.target_pi_h, cfg, st);
    if (!res) {
      rep.stages.push_back(st);
      throw StageFailure("hopf", "no unfolding produced a Hopf cycle while keeping the others");
    }
    st.set("eta", res->eta).set("attempts", res->attempts);
    st.verified = res->eta * L1 < 0.0;
    rep.stages.push_back(st);
    rep.output = res->field;
    rep.after = std::move(res->after);
  }
  rep.success = rep.output.degree() == n + 2 && rep.after.pi_h() >= rep.target_pi_h;
  rep.stages.push_back(Stage{"final",
                             {{"degree", rep.output.degree()}, {"pi_h", rep.after.pi_h()},
                              {"target_pi_h", rep.target_pi_h}},
                             rep.success,
                             ""});
  if (!rep.success) throw StageFailure("final", "pi_h or degree check failed");
  return rep;
}

ConstructionReport quadrant_transform(const VectorField& X0, const ConstructionConfig& cfg) {
  ConstructionReport rep;
  rep.construction = "quadrant_transform";
  rep.input = X0;
  const int n = X0.degree();

  const DetectionReport raw = detect_cycles(X0, cfg.region, cfg.detect);
  if (raw.cycles.empty()) throw StageFailure("translate", "input has no detected cycles");
  Vec2 lo{1e300, 1e300}, hi{-1e300, -1e300};
  for (const auto& c : raw.cycles) {
    lo = {std::min(lo.x, c.bbox_min.x), std::min(lo.y, c.bbox_min.y)};
    hi = {std::max(hi.x, c.bbox_max.x), std::max(hi.y, c.bbox_max.y)};
  }
  const double size = std::max(hi.x - lo.x, hi.y - lo.y);
  const double margin = std::max(1.0, 0.5 * size);
  // New coordinates z' = z − q put the cycle bounding box at (margin, margin).
  const Vec2 q = lo - Vec2{margin, margin};
  const VectorField X = (q.x == 0.0 && q.y == 0.0) ? X0 : translate(X0, q);
  rep.before = detect_cycles(X, shifted(cfg.region, -q), cfg.detect);
  {
    Stage st{"translate", {{"q.x", q.x}, {"q.y", q.y}, {"margin", margin}}, true, ""};
    rep.stages.push_back(st);
  }
  double max_x = 0.0, max_y = 0.0;
  for (const auto& c : rep.before.cycles) {
    if (!(c.bbox_min.x > 0.0 && c.bbox_min.y > 0.0)) {
      throw CycleNotInQuadrant("cycle through (" + fmt(c.point.x) + ", " + fmt(c.point.y) +
                               ") leaves the open first quadrant");
    }
    max_x = std::max(max_x, c.bbox_max.x);
    max_y = std::max(max_y, c.bbox_max.y);
  }
  rep.target_pi_h = 4 * rep.before.pi_h();

  // Y(u, v) = (v·P(u², v²), u·Q(u², v²)).
  const Poly2 u2 = Poly2::monomial(2, 0), v2 = Poly2::monomial(0, 2);
  const VectorField Y(Poly2::y() * substitute(X.p(), u2, v2), Poly2::x() * substitute(X.q(), u2, v2));
  {
    Stage st{"substitute", {{"degree", Y.degree()}}, Y.degree() == 2 * n + 1, ""};
    rep.stages.push_back(st);
    if (!st.verified) throw StageFailure("substitute", "degree is not 2n+1");
  }
  rep.output = Y;
  const double R = 1.1 * std::sqrt(max_x + max_y);
  const Region yregion = Region::disk({0, 0}, R);
  DetectConfig ycfg = cfg.detect;
  ycfg.sections = quadrant_sections(Y, rep.before, yregion, cfg.detect.ray_directions);
  rep.after = detect_cycles(Y, yregion, ycfg);

  // Quadrant matching: (u², v²) of each Y-cycle lies on a cycle of X.
  std::vector<int> per_quadrant(4, 0);
  bool all_matched = true;
  for (int i = 0; i < rep.after.pi(); ++i) {
    const auto& c = rep.after.cycles[i];
    QuadrantMatch m;
    m.cycle = i;
    m.quadrant = c.point.x > 0 ? (c.point.y > 0 ? 1 : 4) : (c.point.y > 0 ? 2 : 3);
    const Vec2 z{c.point.x * c.point.x, c.point.y * c.point.y};
    double best = std::numeric_limits<double>::infinity();
    for (int j = 0; j < rep.before.pi(); ++j) {
      const auto& orbit = rep.before.cycles[j].orbit;
      for (std::size_t k = 0; k < orbit.size(); ++k) {
        const Vec2 a = orbit[k], b = orbit[(k + 1) % orbit.size()];
        const Vec2 ab = b - a;
        const double t = std::clamp(dot(z - a, ab) / std::max(dot(ab, ab), 1e-300), 0.0, 1.0);
        const double d = norm(z - (a + t * ab));
        if (d < best) {
          best = d;
          m.source = j;
        }
      }
    }
    // Chord error of the sampled orbit bounds the match distance.
    if (best > 1e-2 * std::max(1.0, norm(z))) m.source = -1;
    if (m.source < 0 || !c.hyperbolic) all_matched = false;
    ++per_quadrant[m.quadrant - 1];
    rep.quadrants.push_back(m);
  }
  Stage st{"quadrants", {}, false, ""};
  for (int k = 0; k < 4; ++k) st.set("q" + std::to_string(k + 1), per_quadrant[k]);
  st.set("pi_h", rep.after.pi_h());
  const bool each = std::all_of(per_quadrant.begin(), per_quadrant.end(),
                                [&](int c) { return c == rep.before.pi(); });
  st.verified = each && all_matched;
  rep.stages.push_back(st);
  rep.success = st.verified && rep.after.pi_h() >= rep.target_pi_h;
  if (!rep.success) throw StageFailure("quadrants", "quadrant copies incomplete or non-hyperbolic");
  return rep;
}

}  // namespace cyclelab
