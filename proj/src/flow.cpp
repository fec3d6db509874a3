#include "cyclelab/flow.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cyclelab/errors.hpp"

namespace cyclelab {

namespace {

// Dormand–Prince 5(4) tableau with Hairer's dense-output coefficients.
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                 a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                 a64 = 49.0 / 176, a65 = -5103.0 / 18656;
constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192,
                 a75 = -2187.0 / 6784, a76 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                 e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
constexpr double d1 = -12715105075.0 / 11282082432, d3 = 87487479700.0 / 32700410799,
                 d4 = -10690763975.0 / 1880347072, d5 = 701980252875.0 / 199316789632,
                 d6 = -1453857185.0 / 822651844, d7 = 69997945.0 / 29380423;

FlowState rhs(const PlanarField& X, const FlowState& y) {
  const Vec2 z{y[0], y[1]};
  const Vec2 f = X(z);
  return {f.x, f.y, X.divergence(z)};
}

FlowState axpy(const FlowState& y, double h, std::initializer_list<std::pair<double, const FlowState*>> terms) {
  FlowState out = y;
  for (const auto& [c, k] : terms) {
    for (int i = 0; i < 3; ++i) out[i] += h * c * (*k)[i];
  }
  return out;
}

bool finite(const FlowState& y) {
  return std::isfinite(y[0]) && std::isfinite(y[1]) && std::isfinite(y[2]);
}

struct StepResult {
  FlowState y1;
  FlowState k7;
  double err = 0.0;
  DenseSegment seg;
};

StepResult dopri_step(const PlanarField& X, double t, const FlowState& y, const FlowState& k1,
                      double h, const IntegratorConfig& cfg) {
  const FlowState k2 = rhs(X, axpy(y, h, {{a21, &k1}}));
  const FlowState k3 = rhs(X, axpy(y, h, {{a31, &k1}, {a32, &k2}}));
  const FlowState k4 = rhs(X, axpy(y, h, {{a41, &k1}, {a42, &k2}, {a43, &k3}}));
  const FlowState k5 = rhs(X, axpy(y, h, {{a51, &k1}, {a52, &k2}, {a53, &k3}, {a54, &k4}}));
  const FlowState k6 =
      rhs(X, axpy(y, h, {{a61, &k1}, {a62, &k2}, {a63, &k3}, {a64, &k4}, {a65, &k5}}));
  StepResult r;
  r.y1 = axpy(y, h, {{a71, &k1}, {a73, &k3}, {a74, &k4}, {a75, &k5}, {a76, &k6}});
  r.k7 = rhs(X, r.y1);
  double acc = 0.0;
  for (int i = 0; i < 3; ++i) {
    const double e = h * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] +
                          e7 * r.k7[i]);
    const double sc = cfg.abs_tol + cfg.rel_tol * std::max(std::abs(y[i]), std::abs(r.y1[i]));
    acc += (e / sc) * (e / sc);
  }
  r.err = std::sqrt(acc / 3.0);
  r.seg.t0 = t;
  r.seg.dt = h;
  for (int i = 0; i < 3; ++i) {
    const double ydiff = r.y1[i] - y[i];
    const double bspl = h * k1[i] - ydiff;
    r.seg.coeffs[0][i] = y[i];
    r.seg.coeffs[1][i] = ydiff;
    r.seg.coeffs[2][i] = bspl;
    r.seg.coeffs[3][i] = ydiff - h * r.k7[i] - bspl;
    r.seg.coeffs[4][i] = h * (d1 * k1[i] + d3 * k3[i] + d4 * k4[i] + d5 * k5[i] +
                              d6 * k6[i] + d7 * r.k7[i]);
  }
  return r;
}

double initial_step(const PlanarField& X, const FlowState& y, const FlowState& f,
                    const IntegratorConfig& cfg) {
  double dny = 0.0, dnf = 0.0;
  for (int i = 0; i < 3; ++i) {
    const double sk = cfg.abs_tol + cfg.rel_tol * std::abs(y[i]);
    dny += (y[i] / sk) * (y[i] / sk);
    dnf += (f[i] / sk) * (f[i] / sk);
  }
  double h = (dnf <= 1e-10 || dny <= 1e-10) ? 1e-6 : 0.01 * std::sqrt(dny / dnf);
  h = std::min(h, cfg.max_step);
  const FlowState y1 = axpy(y, h, {{1.0, &f}});
  const FlowState f1 = rhs(X, y1);
  double der2 = 0.0;
  for (int i = 0; i < 3; ++i) {
    const double sk = cfg.abs_tol + cfg.rel_tol * std::abs(y[i]);
    der2 += ((f1[i] - f[i]) / sk) * ((f1[i] - f[i]) / sk);
  }
  der2 = std::sqrt(der2) / h;
  const double der12 = std::max(std::abs(der2), std::sqrt(dnf));
  const double h1 = der12 <= 1e-15 ? std::max(1e-6, h * 1e-3) : std::pow(0.01 / der12, 0.2);
  return std::min({100.0 * h, h1, cfg.max_step});
}

struct DriveResult {
  FlowStatus status = FlowStatus::kOk;
  std::string message;
};

// Runs accepted steps until the observer returns false, t reaches
// cfg.max_time, or an error occurs. Observer: bool(const DenseSegment&,
// const FlowState& y1, const FlowState& f1).
template <class Observer>
DriveResult drive(const PlanarField& X, Vec2 x0, const IntegratorConfig& cfg, Observer&& obs) {
  FlowState y{x0.x, x0.y, 0.0};
  FlowState k1 = rhs(X, y);
  if (!finite(k1)) return {FlowStatus::kBlowUp, "non-finite field value at start"};
  double t = 0.0;
  double h = initial_step(X, y, k1, cfg);
  int steps = 0;
  int rejects_in_row = 0;
  while (t < cfg.max_time) {
    if (steps >= cfg.max_steps) {
      return {FlowStatus::kStepLimit, "step limit " + std::to_string(cfg.max_steps) + " exceeded"};
    }
    h = std::min({h, cfg.max_step, cfg.max_time - t});
    if (h <= std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(t)) * 16) {
      return {FlowStatus::kBlowUp, "step size underflow at t = " + std::to_string(t)};
    }
    StepResult r = dopri_step(X, t, y, k1, h, cfg);
    ++steps;
    if (!finite(r.y1) || !finite(r.k7) || !(r.err <= 1.0)) {
      const double fac = finite(r.y1) && std::isfinite(r.err)
                             ? std::max(0.2, 0.9 * std::pow(r.err, -0.2))
                             : 0.2;
      h *= std::min(fac, 0.9);
      if (++rejects_in_row > 60) {
        return {FlowStatus::kBlowUp, "repeated step rejection at t = " + std::to_string(t)};
      }
      continue;
    }
    rejects_in_row = 0;
    const bool last = (t + h >= cfg.max_time);
    t = last ? cfg.max_time : t + h;
    y = r.y1;
    k1 = r.k7;
    if (std::hypot(y[0], y[1]) > cfg.blowup_bound) {
      return {FlowStatus::kBlowUp, "state norm exceeded " + std::to_string(cfg.blowup_bound)};
    }
    if (!obs(r.seg, y, k1)) return {FlowStatus::kOk, {}};
    const double fac = r.err == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(r.err, -0.2), 0.2, 5.0);
    h *= fac;
  }
  return {FlowStatus::kMaxTime, "max_time reached"};
}

// Values of the section offset g(t) = direction·n·(z(t) − base).
double signed_offset(const Section& sec, int direction, Vec2 z) {
  return direction * sec.offset(z);
}

}  // namespace

void IntegratorConfig::validate() const {
  if (!(rel_tol > 0.0) || !(abs_tol > 0.0) || !(max_step > 0.0) || !(max_time > 0.0) ||
      max_steps <= 0 || !(blowup_bound > 0.0)) {
    throw std::invalid_argument("IntegratorConfig: tolerances, limits must be positive");
  }
}

IntegratorConfig IntegratorConfig::halved() const {
  IntegratorConfig c = *this;
  c.rel_tol *= 0.5;
  c.abs_tol *= 0.5;
  return c;
}

const char* to_string(FlowStatus s) {
  switch (s) {
    case FlowStatus::kOk: return "ok";
    case FlowStatus::kMaxTime: return "max_time";
    case FlowStatus::kStepLimit: return "step_limit";
    case FlowStatus::kBlowUp: return "blow_up";
    case FlowStatus::kTangential: return "tangential";
  }
  return "?";
}

FlowState DenseSegment::at(double t) const {
  const double th = dt == 0.0 ? 0.0 : (t - t0) / dt;
  const double th1 = 1.0 - th;
  FlowState out;
  for (int i = 0; i < 3; ++i) {
    out[i] = coeffs[0][i] +
             th * (coeffs[1][i] + th1 * (coeffs[2][i] + th * (coeffs[3][i] + th1 * coeffs[4][i])));
  }
  return out;
}

Vec2 Trajectory::point_at(double t) const {
  if (segments.empty()) return points.empty() ? Vec2{} : points.front();
  auto it = std::upper_bound(segments.begin(), segments.end(), t,
                             [](double v, const DenseSegment& s) { return v < s.t0; });
  if (it != segments.begin()) --it;
  return it->point_at(t);
}

Trajectory integrate(const PlanarField& X, Vec2 x0, const IntegratorConfig& cfg) {
  cfg.validate();
  Trajectory traj;
  auto& div = traj.functionals["divergence"];
  traj.times.push_back(0.0);
  traj.points.push_back(x0);
  div.push_back(0.0);
  const DriveResult res = drive(X, x0, cfg, [&](const DenseSegment& seg, const FlowState& y1, const FlowState&) {
    traj.segments.push_back(seg);
    traj.times.push_back(seg.t1());
    traj.points.push_back({y1[0], y1[1]});
    div.push_back(y1[2]);
    return true;
  });
  switch (res.status) {
    case FlowStatus::kMaxTime:
    case FlowStatus::kOk:
      break;
    case FlowStatus::kStepLimit:
      throw StepLimitExceeded(res.message);
    default:
      throw BlowUp(res.message);
  }
  // Clamp the accumulated floating sum onto the requested end time.
  if (!traj.times.empty()) traj.times.back() = cfg.max_time;
  return traj;
}

CrossingAttempt try_next_crossing(const PlanarField& X, Vec2 start, const Section& section,
                                  int direction, const IntegratorConfig& cfg,
                                  bool keep_trajectory) {
  cfg.validate();
  direction = direction >= 0 ? 1 : -1;
  CrossingAttempt out;
  Trajectory traj;
  if (keep_trajectory) {
    traj.times.push_back(0.0);
    traj.points.push_back(start);
    traj.functionals["divergence"].push_back(0.0);
  }
  bool found = false;
  // A start lying on the section line must first leave it before a crossing
  // counts.
  const double start_scale = std::max(1.0, norm(start - section.base()));
  bool armed = std::abs(section.offset(start)) > 1e-12 * start_scale;
  DenseSegment hit;
  FlowState y_start_of_hit{};

  auto observer = [&](const DenseSegment& seg, const FlowState& y1, const FlowState&) {
    const FlowState y0 = seg.coeffs[0];
    const double g0 = signed_offset(section, direction, {y0[0], y0[1]});
    const double g1 = signed_offset(section, direction, {y1[0], y1[1]});
    if (!armed) {
      if (std::abs(g1) > 1e-12 * start_scale) armed = true;
    } else if (g0 < 0.0 && g1 >= 0.0) {
      // Locate the root of g on the interpolant by bisection.
      double lo = seg.t0, hi = seg.t1();
      for (int it = 0; it < 60 && hi - lo > 1e-15 * std::max(1.0, std::abs(hi)); ++it) {
        const double mid = 0.5 * (lo + hi);
        const double gm = signed_offset(section, direction, seg.point_at(mid));
        (gm < 0.0 ? lo : hi) = mid;
      }
      const double s = section.coordinate(seg.point_at(hi));
      if (section.contains(s)) {
        found = true;
        hit = seg;
        hit.dt = hi - seg.t0;  // provisional crossing time
        y_start_of_hit = y0;
        if (keep_trajectory) traj.segments.push_back(seg);
        return false;
      }
    }
    if (keep_trajectory) {
      traj.segments.push_back(seg);
      traj.times.push_back(seg.t1());
      traj.points.push_back({y1[0], y1[1]});
      traj.functionals["divergence"].push_back(y1[2]);
    }
    return true;
  };

  const DriveResult res = drive(X, start, cfg, observer);
  if (!found) {
    out.status = res.status == FlowStatus::kOk ? FlowStatus::kMaxTime : res.status;
    out.message = res.status == FlowStatus::kMaxTime ? "no crossing before max_time" : res.message;
    return out;
  }

  // Polish: re-take the step from the segment start with size tau so the
  // crossing point carries full step accuracy, Newton-correcting tau.
  double tau = hit.dt;
  const double t0 = hit.t0;
  const FlowState k1 = rhs(X, y_start_of_hit);
  FlowState yc = hit.at(t0 + tau);
  for (int it = 0; it < 6; ++it) {
    if (tau > 0.0) yc = dopri_step(X, t0, y_start_of_hit, k1, tau, cfg).y1;
    else yc = y_start_of_hit;
    const Vec2 z{yc[0], yc[1]};
    const double g = signed_offset(section, direction, z);
    const double gdot = direction * dot(section.normal(), X(z));
    if (gdot == 0.0) break;
    const double dtau = -g / gdot;
    tau += dtau;
    if (std::abs(g) < 1e-14 * std::max(1.0, norm(z - section.base()))) break;
  }
  if (tau > 0.0) yc = dopri_step(X, t0, y_start_of_hit, k1, tau, cfg).y1;
  const Vec2 z{yc[0], yc[1]};
  const Vec2 f = X(z);
  const double fn = norm(f);
  if (!(fn > 0.0) || std::abs(dot(section.normal(), f)) / fn <= cfg.min_crossing_angle) {
    out.status = FlowStatus::kTangential;
    out.message = "flow-section angle below threshold at crossing";
    return out;
  }
  out.crossing.point = z;
  out.crossing.time = t0 + tau;
  out.crossing.s = section.coordinate(z);
  out.crossing.divergence_integral = yc[2];
  out.crossing.velocity = f;
  if (keep_trajectory) {
    traj.times.push_back(out.crossing.time);
    traj.points.push_back(z);
    traj.functionals["divergence"].push_back(yc[2]);
    out.trajectory = std::move(traj);
  }
  return out;
}

Crossing next_crossing(const PlanarField& X, Vec2 start, const Section& section, int direction,
                       const IntegratorConfig& cfg) {
  CrossingAttempt a = try_next_crossing(X, start, section, direction, cfg);
  switch (a.status) {
    case FlowStatus::kOk: return a.crossing;
    case FlowStatus::kMaxTime: throw NoCrossing(a.message);
    case FlowStatus::kTangential: throw TangentialCrossing(a.message);
    case FlowStatus::kStepLimit: throw StepLimitExceeded(a.message);
    case FlowStatus::kBlowUp: throw BlowUp(a.message);
  }
  throw NoCrossing(a.message);
}

namespace {

constexpr std::array<double, 5> kGaussNodes = {
    -0.9061798459386640, -0.5384693101056831, 0.0, 0.5384693101056831, 0.9061798459386640};
constexpr std::array<double, 5> kGaussWeights = {
    0.2369268850561891, 0.4786286704993665, 0.5688888888888889, 0.4786286704993665,
    0.2369268850561891};

template <class F>
double gauss(double a, double b, F&& f) {
  const double half = 0.5 * (b - a);
  const double mid = 0.5 * (a + b);
  double acc = 0.0;
  for (int i = 0; i < 5; ++i) acc += kGaussWeights[i] * f(mid + half * kGaussNodes[i]);
  return acc * half;
}

}  // namespace

PathIntegral path_integral(const PlanarField& X, const Trajectory& traj, Integrand integrand) {
  PathIntegral out;
  out.min_sample = std::numeric_limits<double>::infinity();
  const double t_end = traj.end_time();
  double running_div = 0.0;
  for (const auto& seg : traj.segments) {
    const double a = seg.t0;
    const double b = std::min(seg.t1(), t_end);
    if (!(b > a)) continue;
    auto div_at = [&](double t) { return X.divergence(seg.point_at(t)); };
    if (integrand == Integrand::kDivergence) {
      const double v = gauss(a, b, [&](double t) {
        const double d = div_at(t);
        out.min_sample = std::min(out.min_sample, d);
        ++out.samples;
        return d;
      });
      out.value += v;
    } else {
      const double v = gauss(a, b, [&](double t) {
        const double inner = running_div + gauss(a, t, div_at);
        const Vec2 f = X(seg.point_at(t));
        const double sample = std::exp(-inner) * dot(f, f);
        out.min_sample = std::min(out.min_sample, sample);
        ++out.samples;
        return sample;
      });
      out.value += v;
    }
    running_div += gauss(a, b, div_at);
  }
  if (out.samples == 0) out.min_sample = 0.0;
  return out;
}

}  // namespace cyclelab
