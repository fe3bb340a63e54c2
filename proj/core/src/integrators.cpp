#include "srnn/integrators.hpp"

#include <algorithm>
#include <cmath>

namespace srnn::integrators {

using ad::Tape;
using ad::Tensor;
using ad::ValueId;

PhaseState::PhaseState(std::vector<double> p_, std::vector<double> q_)
    : p(std::move(p_)), q(std::move(q_)) {
  if (p.size() != q.size()) fail("phase state: p and q must have the same dimension");
}

std::vector<double> PhaseState::flat() const {
  std::vector<double> z;
  z.reserve(2 * p.size());
  z.insert(z.end(), p.begin(), p.end());
  z.insert(z.end(), q.begin(), q.end());
  return z;
}

PhaseState PhaseState::from_flat(std::span<const double> z) {
  if (z.size() % 2 != 0) fail("phase state: flat length must be even");
  const std::size_t d = z.size() / 2;
  return PhaseState(std::vector<double>(z.begin(), z.begin() + d),
                    std::vector<double>(z.begin() + d, z.end()));
}

const char* integrator_name(IntegratorKind k) {
  switch (k) {
    case IntegratorKind::kEuler: return "euler";
    case IntegratorKind::kLeapfrog: return "leapfrog";
    case IntegratorKind::kReboundLeapfrog: return "rebound_leapfrog";
  }
  return "?";
}

namespace {

void check_finite(std::span<const double> v, const char* what) {
  for (double x : v) {
    if (!std::isfinite(x)) fail(std::string("non-finite ") + what);
  }
}

}  // namespace

PhaseState euler_step(const VectorField& field, const PhaseState& z, double dt) {
  const std::size_t d = z.dim();
  PhaseState out = z;
  std::vector<double> pdot(d), qdot(d);
  field(z.p, z.q, pdot, qdot);
  check_finite(pdot, "field output");
  check_finite(qdot, "field output");
  for (std::size_t i = 0; i < d; ++i) {
    out.p[i] += dt * pdot[i];
    out.q[i] += dt * qdot[i];
  }
  return out;
}

PhaseState leapfrog_step(const GradField& v_prime, const GradField& k_prime,
                         const PhaseState& z, double dt) {
  const std::size_t d = z.dim();
  PhaseState out = z;
  std::vector<double> g(d);
  v_prime(out.q, g);
  check_finite(g, "V' output");
  for (std::size_t i = 0; i < d; ++i) out.p[i] -= 0.5 * dt * g[i];
  k_prime(out.p, g);
  check_finite(g, "K' output");
  for (std::size_t i = 0; i < d; ++i) out.q[i] += dt * g[i];
  v_prime(out.q, g);
  check_finite(g, "V' output");
  for (std::size_t i = 0; i < d; ++i) out.p[i] -= 0.5 * dt * g[i];
  return out;
}

std::vector<PhaseState> rollout_euler(const VectorField& field, const PhaseState& z0,
                                      std::size_t n_steps, double dt) {
  std::vector<PhaseState> traj;
  traj.reserve(n_steps + 1);
  traj.push_back(z0);
  for (std::size_t s = 0; s < n_steps; ++s) {
    traj.push_back(euler_step(field, traj.back(), dt));
  }
  return traj;
}

std::vector<PhaseState> rollout_leapfrog(const GradField& v_prime, const GradField& k_prime,
                                         const PhaseState& z0, std::size_t n_steps,
                                         double dt) {
  std::vector<PhaseState> traj;
  traj.reserve(n_steps + 1);
  traj.push_back(z0);
  for (std::size_t s = 0; s < n_steps; ++s) {
    traj.push_back(leapfrog_step(v_prime, k_prime, traj.back(), dt));
  }
  return traj;
}

std::vector<PhaseState> rollout_leapfrog_general(const VectorField& field,
                                                 const PhaseState& z0, std::size_t n_steps,
                                                 double dt) {
  const std::size_t d = z0.dim();
  std::vector<PhaseState> traj;
  traj.reserve(n_steps + 1);
  traj.push_back(z0);
  std::vector<double> pdot(d), qdot(d);
  for (std::size_t s = 0; s < n_steps; ++s) {
    PhaseState z = traj.back();
    field(z.p, z.q, pdot, qdot);
    check_finite(pdot, "field output");
    for (std::size_t i = 0; i < d; ++i) z.p[i] += 0.5 * dt * pdot[i];
    field(z.p, z.q, pdot, qdot);
    check_finite(qdot, "field output");
    for (std::size_t i = 0; i < d; ++i) z.q[i] += dt * qdot[i];
    field(z.p, z.q, pdot, qdot);
    check_finite(pdot, "field output");
    for (std::size_t i = 0; i < d; ++i) z.p[i] += 0.5 * dt * pdot[i];
    traj.push_back(std::move(z));
  }
  return traj;
}

void reflect(std::span<double> p, std::span<const double> n) {
  if (p.size() != n.size()) fail("reflect: dimension mismatch");
  double pn = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) pn += p[i] * n[i];
  for (std::size_t i = 0; i < p.size(); ++i) p[i] -= 2.0 * pn * n[i];
}

// ---------------------------------------------------------------------------
// Dormand-Prince 5(4)
// ---------------------------------------------------------------------------

namespace {

// Classic DOPRI5 tableau (FSAL).
constexpr double kA21 = 1.0 / 5;
constexpr double kA31 = 3.0 / 40, kA32 = 9.0 / 40;
constexpr double kA41 = 44.0 / 45, kA42 = -56.0 / 15, kA43 = 32.0 / 9;
constexpr double kA51 = 19372.0 / 6561, kA52 = -25360.0 / 2187, kA53 = 64448.0 / 6561,
                 kA54 = -212.0 / 729;
constexpr double kA61 = 9017.0 / 3168, kA62 = -355.0 / 33, kA63 = 46732.0 / 5247,
                 kA64 = 49.0 / 176, kA65 = -5103.0 / 18656;
constexpr double kB1 = 35.0 / 384, kB3 = 500.0 / 1113, kB4 = 125.0 / 192,
                 kB5 = -2187.0 / 6784, kB6 = 11.0 / 84;
constexpr double kC2 = 1.0 / 5, kC3 = 3.0 / 10, kC4 = 4.0 / 5, kC5 = 8.0 / 9;
constexpr double kE1 = 71.0 / 57600, kE3 = -71.0 / 16695, kE4 = 71.0 / 1920,
                 kE5 = -17253.0 / 339200, kE6 = 22.0 / 525, kE7 = -1.0 / 40;

struct Dopri5 {
  const FlatField& field;
  const AdaptiveOptions& opts;
  std::size_t n;
  std::vector<double> k1, k2, k3, k4, k5, k6, k7, ytmp, ynew;

  Dopri5(const FlatField& f, const AdaptiveOptions& o, std::size_t n_)
      : field(f), opts(o), n(n_), k1(n_), k2(n_), k3(n_), k4(n_), k5(n_), k6(n_), k7(n_),
        ytmp(n_), ynew(n_) {}

  // One trial step from (t, y) with size h. Returns the scaled error norm;
  // on acceptance the caller copies ynew and reuses k7 as the next k1 (FSAL).
  double attempt(double t, const std::vector<double>& y, double h) {
    auto stage = [&](const std::vector<double>& coefs_y, double tc, std::vector<double>& k) {
      field(tc, coefs_y, k);
    };
    for (std::size_t i = 0; i < n; ++i) ytmp[i] = y[i] + h * kA21 * k1[i];
    stage(ytmp, t + kC2 * h, k2);
    for (std::size_t i = 0; i < n; ++i) ytmp[i] = y[i] + h * (kA31 * k1[i] + kA32 * k2[i]);
    stage(ytmp, t + kC3 * h, k3);
    for (std::size_t i = 0; i < n; ++i) {
      ytmp[i] = y[i] + h * (kA41 * k1[i] + kA42 * k2[i] + kA43 * k3[i]);
    }
    stage(ytmp, t + kC4 * h, k4);
    for (std::size_t i = 0; i < n; ++i) {
      ytmp[i] = y[i] + h * (kA51 * k1[i] + kA52 * k2[i] + kA53 * k3[i] + kA54 * k4[i]);
    }
    stage(ytmp, t + kC5 * h, k5);
    for (std::size_t i = 0; i < n; ++i) {
      ytmp[i] = y[i] + h * (kA61 * k1[i] + kA62 * k2[i] + kA63 * k3[i] + kA64 * k4[i] +
                            kA65 * k5[i]);
    }
    stage(ytmp, t + h, k6);
    for (std::size_t i = 0; i < n; ++i) {
      ynew[i] = y[i] + h * (kB1 * k1[i] + kB3 * k3[i] + kB4 * k4[i] + kB5 * k5[i] +
                            kB6 * k6[i]);
    }
    stage(ynew, t + h, k7);

    double err = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double e = h * (kE1 * k1[i] + kE3 * k3[i] + kE4 * k4[i] + kE5 * k5[i] +
                            kE6 * k6[i] + kE7 * k7[i]);
      const double sc =
          opts.atol + opts.rtol * std::max(std::abs(y[i]), std::abs(ynew[i]));
      err += (e / sc) * (e / sc);
    }
    return std::sqrt(err / static_cast<double>(n));
  }
};

}  // namespace

void adaptive_integrate(const FlatField& field, std::vector<double>& y, double t0, double t1,
                        const AdaptiveOptions& opts) {
  if (t1 < t0) fail("adaptive_integrate: t1 < t0");
  if (t1 == t0) return;
  const std::size_t n = y.size();
  Dopri5 st(field, opts, n);
  double t = t0;
  field(t, y, st.k1);
  check_finite(st.k1, "field output");

  // Conventional initial step guess from the field magnitude.
  double h = t1 - t0;
  {
    double ynorm = 0.0, fnorm = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      ynorm = std::max(ynorm, std::abs(y[i]));
      fnorm = std::max(fnorm, std::abs(st.k1[i]));
    }
    if (fnorm > 0.0) h = std::min(h, 0.01 * std::max(ynorm, 1.0) / fnorm);
  }

  for (std::size_t step = 0; step < opts.max_steps; ++step) {
    if (t + h > t1) h = t1 - t;
    const double err = st.attempt(t, y, h);
    if (!std::isfinite(err)) {
      h *= opts.min_scale;
      if (h < 1e-14 * std::max(1.0, std::abs(t))) {
        throw StepUnderflow("adaptive step size underflow (non-finite error)");
      }
      continue;
    }
    if (err <= 1.0) {
      t += h;
      y = st.ynew;
      std::swap(st.k1, st.k7);  // FSAL
      if (t >= t1) return;
    }
    double scale = opts.max_scale;
    if (err > 0.0) {
      scale = opts.safety * std::pow(err, -0.2);
      scale = std::clamp(scale, opts.min_scale, opts.max_scale);
    }
    h *= scale;
    if (h < 1e-14 * std::max(1.0, std::abs(t))) {
      throw StepUnderflow("adaptive step size underflow (likely near-collision)");
    }
  }
  fail("adaptive_integrate: max step count exceeded");
}

std::vector<std::vector<double>> adaptive_sample(const FlatField& field,
                                                 std::vector<double> y0,
                                                 std::span<const double> times,
                                                 const AdaptiveOptions& opts) {
  if (times.empty()) fail("adaptive_sample: empty time grid");
  std::vector<std::vector<double>> out;
  out.reserve(times.size());
  out.push_back(y0);
  for (std::size_t i = 1; i < times.size(); ++i) {
    if (times[i] <= times[i - 1]) fail("adaptive_sample: times must be ascending");
    adaptive_integrate(field, y0, times[i - 1], times[i], opts);
    out.push_back(y0);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Differentiable steps
// ---------------------------------------------------------------------------

std::pair<ValueId, ValueId> euler_graph_step(Tape& tape, const BoundField& f, ValueId p,
                                             ValueId q, double dt) {
  auto [pdot, qdot] = f.full(tape, p, q);
  return {tape.add(p, tape.scale(pdot, dt)), tape.add(q, tape.scale(qdot, dt))};
}

std::pair<ValueId, ValueId> leapfrog_graph_step(Tape& tape, const BoundField& f, ValueId p,
                                                ValueId q, double dt) {
  const ValueId p_half = tape.add(p, tape.scale(f.dp(tape, p, q), 0.5 * dt));
  const ValueId q_next = tape.add(q, tape.scale(f.dq(tape, p_half, q), dt));
  const ValueId p_next = tape.add(p_half, tape.scale(f.dp(tape, p_half, q_next), 0.5 * dt));
  return {p_next, q_next};
}

std::pair<ValueId, ValueId> leapfrog_graph_step(Tape& tape, const BoundField& f, ValueId p,
                                                ValueId q, ValueId dt) {
  const ValueId half_dt = tape.scale(dt, 0.5);
  const ValueId p_half = tape.add(p, tape.scalar_mul(half_dt, f.dp(tape, p, q)));
  const ValueId q_next = tape.add(q, tape.scalar_mul(dt, f.dq(tape, p_half, q)));
  const ValueId p_next =
      tape.add(p_half, tape.scalar_mul(half_dt, f.dp(tape, p_half, q_next)));
  return {p_next, q_next};
}

ValueId reflect_graph(Tape& tape, ValueId p, ValueId n) {
  const ValueId pn = tape.dot(p, n);
  return tape.sub(p, tape.scale(tape.scalar_mul(pn, n), 2.0));
}

ReboundStepResult rebound_graph_step(Tape& tape, const BoundField& f,
                                     const ReboundHooks& hooks, ValueId p, ValueId q,
                                     double dt) {
  if (tape.value(q).size() != 2) fail("rebound step requires a 2-D system");

  // Tentative full step; only its position is consumed (patch lookup), so no
  // gradient flows through it.
  auto [p_tilde, q_tilde] = leapfrog_graph_step(tape, f, p, q, dt);
  (void)p_tilde;
  const Tensor& qt = tape.value(q);
  const Tensor& qtl = tape.value(q_tilde);

  const Tensor patch_qt = hooks.patch(qt.data[0], qt.data[1], hooks.patch_big);
  const Tensor patch_qtilde = hooks.patch(qtl.data[0], qtl.data[1], hooks.patch_big);
  const Tensor patch_small = hooks.patch(qtl.data[0], qtl.data[1], hooks.patch_small);

  auto [nbar, alpha, gamma] = hooks.heads(tape, patch_qt, patch_qtilde, patch_small);
  const ValueId n_vec = tape.scalar_mul(gamma, nbar);

  const ValueId alpha_dt = tape.scale(alpha, dt);
  const ValueId rest_dt = tape.sub(tape.constant_scalar(dt), alpha_dt);

  auto [p_pre, q_event] = leapfrog_graph_step(tape, f, p, q, alpha_dt);
  const ValueId p_post = reflect_graph(tape, p_pre, n_vec);
  auto [p_next, q_next] = leapfrog_graph_step(tape, f, p_post, q_event, rest_dt);
  return {p_next, q_next, gamma};
}

RolloutGraph rollout_on_tape(Tape& tape, IntegratorKind kind, const BoundField& f,
                             const ReboundHooks* hooks, ValueId p0, ValueId q0,
                             std::size_t n_steps, double dt) {
  if (n_steps < 1) fail("rollout: n_steps must be >= 1");
  if (kind == IntegratorKind::kReboundLeapfrog && hooks == nullptr) {
    fail("rollout: rebound integrator needs hooks");
  }
  RolloutGraph g;
  g.p.reserve(n_steps + 1);
  g.q.reserve(n_steps + 1);
  g.p.push_back(p0);
  g.q.push_back(q0);
  for (std::size_t s = 0; s < n_steps; ++s) {
    switch (kind) {
      case IntegratorKind::kEuler: {
        auto [pn, qn] = euler_graph_step(tape, f, g.p.back(), g.q.back(), dt);
        g.p.push_back(pn);
        g.q.push_back(qn);
        break;
      }
      case IntegratorKind::kLeapfrog: {
        auto [pn, qn] = leapfrog_graph_step(tape, f, g.p.back(), g.q.back(), dt);
        g.p.push_back(pn);
        g.q.push_back(qn);
        break;
      }
      case IntegratorKind::kReboundLeapfrog: {
        const ReboundStepResult r =
            rebound_graph_step(tape, f, *hooks, g.p.back(), g.q.back(), dt);
        g.p.push_back(r.p);
        g.q.push_back(r.q);
        g.gamma.push_back(r.gamma);
        break;
      }
    }
  }
  return g;
}

}  // namespace srnn::integrators
