#include "srnn/systems.hpp"

#include <algorithm>
#include <cmath>

namespace srnn::systems {

// ---------------------------------------------------------------------------
// Spring chain
// ---------------------------------------------------------------------------

void SpringChain::validate() const {
  if (masses.size() != kMasses || springs.size() != kMasses + 1) {
    fail("spring chain: expected 20 masses and 21 springs");
  }
  for (double m : masses) {
    if (m <= 0.0) fail("spring chain: masses must be positive");
  }
  for (double k : springs) {
    if (k <= 0.0) fail("spring chain: spring constants must be positive");
  }
}

SpringChain sample_spring_chain(std::uint64_t seed) {
  Rng rng(seed);
  SpringChain chain;
  chain.masses.reserve(SpringChain::kMasses);
  chain.springs.reserve(SpringChain::kMasses + 1);
  for (std::size_t i = 0; i < SpringChain::kMasses; ++i) {
    chain.masses.push_back(rng.uniform(0.5, 1.5));
  }
  for (std::size_t j = 0; j <= SpringChain::kMasses; ++j) {
    chain.springs.push_back(rng.uniform(0.5, 1.5));
  }
  return chain;
}

void spring_chain_v_prime(const SpringChain& chain, std::span<const double> q,
                          std::span<double> out) {
  const std::size_t n = SpringChain::kMasses;
  if (q.size() != n || out.size() != n) fail("spring chain: dimension mismatch");
  // dV/dq_i = k_{i-1} (q_i - q_{i-1}) - k_i (q_{i+1} - q_i); anchors q_0 = q_{n+1} = 0.
  for (std::size_t i = 0; i < n; ++i) {
    const double q_prev = i == 0 ? 0.0 : q[i - 1];
    const double q_next = i + 1 == n ? 0.0 : q[i + 1];
    out[i] = chain.springs[i] * (q[i] - q_prev) - chain.springs[i + 1] * (q_next - q[i]);
  }
}

void spring_chain_k_prime(const SpringChain& chain, std::span<const double> p,
                          std::span<double> out) {
  const std::size_t n = SpringChain::kMasses;
  if (p.size() != n || out.size() != n) fail("spring chain: dimension mismatch");
  for (std::size_t i = 0; i < n; ++i) out[i] = p[i] / chain.masses[i];
}

void spring_chain_field(const SpringChain& chain, std::span<const double> p,
                        std::span<const double> q, std::span<double> pdot,
                        std::span<double> qdot) {
  spring_chain_v_prime(chain, q, pdot);
  for (double& v : pdot) v = -v;
  spring_chain_k_prime(chain, p, qdot);
}

double spring_chain_energy(const SpringChain& chain, std::span<const double> p,
                           std::span<const double> q) {
  const std::size_t n = SpringChain::kMasses;
  double e = 0.0;
  for (std::size_t i = 0; i < n; ++i) e += p[i] * p[i] / (2.0 * chain.masses[i]);
  for (std::size_t j = 0; j <= n; ++j) {
    const double a = j == 0 ? 0.0 : q[j - 1];
    const double b = j == n ? 0.0 : q[j];
    const double stretch = b - a;
    e += 0.5 * chain.springs[j] * stretch * stretch;
  }
  return e;
}

ad::Tensor spring_chain_v_hessian(const SpringChain& chain) {
  const std::size_t n = SpringChain::kMasses;
  ad::Tensor h = ad::Tensor::zeros({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    h.at(i, i) = chain.springs[i] + chain.springs[i + 1];
    if (i > 0) h.at(i, i - 1) = -chain.springs[i];
    if (i + 1 < n) h.at(i, i + 1) = -chain.springs[i + 1];
  }
  return h;
}

ad::Tensor spring_chain_mass_inverse(const SpringChain& chain) {
  const std::size_t n = SpringChain::kMasses;
  ad::Tensor m = ad::Tensor::zeros({n, n});
  for (std::size_t i = 0; i < n; ++i) m.at(i, i) = 1.0 / chain.masses[i];
  return m;
}

PhaseState sample_spring_chain_initial(std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t n = SpringChain::kMasses;
  std::vector<double> p(n), q(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = rng.gaussian();
  for (std::size_t i = 0; i < n; ++i) q[i] = rng.gaussian();
  return PhaseState(std::move(p), std::move(q));
}

// ---------------------------------------------------------------------------
// Planar gravity
// ---------------------------------------------------------------------------

double min_pair_distance(std::span<const double> q, std::size_t bodies) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < bodies; ++i) {
    for (std::size_t j = i + 1; j < bodies; ++j) {
      const double dx = q[2 * i] - q[2 * j];
      const double dy = q[2 * i + 1] - q[2 * j + 1];
      best = std::min(best, std::sqrt(dx * dx + dy * dy));
    }
  }
  return best;
}

void gravity_v_prime(const GravitySystem& sys, std::span<const double> q,
                     std::span<double> out) {
  const std::size_t nb = sys.bodies();
  if (q.size() != 2 * nb || out.size() != 2 * nb) fail("gravity: dimension mismatch");
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t i = 0; i < nb; ++i) {
    for (std::size_t j = i + 1; j < nb; ++j) {
      const double dx = q[2 * i] - q[2 * j];
      const double dy = q[2 * i + 1] - q[2 * j + 1];
      const double r2 = dx * dx + dy * dy;
      const double r = std::sqrt(r2);
      if (r < 1e-6) fail("gravity: near-collision (pair distance < 1e-6)");
      // dV/dq_i = G m_i m_j (q_i - q_j) / r^3
      const double c = sys.G * sys.masses[i] * sys.masses[j] / (r2 * r);
      out[2 * i] += c * dx;
      out[2 * i + 1] += c * dy;
      out[2 * j] -= c * dx;
      out[2 * j + 1] -= c * dy;
    }
  }
}

void gravity_k_prime(const GravitySystem& sys, std::span<const double> p,
                     std::span<double> out) {
  const std::size_t nb = sys.bodies();
  if (p.size() != 2 * nb || out.size() != 2 * nb) fail("gravity: dimension mismatch");
  for (std::size_t i = 0; i < nb; ++i) {
    out[2 * i] = p[2 * i] / sys.masses[i];
    out[2 * i + 1] = p[2 * i + 1] / sys.masses[i];
  }
}

void gravity_field(const GravitySystem& sys, std::span<const double> p,
                   std::span<const double> q, std::span<double> pdot,
                   std::span<double> qdot) {
  gravity_v_prime(sys, q, pdot);
  for (double& v : pdot) v = -v;
  gravity_k_prime(sys, p, qdot);
}

double gravity_energy(const GravitySystem& sys, std::span<const double> p,
                      std::span<const double> q) {
  const std::size_t nb = sys.bodies();
  double e = 0.0;
  for (std::size_t i = 0; i < nb; ++i) {
    e += (p[2 * i] * p[2 * i] + p[2 * i + 1] * p[2 * i + 1]) / (2.0 * sys.masses[i]);
  }
  for (std::size_t i = 0; i < nb; ++i) {
    for (std::size_t j = i + 1; j < nb; ++j) {
      const double dx = q[2 * i] - q[2 * j];
      const double dy = q[2 * i + 1] - q[2 * j + 1];
      e -= sys.G * sys.masses[i] * sys.masses[j] / std::sqrt(dx * dx + dy * dy);
    }
  }
  return e;
}

GravitySystem three_body_system() { return GravitySystem{{1.0, 1.0, 1.0}, 1.0}; }

PhaseState sample_three_body_initial(std::uint64_t seed, const ThreeBodySampler& opts) {
  const GravitySystem sys = three_body_system();
  Rng rng(seed);
  for (std::size_t attempt = 0; attempt <= opts.max_rejects; ++attempt) {
    const double r = rng.uniform(opts.radius_lo, opts.radius_hi);
    // Speed of the rigidly rotating equilateral configuration at radius r:
    // the net pull on each body is G m^2 / (sqrt(3) r^2), so v^2 = G m / (sqrt(3) r).
    const double v_circ = std::sqrt(sys.G * sys.masses[0] / (std::sqrt(3.0) * r));
    std::vector<double> p(6), q(6);
    for (std::size_t b = 0; b < 3; ++b) {
      const double angle = 2.0 * 3.14159265358979323846 * static_cast<double>(b) / 3.0 +
                           rng.uniform(-opts.angle_jitter, opts.angle_jitter);
      const double c = std::cos(angle);
      const double s = std::sin(angle);
      q[2 * b] = r * c;
      q[2 * b + 1] = r * s;
      const double v = v_circ * rng.uniform(opts.speed_lo, opts.speed_hi);
      p[2 * b] = -v * s;  // tangential
      p[2 * b + 1] = v * c;
    }
    // Center-of-momentum frame.
    double px = 0.0, py = 0.0;
    for (std::size_t b = 0; b < 3; ++b) {
      px += p[2 * b];
      py += p[2 * b + 1];
    }
    for (std::size_t b = 0; b < 3; ++b) {
      p[2 * b] -= px / 3.0;
      p[2 * b + 1] -= py / 3.0;
    }

    // Validate with the ground-truth integrator over the usage horizon.
    const integrators::FlatField field = [&sys](double, std::span<const double> y,
                                                std::span<double> dy) {
      gravity_field(sys, y.subspan(0, 6), y.subspan(6, 6), dy.subspan(0, 6),
                    dy.subspan(6, 6));
    };
    bool ok = true;
    try {
      std::vector<double> y(12);
      std::copy(p.begin(), p.end(), y.begin());
      std::copy(q.begin(), q.end(), y.begin() + 6);
      const double step = 0.1;
      double t = 0.0;
      while (t < opts.check_horizon && ok) {
        const double t_next = std::min(t + step, opts.check_horizon);
        integrators::adaptive_integrate(field, y, t, t_next);
        t = t_next;
        if (min_pair_distance(std::span<const double>(y).subspan(6, 6), 3) <
            opts.min_distance) {
          ok = false;
        }
      }
    } catch (const integrators::StepUnderflow&) {
      ok = false;
    } catch (const Error&) {
      ok = false;  // near-collision reported by the field itself
    }
    if (ok) return PhaseState(std::move(p), std::move(q));
  }
  fail("three-body sampler: too many rejected candidates");
}

// ---------------------------------------------------------------------------
// Billiard
// ---------------------------------------------------------------------------

double billiard_energy(const BilliardWorld& world, std::span<const double> p,
                       std::span<const double> q) {
  return 0.5 * (p[0] * p[0] + p[1] * p[1]) + world.gravity * q[1];
}

namespace {

struct Contact {
  double t = std::numeric_limits<double>::infinity();
  int axis = -1;  // 0 = x wall, 1 = y wall
};

// Earliest time in [0, horizon] at which the center reaches a contact
// surface moving into it. x is ballistic-free, y has constant acceleration -g.
Contact earliest_contact(const BilliardWorld& world, const PhaseState& z, double horizon) {
  const double lo = world.lo();
  const double hi = world.hi();
  Contact best;
  const double x = z.q[0], y = z.q[1];
  const double px = z.p[0], py = z.p[1];
  const double g = world.gravity;

  auto consider = [&](double t, int axis, double v_at_t, double surface_sign) {
    // surface_sign: +1 for the high wall (inward velocity is positive), -1 low.
    if (t < -1e-12 || t > horizon) return;
    if (t < 0.0) t = 0.0;
    if (v_at_t * surface_sign <= 0.0) return;  // moving away or tangent
    if (t < best.t) best = {t, axis};
  };

  if (px > 0.0) consider((hi - x) / px, 0, px, +1.0);
  if (px < 0.0) consider((lo - x) / px, 0, px, -1.0);

  // y(t) = y + py t - g t^2 / 2 = Y  =>  (g/2) t^2 - py t + (Y - y) = 0
  auto roots_for = [&](double Y, double sign) {
    const double a = 0.5 * g;
    const double b = -py;
    const double c = Y - y;
    const double disc = b * b - 4.0 * a * c;
    if (disc < 0.0) return;
    const double sq = std::sqrt(disc);
    // Stable quadratic roots.
    const double q0 = -0.5 * (b + (b >= 0.0 ? sq : -sq));
    double t1 = q0 / a;
    double t2 = (c != 0.0 && q0 != 0.0) ? c / q0 : (-b - (b >= 0.0 ? sq : -sq)) / (2.0 * a);
    if (t1 > t2) std::swap(t1, t2);
    consider(t1, 1, py - g * t1, sign);
    consider(t2, 1, py - g * t2, sign);
  };
  roots_for(lo, -1.0);
  roots_for(hi, +1.0);
  return best;
}

void fly(const BilliardWorld& world, PhaseState& z, double t) {
  z.q[0] += z.p[0] * t;
  z.q[1] += z.p[1] * t - 0.5 * world.gravity * t * t;
  z.p[1] -= world.gravity * t;
}

}  // namespace

PhaseState billiard_step(const BilliardWorld& world, const PhaseState& z, double dt) {
  if (z.dim() != 2) fail("billiard: state must be 2-D");
  PhaseState cur = z;
  double remaining = dt;
  const double lo = world.lo();
  const double hi = world.hi();
  for (int events = 0; events < 64; ++events) {
    const Contact c = earliest_contact(world, cur, remaining);
    if (c.axis < 0) {
      fly(world, cur, remaining);
      break;
    }
    fly(world, cur, c.t);
    // Land exactly on the surface to keep the solver well-conditioned.
    cur.q[c.axis] = std::clamp(cur.q[c.axis], lo, hi);
    cur.p[c.axis] = -cur.p[c.axis];
    remaining -= c.t;
    if (remaining <= 0.0) break;
  }
  cur.q[0] = std::clamp(cur.q[0], lo, hi);
  cur.q[1] = std::clamp(cur.q[1], lo, hi);
  return cur;
}

PhaseState sample_billiard_initial(const BilliardWorld& world, std::uint64_t seed) {
  Rng rng(seed);
  const double x = rng.uniform(world.lo(), world.hi());
  const double y = rng.uniform(world.lo(), world.hi());
  const double speed = rng.uniform(world.speed_lo, world.speed_hi);
  const double angle = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
  return PhaseState({speed * std::cos(angle), speed * std::sin(angle)}, {x, y});
}

std::vector<double> render_wall_image(const BilliardWorld& world) {
  const std::size_t n = world.image_size;
  const std::size_t w = world.wall_thickness;
  std::vector<double> img(n * n, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      if (r < w || r >= n - w || c < w || c >= n - w) img[r * n + c] = 1.0;
    }
  }
  return img;
}

ad::Tensor extract_patch(std::span<const double> image, std::size_t image_size, double x,
                         double y, std::size_t size) {
  if (size != 2 && size != 10) fail("extract_patch: size must be 2 or 10");
  if (image.size() != image_size * image_size) fail("extract_patch: bad image size");
  const long cr = std::llround(y);
  const long cc = std::llround(x);
  const long half = static_cast<long>(size) / 2;
  const long n = static_cast<long>(image_size);
  ad::Tensor patch = ad::Tensor::zeros({size, size});
  for (long r = 0; r < static_cast<long>(size); ++r) {
    const long rr = std::clamp(cr - half + r, 0L, n - 1);
    for (long c = 0; c < static_cast<long>(size); ++c) {
      const long cc2 = std::clamp(cc - half + c, 0L, n - 1);
      patch.data[static_cast<std::size_t>(r) * size + static_cast<std::size_t>(c)] =
          image[static_cast<std::size_t>(rr) * image_size + static_cast<std::size_t>(cc2)];
    }
  }
  return patch;
}

}  // namespace srnn::systems
