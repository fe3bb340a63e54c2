#include <doctest.h>

#include <cmath>

#include "srnn/integrators.hpp"
#include "srnn/models.hpp"
#include "srnn/systems.hpp"
#include "srnn/training.hpp"
#include "test_util.hpp"

using namespace srnn;
using namespace srnn::integrators;
using ad::Tape;
using ad::Tensor;
using ad::ValueId;
using testutil::fd_gradient;
using testutil::max_rel_err;
using testutil::random_vec;

namespace {

const GradField kHarmonicV = [](std::span<const double> q, std::span<double> out) {
  for (std::size_t i = 0; i < q.size(); ++i) out[i] = q[i];
};
const GradField kHarmonicK = [](std::span<const double> p, std::span<double> out) {
  for (std::size_t i = 0; i < p.size(); ++i) out[i] = p[i];
};
const VectorField kHarmonicField = [](std::span<const double> p, std::span<const double> q,
                                      std::span<double> pdot, std::span<double> qdot) {
  for (std::size_t i = 0; i < p.size(); ++i) {
    pdot[i] = -q[i];
    qdot[i] = p[i];
  }
};

using StepFn = std::function<PhaseState(const PhaseState&)>;

// Central finite-difference Jacobian of a phase-space map, ordering (p, q).
std::vector<std::vector<double>> fd_jacobian(const StepFn& step, const PhaseState& z,
                                             double h = 1e-6) {
  const std::size_t d = z.dim();
  const std::size_t n = 2 * d;
  std::vector<std::vector<double>> jac(n, std::vector<double>(n));
  for (std::size_t j = 0; j < n; ++j) {
    PhaseState zp = z, zm = z;
    (j < d ? zp.p[j] : zp.q[j - d]) += h;
    (j < d ? zm.p[j] : zm.q[j - d]) -= h;
    const PhaseState fp = step(zp);
    const PhaseState fm = step(zm);
    for (std::size_t i = 0; i < n; ++i) {
      const double a = i < d ? fp.p[i] : fp.q[i - d];
      const double b = i < d ? fm.p[i] : fm.q[i - d];
      jac[i][j] = (a - b) / (2.0 * h);
    }
  }
  return jac;
}

// max-row-sum norm of J^T O J - O with the canonical form O for (p, q).
double symplectic_defect(const std::vector<std::vector<double>>& jac) {
  const std::size_t n = jac.size();
  const std::size_t d = n / 2;
  auto omega = [&](std::size_t i, std::size_t j) -> double {
    if (i < d && j == i + d) return -1.0;
    if (i >= d && j == i - d) return 1.0;
    return 0.0;
  };
  double worst = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      double m = 0.0;  // (J^T O J)_{ij} = sum_{a,b} J_{a i} O_{a b} J_{b j}
      for (std::size_t a = 0; a < n; ++a) {
        const std::size_t b = a < d ? a + d : a - d;  // O is a permutation with signs
        m += jac[a][i] * omega(a, b) * jac[b][j];
      }
      row += std::abs(m - omega(i, j));
    }
    worst = std::max(worst, row);
  }
  return worst;
}

double det2(const std::vector<std::vector<double>>& j) {
  return j[0][0] * j[1][1] - j[0][1] * j[1][0];
}

}  // namespace

TEST_SUITE_BEGIN("integrators");

TEST_CASE("euler_step basics") {
  SUBCASE("f(z) = 2z doubles in one unit half-step") {
    const VectorField f = [](std::span<const double> p, std::span<const double> q,
                             std::span<double> pdot, std::span<double> qdot) {
      pdot[0] = 2.0 * p[0];
      qdot[0] = 2.0 * q[0];
    };
    const PhaseState out = euler_step(f, PhaseState({1.0}, {1.0}), 0.5);
    CHECK(out.p[0] == 2.0);
    CHECK(out.q[0] == 2.0);
  }
  SUBCASE("zero field is the identity") {
    const VectorField f = [](std::span<const double>, std::span<const double>,
                             std::span<double> pdot, std::span<double> qdot) {
      pdot[0] = 0.0;
      qdot[0] = 0.0;
    };
    const PhaseState out = euler_step(f, PhaseState({0.3}, {-0.7}), 0.1);
    CHECK(out.p[0] == 0.3);
    CHECK(out.q[0] == -0.7);
  }
  SUBCASE("harmonic oscillator hand value") {
    const PhaseState out = euler_step(kHarmonicField, PhaseState({0.0}, {1.0}), 0.1);
    CHECK(out.p[0] == doctest::Approx(-0.1).epsilon(1e-15));
    CHECK(out.q[0] == doctest::Approx(1.0).epsilon(1e-15));
  }
}

TEST_CASE("leapfrog_step basics") {
  SUBCASE("zero derivatives give the identity") {
    const GradField zero = [](std::span<const double> x, std::span<double> out) {
      for (std::size_t i = 0; i < x.size(); ++i) out[i] = 0.0;
    };
    const PhaseState out = leapfrog_step(zero, zero, PhaseState({0.4}, {0.6}), 0.1);
    CHECK(out.p[0] == 0.4);
    CHECK(out.q[0] == 0.6);
  }
  SUBCASE("harmonic oscillator hand value") {
    // p_half = -0.05; q' = 1 + 0.1*(-0.05) = 0.995; p' = -0.05 - 0.05*0.995
    const PhaseState out = leapfrog_step(kHarmonicV, kHarmonicK, PhaseState({0.0}, {1.0}), 0.1);
    CHECK(out.p[0] == doctest::Approx(-0.09975).epsilon(1e-14));
    CHECK(out.q[0] == doctest::Approx(0.995).epsilon(1e-14));
  }
}

TEST_CASE("harmonic leapfrog step equals its symbolic linear map") {
  for (const double h : {0.01, 0.1, 0.5}) {
    // expanding the three substeps for V' = q, K' = p:
    //   p' = (1 - h^2/2) p + (-h + h^3/4) q,  q' = h p + (1 - h^2/2) q
    const double jpp = 1.0 - h * h / 2.0;
    const double jpq = -h + h * h * h / 4.0;
    const double jqp = h;
    const double jqq = 1.0 - h * h / 2.0;
    Rng rng(21);
    for (int trial = 0; trial < 10; ++trial) {
      const double p = rng.uniform(-2, 2), q = rng.uniform(-2, 2);
      const PhaseState out = leapfrog_step(kHarmonicV, kHarmonicK, PhaseState({p}, {q}), h);
      CHECK(out.p[0] == doctest::Approx(jpp * p + jpq * q).epsilon(1e-13));
      CHECK(out.q[0] == doctest::Approx(jqp * p + jqq * q).epsilon(1e-13));
    }
    // determinant of the symbolic Jacobian is exactly 1
    const double det = jpp * jqq - jpq * jqp;
    CHECK(std::abs(det - 1.0) < 1e-10);
  }
}

TEST_CASE("symplecticity of leapfrog; Euler violates it") {
  const double dt = 0.1;

  SUBCASE("harmonic oscillator") {
    const PhaseState z({0.3}, {0.7});
    const auto leap = fd_jacobian(
        [&](const PhaseState& s) { return leapfrog_step(kHarmonicV, kHarmonicK, s, dt); }, z);
    CHECK(symplectic_defect(leap) < 1e-6);
    const auto eul = fd_jacobian(
        [&](const PhaseState& s) { return euler_step(kHarmonicField, s, dt); }, z);
    const double defect = symplectic_defect(eul);
    CHECK(defect >= 1e-3);
    // for the linear harmonic field the defect is exactly dt^2
    CHECK(defect == doctest::Approx(dt * dt).epsilon(1e-4));
    CHECK(det2(eul) == doctest::Approx(1.0 + dt * dt).epsilon(1e-9));
    CHECK(std::abs(det2(leap) - 1.0) < 1e-8);
  }

  SUBCASE("spring chain, d = 20") {
    const systems::SpringChain chain = systems::sample_spring_chain(101);
    const GradField vp = [&](std::span<const double> q, std::span<double> out) {
      systems::spring_chain_v_prime(chain, q, out);
    };
    const GradField kp = [&](std::span<const double> p, std::span<double> out) {
      systems::spring_chain_k_prime(chain, p, out);
    };
    const VectorField f = [&](std::span<const double> p, std::span<const double> q,
                              std::span<double> pdot, std::span<double> qdot) {
      systems::spring_chain_field(chain, p, q, pdot, qdot);
    };
    const PhaseState z = systems::sample_spring_chain_initial(102);
    const auto leap =
        fd_jacobian([&](const PhaseState& s) { return leapfrog_step(vp, kp, s, dt); }, z);
    CHECK(symplectic_defect(leap) < 1e-6);
    const auto eul = fd_jacobian([&](const PhaseState& s) { return euler_step(f, s, dt); }, z);
    CHECK(symplectic_defect(eul) >= 1e-3);
  }

  SUBCASE("three-body field") {
    const systems::GravitySystem sys = systems::three_body_system();
    const GradField vp = [&](std::span<const double> q, std::span<double> out) {
      systems::gravity_v_prime(sys, q, out);
    };
    const GradField kp = [&](std::span<const double> p, std::span<double> out) {
      systems::gravity_k_prime(sys, p, out);
    };
    const VectorField f = [&](std::span<const double> p, std::span<const double> q,
                              std::span<double> pdot, std::span<double> qdot) {
      systems::gravity_field(sys, p, q, pdot, qdot);
    };
    const PhaseState z = systems::sample_three_body_initial(103);
    const auto leap =
        fd_jacobian([&](const PhaseState& s) { return leapfrog_step(vp, kp, s, dt); }, z);
    CHECK(symplectic_defect(leap) < 1e-6);
    const auto eul = fd_jacobian([&](const PhaseState& s) { return euler_step(f, s, dt); }, z);
    CHECK(symplectic_defect(eul) >= 1e-3);
  }
}

TEST_CASE("rollout composition and energy behavior") {
  SUBCASE("one step rollout equals the step op bitwise") {
    const PhaseState z({0.2}, {0.9});
    const auto traj = rollout_leapfrog(kHarmonicV, kHarmonicK, z, 1, 0.1);
    const PhaseState once = leapfrog_step(kHarmonicV, kHarmonicK, z, 0.1);
    CHECK(traj[1].p[0] == once.p[0]);
    CHECK(traj[1].q[0] == once.q[0]);
  }
  SUBCASE("two-step rollout equals composing the step twice bitwise") {
    const PhaseState z({-0.4}, {0.3});
    const auto traj = rollout_leapfrog(kHarmonicV, kHarmonicK, z, 2, 0.1);
    const PhaseState twice =
        leapfrog_step(kHarmonicV, kHarmonicK, leapfrog_step(kHarmonicV, kHarmonicK, z, 0.1), 0.1);
    CHECK(traj[2].p[0] == twice.p[0]);
    CHECK(traj[2].q[0] == twice.q[0]);
  }
  SUBCASE("leapfrog energy stays bounded over 1e4 steps; Euler blows up") {
    const PhaseState z0({0.0}, {1.0});
    const double e0 = 0.5;
    auto energy = [](const PhaseState& s) { return 0.5 * (s.p[0] * s.p[0] + s.q[0] * s.q[0]); };

    PhaseState z = z0;
    double worst = 0.0;
    for (int i = 0; i < 10000; ++i) {
      z = leapfrog_step(kHarmonicV, kHarmonicK, z, 0.1);
      worst = std::max(worst, std::abs(energy(z) - e0) / e0);
    }
    CHECK(worst < 1e-2);

    z = z0;
    int blow_step = -1;
    for (int i = 1; i <= 1000; ++i) {
      z = euler_step(kHarmonicField, z, 0.1);
      if (std::abs(energy(z) - e0) / e0 > 0.5) {
        blow_step = i;
        break;
      }
    }
    CHECK(blow_step > 0);
    CHECK(blow_step < 1000);
  }
}

TEST_CASE("leapfrog time reversibility") {
  const systems::SpringChain chain = systems::sample_spring_chain(7);
  const GradField vp = [&](std::span<const double> q, std::span<double> out) {
    systems::spring_chain_v_prime(chain, q, out);
  };
  const GradField kp = [&](std::span<const double> p, std::span<double> out) {
    systems::spring_chain_k_prime(chain, p, out);
  };
  const PhaseState z = systems::sample_spring_chain_initial(8);
  const PhaseState fwd = leapfrog_step(vp, kp, z, 0.1);
  const PhaseState back = leapfrog_step(vp, kp, fwd, -0.1);
  for (std::size_t i = 0; i < z.dim(); ++i) {
    CHECK(std::abs(back.p[i] - z.p[i]) < 1e-10);
    CHECK(std::abs(back.q[i] - z.q[i]) < 1e-10);
  }
}

TEST_CASE("reflection operator") {
  SUBCASE("hand value: horizontal wall reverses the normal component") {
    std::vector<double> p = {1.0, -2.0};
    const std::vector<double> n = {0.0, 1.0};
    reflect(p, n);
    CHECK(p[0] == 1.0);
    CHECK(p[1] == 2.0);
  }
  SUBCASE("identity at n = 0, exactly") {
    std::vector<double> p = {0.123456789, -0.987654321};
    const std::vector<double> p0 = p;
    reflect(p, std::vector<double>{0.0, 0.0});
    CHECK(p == p0);

    Tape t;
    const ValueId pv = t.variable(Tensor::vector(p0));
    const ValueId nz = t.constant(Tensor::vector({0.0, 0.0}));
    const ValueId out = reflect_graph(t, pv, nz);
    CHECK(t.value(out).data == p0);
  }
  SUBCASE("involution for unit n") {
    Rng rng(31);
    for (int trial = 0; trial < 100; ++trial) {
      const double angle = rng.uniform(0, 6.283185307179586);
      const std::vector<double> n = {std::cos(angle), std::sin(angle)};
      std::vector<double> p = random_vec(rng, 2);
      const std::vector<double> p0 = p;
      reflect(p, n);
      reflect(p, n);
      CHECK(std::abs(p[0] - p0[0]) < 1e-12);
      CHECK(std::abs(p[1] - p0[1]) < 1e-12);
    }
  }
}

TEST_CASE("rebound step reduces to plain leapfrog as gamma -> 0") {
  // With n = gamma * nbar and gamma small, the reflection perturbs p by
  // O(gamma); the alpha-split composition itself differs from the single
  // full step only at O(dt^3).
  Rng rng(33);
  models::Model model = models::make_hnet(2, {8}, rng);
  models::ReboundSpec rspec;
  rspec.shared_hidden = 8;
  rspec.branch_hidden = 4;
  rspec.gamma_hidden = 4;
  models::attach_rebound(model, rspec, rng);
  // push the gamma output bias strongly negative: gamma ~ 0
  models::Model damped = model;
  std::vector<double> params = damped.gather_params();
  params[params.size() - 1] = -40.0;  // gamma output bias
  damped.scatter_params(params);

  const systems::BilliardWorld world;
  const std::vector<double> image = systems::render_wall_image(world);

  Tape t;
  const training::BoundModel bound = training::bind_model(t, damped, false);
  training::RolloutSpec spec;
  spec.kind = IntegratorKind::kReboundLeapfrog;
  spec.dt = 0.1;
  spec.wall_image = &image;
  const ValueId p0 = t.constant(Tensor::vector({3.0, -2.0}));
  const ValueId q0 = t.constant(Tensor::vector({60.0, 70.0}));
  const auto reb = training::rollout_model(t, bound, spec, p0, q0, 1);

  training::RolloutSpec plain = spec;
  plain.kind = IntegratorKind::kLeapfrog;
  const auto ref = training::rollout_model(t, bound, plain, p0, q0, 1);

  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(std::abs(t.value(reb.p[1]).data[i] - t.value(ref.p[1]).data[i]) < 1e-5);
    CHECK(std::abs(t.value(reb.q[1]).data[i] - t.value(ref.q[1]).data[i]) < 1e-5);
  }
}

TEST_CASE("adaptive dormand-prince") {
  SUBCASE("exponential decay") {
    const FlatField f = [](double, std::span<const double> y, std::span<double> dy) {
      dy[0] = -y[0];
    };
    std::vector<double> y = {1.0};
    adaptive_integrate(f, y, 0.0, 1.0);
    CHECK(std::abs(y[0] - std::exp(-1.0)) < 1e-8);
  }

  SUBCASE("harmonic oscillator returns after one period") {
    const FlatField f = [](double, std::span<const double> y, std::span<double> dy) {
      dy[0] = -y[1];
      dy[1] = y[0];
    };
    std::vector<double> y = {0.0, 1.0};
    AdaptiveOptions opts;
    opts.rtol = 1e-9;
    opts.atol = 1e-9;
    adaptive_integrate(f, y, 0.0, 2.0 * 3.14159265358979323846, opts);
    CHECK(std::abs(y[0] - 0.0) < 1e-6);
    CHECK(std::abs(y[1] - 1.0) < 1e-6);
  }

  SUBCASE("two-body circular orbit keeps its radius") {
    const systems::GravitySystem sys{{1.0, 1.0}, 1.0};
    const FlatField f = [&](double, std::span<const double> y, std::span<double> dy) {
      systems::gravity_field(sys, y.subspan(0, 4), y.subspan(4, 4), dy.subspan(0, 4),
                             dy.subspan(4, 4));
    };
    // separation 1, each body at radius 0.5 from the center of mass;
    // force G m^2 / s^2 = 1 balances m v^2 / (s/2) => v = sqrt(1/2)
    const double v = std::sqrt(0.5);
    std::vector<double> y = {0.0, v, 0.0, -v, 0.5, 0.0, -0.5, 0.0};
    AdaptiveOptions opts;
    opts.rtol = 1e-10;
    opts.atol = 1e-12;
    std::vector<double> times;
    for (int i = 0; i <= 20; ++i) times.push_back(0.2 * i);
    const auto states = adaptive_sample(f, y, times, opts);
    for (const auto& s : states) {
      const double r1 = std::hypot(s[4], s[5]);
      const double r2 = std::hypot(s[6], s[7]);
      CHECK(std::abs(r1 - 0.5) < 1e-6);
      CHECK(std::abs(r2 - 0.5) < 1e-6);
    }
  }

  SUBCASE("near-collision reports step underflow") {
    const systems::GravitySystem sys{{1.0, 1.0}, 1.0};
    const FlatField f = [&](double, std::span<const double> y, std::span<double> dy) {
      systems::gravity_field(sys, y.subspan(0, 4), y.subspan(4, 4), dy.subspan(0, 4),
                             dy.subspan(4, 4));
    };
    // head-on radial infall: the pair distance hits zero in finite time
    std::vector<double> y = {0.0, 0.0, 0.0, 0.0, 0.5, 0.0, -0.5, 0.0};
    CHECK_THROWS_AS(adaptive_integrate(f, y, 0.0, 10.0), Error);
  }
}

TEST_CASE("rollout gradients w.r.t. the initial state match finite differences") {
  Rng rng(35);
  models::Model model = models::make_hnet(2, {6}, rng);
  const std::vector<double> z0 = random_vec(rng, 4, -1.0, 1.0);
  const std::vector<double> target = random_vec(rng, 4, -1.0, 1.0);

  for (const auto kind : {IntegratorKind::kEuler, IntegratorKind::kLeapfrog}) {
    auto loss_of = [&](const std::vector<double>& z) {
      Tape t;
      const training::BoundModel bound = training::bind_model(t, model, false);
      training::RolloutSpec spec;
      spec.kind = kind;
      spec.dt = 0.1;
      const ValueId p0 = t.variable(Tensor::vector({z[0], z[1]}));
      const ValueId q0 = t.variable(Tensor::vector({z[2], z[3]}));
      const auto g = training::rollout_model(t, bound, spec, p0, q0, 10);
      const ValueId loss = t.add(
          t.sqnorm(t.sub(g.p[10], t.constant(Tensor::vector({target[0], target[1]})))),
          t.sqnorm(t.sub(g.q[10], t.constant(Tensor::vector({target[2], target[3]})))));
      return std::make_tuple(t.scalar_value(loss), loss, std::move(t), p0, q0);
    };

    auto [value, loss_id, tape, p0, q0] = loss_of(z0);
    tape.backward(loss_id);
    std::vector<double> got = tape.grad(p0).data;
    const std::vector<double>& gq = tape.grad(q0).data;
    got.insert(got.end(), gq.begin(), gq.end());

    const std::vector<double> want = fd_gradient(
        [&](const std::vector<double>& z) { return std::get<0>(loss_of(z)); }, z0, 1e-6);
    CAPTURE(static_cast<int>(kind));
    CHECK(max_rel_err(got, want, 1e-4) < 1e-4);
  }
}

TEST_SUITE_END();
