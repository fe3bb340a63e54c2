#include <benchmark/benchmark.h>

#include "srnn/integrators.hpp"
#include "srnn/systems.hpp"

using namespace srnn;
using integrators::PhaseState;

static void BM_SpringChainLeapfrog(benchmark::State& state) {
  const systems::SpringChain chain = systems::sample_spring_chain(1);
  const integrators::GradField vp = [&](std::span<const double> q, std::span<double> out) {
    systems::spring_chain_v_prime(chain, q, out);
  };
  const integrators::GradField kp = [&](std::span<const double> p, std::span<double> out) {
    systems::spring_chain_k_prime(chain, p, out);
  };
  PhaseState z = systems::sample_spring_chain_initial(2);
  for (auto _ : state) {
    z = integrators::leapfrog_step(vp, kp, z, 0.001);
    benchmark::DoNotOptimize(z.p.data());
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_SpringChainLeapfrog);

static void BM_BilliardEventStep(benchmark::State& state) {
  const systems::BilliardWorld world;
  PhaseState z = systems::sample_billiard_initial(world, 3);
  for (auto _ : state) {
    z = systems::billiard_step(world, z, 0.1);
    benchmark::DoNotOptimize(z.q.data());
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_BilliardEventStep);

static void BM_ThreeBodyAdaptive(benchmark::State& state) {
  const systems::GravitySystem sys = systems::three_body_system();
  const integrators::FlatField field = [&](double, std::span<const double> y,
                                           std::span<double> dy) {
    systems::gravity_field(sys, y.subspan(0, 6), y.subspan(6, 6), dy.subspan(0, 6),
                           dy.subspan(6, 6));
  };
  const PhaseState z0 = systems::sample_three_body_initial(4);
  for (auto _ : state) {
    std::vector<double> y = z0.flat();
    integrators::adaptive_integrate(field, y, 0.0, 1.0);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_ThreeBodyAdaptive);
