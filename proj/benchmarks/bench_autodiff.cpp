#include <benchmark/benchmark.h>

#include "srnn/models.hpp"
#include "srnn/training.hpp"

using namespace srnn;

// Forward+backward cost of one windowed rollout loss, the inner loop of
// training. The range argument is the hidden width.
static void BM_HnetWindowGradient(benchmark::State& state) {
  Rng rng(1);
  models::Model model =
      models::make_hnet(20, {static_cast<std::size_t>(state.range(0))}, rng);
  std::vector<double> p0(20), q0(20);
  for (auto& v : p0) v = rng.gaussian();
  for (auto& v : q0) v = rng.gaussian();
  std::vector<double> target(40, 0.1);

  ad::Tape tape;
  for (auto _ : state) {
    tape.reset();
    const training::BoundModel bound = training::bind_model(tape, model, true);
    training::RolloutSpec spec;
    spec.kind = integrators::IntegratorKind::kLeapfrog;
    spec.dt = 0.1;
    const auto g = training::rollout_model(tape, bound, spec,
                                           tape.constant(ad::Tensor::vector(p0)),
                                           tape.constant(ad::Tensor::vector(q0)), 9);
    ad::ValueId loss = tape.constant_scalar(0.0);
    for (std::size_t i = 1; i <= 9; ++i) {
      loss = tape.add(loss, tape.sqnorm(g.p[i]));
      loss = tape.add(loss, tape.sqnorm(g.q[i]));
    }
    tape.backward(loss);
    benchmark::DoNotOptimize(tape.grad(bound.theta).data.data());
  }
}
BENCHMARK(BM_HnetWindowGradient)->Arg(64)->Arg(256)->Arg(2048);

static void BM_TapeMatvec(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  Rng rng(2);
  std::vector<double> w(n * n), x(n);
  for (auto& v : w) v = rng.uniform(-1, 1);
  for (auto& v : x) v = rng.uniform(-1, 1);
  ad::Tape tape;
  for (auto _ : state) {
    tape.reset();
    const auto wm = tape.variable(ad::Tensor::matrix(n, n, w));
    const auto xv = tape.constant(ad::Tensor::vector(x));
    const auto y = tape.sqnorm(tape.matmul(wm, xv));
    tape.backward(y);
    benchmark::DoNotOptimize(tape.grad(wm).data.data());
  }
  state.SetItemsProcessed(state.iterations() * n * n);
}
BENCHMARK(BM_TapeMatvec)->Arg(64)->Arg(256)->Arg(1024);
