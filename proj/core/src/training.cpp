#include "srnn/training.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <memory>
#include <thread>

#include "srnn/systems.hpp"

namespace srnn::training {

using ad::Tape;
using ad::Tensor;
using ad::ValueId;
using integrators::BoundField;
using integrators::RolloutGraph;

// ---------------------------------------------------------------------------
// Loss and windows
// ---------------------------------------------------------------------------

double trajectory_loss(std::span<const PhaseState> predicted,
                       std::span<const PhaseState> observed) {
  if (predicted.size() != observed.size()) fail("trajectory_loss: length mismatch");
  double loss = 0.0;
  for (std::size_t i = 1; i < predicted.size(); ++i) {
    const PhaseState& a = predicted[i];
    const PhaseState& b = observed[i];
    if (a.dim() != b.dim()) fail("trajectory_loss: dimension mismatch");
    for (std::size_t j = 0; j < a.dim(); ++j) {
      const double dp = a.p[j] - b.p[j];
      const double dq = a.q[j] - b.q[j];
      loss += dp * dp + dq * dq;
    }
  }
  return loss;
}

std::vector<Window> slice_windows(const systems::Dataset& ds, std::size_t T) {
  if (T < 1) fail("slice_windows: T must be >= 1");
  if (ds.traj_len < T + 1) fail("slice_windows: T too large for the trajectory length");
  std::vector<Window> out;
  out.reserve(ds.n_traj * (ds.traj_len - T));
  for (std::size_t tr = 0; tr < ds.n_traj; ++tr) {
    for (std::size_t s = 0; s + T < ds.traj_len; ++s) out.push_back({tr, s});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Adam and schedulers
// ---------------------------------------------------------------------------

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               double lr, double beta1, double beta2, double eps) {
  const std::size_t n = params.size();
  if (grads.size() != n) fail("adam: shape mismatch");
  if (state.m.empty()) {
    state.m.assign(n, 0.0);
    state.v.assign(n, 0.0);
  }
  if (state.m.size() != n) fail("adam: state shape mismatch");
  for (double g : grads) {
    if (!std::isfinite(g)) fail("adam: non-finite gradient");
  }
  state.t += 1;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < n; ++i) {
    state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * grads[i];
    state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * grads[i] * grads[i];
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    params[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

double scheduler_step(const SchedulerSpec& spec, SchedulerState& state, double lr,
                      double metric) {
  switch (spec.kind) {
    case SchedulerKind::kNone:
      return lr;
    case SchedulerKind::kPlateau: {
      if (metric < state.best) {
        state.best = metric;
        state.bad = 0;
      } else {
        state.bad += 1;
        if (state.bad >= spec.patience) {
          lr *= spec.factor;
          state.bad = 0;
        }
      }
      return lr;
    }
    case SchedulerKind::kExponential:
      return std::max(lr * spec.decay, spec.min_lr);
  }
  return lr;
}

// ---------------------------------------------------------------------------
// Model rollouts
// ---------------------------------------------------------------------------

const char* mode_name(Mode m) {
  return m == Mode::kSingleStep ? "single_step" : "recurrent";
}

BoundModel bind_model(Tape& tape, const models::Model& model, bool trainable) {
  BoundModel b;
  const Tensor theta_t = Tensor::vector(model.gather_params());
  b.theta = trainable ? tape.variable(theta_t) : tape.constant(theta_t);
  std::size_t core_size = 0;
  switch (model.kind()) {
    case models::ModelKind::kHnet:
      b.hnet = models::bind_hnet(tape, model.hnet(), b.theta);
      core_size = model.hnet().params.size();
      break;
    case models::ModelKind::kOnet:
      b.onet = models::bind_onet(tape, model.onet(), b.theta);
      core_size = model.onet().params.size();
      break;
    case models::ModelKind::kRnn:
      b.rnn = models::bind_rnn(tape, model.rnn(), b.theta);
      core_size = model.rnn().params.size();
      break;
  }
  if (model.rebound) {
    b.rebound = models::bind_rebound(tape, model.rebound->spec, b.theta, core_size);
  }
  return b;
}

BoundField model_field(const BoundModel& bound) {
  BoundField f;
  if (bound.hnet) {
    const models::BoundHnet h = *bound.hnet;
    f.full = [h](Tape& t, ValueId p, ValueId q) { return h.time_derivative(t, p, q); };
    f.dp = [h](Tape& t, ValueId, ValueId q) { return t.scale(h.v_prime(t, q), -1.0); };
    f.dq = [h](Tape& t, ValueId p, ValueId) { return h.k_prime(t, p); };
  } else if (bound.onet) {
    const models::BoundOnet o = *bound.onet;
    f.full = [o](Tape& t, ValueId p, ValueId q) { return o.time_derivative(t, p, q); };
    f.dp = [o](Tape& t, ValueId p, ValueId q) { return o.time_derivative(t, p, q).first; };
    f.dq = [o](Tape& t, ValueId p, ValueId q) { return o.time_derivative(t, p, q).second; };
  } else {
    fail("model_field: recurrent models have no vector field");
  }
  return f;
}

namespace {

RolloutGraph rollout_rnn(Tape& tape, const models::BoundRnn& rnn, ValueId p0, ValueId q0,
                         std::size_t n_steps) {
  const std::size_t d = tape.value(p0).size();
  RolloutGraph g;
  g.p.reserve(n_steps + 1);
  g.q.reserve(n_steps + 1);
  g.p.push_back(p0);
  g.q.push_back(q0);
  ValueId h = tape.constant(Tensor::zeros({rnn.model->hidden}));
  ValueId z = tape.concat(p0, q0);
  for (std::size_t s = 0; s < n_steps; ++s) {
    auto [h_next, y] = rnn.step(tape, h, z);
    h = h_next;
    z = y;
    g.p.push_back(tape.slice(y, 0, d));
    g.q.push_back(tape.slice(y, d, d));
  }
  return g;
}

integrators::ReboundHooks make_hooks(const BoundModel& bound, const RolloutSpec& spec) {
  if (!bound.rebound) fail("rollout: rebound integrator needs a rebound module");
  if (spec.wall_image == nullptr) fail("rollout: rebound integrator needs a wall image");
  integrators::ReboundHooks hooks;
  const std::vector<double>* image = spec.wall_image;
  const std::size_t image_size = spec.image_size;
  hooks.patch_big = bound.rebound->spec->patch_big;
  hooks.patch_small = bound.rebound->spec->patch_small;
  hooks.patch = [image, image_size](double x, double y, std::size_t size) {
    return systems::extract_patch(*image, image_size, x, y, size);
  };
  const models::BoundRebound heads = *bound.rebound;
  hooks.heads = [heads](Tape& t, const Tensor& patch_qt, const Tensor& patch_qtilde,
                        const Tensor& patch_small) {
    const std::size_t big = patch_qt.size();
    const ValueId a = t.reshape(t.constant(patch_qt), {big});
    const ValueId b = t.reshape(t.constant(patch_qtilde), {big});
    const ValueId c = t.reshape(t.constant(patch_small), {patch_small.size()});
    const models::ReboundOutputs out = models::rebound_heads_forward(t, heads, a, b, c);
    return std::make_tuple(out.nbar, out.alpha, out.gamma);
  };
  return hooks;
}

}  // namespace

RolloutGraph rollout_model(Tape& tape, const BoundModel& bound, const RolloutSpec& spec,
                           ValueId p0, ValueId q0, std::size_t n_steps) {
  if (bound.rnn) {
    return rollout_rnn(tape, *bound.rnn, p0, q0, n_steps);
  }
  const BoundField f = model_field(bound);
  if (spec.kind == IntegratorKind::kReboundLeapfrog) {
    const integrators::ReboundHooks hooks = make_hooks(bound, spec);
    return integrators::rollout_on_tape(tape, spec.kind, f, &hooks, p0, q0, n_steps,
                                        spec.dt);
  }
  return integrators::rollout_on_tape(tape, spec.kind, f, nullptr, p0, q0, n_steps,
                                      spec.dt);
}

RolloutBinder model_rollout_binder(const models::Model& model, const RolloutSpec& spec) {
  return [&model, spec](Tape& tape, ValueId p0, ValueId q0, std::size_t n_steps) {
    const BoundModel bound = bind_model(tape, model, /*trainable=*/false);
    return rollout_model(tape, bound, spec, p0, q0, n_steps);
  };
}

RolloutBinder linear_rollout_binder(Tensor v_hessian, Tensor mass_inverse,
                                    IntegratorKind kind, double dt) {
  if (kind == IntegratorKind::kReboundLeapfrog) {
    fail("linear_rollout_binder: rebound integrator is not applicable");
  }
  return [v_hessian = std::move(v_hessian), mass_inverse = std::move(mass_inverse), kind,
          dt](Tape& tape, ValueId p0, ValueId q0, std::size_t n_steps) {
    const ValueId h = tape.constant(v_hessian);
    const ValueId minv = tape.constant(mass_inverse);
    BoundField f;
    f.dp = [h](Tape& t, ValueId, ValueId q) { return t.scale(t.matmul(h, q), -1.0); };
    f.dq = [minv](Tape& t, ValueId p, ValueId) { return t.matmul(minv, p); };
    f.full = [h, minv](Tape& t, ValueId p, ValueId q) {
      return std::make_pair(t.scale(t.matmul(h, q), -1.0), t.matmul(minv, p));
    };
    return integrators::rollout_on_tape(tape, kind, f, nullptr, p0, q0, n_steps, dt);
  };
}

std::vector<PhaseState> predict(const RolloutBinder& binder, const PhaseState& z0,
                                std::size_t n_steps) {
  Tape tape;
  const ValueId p0 = tape.constant(Tensor::vector(z0.p));
  const ValueId q0 = tape.constant(Tensor::vector(z0.q));
  const RolloutGraph g = binder(tape, p0, q0, n_steps);
  std::vector<PhaseState> traj;
  traj.reserve(n_steps + 1);
  for (std::size_t i = 0; i <= n_steps; ++i) {
    traj.emplace_back(tape.value(g.p[i]).data, tape.value(g.q[i]).data);
  }
  return traj;
}

// ---------------------------------------------------------------------------
// ISO
// ---------------------------------------------------------------------------

namespace {

/// Loss node sum_{i=1..T} |z_i - obs_i|^2 over a rollout already on the tape.
ValueId rollout_loss_node(Tape& tape, const RolloutGraph& g,
                          const std::function<std::span<const double>(std::size_t)>& obs,
                          std::size_t T, std::size_t d) {
  ValueId loss = tape.constant_scalar(0.0);
  for (std::size_t i = 1; i <= T; ++i) {
    const std::span<const double> z = obs(i);
    const ValueId op = tape.constant(Tensor::vector(std::vector<double>(z.begin(), z.begin() + d)));
    const ValueId oq = tape.constant(Tensor::vector(std::vector<double>(z.begin() + d, z.end())));
    loss = tape.add(loss, tape.sqnorm(tape.sub(g.p[i], op)));
    loss = tape.add(loss, tape.sqnorm(tape.sub(g.q[i], oq)));
  }
  return loss;
}

}  // namespace

std::vector<double> iso_fit_initial(const RolloutBinder& binder,
                                    std::span<const double> obs_flat, std::size_t k,
                                    std::size_t d, const LbfgsOptions& opts,
                                    LbfgsResult* report) {
  if (k < 1) fail("iso_fit_initial: need at least one observation");
  if (obs_flat.size() != k * 2 * d) fail("iso_fit_initial: observation size mismatch");
  std::vector<double> x(obs_flat.begin(), obs_flat.begin() + 2 * d);
  if (k == 1) {
    // Loss excludes step 0, so the objective is empty and the observation is
    // already the minimizer.
    if (report != nullptr) *report = LbfgsResult{0.0, 0, true, false};
    return x;
  }
  const std::size_t T = k - 1;
  Tape tape;
  const ObjectiveFn fn = [&](std::span<const double> z, std::span<double> grad) {
    tape.reset();
    const ValueId p0 = tape.variable(Tensor::vector(std::vector<double>(z.begin(), z.begin() + d)));
    const ValueId q0 = tape.variable(Tensor::vector(std::vector<double>(z.begin() + d, z.end())));
    const RolloutGraph g = binder(tape, p0, q0, T);
    const ValueId loss = rollout_loss_node(
        tape, g,
        [&](std::size_t i) { return obs_flat.subspan(i * 2 * d, 2 * d); }, T, d);
    const double value = tape.scalar_value(loss);
    tape.backward(loss);
    const Tensor& gp = tape.grad(p0);
    const Tensor& gq = tape.grad(q0);
    std::copy(gp.data.begin(), gp.data.end(), grad.begin());
    std::copy(gq.data.begin(), gq.data.end(), grad.begin() + d);
    return value;
  };
  const LbfgsResult res = lbfgs_minimize(fn, x, opts);
  if (report != nullptr) *report = res;
  return x;
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

namespace {

constexpr std::size_t kChunk = 16;  // fixed reduction granularity (determinism)

struct ChunkResult {
  std::vector<double> grad;
  double loss = 0.0;  // summed over the chunk's windows
};

void run_chunks(int threads, std::size_t n_chunks, const std::function<void(std::size_t)>& work) {
  if (threads <= 1 || n_chunks <= 1) {
    for (std::size_t c = 0; c < n_chunks; ++c) work(c);
    return;
  }
  std::atomic<std::size_t> next{0};
  auto runner = [&] {
    for (;;) {
      const std::size_t c = next.fetch_add(1);
      if (c >= n_chunks) return;
      work(c);
    }
  };
  std::vector<std::thread> pool;
  const int n_threads = std::min<int>(threads, static_cast<int>(n_chunks));
  pool.reserve(n_threads - 1);
  for (int i = 1; i < n_threads; ++i) pool.emplace_back(runner);
  runner();
  for (auto& t : pool) t.join();
}

}  // namespace

TrainResult train(models::Model& model, const systems::Dataset& ds, const TrainConfig& cfg) {
  ds.validate();
  if (model.dim() != ds.d) fail("train: model/dataset dimension mismatch");
  if (cfg.dt != 0.0 && std::abs(cfg.dt - ds.dt) > 1e-12) {
    fail("train: config dt disagrees with the dataset grid");
  }
  const std::size_t T = cfg.mode == Mode::kSingleStep ? 1 : std::min(cfg.window, ds.traj_len - 1);
  const std::vector<Window> windows = slice_windows(ds, T);
  const std::size_t n_windows = windows.size();
  const std::size_t batch = cfg.batch == 0 ? n_windows : std::min(cfg.batch, n_windows);
  const std::size_t d = ds.d;

  RolloutSpec rspec;
  rspec.kind = cfg.kind;
  rspec.dt = ds.dt;
  rspec.wall_image = cfg.wall_image;
  rspec.image_size = cfg.image_size;
  if (cfg.kind == IntegratorKind::kReboundLeapfrog &&
      (model.rebound == std::nullopt || cfg.wall_image == nullptr)) {
    fail("train: rebound integrator needs a rebound module and a wall image");
  }

  // ISO state: learnable initial state per window, seeded from observations.
  std::vector<std::vector<double>> z0s;
  if (cfg.iso) {
    z0s.reserve(n_windows);
    for (const Window& w : windows) {
      const auto z = ds.state(w.traj, w.start);
      z0s.emplace_back(z.begin(), z.end());
    }
  }

  std::vector<double> params = model.gather_params();
  AdamState adam;
  SchedulerState sched;
  double lr = cfg.lr;
  TrainResult result;
  result.history.reserve(cfg.epochs);

  std::vector<std::size_t> order(n_windows);
  std::vector<std::unique_ptr<Tape>> tapes;  // one per concurrent chunk slot, reused
  const std::size_t max_chunks = (batch + kChunk - 1) / kChunk;
  std::vector<ChunkResult> chunk_results(max_chunks);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < n_windows; ++i) order[i] = i;
    Rng shuffle_rng(subseed(cfg.seed, epoch));
    shuffle(order, shuffle_rng);

    double epoch_loss = 0.0;
    for (std::size_t batch_start = 0; batch_start < n_windows; batch_start += batch) {
      const std::size_t batch_n = std::min(batch, n_windows - batch_start);
      const std::size_t n_chunks = (batch_n + kChunk - 1) / kChunk;
      if (tapes.size() < n_chunks) {
        for (std::size_t i = tapes.size(); i < n_chunks; ++i) {
          tapes.push_back(std::make_unique<Tape>());
        }
      }

      run_chunks(cfg.threads, n_chunks, [&](std::size_t c) {
        Tape& tape = *tapes[c];
        tape.reset();
        const BoundModel bound = bind_model(tape, model, /*trainable=*/true);
        ValueId loss = tape.constant_scalar(0.0);
        const std::size_t lo = batch_start + c * kChunk;
        const std::size_t hi = std::min(lo + kChunk, batch_start + batch_n);
        for (std::size_t i = lo; i < hi; ++i) {
          const Window& w = windows[order[i]];
          ValueId p0, q0;
          if (cfg.iso) {
            const std::vector<double>& z = z0s[order[i]];
            p0 = tape.constant(Tensor::vector(std::vector<double>(z.begin(), z.begin() + d)));
            q0 = tape.constant(Tensor::vector(std::vector<double>(z.begin() + d, z.end())));
          } else {
            const auto z = ds.state(w.traj, w.start);
            p0 = tape.constant(Tensor::vector(std::vector<double>(z.begin(), z.begin() + d)));
            q0 = tape.constant(Tensor::vector(std::vector<double>(z.begin() + d, z.end())));
          }
          const RolloutGraph g = rollout_model(tape, bound, rspec, p0, q0, T);
          ValueId wloss = rollout_loss_node(
              tape, g,
              [&](std::size_t s) { return ds.state(w.traj, w.start + s); }, T, d);
          if (cfg.gamma_l1 > 0.0 && !g.gamma.empty()) {
            ValueId gsum = g.gamma[0];
            for (std::size_t s = 1; s < g.gamma.size(); ++s) {
              gsum = tape.add(gsum, g.gamma[s]);
            }
            // gamma lives in (0,1), so |gamma|_1 is just the sum
            wloss = tape.add(wloss, tape.scale(gsum, cfg.gamma_l1));
          }
          loss = tape.add(loss, wloss);
        }
        ChunkResult& out = chunk_results[c];
        out.loss = tape.scalar_value(loss);
        tape.backward(loss);
        const Tensor& g = tape.grad(bound.theta);
        out.grad.assign(g.data.begin(), g.data.end());
      });

      // Ordered reduction keeps results independent of the thread count.
      std::vector<double> grad(params.size(), 0.0);
      double batch_loss = 0.0;
      for (std::size_t c = 0; c < n_chunks; ++c) {
        batch_loss += chunk_results[c].loss;
        const std::vector<double>& g = chunk_results[c].grad;
        for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += g[i];
      }
      const double inv = 1.0 / static_cast<double>(batch_n);
      for (double& g : grad) g *= inv;
      epoch_loss += batch_loss;

      if (!std::isfinite(batch_loss)) {
        fail("train: loss diverged at epoch " + std::to_string(epoch));
      }
      adam_step(params, grad, adam, lr);
      model.scatter_params(params);
    }

    const double metric = epoch_loss / static_cast<double>(n_windows);
    const bool iso_now = cfg.iso && epoch + 1 > cfg.iso_start &&
                         (epoch + 1 - cfg.iso_start) % cfg.iso_every == 0;
    if (iso_now) {
      LbfgsOptions iso_opts;
      iso_opts.max_iters = cfg.iso_iters;
      const RolloutBinder binder = model_rollout_binder(model, rspec);
      const std::size_t n_chunks = (n_windows + kChunk - 1) / kChunk;
      run_chunks(cfg.threads, n_chunks, [&](std::size_t c) {
        const std::size_t lo = c * kChunk;
        const std::size_t hi = std::min(lo + kChunk, n_windows);
        for (std::size_t i = lo; i < hi; ++i) {
          const Window& w = windows[i];
          std::vector<double> obs;
          obs.reserve((T + 1) * 2 * d);
          for (std::size_t s = 0; s <= T; ++s) {
            const auto z = ds.state(w.traj, w.start + s);
            obs.insert(obs.end(), z.begin(), z.end());
          }
          // Warm start from the current estimate rather than the observation.
          std::copy(z0s[i].begin(), z0s[i].end(), obs.begin());
          z0s[i] = iso_fit_initial(binder, obs, T + 1, d, iso_opts);
        }
      });
    }

    result.history.push_back({epoch, metric, lr, iso_now});
    lr = scheduler_step(cfg.scheduler, sched, lr, metric);
  }

  result.iso_initial_states = std::move(z0s);
  return result;
}

}  // namespace srnn::training
