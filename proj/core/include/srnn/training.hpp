#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "srnn/dataset.hpp"
#include "srnn/integrators.hpp"
#include "srnn/lbfgs.hpp"
#include "srnn/models.hpp"

namespace srnn::training {

using integrators::IntegratorKind;
using integrators::PhaseState;

// ---------------------------------------------------------------------------
// Loss and window slicing
// ---------------------------------------------------------------------------

/// Sum over steps 1..T of the squared L2 distance; step 0 is excluded (it is
/// the anchor/parameter, not a prediction).
double trajectory_loss(std::span<const PhaseState> predicted,
                       std::span<const PhaseState> observed);

struct Window {
  std::size_t traj = 0;
  std::size_t start = 0;
};

/// All stride-1 windows of length T+1 (starts 0 .. traj_len-1-T per
/// trajectory).
std::vector<Window> slice_windows(const systems::Dataset& ds, std::size_t T);

// ---------------------------------------------------------------------------
// Optimizers and schedulers
// ---------------------------------------------------------------------------

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t t = 0;
};

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

enum class SchedulerKind : std::uint8_t { kNone, kPlateau, kExponential };

struct SchedulerSpec {
  SchedulerKind kind = SchedulerKind::kNone;
  double factor = 0.7;    // plateau
  int patience = 15;      // plateau: epochs without improvement before decay
  double decay = 0.99;    // exponential
  double min_lr = 1e-4;   // exponential floor
};

struct SchedulerState {
  double best = std::numeric_limits<double>::infinity();
  int bad = 0;
};

/// Returns the learning rate for the next epoch.
double scheduler_step(const SchedulerSpec& spec, SchedulerState& state, double lr,
                      double metric);

// ---------------------------------------------------------------------------
// Model rollouts on a tape
// ---------------------------------------------------------------------------

struct BoundModel {
  ad::ValueId theta = 0;
  std::optional<models::BoundHnet> hnet;
  std::optional<models::BoundOnet> onet;
  std::optional<models::BoundRnn> rnn;
  std::optional<models::BoundRebound> rebound;
};

/// Registers the model parameters on the tape (as a variable when trainable,
/// as a constant otherwise) and slices the layer views.
BoundModel bind_model(ad::Tape& tape, const models::Model& model, bool trainable);

/// How to roll a model out: integrator kind, step size, and (for rebound
/// models) the wall image. The image pointer must outlive the rollouts.
struct RolloutSpec {
  IntegratorKind kind = IntegratorKind::kLeapfrog;
  double dt = 0.1;
  const std::vector<double>* wall_image = nullptr;
  std::size_t image_size = 128;
};

integrators::BoundField model_field(const BoundModel& bound);

integrators::RolloutGraph rollout_model(ad::Tape& tape, const BoundModel& bound,
                                        const RolloutSpec& spec, ad::ValueId p0,
                                        ad::ValueId q0, std::size_t n_steps);

/// Rebuildable rollout closure: binds whatever it needs on the given tape and
/// rolls out from the given initial-state ids.
using RolloutBinder = std::function<integrators::RolloutGraph(
    ad::Tape&, ad::ValueId p0, ad::ValueId q0, std::size_t n_steps)>;

/// Binder over a trained model (parameters enter as constants).
RolloutBinder model_rollout_binder(const models::Model& model, const RolloutSpec& spec);

/// Binder over an analytic linear Hamiltonian: V'(q) = H q, K'(p) = Minv p.
/// Covers the harmonic oscillator and the spring chain exactly.
RolloutBinder linear_rollout_binder(ad::Tensor v_hessian, ad::Tensor mass_inverse,
                                    IntegratorKind kind, double dt);

/// Forward-only prediction (no gradients).
std::vector<PhaseState> predict(const RolloutBinder& binder, const PhaseState& z0,
                                std::size_t n_steps);

// ---------------------------------------------------------------------------
// Initial state optimization
// ---------------------------------------------------------------------------

/// Fit the initial state to observations obs[0..k-1] (flat 2d-states) by
/// minimizing the trajectory loss over steps 1..k-1 with L-BFGS, starting
/// from obs[0]. With k = 1 there is nothing to fit and obs[0] is returned.
std::vector<double> iso_fit_initial(const RolloutBinder& binder,
                                    std::span<const double> obs_flat, std::size_t k,
                                    std::size_t d, const LbfgsOptions& opts = {},
                                    LbfgsResult* report = nullptr);

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

enum class Mode : std::uint8_t { kSingleStep, kRecurrent };

const char* mode_name(Mode m);

struct TrainConfig {
  Mode mode = Mode::kRecurrent;
  IntegratorKind kind = IntegratorKind::kLeapfrog;
  double dt = 0.0;            // 0 = take the dataset grid
  std::size_t window = 9;     // T in recurrent mode (single-step forces T=1)
  std::size_t epochs = 100;
  std::size_t batch = 256;    // 0 = full batch
  double lr = 1e-3;
  SchedulerSpec scheduler;
  bool iso = false;
  std::size_t iso_start = 100;  // parameter-only epochs before ISO begins
  std::size_t iso_every = 1;    // run ISO after every k-th epoch once started
  int iso_iters = 20;           // L-BFGS iteration cap per ISO call
  double gamma_l1 = 0.0;        // rebound gamma regularization weight
  std::uint64_t seed = 0;       // shuffle seed
  int threads = 1;
  const std::vector<double>* wall_image = nullptr;
  std::size_t image_size = 128;
};

struct EpochLog {
  std::size_t epoch = 0;
  double loss = 0.0;  // mean per-window objective (includes the gamma term)
  double lr = 0.0;
  bool iso_active = false;
};

struct TrainResult {
  std::vector<EpochLog> history;
  /// Learned per-window initial states (flat 2d), present when ISO ran.
  std::vector<std::vector<double>> iso_initial_states;
};

/// Gradient-descent fit of the model to the dataset windows. Deterministic
/// for a fixed config: the shuffle, batching and reduction orders do not
/// depend on the thread count.
TrainResult train(models::Model& model, const systems::Dataset& ds, const TrainConfig& cfg);

}  // namespace srnn::training
