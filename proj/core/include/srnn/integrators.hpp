#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "srnn/autodiff.hpp"
#include "srnn/util.hpp"

namespace srnn::integrators {

/// Paired momentum/position vectors at one time point.
struct PhaseState {
  std::vector<double> p;
  std::vector<double> q;

  PhaseState() = default;
  PhaseState(std::vector<double> p_, std::vector<double> q_);
  std::size_t dim() const { return p.size(); }
  /// Flat [p..., q...] view used by datasets.
  std::vector<double> flat() const;
  static PhaseState from_flat(std::span<const double> z);
};

enum class IntegratorKind : std::uint8_t { kEuler, kLeapfrog, kReboundLeapfrog };

const char* integrator_name(IntegratorKind k);

// ---------------------------------------------------------------------------
// Plain numeric integrators (ground truth generation and test oracles).
// ---------------------------------------------------------------------------

/// Full vector field (dp/dt, dq/dt) = f(p, q).
using VectorField = std::function<void(std::span<const double> p, std::span<const double> q,
                                       std::span<double> pdot, std::span<double> qdot)>;

/// One-sided derivative field: V'(q) or K'(p).
using GradField = std::function<void(std::span<const double> x, std::span<double> out)>;

PhaseState euler_step(const VectorField& field, const PhaseState& z, double dt);

/// Half-kick / drift / half-kick:
///   p_half = p - dt/2 V'(q); q' = q + dt K'(p_half); p' = p_half - dt/2 V'(q').
PhaseState leapfrog_step(const GradField& v_prime, const GradField& k_prime,
                         const PhaseState& z, double dt);

std::vector<PhaseState> rollout_euler(const VectorField& field, const PhaseState& z0,
                                      std::size_t n_steps, double dt);
std::vector<PhaseState> rollout_leapfrog(const GradField& v_prime, const GradField& k_prime,
                                         const PhaseState& z0, std::size_t n_steps, double dt);

/// Generalized leapfrog for a non-separable field estimate: the dp half of
/// the field plays V', the dq half plays K', each evaluated at the phase
/// point the separable scheme would use. Reduces exactly to leapfrog_step
/// when dp ignores p and dq ignores q.
std::vector<PhaseState> rollout_leapfrog_general(const VectorField& field,
                                                 const PhaseState& z0, std::size_t n_steps,
                                                 double dt);

/// Momentum reflection p <- p - 2 (p.n) n, in place.
void reflect(std::span<double> p, std::span<const double> n);

// ---------------------------------------------------------------------------
// Adaptive Dormand-Prince 5(4), ground truth only.
// ---------------------------------------------------------------------------

using FlatField = std::function<void(double t, std::span<const double> y, std::span<double> dy)>;

struct AdaptiveOptions {
  double rtol = 1e-9;
  double atol = 1e-9;
  double safety = 0.9;
  double min_scale = 0.2;
  double max_scale = 5.0;
  std::size_t max_steps = 100000000;
};

class StepUnderflow : public Error {
 public:
  explicit StepUnderflow(const std::string& what) : Error(what) {}
};

/// Integrate y from t0 to t1 in place. Throws StepUnderflow when the error
/// controller drives the step below machine resolution (near-collision).
void adaptive_integrate(const FlatField& field, std::vector<double>& y, double t0, double t1,
                        const AdaptiveOptions& opts = {});

/// States at the given (ascending) times; times[0] is the initial time.
std::vector<std::vector<double>> adaptive_sample(const FlatField& field,
                                                 std::vector<double> y0,
                                                 std::span<const double> times,
                                                 const AdaptiveOptions& opts = {});

// ---------------------------------------------------------------------------
// Differentiable steps on a tape.
// ---------------------------------------------------------------------------

/// Field estimates bound to a tape. dp(p,q) estimates dp/dt and dq(p,q)
/// estimates dq/dt; for separable Hamiltonian models dp ignores p and dq
/// ignores q.
struct BoundField {
  std::function<std::pair<ad::ValueId, ad::ValueId>(ad::Tape&, ad::ValueId, ad::ValueId)> full;
  std::function<ad::ValueId(ad::Tape&, ad::ValueId p, ad::ValueId q)> dp;
  std::function<ad::ValueId(ad::Tape&, ad::ValueId p, ad::ValueId q)> dq;
};

std::pair<ad::ValueId, ad::ValueId> euler_graph_step(ad::Tape& tape, const BoundField& f,
                                                     ad::ValueId p, ad::ValueId q, double dt);

std::pair<ad::ValueId, ad::ValueId> leapfrog_graph_step(ad::Tape& tape, const BoundField& f,
                                                        ad::ValueId p, ad::ValueId q,
                                                        double dt);

/// Leapfrog whose duration is a tape scalar (used for the alpha-split).
std::pair<ad::ValueId, ad::ValueId> leapfrog_graph_step(ad::Tape& tape, const BoundField& f,
                                                        ad::ValueId p, ad::ValueId q,
                                                        ad::ValueId dt);

/// p - 2 (p.n) n on the tape. Exactly the identity when n = 0.
ad::ValueId reflect_graph(ad::Tape& tape, ad::ValueId p, ad::ValueId n);

/// Callbacks a rebound step needs from the outside: patch extraction around a
/// position (values enter the tape as constants) and head evaluation.
struct ReboundHooks {
  std::function<ad::Tensor(double x, double y, std::size_t size)> patch;
  std::function<std::tuple<ad::ValueId, ad::ValueId, ad::ValueId>(
      ad::Tape&, const ad::Tensor& patch_qt, const ad::Tensor& patch_qtilde,
      const ad::Tensor& patch_small)>
      heads;
  std::size_t patch_big = 10;
  std::size_t patch_small = 2;
};

struct ReboundStepResult {
  ad::ValueId p;
  ad::ValueId q;
  ad::ValueId gamma;
};

/// Rebound-augmented leapfrog: tentative full step, patches at the current
/// and tentative positions, event direction n = gamma * nbar and timing
/// alpha from the heads, leapfrog alpha*dt, momentum reflection, leapfrog
/// (1-alpha)*dt.
ReboundStepResult rebound_graph_step(ad::Tape& tape, const BoundField& f,
                                     const ReboundHooks& hooks, ad::ValueId p, ad::ValueId q,
                                     double dt);

struct RolloutGraph {
  std::vector<ad::ValueId> p;      // n_steps + 1 entries
  std::vector<ad::ValueId> q;
  std::vector<ad::ValueId> gamma;  // rebound rollouts only, n_steps entries
};

/// Differentiable multi-step rollout; state 0 equals the input ids.
RolloutGraph rollout_on_tape(ad::Tape& tape, IntegratorKind kind, const BoundField& f,
                             const ReboundHooks* hooks, ad::ValueId p0, ad::ValueId q0,
                             std::size_t n_steps, double dt);

}  // namespace srnn::integrators
