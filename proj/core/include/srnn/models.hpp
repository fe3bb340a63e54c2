#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "srnn/autodiff.hpp"
#include "srnn/util.hpp"

namespace srnn::models {

enum class Act : std::uint8_t { kIdentity, kTanh, kSigmoid, kRelu };

const char* act_name(Act a);
Act act_from_name(const std::string& name);

/// Fully-connected stack: widths = {input, hidden..., output}. An optional
/// fixed affine input transform x -> (x - input_shift) * input_scale and a
/// fixed output_scale keep network activations O(1) for systems whose raw
/// units are large (pixel coordinates); both default to the identity and are
/// not trained.
struct MlpSpec {
  std::vector<std::size_t> widths;
  Act hidden = Act::kTanh;
  Act output = Act::kIdentity;
  std::vector<double> input_shift;   // empty = zeros
  std::vector<double> input_scale;   // empty = ones
  std::vector<double> output_scale;  // empty = ones

  std::size_t layer_count() const { return widths.size() - 1; }
  std::size_t input_dim() const { return widths.front(); }
  std::size_t output_dim() const { return widths.back(); }
  std::size_t param_count() const;
  std::size_t weight_offset(std::size_t layer) const;
  std::size_t bias_offset(std::size_t layer) const;
  void validate() const;
};

/// Flat trainable parameter storage; layer slices are derived from a spec.
struct ParamVector {
  std::vector<double> values;
  std::size_t size() const { return values.size(); }
};

/// Per-layer uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)], seeded.
void init_mlp_params(const MlpSpec& spec, std::vector<double>& out, Rng& rng);

// ---------------------------------------------------------------------------
// On-tape networks. bind_* registers parameter slices on a tape once; the
// returned handles can then be evaluated many times on that tape.
// ---------------------------------------------------------------------------

struct BoundMlp {
  const MlpSpec* spec = nullptr;
  std::vector<ad::ValueId> weights;
  std::vector<ad::ValueId> biases;
  std::vector<ad::ValueId> weights_t;  // transposes, for input gradients
};

/// Slice an MLP's layers out of a flat parameter tensor starting at `offset`.
BoundMlp bind_mlp(ad::Tape& tape, const MlpSpec& spec, ad::ValueId theta,
                  std::size_t offset, bool with_transpose = false);

ad::ValueId mlp_forward(ad::Tape& tape, const BoundMlp& mlp, ad::ValueId x);

/// Gradient of a scalar-output MLP w.r.t. its input, built as an explicit
/// first-order graph (chain of activation-derivative products), so that a
/// single reverse sweep over the tape yields exact parameter gradients of any
/// loss that consumes this gradient. Hidden activations must be tanh or
/// sigmoid; the output layer must be linear.
ad::ValueId mlp_input_gradient(ad::Tape& tape, const BoundMlp& mlp, ad::ValueId x);

// ---------------------------------------------------------------------------
// Dynamics models
// ---------------------------------------------------------------------------

/// Separable Hamiltonian model H(p,q) = K(p) + V(q); both nets map R^d -> R.
/// Parameters are stored flat as [K | V].
struct HnetModel {
  MlpSpec kinetic;
  MlpSpec potential;
  ParamVector params;
  std::size_t dim() const { return kinetic.input_dim(); }
};

/// Single net mapping (p,q) in R^{2d} to the estimated (dp/dt, dq/dt).
struct OnetModel {
  MlpSpec net;
  ParamVector params;
  std::size_t dim() const { return net.input_dim() / 2; }
};

/// Vanilla RNN: h' = tanh(W_x x + W_h h + b_h), prediction y = W_o h' + b_o.
struct RnnModel {
  std::size_t state_dim = 0;  // 2d
  std::size_t hidden = 0;
  ParamVector params;
  std::size_t dim() const { return state_dim / 2; }
  std::size_t param_count() const;
  // offsets into the flat parameter vector
  std::size_t wx_offset() const { return 0; }
  std::size_t wh_offset() const { return hidden * state_dim; }
  std::size_t bh_offset() const { return wh_offset() + hidden * hidden; }
  std::size_t wo_offset() const { return bh_offset() + hidden; }
  std::size_t bo_offset() const { return wo_offset() + state_dim * hidden; }
};

/// Rebound event heads. The direction net (patches -> nbar) and the timing
/// net (patches -> alpha) share their first hidden layer; gamma has its own
/// small net over a 2x2 patch. All activations tanh except the alpha output,
/// which is relu clamped to [0,1].
struct ReboundSpec {
  std::size_t patch_big = 10;
  std::size_t patch_small = 2;
  std::size_t shared_hidden = 128;
  std::size_t branch_hidden = 32;
  std::size_t gamma_hidden = 16;
  bool fix_alpha = false;  // alpha == 1: reflection at the end of the step
  double eps = 1e-8;       // nbar zero-vector guard

  std::size_t big_input() const { return 2 * patch_big * patch_big; }
  std::size_t small_input() const { return patch_small * patch_small; }
  std::size_t param_count() const;
};

struct ReboundModel {
  ReboundSpec spec;
  ParamVector params;
};

struct BoundRebound {
  const ReboundSpec* spec = nullptr;
  ad::ValueId w1, b1;            // shared 2*100 -> 128
  ad::ValueId w2n, b2n, w3n, b3n;  // nbar branch
  ad::ValueId w2a, b2a, w3a, b3a;  // alpha branch
  ad::ValueId wg1, bg1, wg2, bg2, wg3, bg3;  // gamma net
};

BoundRebound bind_rebound(ad::Tape& tape, const ReboundSpec& spec, ad::ValueId theta,
                          std::size_t offset);

struct ReboundOutputs {
  ad::ValueId nbar;   // unit direction (or zero below eps)
  ad::ValueId alpha;  // in [0,1]
  ad::ValueId gamma;  // in (0,1)
};

/// patch_qt / patch_qtilde are the flattened 10x10 patches at the current and
/// tentative positions; patch_small is the flattened 2x2 patch at the
/// tentative position.
ReboundOutputs rebound_heads_forward(ad::Tape& tape, const BoundRebound& heads,
                                     ad::ValueId patch_qt, ad::ValueId patch_qtilde,
                                     ad::ValueId patch_small);

// ---------------------------------------------------------------------------
// Model container used by training / evaluation / checkpoints
// ---------------------------------------------------------------------------

enum class ModelKind : std::uint8_t { kHnet, kOnet, kRnn };

const char* model_kind_name(ModelKind k);

struct Model {
  std::variant<HnetModel, OnetModel, RnnModel> core;
  std::optional<ReboundModel> rebound;

  ModelKind kind() const;
  std::size_t dim() const;
  HnetModel& hnet() { return std::get<HnetModel>(core); }
  const HnetModel& hnet() const { return std::get<HnetModel>(core); }
  OnetModel& onet() { return std::get<OnetModel>(core); }
  const OnetModel& onet() const { return std::get<OnetModel>(core); }
  RnnModel& rnn() { return std::get<RnnModel>(core); }
  const RnnModel& rnn() const { return std::get<RnnModel>(core); }

  /// All trainable parameters viewed as one flat vector: core params
  /// followed by rebound params when present.
  std::size_t param_count() const;
  std::vector<double> gather_params() const;
  void scatter_params(const std::vector<double>& flat);
};

Model make_hnet(std::size_t dim, const std::vector<std::size_t>& hidden, Rng& rng);
Model make_onet(std::size_t dim, const std::vector<std::size_t>& hidden, Rng& rng);
Model make_rnn(std::size_t dim, std::size_t hidden, Rng& rng);
void attach_rebound(Model& model, const ReboundSpec& spec, Rng& rng);

// Bound views used by rollouts -----------------------------------------------

struct BoundHnet {
  BoundMlp kinetic;
  BoundMlp potential;
  ad::ValueId v_prime(ad::Tape& tape, ad::ValueId q) const;
  ad::ValueId k_prime(ad::Tape& tape, ad::ValueId p) const;
  /// (dp/dt, dq/dt) = (-V'(q), +K'(p))
  std::pair<ad::ValueId, ad::ValueId> time_derivative(ad::Tape& tape, ad::ValueId p,
                                                      ad::ValueId q) const;
};

struct BoundOnet {
  BoundMlp net;
  std::size_t dim = 0;
  std::pair<ad::ValueId, ad::ValueId> time_derivative(ad::Tape& tape, ad::ValueId p,
                                                      ad::ValueId q) const;
};

struct BoundRnn {
  const RnnModel* model = nullptr;
  ad::ValueId wx, wh, bh, wo, bo;
  /// Returns (new_hidden, predicted_next_state).
  std::pair<ad::ValueId, ad::ValueId> step(ad::Tape& tape, ad::ValueId hidden,
                                           ad::ValueId state) const;
};

BoundHnet bind_hnet(ad::Tape& tape, const HnetModel& m, ad::ValueId theta,
                    std::size_t offset = 0);
BoundOnet bind_onet(ad::Tape& tape, const OnetModel& m, ad::ValueId theta,
                    std::size_t offset = 0);
BoundRnn bind_rnn(ad::Tape& tape, const RnnModel& m, ad::ValueId theta,
                  std::size_t offset = 0);

}  // namespace srnn::models
