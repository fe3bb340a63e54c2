#include "srnn/models.hpp"

#include <cmath>
#include <cstring>

namespace srnn::models {

using ad::Tape;
using ad::Tensor;
using ad::ValueId;

const char* act_name(Act a) {
  switch (a) {
    case Act::kIdentity: return "identity";
    case Act::kTanh: return "tanh";
    case Act::kSigmoid: return "sigmoid";
    case Act::kRelu: return "relu";
  }
  return "?";
}

Act act_from_name(const std::string& name) {
  if (name == "identity") return Act::kIdentity;
  if (name == "tanh") return Act::kTanh;
  if (name == "sigmoid") return Act::kSigmoid;
  if (name == "relu") return Act::kRelu;
  fail("unknown activation: " + name);
}

void MlpSpec::validate() const {
  if (widths.size() < 3) fail("mlp spec needs at least one hidden layer");
  for (std::size_t w : widths) {
    if (w == 0) fail("mlp spec widths must be positive");
  }
  if (!input_shift.empty() && input_shift.size() != input_dim()) {
    fail("mlp input_shift size mismatch");
  }
  if (!input_scale.empty() && input_scale.size() != input_dim()) {
    fail("mlp input_scale size mismatch");
  }
  if (!output_scale.empty() && output_scale.size() != output_dim()) {
    fail("mlp output_scale size mismatch");
  }
}

std::size_t MlpSpec::param_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    n += widths[l] * widths[l + 1] + widths[l + 1];
  }
  return n;
}

std::size_t MlpSpec::weight_offset(std::size_t layer) const {
  std::size_t off = 0;
  for (std::size_t l = 0; l < layer; ++l) {
    off += widths[l] * widths[l + 1] + widths[l + 1];
  }
  return off;
}

std::size_t MlpSpec::bias_offset(std::size_t layer) const {
  return weight_offset(layer) + widths[layer] * widths[layer + 1];
}

void init_mlp_params(const MlpSpec& spec, std::vector<double>& out, Rng& rng) {
  spec.validate();
  for (std::size_t l = 0; l + 1 < spec.widths.size(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(spec.widths[l]));
    const std::size_t n = spec.widths[l] * spec.widths[l + 1] + spec.widths[l + 1];
    for (std::size_t i = 0; i < n; ++i) out.push_back(rng.uniform(-bound, bound));
  }
}

namespace {

ValueId apply_act(Tape& tape, Act act, ValueId x) {
  switch (act) {
    case Act::kIdentity: return x;
    case Act::kTanh: return tape.tanh(x);
    case Act::kSigmoid: return tape.sigmoid(x);
    case Act::kRelu: return tape.relu(x);
  }
  fail("bad activation");
}

/// Elementwise derivative of the activation at pre-activation z, expressed
/// with tape primitives so it stays differentiable w.r.t. z.
ValueId act_derivative(Tape& tape, Act act, ValueId z) {
  switch (act) {
    case Act::kTanh: {
      const ValueId t = tape.tanh(z);
      const ValueId ones = tape.constant(Tensor::full(tape.value(z).shape, 1.0));
      return tape.sub(ones, tape.mul(t, t));
    }
    case Act::kSigmoid: {
      const ValueId s = tape.sigmoid(z);
      const ValueId ones = tape.constant(Tensor::full(tape.value(z).shape, 1.0));
      return tape.mul(s, tape.sub(ones, s));
    }
    default:
      fail("input gradient supports tanh/sigmoid hidden activations only");
  }
}

}  // namespace

BoundMlp bind_mlp(Tape& tape, const MlpSpec& spec, ValueId theta, std::size_t offset,
                  bool with_transpose) {
  spec.validate();
  BoundMlp mlp;
  mlp.spec = &spec;
  const std::size_t layers = spec.layer_count();
  mlp.weights.reserve(layers);
  mlp.biases.reserve(layers);
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t in = spec.widths[l];
    const std::size_t out = spec.widths[l + 1];
    const ValueId wflat = tape.slice(theta, offset + spec.weight_offset(l), in * out);
    const ValueId w = tape.reshape(wflat, {out, in});
    mlp.weights.push_back(w);
    mlp.biases.push_back(tape.slice(theta, offset + spec.bias_offset(l), out));
    if (with_transpose) mlp.weights_t.push_back(tape.transpose(w));
  }
  return mlp;
}

ValueId mlp_forward(Tape& tape, const BoundMlp& mlp, ValueId x) {
  const MlpSpec& spec = *mlp.spec;
  if (tape.value(x).size() != spec.input_dim()) fail("mlp_forward: input dimension mismatch");
  ValueId h = x;
  if (!spec.input_shift.empty()) {
    h = tape.sub(h, tape.constant(Tensor::vector(spec.input_shift)));
  }
  if (!spec.input_scale.empty()) {
    h = tape.mul(h, tape.constant(Tensor::vector(spec.input_scale)));
  }
  const std::size_t layers = spec.layer_count();
  for (std::size_t l = 0; l < layers; ++l) {
    h = tape.add(tape.matmul(mlp.weights[l], h), mlp.biases[l]);
    h = apply_act(tape, l + 1 == layers ? spec.output : spec.hidden, h);
  }
  if (!spec.output_scale.empty()) {
    h = tape.mul(h, tape.constant(Tensor::vector(spec.output_scale)));
  }
  return h;
}

ValueId mlp_input_gradient(Tape& tape, const BoundMlp& mlp, ValueId x) {
  const MlpSpec& spec = *mlp.spec;
  if (spec.output_dim() != 1) fail("mlp_input_gradient: output dimension must be 1");
  if (spec.output != Act::kIdentity) {
    fail("mlp_input_gradient: output layer must be linear");
  }
  if (mlp.weights_t.empty()) fail("mlp_input_gradient: bind with with_transpose");
  if (tape.value(x).size() != spec.input_dim()) {
    fail("mlp_input_gradient: input dimension mismatch");
  }

  // Forward, keeping pre-activations of the hidden layers.
  ValueId h = x;
  if (!spec.input_shift.empty()) {
    h = tape.sub(h, tape.constant(Tensor::vector(spec.input_shift)));
  }
  if (!spec.input_scale.empty()) {
    h = tape.mul(h, tape.constant(Tensor::vector(spec.input_scale)));
  }
  const std::size_t layers = spec.layer_count();
  std::vector<ValueId> pre;
  pre.reserve(layers - 1);
  for (std::size_t l = 0; l + 1 < layers; ++l) {
    const ValueId z = tape.add(tape.matmul(mlp.weights[l], h), mlp.biases[l]);
    pre.push_back(z);
    h = apply_act(tape, spec.hidden, z);
  }

  // Reverse chain: g = W_L^T * 1, then g <- W_l^T (act'(z_l) .* g).
  ValueId g = tape.reshape(mlp.weights_t[layers - 1], {spec.widths[layers - 1]});
  for (std::size_t l = layers - 1; l-- > 0;) {
    g = tape.mul(act_derivative(tape, spec.hidden, pre[l]), g);
    g = tape.matmul(mlp.weights_t[l], g);
  }
  if (!spec.input_scale.empty()) {
    g = tape.mul(g, tape.constant(Tensor::vector(spec.input_scale)));
  }
  if (!spec.output_scale.empty()) {
    g = tape.scale(g, spec.output_scale[0]);
  }
  return g;
}

// ---------------------------------------------------------------------------
// Rebound heads
// ---------------------------------------------------------------------------

std::size_t ReboundSpec::param_count() const {
  const std::size_t in = big_input();
  std::size_t n = in * shared_hidden + shared_hidden;
  n += 2 * (shared_hidden * branch_hidden + branch_hidden);  // both branches
  n += branch_hidden * 2 + 2;                                // nbar out
  n += branch_hidden * 1 + 1;                                // alpha out
  n += small_input() * gamma_hidden + gamma_hidden;
  n += gamma_hidden * gamma_hidden + gamma_hidden;
  n += gamma_hidden * 1 + 1;
  return n;
}

namespace {

ValueId slice_matrix(Tape& tape, ValueId theta, std::size_t& off, std::size_t rows,
                     std::size_t cols) {
  const ValueId flat = tape.slice(theta, off, rows * cols);
  off += rows * cols;
  return tape.reshape(flat, {rows, cols});
}

ValueId slice_vector(Tape& tape, ValueId theta, std::size_t& off, std::size_t n) {
  const ValueId v = tape.slice(theta, off, n);
  off += n;
  return v;
}

}  // namespace

BoundRebound bind_rebound(Tape& tape, const ReboundSpec& spec, ValueId theta,
                          std::size_t offset) {
  BoundRebound r;
  r.spec = &spec;
  std::size_t off = offset;
  const std::size_t in = spec.big_input();
  r.w1 = slice_matrix(tape, theta, off, spec.shared_hidden, in);
  r.b1 = slice_vector(tape, theta, off, spec.shared_hidden);
  r.w2n = slice_matrix(tape, theta, off, spec.branch_hidden, spec.shared_hidden);
  r.b2n = slice_vector(tape, theta, off, spec.branch_hidden);
  r.w3n = slice_matrix(tape, theta, off, 2, spec.branch_hidden);
  r.b3n = slice_vector(tape, theta, off, 2);
  r.w2a = slice_matrix(tape, theta, off, spec.branch_hidden, spec.shared_hidden);
  r.b2a = slice_vector(tape, theta, off, spec.branch_hidden);
  r.w3a = slice_matrix(tape, theta, off, 1, spec.branch_hidden);
  r.b3a = slice_vector(tape, theta, off, 1);
  r.wg1 = slice_matrix(tape, theta, off, spec.gamma_hidden, spec.small_input());
  r.bg1 = slice_vector(tape, theta, off, spec.gamma_hidden);
  r.wg2 = slice_matrix(tape, theta, off, spec.gamma_hidden, spec.gamma_hidden);
  r.bg2 = slice_vector(tape, theta, off, spec.gamma_hidden);
  r.wg3 = slice_matrix(tape, theta, off, 1, spec.gamma_hidden);
  r.bg3 = slice_vector(tape, theta, off, 1);
  if (off != offset + spec.param_count()) fail("rebound bind: offset bookkeeping broke");
  return r;
}

ReboundOutputs rebound_heads_forward(Tape& tape, const BoundRebound& heads,
                                     ValueId patch_qt, ValueId patch_qtilde,
                                     ValueId patch_small) {
  const ReboundSpec& spec = *heads.spec;
  if (tape.value(patch_qt).size() != spec.patch_big * spec.patch_big ||
      tape.value(patch_qtilde).size() != spec.patch_big * spec.patch_big) {
    fail("rebound heads: bad big patch shape");
  }
  if (tape.value(patch_small).size() != spec.small_input()) {
    fail("rebound heads: bad small patch shape");
  }
  const ValueId in = tape.concat(patch_qt, patch_qtilde);
  const ValueId h1 = tape.tanh(tape.add(tape.matmul(heads.w1, in), heads.b1));

  const ValueId h2n = tape.tanh(tape.add(tape.matmul(heads.w2n, h1), heads.b2n));
  const ValueId raw_n = tape.add(tape.matmul(heads.w3n, h2n), heads.b3n);
  const ValueId nbar = tape.normalize(raw_n, spec.eps);

  ValueId alpha;
  if (spec.fix_alpha) {
    alpha = tape.constant_scalar(1.0);
  } else {
    const ValueId h2a = tape.tanh(tape.add(tape.matmul(heads.w2a, h1), heads.b2a));
    const ValueId raw_a = tape.relu(tape.add(tape.matmul(heads.w3a, h2a), heads.b3a));
    // min(relu(x), 1) = relu(x) - relu(relu(x) - 1)
    const ValueId one = tape.constant_scalar(1.0);
    alpha = tape.sub(raw_a, tape.relu(tape.sub(raw_a, one)));
  }

  const ValueId hg1 = tape.tanh(tape.add(tape.matmul(heads.wg1, patch_small), heads.bg1));
  const ValueId hg2 = tape.tanh(tape.add(tape.matmul(heads.wg2, hg1), heads.bg2));
  const ValueId gamma = tape.sigmoid(tape.add(tape.matmul(heads.wg3, hg2), heads.bg3));

  return {nbar, alpha, gamma};
}

// ---------------------------------------------------------------------------
// Model container
// ---------------------------------------------------------------------------

const char* model_kind_name(ModelKind k) {
  switch (k) {
    case ModelKind::kHnet: return "hnet";
    case ModelKind::kOnet: return "onet";
    case ModelKind::kRnn: return "rnn";
  }
  return "?";
}

std::size_t RnnModel::param_count() const {
  return hidden * state_dim + hidden * hidden + hidden + state_dim * hidden + state_dim;
}

ModelKind Model::kind() const {
  if (std::holds_alternative<HnetModel>(core)) return ModelKind::kHnet;
  if (std::holds_alternative<OnetModel>(core)) return ModelKind::kOnet;
  return ModelKind::kRnn;
}

std::size_t Model::dim() const {
  return std::visit([](const auto& m) { return m.dim(); }, core);
}

std::size_t Model::param_count() const {
  std::size_t n = std::visit([](const auto& m) { return m.params.size(); }, core);
  if (rebound) n += rebound->params.size();
  return n;
}

std::vector<double> Model::gather_params() const {
  std::vector<double> flat;
  flat.reserve(param_count());
  std::visit(
      [&](const auto& m) { flat.insert(flat.end(), m.params.values.begin(), m.params.values.end()); },
      core);
  if (rebound) {
    flat.insert(flat.end(), rebound->params.values.begin(), rebound->params.values.end());
  }
  return flat;
}

void Model::scatter_params(const std::vector<double>& flat) {
  if (flat.size() != param_count()) fail("scatter_params: size mismatch");
  const double* src = flat.data();
  std::visit(
      [&](auto& m) {
        std::memcpy(m.params.values.data(), src, m.params.size() * sizeof(double));
        src += m.params.size();
      },
      core);
  if (rebound) {
    std::memcpy(rebound->params.values.data(), src, rebound->params.size() * sizeof(double));
  }
}

Model make_hnet(std::size_t dim, const std::vector<std::size_t>& hidden, Rng& rng) {
  HnetModel m;
  m.kinetic.widths.push_back(dim);
  for (std::size_t h : hidden) m.kinetic.widths.push_back(h);
  m.kinetic.widths.push_back(1);
  m.potential = m.kinetic;
  init_mlp_params(m.kinetic, m.params.values, rng);
  init_mlp_params(m.potential, m.params.values, rng);
  return Model{std::move(m), std::nullopt};
}

Model make_onet(std::size_t dim, const std::vector<std::size_t>& hidden, Rng& rng) {
  OnetModel m;
  m.net.widths.push_back(2 * dim);
  for (std::size_t h : hidden) m.net.widths.push_back(h);
  m.net.widths.push_back(2 * dim);
  init_mlp_params(m.net, m.params.values, rng);
  return Model{std::move(m), std::nullopt};
}

Model make_rnn(std::size_t dim, std::size_t hidden, Rng& rng) {
  RnnModel m;
  m.state_dim = 2 * dim;
  m.hidden = hidden;
  m.params.values.reserve(m.param_count());
  auto fill = [&](std::size_t n, std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (std::size_t i = 0; i < n; ++i) m.params.values.push_back(rng.uniform(-bound, bound));
  };
  fill(m.hidden * m.state_dim, m.state_dim);  // W_x
  fill(m.hidden * m.hidden, m.hidden);        // W_h
  fill(m.hidden, m.hidden);                   // b_h
  fill(m.state_dim * m.hidden, m.hidden);     // W_o
  fill(m.state_dim, m.hidden);                // b_o
  return Model{std::move(m), std::nullopt};
}

void attach_rebound(Model& model, const ReboundSpec& spec, Rng& rng) {
  if (model.kind() != ModelKind::kHnet) {
    fail("rebound module attaches to hnet models only");
  }
  ReboundModel r;
  r.spec = spec;
  r.params.values.reserve(spec.param_count());
  auto fill = [&](std::size_t rows, std::size_t cols) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
    for (std::size_t i = 0; i < rows * cols + rows; ++i) {
      r.params.values.push_back(rng.uniform(-bound, bound));
    }
  };
  fill(spec.shared_hidden, spec.big_input());
  fill(spec.branch_hidden, spec.shared_hidden);
  fill(2, spec.branch_hidden);
  fill(spec.branch_hidden, spec.shared_hidden);
  fill(1, spec.branch_hidden);
  fill(spec.gamma_hidden, spec.small_input());
  fill(spec.gamma_hidden, spec.gamma_hidden);
  fill(1, spec.gamma_hidden);
  model.rebound = std::move(r);
}

// ---------------------------------------------------------------------------
// Bound dynamics views
// ---------------------------------------------------------------------------

ValueId BoundHnet::v_prime(Tape& tape, ValueId q) const {
  return mlp_input_gradient(tape, potential, q);
}

ValueId BoundHnet::k_prime(Tape& tape, ValueId p) const {
  return mlp_input_gradient(tape, kinetic, p);
}

std::pair<ValueId, ValueId> BoundHnet::time_derivative(Tape& tape, ValueId p,
                                                       ValueId q) const {
  return {tape.scale(v_prime(tape, q), -1.0), k_prime(tape, p)};
}

std::pair<ValueId, ValueId> BoundOnet::time_derivative(Tape& tape, ValueId p,
                                                       ValueId q) const {
  const ValueId out = mlp_forward(tape, net, tape.concat(p, q));
  return {tape.slice(out, 0, dim), tape.slice(out, dim, dim)};
}

std::pair<ValueId, ValueId> BoundRnn::step(Tape& tape, ValueId hidden,
                                           ValueId state) const {
  const ValueId z =
      tape.add(tape.add(tape.matmul(wx, state), tape.matmul(wh, hidden)), bh);
  const ValueId h = tape.tanh(z);
  const ValueId y = tape.add(tape.matmul(wo, h), bo);
  return {h, y};
}

BoundHnet bind_hnet(Tape& tape, const HnetModel& m, ValueId theta, std::size_t offset) {
  BoundHnet b;
  b.kinetic = bind_mlp(tape, m.kinetic, theta, offset, /*with_transpose=*/true);
  b.potential = bind_mlp(tape, m.potential, theta, offset + m.kinetic.param_count(),
                         /*with_transpose=*/true);
  return b;
}

BoundOnet bind_onet(Tape& tape, const OnetModel& m, ValueId theta, std::size_t offset) {
  BoundOnet b;
  b.net = bind_mlp(tape, m.net, theta, offset);
  b.dim = m.dim();
  return b;
}

BoundRnn bind_rnn(Tape& tape, const RnnModel& m, ValueId theta, std::size_t offset) {
  BoundRnn b;
  b.model = &m;
  std::size_t off = offset;
  b.wx = slice_matrix(tape, theta, off, m.hidden, m.state_dim);
  b.wh = slice_matrix(tape, theta, off, m.hidden, m.hidden);
  b.bh = slice_vector(tape, theta, off, m.hidden);
  b.wo = slice_matrix(tape, theta, off, m.state_dim, m.hidden);
  b.bo = slice_vector(tape, theta, off, m.state_dim);
  return b;
}

}  // namespace srnn::models
