#pragma once

#include <cstdint>
#include <vector>

#include "srnn/tensor.hpp"

namespace srnn::ad {

using ValueId = std::uint32_t;

enum class Op : std::uint8_t {
  kVariable,   // leaf, participates in gradients
  kConstant,   // leaf, no gradient
  kAdd,
  kSub,
  kMul,        // elementwise
  kScale,      // tensor * compile-time scalar
  kScalarMul,  // tensor * tape scalar
  kMatMul,
  kTranspose,
  kReshape,
  kTanh,
  kSigmoid,
  kRelu,
  kSum,        // reduce to scalar
  kSqNorm,     // squared L2 norm -> scalar
  kNorm,       // L2 norm -> scalar
  kDot,        // vector dot -> scalar
  kSlice,      // contiguous vector slice
  kConcat,     // vector concatenation
  kNormalize,  // v / max(|v|, eps), zero below eps
};

const char* op_name(Op op);

// Reverse-mode tape over dense tensors. Evaluation is define-by-run: each
// operation computes its value immediately and appends a node, so the node
// list is a topological order of the DAG and one reverse sweep visits each
// node exactly once. Every op output is checked for NaN/Inf.
//
// Tapes are single-threaded; distinct tapes may run concurrently. reset()
// rewinds the tape while keeping node storage alive, so rebuilding a graph
// of the same layout performs no allocations.
class Tape {
 public:
  ValueId variable(const Tensor& value);
  ValueId constant(const Tensor& value);
  ValueId constant_scalar(double v) { return constant(Tensor::scalar(v)); }

  ValueId add(ValueId a, ValueId b);
  ValueId sub(ValueId a, ValueId b);
  ValueId mul(ValueId a, ValueId b);
  ValueId scale(ValueId a, double c);
  ValueId scalar_mul(ValueId scalar, ValueId v);
  ValueId matmul(ValueId a, ValueId b);
  ValueId transpose(ValueId a);
  ValueId reshape(ValueId a, std::vector<std::size_t> shape);
  ValueId tanh(ValueId a);
  ValueId sigmoid(ValueId a);
  ValueId relu(ValueId a);
  ValueId sum(ValueId a);
  ValueId sqnorm(ValueId a);
  ValueId norm(ValueId a);
  ValueId dot(ValueId a, ValueId b);
  ValueId slice(ValueId a, std::size_t offset, std::size_t len);
  ValueId concat(ValueId a, ValueId b);
  ValueId normalize(ValueId a, double eps);

  const Tensor& value(ValueId id) const;
  double scalar_value(ValueId id) const { return value(id).scalar_value(); }

  /// Reverse sweep from a scalar root (seed 1) or with an explicit seed.
  /// Gradients of earlier backward calls on the same tape are discarded.
  void backward(ValueId root);
  void backward(ValueId root, const Tensor& seed);

  /// Gradient of the last backward root w.r.t. a variable (or any
  /// intermediate that required a gradient).
  const Tensor& grad(ValueId id) const;

  bool requires_grad(ValueId id) const;

  /// Rewind to empty while keeping allocations for reuse.
  void reset();

  std::size_t size() const { return size_; }

 private:
  struct Node {
    Op op = Op::kConstant;
    ValueId a = 0;
    ValueId b = 0;
    double c = 0.0;        // scale factor / normalize eps
    std::size_t off = 0;   // slice offset
    bool needs_grad = false;
    Tensor val;
    Tensor grad;
    std::uint8_t reach = 0;
  };

  Node& push(Op op, ValueId a, ValueId b);
  const Node& node(ValueId id) const;
  void check_id(ValueId id) const;
  void check_finite(const Node& n, ValueId id) const;
  void accumulate(ValueId target, const double* g, std::size_t n);
  void backward_node(ValueId id);

  std::vector<Node> nodes_;
  std::size_t size_ = 0;
  bool backward_done_ = false;
};

}  // namespace srnn::ad
