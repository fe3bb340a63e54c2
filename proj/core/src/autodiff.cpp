#include "srnn/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

namespace srnn::ad {

const char* op_name(Op op) {
  switch (op) {
    case Op::kVariable: return "variable";
    case Op::kConstant: return "constant";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kScale: return "scale";
    case Op::kScalarMul: return "scalar_mul";
    case Op::kMatMul: return "matmul";
    case Op::kTranspose: return "transpose";
    case Op::kReshape: return "reshape";
    case Op::kTanh: return "tanh";
    case Op::kSigmoid: return "sigmoid";
    case Op::kRelu: return "relu";
    case Op::kSum: return "sum";
    case Op::kSqNorm: return "sqnorm";
    case Op::kNorm: return "norm";
    case Op::kDot: return "dot";
    case Op::kSlice: return "slice";
    case Op::kConcat: return "concat";
    case Op::kNormalize: return "normalize";
  }
  return "?";
}

void Tape::check_id(ValueId id) const {
  if (id >= size_) fail("tape: value id out of range");
}

const Tape::Node& Tape::node(ValueId id) const {
  check_id(id);
  return nodes_[id];
}

void Tape::check_finite(const Node& n, ValueId id) const {
  if (!n.val.all_finite()) {
    fail(std::string("non-finite output of ") + op_name(n.op) + " at node " +
         std::to_string(id));
  }
}

// NOTE: push() may grow nodes_, so references into nodes_ must be re-taken
// after calling it.
Tape::Node& Tape::push(Op op, ValueId a, ValueId b) {
  if (size_ == nodes_.size()) {
    nodes_.emplace_back();
  }
  Node& n = nodes_[size_];
  n.op = op;
  n.a = a;
  n.b = b;
  n.c = 0.0;
  n.off = 0;
  n.reach = 0;
  switch (op) {
    case Op::kVariable:
      n.needs_grad = true;
      break;
    case Op::kConstant:
      n.needs_grad = false;
      break;
    default: {
      bool g = nodes_[a].needs_grad;
      switch (op) {  // binary ops also look at b
        case Op::kAdd:
        case Op::kSub:
        case Op::kMul:
        case Op::kScalarMul:
        case Op::kMatMul:
        case Op::kDot:
        case Op::kConcat:
          g = g || nodes_[b].needs_grad;
          break;
        default:
          break;
      }
      n.needs_grad = g;
      break;
    }
  }
  ++size_;
  backward_done_ = false;
  return n;
}

ValueId Tape::variable(const Tensor& value) {
  Node& n = push(Op::kVariable, 0, 0);
  n.val = value;
  const ValueId id = static_cast<ValueId>(size_ - 1);
  check_finite(n, id);
  return id;
}

ValueId Tape::constant(const Tensor& value) {
  Node& n = push(Op::kConstant, 0, 0);
  n.val = value;
  const ValueId id = static_cast<ValueId>(size_ - 1);
  check_finite(n, id);
  return id;
}

namespace {

void resize_like(Tensor& t, const std::vector<std::size_t>& shape) {
  t.shape = shape;
  t.data.resize(shape_size(shape));
}

}  // namespace

ValueId Tape::add(ValueId a, ValueId b) {
  check_id(a);
  check_id(b);
  if (!nodes_[a].val.same_shape(nodes_[b].val)) fail("add: shape mismatch");
  Node& n = push(Op::kAdd, a, b);
  const Tensor& x = nodes_[a].val;
  const Tensor& y = nodes_[b].val;
  resize_like(n.val, x.shape);
  for (std::size_t i = 0; i < x.size(); ++i) n.val.data[i] = x.data[i] + y.data[i];
  const ValueId id = static_cast<ValueId>(size_ - 1);
  check_finite(n, id);
  return id;
}

ValueId Tape::sub(ValueId a, ValueId b) {
  check_id(a);
  check_id(b);
  if (!nodes_[a].val.same_shape(nodes_[b].val)) fail("sub: shape mismatch");
  Node& n = push(Op::kSub, a, b);
  const Tensor& x = nodes_[a].val;
  const Tensor& y = nodes_[b].val;
  resize_like(n.val, x.shape);
  for (std::size_t i = 0; i < x.size(); ++i) n.val.data[i] = x.data[i] - y.data[i];
  const ValueId id = static_cast<ValueId>(size_ - 1);
  check_finite(n, id);
  return id;
}

ValueId Tape::mul(ValueId a, ValueId b) {
  check_id(a);
  check_id(b);
  if (!nodes_[a].val.same_shape(nodes_[b].val)) fail("mul: shape mismatch");
  Node& n = push(Op::kMul, a, b);
  const Tensor& x = nodes_[a].val;
  const Tensor& y = nodes_[b].val;
  resize_like(n.val, x.shape);
  for (std::size_t i = 0; i < x.size(); ++i) n.val.data[i] = x.data[i] * y.data[i];
  const ValueId id = static_cast<ValueId>(size_ - 1);
  check_finite(n, id);
  return id;
}

ValueId Tape::scale(ValueId a, double c) {
  check_id(a);
  Node& n = push(Op::kScale, a, 0);
  n.c = c;
  const Tensor& x = nodes_[a].val;
  resize_like(n.val, x.shape);
  for (std::size_t i = 0; i < x.size(); ++i) n.val.data[i] = c * x.data[i];
  const ValueId id = static_cast<ValueId>(size_ - 1);
  check_finite(n, id);
  return id;
}

ValueId Tape::scalar_mul(ValueId scalar, ValueId v) {
  check_id(scalar);
  check_id(v);
  if (nodes_[scalar].val.size() != 1) fail("scalar_mul: first operand must be a scalar");
  Node& n = push(Op::kScalarMul, scalar, v);
  const Tensor& x = nodes_[v].val;
  resize_like(n.val, x.shape);
  const double c = nodes_[scalar].val.data[0];
  for (std::size_t i = 0; i < x.size(); ++i) n.val.data[i] = c * x.data[i];
  const ValueId id = static_cast<ValueId>(size_ - 1);
  check_finite(n, id);
  return id;
}

ValueId Tape::matmul(ValueId a, ValueId b) {
  check_id(a);
  check_id(b);
  if (nodes_[a].val.rank() != 2) fail("matmul: left operand must be a matrix");
  const std::size_t r = nodes_[a].val.shape[0];
  const std::size_t c = nodes_[a].val.shape[1];
  const std::size_t brank = nodes_[b].val.rank();
  if (brank != 1 && brank != 2) fail("matmul: right operand must be a vector or matrix");
  if (nodes_[b].val.shape[0] != c) fail("matmul: inner dimension mismatch");
  Node& n = push(Op::kMatMul, a, b);
  const Tensor& A = nodes_[a].val;
  const Tensor& B = nodes_[b].val;
  if (brank == 1) {
    resize_like(n.val, {r});
    const double* pa = A.data.data();
    const double* pb = B.data.data();
    double* po = n.val.data.data();
    for (std::size_t i = 0; i < r; ++i) {
      double acc = 0.0;
      const double* row = pa + i * c;
      for (std::size_t k = 0; k < c; ++k) acc += row[k] * pb[k];
      po[i] = acc;
    }
  } else {
    const std::size_t m = B.shape[1];
    resize_like(n.val, {r, m});
    std::fill(n.val.data.begin(), n.val.data.end(), 0.0);
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t k = 0; k < c; ++k) {
        const double aik = A.data[i * c + k];
        const double* brow = B.data.data() + k * m;
        double* orow = n.val.data.data() + i * m;
        for (std::size_t j = 0; j < m; ++j) orow[j] += aik * brow[j];
      }
    }
  }
  const ValueId id = static_cast<ValueId>(size_ - 1);
  check_finite(n, id);
  return id;
}

ValueId Tape::transpose(ValueId a) {
  check_id(a);
  if (nodes_[a].val.rank() != 2) fail("transpose: operand must be a matrix");
  Node& n = push(Op::kTranspose, a, 0);
  const Tensor& A = nodes_[a].val;
  const std::size_t r = A.shape[0];
  const std::size_t c = A.shape[1];
  resize_like(n.val, {c, r});
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) n.val.data[j * r + i] = A.data[i * c + j];
  }
  return static_cast<ValueId>(size_ - 1);
}

ValueId Tape::reshape(ValueId a, std::vector<std::size_t> shape) {
  check_id(a);
  if (shape_size(shape) != nodes_[a].val.size()) fail("reshape: element count mismatch");
  Node& n = push(Op::kReshape, a, 0);
  n.val.shape = std::move(shape);
  n.val.data = nodes_[a].val.data;
  return static_cast<ValueId>(size_ - 1);
}

ValueId Tape::tanh(ValueId a) {
  check_id(a);
  Node& n = push(Op::kTanh, a, 0);
  const Tensor& x = nodes_[a].val;
  resize_like(n.val, x.shape);
  for (std::size_t i = 0; i < x.size(); ++i) n.val.data[i] = std::tanh(x.data[i]);
  const ValueId id = static_cast<ValueId>(size_ - 1);
  check_finite(n, id);
  return id;
}

ValueId Tape::sigmoid(ValueId a) {
  check_id(a);
  Node& n = push(Op::kSigmoid, a, 0);
  const Tensor& x = nodes_[a].val;
  resize_like(n.val, x.shape);
  for (std::size_t i = 0; i < x.size(); ++i) {
    n.val.data[i] = 1.0 / (1.0 + std::exp(-x.data[i]));
  }
  const ValueId id = static_cast<ValueId>(size_ - 1);
  check_finite(n, id);
  return id;
}

ValueId Tape::relu(ValueId a) {
  check_id(a);
  Node& n = push(Op::kRelu, a, 0);
  const Tensor& x = nodes_[a].val;
  resize_like(n.val, x.shape);
  for (std::size_t i = 0; i < x.size(); ++i) {
    n.val.data[i] = x.data[i] > 0.0 ? x.data[i] : 0.0;
  }
  const ValueId id = static_cast<ValueId>(size_ - 1);
  check_finite(n, id);
  return id;
}

ValueId Tape::sum(ValueId a) {
  check_id(a);
  Node& n = push(Op::kSum, a, 0);
  const Tensor& x = nodes_[a].val;
  resize_like(n.val, {1});
  double acc = 0.0;
  for (double v : x.data) acc += v;
  n.val.data[0] = acc;
  const ValueId id = static_cast<ValueId>(size_ - 1);
  check_finite(n, id);
  return id;
}

ValueId Tape::sqnorm(ValueId a) {
  check_id(a);
  Node& n = push(Op::kSqNorm, a, 0);
  const Tensor& x = nodes_[a].val;
  resize_like(n.val, {1});
  double acc = 0.0;
  for (double v : x.data) acc += v * v;
  n.val.data[0] = acc;
  const ValueId id = static_cast<ValueId>(size_ - 1);
  check_finite(n, id);
  return id;
}

ValueId Tape::norm(ValueId a) {
  check_id(a);
  Node& n = push(Op::kNorm, a, 0);
  const Tensor& x = nodes_[a].val;
  resize_like(n.val, {1});
  double acc = 0.0;
  for (double v : x.data) acc += v * v;
  n.val.data[0] = std::sqrt(acc);
  const ValueId id = static_cast<ValueId>(size_ - 1);
  check_finite(n, id);
  return id;
}

ValueId Tape::dot(ValueId a, ValueId b) {
  check_id(a);
  check_id(b);
  if (nodes_[a].val.size() != nodes_[b].val.size()) fail("dot: length mismatch");
  Node& n = push(Op::kDot, a, b);
  const Tensor& x = nodes_[a].val;
  const Tensor& y = nodes_[b].val;
  resize_like(n.val, {1});
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += x.data[i] * y.data[i];
  n.val.data[0] = acc;
  const ValueId id = static_cast<ValueId>(size_ - 1);
  check_finite(n, id);
  return id;
}

ValueId Tape::slice(ValueId a, std::size_t offset, std::size_t len) {
  check_id(a);
  if (nodes_[a].val.rank() != 1) fail("slice: operand must be a vector");
  if (offset + len > nodes_[a].val.size()) fail("slice: range out of bounds");
  Node& n = push(Op::kSlice, a, 0);
  n.off = offset;
  resize_like(n.val, {len});
  std::memcpy(n.val.data.data(), nodes_[a].val.data.data() + offset, len * sizeof(double));
  return static_cast<ValueId>(size_ - 1);
}

ValueId Tape::concat(ValueId a, ValueId b) {
  check_id(a);
  check_id(b);
  if (nodes_[a].val.rank() != 1 || nodes_[b].val.rank() != 1) {
    fail("concat: operands must be vectors");
  }
  Node& n = push(Op::kConcat, a, b);
  const Tensor& x = nodes_[a].val;
  const Tensor& y = nodes_[b].val;
  resize_like(n.val, {x.size() + y.size()});
  std::memcpy(n.val.data.data(), x.data.data(), x.size() * sizeof(double));
  std::memcpy(n.val.data.data() + x.size(), y.data.data(), y.size() * sizeof(double));
  return static_cast<ValueId>(size_ - 1);
}

ValueId Tape::normalize(ValueId a, double eps) {
  check_id(a);
  if (eps <= 0.0) fail("normalize: eps must be positive");
  Node& n = push(Op::kNormalize, a, 0);
  n.c = eps;
  const Tensor& x = nodes_[a].val;
  resize_like(n.val, x.shape);
  double acc = 0.0;
  for (double v : x.data) acc += v * v;
  const double len = std::sqrt(acc);
  if (len < eps) {
    std::fill(n.val.data.begin(), n.val.data.end(), 0.0);
  } else {
    for (std::size_t i = 0; i < x.size(); ++i) n.val.data[i] = x.data[i] / len;
  }
  const ValueId id = static_cast<ValueId>(size_ - 1);
  check_finite(n, id);
  return id;
}

const Tensor& Tape::value(ValueId id) const { return node(id).val; }

bool Tape::requires_grad(ValueId id) const { return node(id).needs_grad; }

const Tensor& Tape::grad(ValueId id) const {
  const Node& n = node(id);
  if (!backward_done_) fail("grad: backward has not run on this tape");
  if (!n.needs_grad) fail("grad: node does not require a gradient");
  if (!n.reach) fail("grad: node not reachable from the backward root");
  return n.grad;
}

void Tape::accumulate(ValueId target, const double* g, std::size_t n) {
  Node& t = nodes_[target];
  if (!t.needs_grad || !t.reach) return;
  double* dst = t.grad.data.data();
  for (std::size_t i = 0; i < n; ++i) dst[i] += g[i];
}

void Tape::backward(ValueId root) { backward(root, Tensor::scalar(1.0)); }

void Tape::backward(ValueId root, const Tensor& seed) {
  check_id(root);
  Node& r = nodes_[root];
  if (!r.val.same_shape(seed)) fail("backward: seed shape does not match root");
  if (!r.needs_grad) fail("backward: root does not depend on any variable");

  // Mark the sub-DAG that feeds the root and needs gradients, then zero
  // exactly those grads. Unreachable parts of the tape (e.g. subgraphs
  // consumed only off-tape) cost nothing.
  for (std::size_t i = 0; i <= root; ++i) nodes_[i].reach = 0;
  r.reach = 1;
  for (std::size_t i = root + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.reach || n.op == Op::kVariable || n.op == Op::kConstant) continue;
    if (nodes_[n.a].needs_grad) nodes_[n.a].reach = 1;
    switch (n.op) {
      case Op::kAdd:
      case Op::kSub:
      case Op::kMul:
      case Op::kScalarMul:
      case Op::kMatMul:
      case Op::kDot:
      case Op::kConcat:
        if (nodes_[n.b].needs_grad) nodes_[n.b].reach = 1;
        break;
      default:
        break;
    }
  }
  for (std::size_t i = 0; i <= root; ++i) {
    Node& n = nodes_[i];
    if (n.reach) {
      n.grad.shape = n.val.shape;
      n.grad.data.assign(n.val.size(), 0.0);
    }
  }
  r.grad.data = seed.data;

  for (std::size_t i = root + 1; i-- > 0;) {
    if (nodes_[i].reach) backward_node(static_cast<ValueId>(i));
  }
  backward_done_ = true;
}

void Tape::backward_node(ValueId id) {
  Node& n = nodes_[id];
  const double* g = n.grad.data.data();
  const std::size_t sz = n.val.size();
  switch (n.op) {
    case Op::kVariable:
    case Op::kConstant:
      break;  // leaves keep their accumulated gradient; still finiteness-checked
    case Op::kAdd: {
      accumulate(n.a, g, sz);
      accumulate(n.b, g, sz);
      break;
    }
    case Op::kSub: {
      accumulate(n.a, g, sz);
      Node& b = nodes_[n.b];
      if (b.needs_grad && b.reach) {
        double* dst = b.grad.data.data();
        for (std::size_t i = 0; i < sz; ++i) dst[i] -= g[i];
      }
      break;
    }
    case Op::kMul: {
      Node& a = nodes_[n.a];
      Node& b = nodes_[n.b];
      if (a.needs_grad && a.reach) {
        double* dst = a.grad.data.data();
        const double* y = b.val.data.data();
        for (std::size_t i = 0; i < sz; ++i) dst[i] += g[i] * y[i];
      }
      if (b.needs_grad && b.reach) {
        double* dst = b.grad.data.data();
        const double* x = a.val.data.data();
        for (std::size_t i = 0; i < sz; ++i) dst[i] += g[i] * x[i];
      }
      break;
    }
    case Op::kScale: {
      Node& a = nodes_[n.a];
      if (a.needs_grad && a.reach) {
        double* dst = a.grad.data.data();
        for (std::size_t i = 0; i < sz; ++i) dst[i] += n.c * g[i];
      }
      break;
    }
    case Op::kScalarMul: {
      Node& s = nodes_[n.a];
      Node& v = nodes_[n.b];
      const double c = s.val.data[0];
      if (v.needs_grad && v.reach) {
        double* dst = v.grad.data.data();
        for (std::size_t i = 0; i < sz; ++i) dst[i] += c * g[i];
      }
      if (s.needs_grad && s.reach) {
        double acc = 0.0;
        const double* x = v.val.data.data();
        for (std::size_t i = 0; i < sz; ++i) acc += g[i] * x[i];
        s.grad.data[0] += acc;
      }
      break;
    }
    case Op::kMatMul: {
      Node& a = nodes_[n.a];
      Node& b = nodes_[n.b];
      const std::size_t r = a.val.shape[0];
      const std::size_t c = a.val.shape[1];
      if (b.val.rank() == 1) {
        if (a.needs_grad && a.reach) {
          double* ga = a.grad.data.data();
          const double* x = b.val.data.data();
          for (std::size_t i = 0; i < r; ++i) {
            const double gi = g[i];
            double* row = ga + i * c;
            for (std::size_t k = 0; k < c; ++k) row[k] += gi * x[k];
          }
        }
        if (b.needs_grad && b.reach) {
          double* gb = b.grad.data.data();
          const double* A = a.val.data.data();
          for (std::size_t i = 0; i < r; ++i) {
            const double gi = g[i];
            const double* row = A + i * c;
            for (std::size_t k = 0; k < c; ++k) gb[k] += gi * row[k];
          }
        }
      } else {
        const std::size_t m = b.val.shape[1];
        if (a.needs_grad && a.reach) {
          double* ga = a.grad.data.data();
          const double* B = b.val.data.data();
          for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t k = 0; k < c; ++k) {
              double acc = 0.0;
              const double* grow = g + i * m;
              const double* brow = B + k * m;
              for (std::size_t j = 0; j < m; ++j) acc += grow[j] * brow[j];
              ga[i * c + k] += acc;
            }
          }
        }
        if (b.needs_grad && b.reach) {
          double* gb = b.grad.data.data();
          const double* A = a.val.data.data();
          for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t k = 0; k < c; ++k) {
              const double aik = A[i * c + k];
              const double* grow = g + i * m;
              double* brow = gb + k * m;
              for (std::size_t j = 0; j < m; ++j) brow[j] += aik * grow[j];
            }
          }
        }
      }
      break;
    }
    case Op::kTranspose: {
      Node& a = nodes_[n.a];
      if (a.needs_grad && a.reach) {
        const std::size_t r = n.val.shape[0];
        const std::size_t c = n.val.shape[1];
        double* dst = a.grad.data.data();
        for (std::size_t i = 0; i < r; ++i) {
          for (std::size_t j = 0; j < c; ++j) dst[j * r + i] += g[i * c + j];
        }
      }
      break;
    }
    case Op::kReshape: {
      accumulate(n.a, g, sz);
      break;
    }
    case Op::kSum: {
      Node& a = nodes_[n.a];
      if (a.needs_grad && a.reach) {
        const double gs = g[0];
        double* dst = a.grad.data.data();
        for (std::size_t i = 0; i < a.val.size(); ++i) dst[i] += gs;
      }
      break;
    }
    case Op::kTanh: {
      Node& a = nodes_[n.a];
      if (a.needs_grad && a.reach) {
        double* dst = a.grad.data.data();
        const double* y = n.val.data.data();
        for (std::size_t i = 0; i < sz; ++i) dst[i] += g[i] * (1.0 - y[i] * y[i]);
      }
      break;
    }
    case Op::kSigmoid: {
      Node& a = nodes_[n.a];
      if (a.needs_grad && a.reach) {
        double* dst = a.grad.data.data();
        const double* y = n.val.data.data();
        for (std::size_t i = 0; i < sz; ++i) dst[i] += g[i] * y[i] * (1.0 - y[i]);
      }
      break;
    }
    case Op::kRelu: {
      Node& a = nodes_[n.a];
      if (a.needs_grad && a.reach) {
        double* dst = a.grad.data.data();
        const double* x = a.val.data.data();
        for (std::size_t i = 0; i < sz; ++i) {
          if (x[i] > 0.0) dst[i] += g[i];
        }
      }
      break;
    }
    case Op::kSqNorm: {
      Node& a = nodes_[n.a];
      if (a.needs_grad && a.reach) {
        const double gs = 2.0 * g[0];
        double* dst = a.grad.data.data();
        const double* x = a.val.data.data();
        for (std::size_t i = 0; i < a.val.size(); ++i) dst[i] += gs * x[i];
      }
      break;
    }
    case Op::kNorm: {
      Node& a = nodes_[n.a];
      if (a.needs_grad && a.reach) {
        const double len = n.val.data[0];
        if (len > 0.0) {  // subgradient 0 at the origin
          const double gs = g[0] / len;
          double* dst = a.grad.data.data();
          const double* x = a.val.data.data();
          for (std::size_t i = 0; i < a.val.size(); ++i) dst[i] += gs * x[i];
        }
      }
      break;
    }
    case Op::kDot: {
      Node& a = nodes_[n.a];
      Node& b = nodes_[n.b];
      const double gs = g[0];
      if (a.needs_grad && a.reach) {
        double* dst = a.grad.data.data();
        const double* y = b.val.data.data();
        for (std::size_t i = 0; i < a.val.size(); ++i) dst[i] += gs * y[i];
      }
      if (b.needs_grad && b.reach) {
        double* dst = b.grad.data.data();
        const double* x = a.val.data.data();
        for (std::size_t i = 0; i < b.val.size(); ++i) dst[i] += gs * x[i];
      }
      break;
    }
    case Op::kSlice: {
      Node& a = nodes_[n.a];
      if (a.needs_grad && a.reach) {
        double* dst = a.grad.data.data() + n.off;
        for (std::size_t i = 0; i < sz; ++i) dst[i] += g[i];
      }
      break;
    }
    case Op::kConcat: {
      Node& a = nodes_[n.a];
      Node& b = nodes_[n.b];
      const std::size_t na = a.val.size();
      if (a.needs_grad && a.reach) {
        double* dst = a.grad.data.data();
        for (std::size_t i = 0; i < na; ++i) dst[i] += g[i];
      }
      if (b.needs_grad && b.reach) {
        double* dst = b.grad.data.data();
        for (std::size_t i = 0; i < b.val.size(); ++i) dst[i] += g[na + i];
      }
      break;
    }
    case Op::kNormalize: {
      Node& a = nodes_[n.a];
      if (a.needs_grad && a.reach) {
        double acc = 0.0;
        const double* x = a.val.data.data();
        for (std::size_t i = 0; i < sz; ++i) acc += x[i] * x[i];
        const double len = std::sqrt(acc);
        if (len >= n.c) {
          // d(v/|v|) = (I - u u^T)/|v| with u the unit output
          const double* u = n.val.data.data();
          double gu = 0.0;
          for (std::size_t i = 0; i < sz; ++i) gu += g[i] * u[i];
          double* dst = a.grad.data.data();
          for (std::size_t i = 0; i < sz; ++i) dst[i] += (g[i] - gu * u[i]) / len;
        }
      }
      break;
    }
  }
  if (!n.grad.all_finite()) {
    fail(std::string("non-finite gradient at ") + op_name(n.op) + " node " +
         std::to_string(id));
  }
}

void Tape::reset() {
  size_ = 0;
  backward_done_ = false;
}

}  // namespace srnn::ad
