#include <doctest.h>

#include <cstring>

#include "srnn/autodiff.hpp"
#include "test_util.hpp"

using namespace srnn;
using ad::Tape;
using ad::Tensor;
using ad::ValueId;
using testutil::fd_gradient;
using testutil::max_rel_err;
using testutil::random_vec;

TEST_SUITE_BEGIN("autodiff");

TEST_CASE("forward basics") {
  Tape t;
  CHECK(t.scalar_value(t.tanh(t.constant_scalar(0.0))) == 0.0);
  CHECK(t.scalar_value(t.sigmoid(t.constant_scalar(0.0))) == 0.5);

  const ValueId eye = t.constant(Tensor::matrix(2, 2, {1, 0, 0, 1}));
  const ValueId v = t.constant(Tensor::vector({3.5, -1.25}));
  const Tensor& out = t.value(t.matmul(eye, v));
  CHECK(out.data[0] == 3.5);
  CHECK(out.data[1] == -1.25);
}

TEST_CASE("simple gradients") {
  Tape t;
  const ValueId x = t.variable(Tensor::scalar(3.0));
  const ValueId y = t.mul(x, x);
  t.backward(y);
  CHECK(t.grad(x).data[0] == doctest::Approx(6.0).epsilon(1e-14));

  t.reset();
  const ValueId z = t.variable(Tensor::scalar(0.0));
  const ValueId w = t.tanh(z);
  t.backward(w);
  CHECK(t.grad(z).data[0] == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("|Wx - b|^2 gradient matches finite differences") {
  Rng rng(42);
  const std::size_t r = 3, c = 4;
  const std::vector<double> w0 = random_vec(rng, r * c, -0.5, 0.5);
  const std::vector<double> x0 = random_vec(rng, c, -0.5, 0.5);
  const std::vector<double> b0 = random_vec(rng, r, -0.5, 0.5);

  // One flat input so the finite-difference oracle sees a single vector.
  auto eval = [&](const std::vector<double>& flat) {
    Tape t;
    const ValueId all = t.constant(Tensor::vector(flat));
    const ValueId w = t.reshape(t.slice(all, 0, r * c), {r, c});
    const ValueId x = t.slice(all, r * c, c);
    const ValueId b = t.slice(all, r * c + c, r);
    return t.scalar_value(t.sqnorm(t.sub(t.matmul(w, x), b)));
  };
  std::vector<double> flat = w0;
  flat.insert(flat.end(), x0.begin(), x0.end());
  flat.insert(flat.end(), b0.begin(), b0.end());

  Tape t;
  const ValueId all = t.variable(Tensor::vector(flat));
  const ValueId w = t.reshape(t.slice(all, 0, r * c), {r, c});
  const ValueId x = t.slice(all, r * c, c);
  const ValueId b = t.slice(all, r * c + c, r);
  const ValueId loss = t.sqnorm(t.sub(t.matmul(w, x), b));
  t.backward(loss);

  const std::vector<double> want = fd_gradient(eval, flat);
  CHECK(max_rel_err(t.grad(all).data, want) < 1e-5);
}

namespace {

// Scalar-valued wrapper around one primitive so its gradient can be checked
// against central finite differences through a generic reduction.
struct PrimitiveCase {
  const char* name;
  std::size_t inputs;  // flat input length
  std::function<ValueId(Tape&, ValueId flat)> build;
};

double eval_primitive(const PrimitiveCase& pc, const std::vector<double>& x) {
  Tape t;
  const ValueId flat = t.variable(Tensor::vector(x));
  return t.scalar_value(pc.build(t, flat));
}

}  // namespace

TEST_CASE("every primitive matches central finite differences") {
  // Each case reduces to a scalar through a fixed weighting so all output
  // components contribute to the gradient.
  auto weighted = [](Tape& t, ValueId v, double w0) {
    const std::size_t n = t.value(v).size();
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i) w[i] = w0 + 0.37 * static_cast<double>(i);
    return t.dot(v, t.constant(Tensor::vector(w)));
  };

  const std::vector<PrimitiveCase> cases = {
      {"add", 8,
       [&](Tape& t, ValueId f) {
         return weighted(t, t.add(t.slice(f, 0, 4), t.slice(f, 4, 4)), 1.0);
       }},
      {"sub", 8,
       [&](Tape& t, ValueId f) {
         return weighted(t, t.sub(t.slice(f, 0, 4), t.slice(f, 4, 4)), 0.7);
       }},
      {"mul", 8,
       [&](Tape& t, ValueId f) {
         return weighted(t, t.mul(t.slice(f, 0, 4), t.slice(f, 4, 4)), 1.3);
       }},
      {"scale", 5, [&](Tape& t, ValueId f) { return weighted(t, t.scale(f, -1.7), 0.9); }},
      {"scalar_mul", 5,
       [&](Tape& t, ValueId f) {
         return weighted(t, t.scalar_mul(t.slice(f, 0, 1), t.slice(f, 1, 4)), 1.1);
       }},
      {"matmul_vec", 12,
       [&](Tape& t, ValueId f) {
         const ValueId m = t.reshape(t.slice(f, 0, 8), {2, 4});
         return weighted(t, t.matmul(m, t.slice(f, 8, 4)), 1.0);
       }},
      {"matmul_mat", 12,
       [&](Tape& t, ValueId f) {
         const ValueId a = t.reshape(t.slice(f, 0, 6), {2, 3});
         const ValueId b = t.reshape(t.slice(f, 6, 6), {3, 2});
         return weighted(t, t.reshape(t.matmul(a, b), {4}), 1.0);
       }},
      {"transpose", 6,
       [&](Tape& t, ValueId f) {
         const ValueId m = t.reshape(f, {2, 3});
         return weighted(t, t.reshape(t.transpose(m), {6}), 0.8);
       }},
      {"tanh", 6, [&](Tape& t, ValueId f) { return weighted(t, t.tanh(f), 1.0); }},
      {"sigmoid", 6, [&](Tape& t, ValueId f) { return weighted(t, t.sigmoid(f), 1.0); }},
      {"relu", 6, [&](Tape& t, ValueId f) { return weighted(t, t.relu(f), 1.0); }},
      {"sum", 6, [&](Tape& t, ValueId f) { return t.sum(f); }},
      {"sqnorm", 6, [&](Tape& t, ValueId f) { return t.sqnorm(f); }},
      {"norm", 6, [&](Tape& t, ValueId f) { return t.norm(f); }},
      {"dot", 8,
       [&](Tape& t, ValueId f) { return t.dot(t.slice(f, 0, 4), t.slice(f, 4, 4)); }},
      {"slice_concat", 6,
       [&](Tape& t, ValueId f) {
         const ValueId a = t.slice(f, 0, 2);
         const ValueId b = t.slice(f, 2, 4);
         return weighted(t, t.concat(b, a), 1.0);
       }},
      {"normalize", 4,
       [&](Tape& t, ValueId f) { return weighted(t, t.normalize(f, 1e-8), 1.0); }},
  };

  Rng rng(7);
  for (const PrimitiveCase& pc : cases) {
    CAPTURE(pc.name);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<double> x = random_vec(rng, pc.inputs);
      if (std::strcmp(pc.name, "relu") == 0) {
        // keep inputs away from the kink, where finite differences are wrong
        for (double& v : x) {
          if (std::abs(v) < 1e-3) v = v < 0.0 ? v - 1e-3 : v + 1e-3;
        }
      }
      Tape t;
      const ValueId flat = t.variable(Tensor::vector(x));
      const ValueId out = pc.build(t, flat);
      t.backward(out);
      const std::vector<double> got = t.grad(flat).data;
      const std::vector<double> want =
          fd_gradient([&](const std::vector<double>& v) { return eval_primitive(pc, v); }, x);
      worst = std::max(worst, max_rel_err(got, want));
    }
    CHECK_MESSAGE(worst < 1e-5, pc.name, " worst rel err ", worst);
  }
}

TEST_CASE("composed two-layer mlp gradient matches finite differences") {
  // 3 -> 4 -> 1 tanh net: 3*4 + 4 + 4 + 1 = 21 parameters plus 3 inputs.
  Rng rng(11);
  const std::vector<double> flat0 = random_vec(rng, 24, -1.0, 1.0);
  auto build = [](Tape& t, ValueId f) {
    const ValueId w1 = t.reshape(t.slice(f, 0, 12), {4, 3});
    const ValueId b1 = t.slice(f, 12, 4);
    const ValueId w2 = t.reshape(t.slice(f, 16, 4), {1, 4});
    const ValueId b2 = t.slice(f, 20, 1);
    const ValueId x = t.slice(f, 21, 3);
    const ValueId h = t.tanh(t.add(t.matmul(w1, x), b1));
    return t.add(t.matmul(w2, h), b2);
  };
  Tape t;
  const ValueId f = t.variable(Tensor::vector(flat0));
  t.backward(build(t, f));
  const std::vector<double> want = fd_gradient(
      [&](const std::vector<double>& v) {
        Tape tt;
        return tt.scalar_value(build(tt, tt.variable(Tensor::vector(v))));
      },
      flat0);
  CHECK(max_rel_err(t.grad(f).data, want) < 1e-5);
}

TEST_CASE("repeated forward+backward is bit-identical") {
  Rng rng(3);
  const std::vector<double> x = random_vec(rng, 10);
  auto run = [&](std::vector<double>& grad_out) {
    Tape t;
    const ValueId f = t.variable(Tensor::vector(x));
    const ValueId h = t.tanh(t.mul(f, f));
    const ValueId loss = t.add(t.sqnorm(h), t.norm(t.slice(f, 2, 5)));
    t.backward(loss);
    grad_out = t.grad(f).data;
    return t.scalar_value(loss);
  };
  std::vector<double> g1, g2;
  const double l1 = run(g1);
  const double l2 = run(g2);
  CHECK(std::memcmp(&l1, &l2, sizeof(double)) == 0);
  CHECK(std::memcmp(g1.data(), g2.data(), g1.size() * sizeof(double)) == 0);
}

TEST_CASE("tape reuse after reset is bit-identical") {
  Rng rng(5);
  const std::vector<double> x = random_vec(rng, 16);
  Tape t;
  std::vector<double> first;
  double loss_first = 0.0;
  for (int round = 0; round < 3; ++round) {
    t.reset();
    const ValueId f = t.variable(Tensor::vector(x));
    const ValueId m = t.reshape(t.slice(f, 0, 12), {3, 4});
    const ValueId v = t.slice(f, 12, 4);
    const ValueId loss = t.sqnorm(t.tanh(t.matmul(m, v)));
    t.backward(loss);
    if (round == 0) {
      first = t.grad(f).data;
      loss_first = t.scalar_value(loss);
    } else {
      CHECK(t.scalar_value(loss) == loss_first);
      CHECK(std::memcmp(t.grad(f).data.data(), first.data(), first.size() * sizeof(double)) == 0);
    }
  }
}

TEST_CASE("error paths") {
  Tape t;
  const ValueId a = t.variable(Tensor::vector({1, 2, 3}));
  const ValueId b = t.variable(Tensor::vector({1, 2}));
  CHECK_THROWS_AS(t.add(a, b), Error);

  Tape t2;
  CHECK_THROWS_AS(t2.variable(Tensor::vector({1.0, std::nan("")})), Error);

  // Overflowing tanh input is fine; overflowing exp in sigmoid is not a
  // non-finite output (it saturates), but a plain inf input is rejected.
  Tape t3;
  CHECK_THROWS_AS(t3.constant(Tensor::scalar(std::numeric_limits<double>::infinity())), Error);

  // Gradient queries before backward.
  Tape t4;
  const ValueId x = t4.variable(Tensor::scalar(1.0));
  CHECK_THROWS_AS(t4.grad(x), Error);

  // Constants carry no gradient.
  Tape t5;
  const ValueId c = t5.constant(Tensor::scalar(2.0));
  const ValueId y = t5.mul(t5.variable(Tensor::scalar(3.0)), c);
  t5.backward(y);
  CHECK_THROWS_AS(t5.grad(c), Error);
}

TEST_SUITE_END();
