#include <gtest/gtest.h>

#include <cmath>

#include "pcb/autodiff.hpp"
#include "pcb/error.hpp"
#include "support.hpp"

using namespace pcb;
using pcbtest::check_input_gradients;
using pcbtest::random_tensor;

namespace {

constexpr double kTol = 1e-4;

// Contracts a graph output to a scalar with fixed weights so every output
// element gets a distinct upstream gradient.
Var contract(Var out) {
  Tape& tape = out.tape();
  Tensor w(out.shape());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::sin(1.0 + 0.7 * static_cast<double>(i));
  return sum(mul(out, tape.constant(w)));
}

void expect_gradients(const pcbtest::InputGraph& g, const std::vector<Tensor>& inputs) {
  const auto r = check_input_gradients(g, inputs);
  EXPECT_GT(r.checked, 0u);
  EXPECT_LT(r.max_rel_error, kTol);
}

}  // namespace

TEST(Autodiff, MatmulGradients) {
  Rng rng(1);
  expect_gradients([](Tape&, std::span<const Var> v) { return contract(matmul(v[0], v[1])); },
                   {random_tensor(3, 4, rng), random_tensor(4, 5, rng)});
  expect_gradients(
      [](Tape&, std::span<const Var> v) { return contract(matmul_transposed(v[0], v[1])); },
      {random_tensor(3, 4, rng), random_tensor(2, 4, rng)});
}

TEST(Autodiff, ElementwiseGradients) {
  Rng rng(2);
  expect_gradients([](Tape&, std::span<const Var> v) { return contract(add(v[0], v[1])); },
                   {random_tensor(3, 4, rng), random_tensor(3, 4, rng)});
  expect_gradients([](Tape&, std::span<const Var> v) { return contract(add(v[0], v[1])); },
                   {random_tensor(3, 4, rng), random_tensor(1, 4, rng)});
  expect_gradients([](Tape&, std::span<const Var> v) { return contract(sub(v[0], v[1])); },
                   {random_tensor(2, 3, rng), random_tensor(2, 3, rng)});
  expect_gradients([](Tape&, std::span<const Var> v) { return contract(mul(v[0], v[1])); },
                   {random_tensor(2, 3, rng), random_tensor(2, 3, rng)});
  expect_gradients([](Tape&, std::span<const Var> v) { return contract(scale(v[0], -1.7)); },
                   {random_tensor(2, 3, rng)});
  expect_gradients([](Tape&, std::span<const Var> v) { return contract(sigmoid(v[0])); },
                   {random_tensor(3, 3, rng, 2.0)});
}

TEST(Autodiff, ReluGradientAwayFromKink) {
  Tensor x = Tensor::matrix(2, 3, {-1.2, 0.4, 2.0, 0.7, -0.3, -2.5});
  expect_gradients([](Tape&, std::span<const Var> v) { return contract(relu(v[0])); }, {x});
}

TEST(Autodiff, ShapeOpGradients) {
  Rng rng(3);
  expect_gradients(
      [](Tape&, std::span<const Var> v) { return contract(concat({v[0], v[1]}, 0)); },
      {random_tensor(2, 3, rng), random_tensor(1, 3, rng)});
  expect_gradients(
      [](Tape&, std::span<const Var> v) { return contract(concat({v[0], v[1]}, 1)); },
      {random_tensor(2, 3, rng), random_tensor(2, 2, rng)});
  expect_gradients(
      [](Tape&, std::span<const Var> v) { return contract(slice(v[0], 0, 1, 2)); },
      {random_tensor(4, 3, rng)});
  expect_gradients(
      [](Tape&, std::span<const Var> v) { return contract(slice(v[0], 1, 1, 2)); },
      {random_tensor(2, 4, rng)});
  const std::vector<std::int32_t> ids = {2, 0, 2, 1};
  expect_gradients(
      [&](Tape&, std::span<const Var> v) { return contract(embedding_lookup(v[0], ids)); },
      {random_tensor(3, 4, rng)});
}

TEST(Autodiff, SoftmaxAndNormGradients) {
  Rng rng(4);
  expect_gradients([](Tape&, std::span<const Var> v) { return contract(softmax(v[0])); },
                   {random_tensor(3, 5, rng)});
  const std::vector<std::uint8_t> mask = {1, 0, 1, 1, 0};
  expect_gradients(
      [&](Tape&, std::span<const Var> v) { return contract(masked_softmax(v[0], mask)); },
      {random_tensor(3, 5, rng)});
  expect_gradients(
      [](Tape&, std::span<const Var> v) { return contract(layer_norm(v[0], v[1], v[2])); },
      {random_tensor(3, 6, rng), random_tensor(1, 6, rng), random_tensor(1, 6, rng)});
}

TEST(Autodiff, ReductionAndLossGradients) {
  Rng rng(5);
  expect_gradients([](Tape&, std::span<const Var> v) { return sum(mul(v[0], v[0])); },
                   {random_tensor(2, 3, rng)});
  expect_gradients([](Tape&, std::span<const Var> v) { return mean(mul(v[0], v[0])); },
                   {random_tensor(2, 3, rng)});
  for (double target : {0.0, 1.0}) {
    expect_gradients([&](Tape&, std::span<const Var> v) { return bce_with_logits(v[0], target); },
                     {Tensor::matrix(1, 1, {0.37})});
  }
  expect_gradients([](Tape&, std::span<const Var> v) { return ce_with_logits(v[0], 2); },
                   {random_tensor(1, 5, rng)});
}

TEST(Autodiff, DropoutGradientMatchesFixedMask) {
  Rng rng(6);
  const Tensor x = random_tensor(3, 4, rng);
  // Same seed for every evaluation, so the mask is fixed across the differences.
  expect_gradients(
      [](Tape&, std::span<const Var> v) {
        Rng r(99);
        return contract(dropout(v[0], 0.3, true, r));
      },
      {x});
}

TEST(Autodiff, StraightThroughForwardsHardAndRoutesSoftGradient) {
  Tape tape;
  Var soft = tape.variable(Tensor::matrix(1, 3, {0.2, 0.5, 0.3}));
  const Tensor hard = Tensor::matrix(1, 3, {0.0, 1.0, 0.0});
  Var st = straight_through(hard, soft);
  EXPECT_EQ(st.value(), hard);
  Var w = tape.constant(Tensor::matrix(1, 3, {1.0, 2.0, 3.0}));
  tape.backward(sum(mul(st, w)));
  EXPECT_EQ(tape.grad(soft), Tensor::matrix(1, 3, {1.0, 2.0, 3.0}));
}

TEST(Autodiff, StableLossValuesAtExtremeLogits) {
  EXPECT_NEAR(bce_with_logits_value(800.0, 1.0), 0.0, 1e-300);
  EXPECT_NEAR(bce_with_logits_value(-800.0, 1.0), 800.0, 1e-9);
  EXPECT_DOUBLE_EQ(stable_sigmoid(-800.0), std::exp(-800.0));
  Tape tape;
  Var logit = tape.variable(Tensor::scalar(-800.0));
  Var loss = bce_with_logits(logit, 1.0);
  tape.backward(loss);
  EXPECT_TRUE(std::isfinite(loss.item()));
  EXPECT_NEAR(tape.grad(logit)[0], -1.0, 1e-12);
}

TEST(Autodiff, ShapeMismatchNamesBothShapes) {
  Tape tape;
  Var a = tape.constant(Tensor({2, 3}));
  Var b = tape.constant(Tensor({2, 3}));
  try {
    matmul(a, b);
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2, 3]"), std::string::npos) << msg;
  }
}

TEST(Autodiff, GradientsAccumulateOverReusedNodes) {
  Tape tape;
  Var x = tape.variable(Tensor::matrix(1, 2, {1.5, -2.0}));
  Var y = add(mul(x, x), x);  // x^2 + x
  tape.backward(sum(y));
  EXPECT_EQ(tape.grad(x), Tensor::matrix(1, 2, {4.0, -3.0}));
}

// Random five-op chains over assorted shapes.
TEST(Autodiff, RandomComposedGraphs) {
  Rng rng(7);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto m = static_cast<std::size_t>(rng.uniform_int(1, 4));
    const auto k = static_cast<std::size_t>(rng.uniform_int(1, 5));
    const auto n = static_cast<std::size_t>(rng.uniform_int(2, 5));
    std::vector<int> ops;
    for (int i = 0; i < 5; ++i) ops.push_back(static_cast<int>(rng.uniform_int(0, 5)));
    auto graph = [&](Tape& tape, std::span<const Var> v) {
      Var x = matmul(v[0], v[1]);  // m x n
      for (int op : ops) {
        switch (op) {
          case 0: x = sigmoid(x); break;
          case 1: x = softmax(x); break;
          case 2: x = layer_norm(x, v[2], v[3]); break;
          case 3: x = mul(x, add(x, v[2])); break;
          case 4: x = matmul_transposed(x, v[4]); x = matmul(x, v[4]); break;
          default: x = scale(add(x, v[3]), 0.5); break;
        }
      }
      (void)tape;
      return contract(x);
    };
    const auto r = check_input_gradients(
        graph, {random_tensor(m, k, rng), random_tensor(k, n, rng), random_tensor(1, n, rng),
                random_tensor(1, n, rng), random_tensor(2, n, rng, 0.5)});
    worst = std::max(worst, r.max_rel_error);
  }
  EXPECT_LT(worst, kTol);
}
