#include <gtest/gtest.h>

#include "maevi/ops.hpp"
#include "oracles.hpp"

using namespace maevi;

TEST(Tensor, ShapeAndData) {
  Tensor t({2, 3}, 1.5);
  EXPECT_EQ(t.numel(), 6u);
  EXPECT_EQ(t.ndim(), 2u);
  t(1, 2) = 4.0;
  EXPECT_EQ(t.data()[5], 4.0);
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>(3)), ShapeError);
}

TEST(Tensor, HandlesShareStorageAndCloneDoesNot) {
  Tensor a({3}, 1.0);
  Tensor b = a;
  Tensor c = a.clone();
  b.data()[0] = 7.0;
  EXPECT_EQ(a.data()[0], 7.0);
  EXPECT_EQ(c.data()[0], 1.0);
}

TEST(Autodiff, SumGivesOnes) {
  std::mt19937_64 rng(1);
  Tensor x = oracle::random_tensor({3, 4}, rng).set_requires_grad();
  backward(sum(x));
  for (double g : x.grad()) EXPECT_EQ(g, 1.0);
}

TEST(Autodiff, SumOfSquaresGivesTwiceInput) {
  std::mt19937_64 rng(2);
  Tensor x = oracle::random_tensor({5}, rng).set_requires_grad();
  backward(sum(mul(x, x)));
  for (std::size_t i = 0; i < 5; ++i) EXPECT_DOUBLE_EQ(x.grad()[i], 2.0 * x.data()[i]);
}

TEST(Autodiff, NonScalarLossIsRejected) {
  Tensor x = Tensor({2}, 1.0).set_requires_grad();
  EXPECT_THROW(backward(scale(x, 2.0)), ShapeError);
}

TEST(Autodiff, EachRuleRunsOnceAndTapeIsDiscarded) {
  Tensor x = Tensor({4}, 0.5).set_requires_grad();
  const Tensor y = mul(x, x);
  const Tensor loss = sum(add(y, y));  // y is reached twice
  Graph g(loss);
  EXPECT_EQ(g.size(), 4u);
  g.backward();
  EXPECT_EQ(g.rules_run(), 3u);
  for (double v : x.grad()) EXPECT_DOUBLE_EQ(v, 4.0 * 0.5);
  EXPECT_TRUE(y.is_leaf());
  EXPECT_TRUE(x.has_grad());
}

TEST(Autodiff, NoGradGuardRecordsNothing) {
  Tensor x = Tensor({2}, 1.0).set_requires_grad();
  NoGradGuard guard;
  EXPECT_FALSE(scale(x, 3.0).requires_grad());
}

TEST(Autodiff, RepeatedBackwardIsDeterministic) {
  std::mt19937_64 rng(3);
  Tensor x = oracle::random_tensor({2, 6, 6}, rng).set_requires_grad();
  Tensor w = oracle::random_tensor({3, 2, 3, 3}, rng).set_requires_grad();
  const auto run = [&] {
    x.zero_grad();
    w.zero_grad();
    backward(sum(tanh(conv2d(x, w, Tensor()))));
    return std::pair(std::vector<double>(x.grad().begin(), x.grad().end()),
                     std::vector<double>(w.grad().begin(), w.grad().end()));
  };
  EXPECT_EQ(run(), run());
}

TEST(Ops, NonFiniteResultThrows) {
  Tensor x({2}, 1e308);
  EXPECT_THROW(scale(x, 10.0), NonFiniteError);
}

TEST(Ops, ShapeMismatchThrows) {
  EXPECT_THROW(add(Tensor({2}), Tensor({3})), ShapeError);
  EXPECT_NO_THROW(mul(Tensor({3}), Tensor::scalar(2.0)));
}

TEST(Ops, SoftmaxOfZerosIsUniform) {
  const Tensor s = softmax(Tensor({3}, 0.0), 0);
  for (double v : s.data()) EXPECT_DOUBLE_EQ(v, 1.0 / 3.0);
}

TEST(Ops, SoftmaxSumsToOneAlongAxis) {
  std::mt19937_64 rng(4);
  const Tensor x = oracle::random_tensor({5, 3, 4}, rng, -30.0, 30.0);
  const Tensor s = softmax(x, 0);
  for (std::size_t j = 0; j < 12; ++j) {
    double total = 0.0;
    for (std::size_t i = 0; i < 5; ++i) total += s.data()[i * 12 + j];
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
  const Tensor big = softmax(Tensor({2}, std::vector<double>{1000.0, 1000.0}), 0);
  EXPECT_DOUBLE_EQ(big.data()[0], 0.5);
}

TEST(Ops, L1MeanOfEqualInputsIsZero) {
  std::mt19937_64 rng(5);
  const Tensor x = oracle::random_tensor({3, 4}, rng);
  EXPECT_EQ(l1_mean(x, x).item(), 0.0);
}

TEST(Ops, L1SubgradientAtZeroIsZero) {
  Tensor a = Tensor({2}, std::vector<double>{1.0, 2.0}).set_requires_grad();
  const Tensor b({2}, std::vector<double>{1.0, 0.0});
  backward(l1_mean(a, b));
  EXPECT_EQ(a.grad()[0], 0.0);
  EXPECT_EQ(a.grad()[1], 0.5);
}

TEST(Ops, UpsampleKeepsConstants) {
  const Tensor up = bilinear_upsample(Tensor({2, 3, 5}, 0.7), 2);
  EXPECT_EQ(up.shape(), (Shape{2, 6, 10}));
  for (double v : up.data()) EXPECT_DOUBLE_EQ(v, 0.7);
  for (double v : oracle::values(bilinear_upsample(Tensor({1, 2, 2}, -0.3), 4))) EXPECT_DOUBLE_EQ(v, -0.3);
}

TEST(Ops, AvgPoolAveragesBlocks) {
  const Tensor x({1, 2, 2}, std::vector<double>{1, 2, 3, 6});
  EXPECT_DOUBLE_EQ(avg_pool2(x).item(), 3.0);
}

TEST(Conv, Identity1x1LeavesInputUnchanged) {
  std::mt19937_64 rng(6);
  const Tensor x = oracle::random_tensor({1, 3, 3}, rng);
  const Tensor y = conv2d(x, Tensor({1, 1, 1, 1}, 1.0), Tensor({1}, 0.0));
  EXPECT_EQ(std::vector<double>(y.data().begin(), y.data().end()),
            std::vector<double>(x.data().begin(), x.data().end()));
  const Tensor x3 = oracle::random_tensor({1, 2, 3, 3}, rng);
  const Tensor y3 = conv3d(x3, Tensor({1, 1, 1, 1, 1}, 1.0), Tensor());
  EXPECT_EQ(oracle::max_abs_diff(y3.data(), x3.data()), 0.0);
}

TEST(Conv, ZeroWeightsGiveBias) {
  std::mt19937_64 rng(7);
  const Tensor y = conv2d(oracle::random_tensor({2, 5, 5}, rng), Tensor({3, 2, 3, 3}), Tensor({3}, 0.25));
  for (double v : y.data()) EXPECT_EQ(v, 0.25);
  const Tensor y3 = conv3d(Tensor({2, 2, 4, 4}), oracle::random_tensor({3, 2, 3, 3, 3}, rng), Tensor({3}, -1.5));
  for (double v : y3.data()) EXPECT_EQ(v, -1.5);
}

TEST(Conv, RejectsEvenKernelsAndMismatches) {
  EXPECT_THROW(conv2d(Tensor({1, 4, 4}), Tensor({1, 1, 2, 2}), Tensor()), ShapeError);
  EXPECT_THROW(conv2d(Tensor({2, 4, 4}), Tensor({1, 1, 3, 3}), Tensor()), ShapeError);
  EXPECT_THROW(conv3d(Tensor({1, 2, 4, 4}), Tensor({1, 1, 3, 3}), Tensor()), ShapeError);
}

TEST(Conv, MatchesLoopOracle2d) {
  std::mt19937_64 rng(8);
  const Tensor x = oracle::random_tensor({2, 8, 8}, rng);
  const Tensor w = oracle::random_tensor({4, 2, 3, 3}, rng);
  const Tensor b = oracle::random_tensor({4}, rng);
  const std::vector<double> bv(b.data().begin(), b.data().end());
  const auto expect = oracle::conv({x.data().begin(), x.data().end()}, 2, 1, 8, 8,
                                   {w.data().begin(), w.data().end()}, 4, 1, 3, &bv, 1, 0, 1);
  EXPECT_LT(oracle::max_abs_diff(conv2d(x, w, b).data(), expect), 1e-12);
  const auto strided = oracle::conv({x.data().begin(), x.data().end()}, 2, 1, 8, 8,
                                    {w.data().begin(), w.data().end()}, 4, 1, 3, &bv, 2, 0, 1);
  EXPECT_LT(oracle::max_abs_diff(conv2d(x, w, b, 2).data(), strided), 1e-12);
}

namespace {

double grad_error(const std::function<Tensor()>& f, const std::vector<Tensor>& wrt, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return oracle::gradient_error(f, wrt, 64, rng);
}

}  // namespace

TEST(Gradients, ElementwiseOps) {
  std::mt19937_64 rng(9);
  Tensor a = oracle::random_tensor({3, 4}, rng).set_requires_grad();
  Tensor b = oracle::random_tensor({3, 4}, rng).set_requires_grad();
  const Tensor r = oracle::random_tensor({3, 4}, rng);
  EXPECT_LT(grad_error([&] { return sum(mul(add(a, b), r)); }, {a, b}, 1), 1e-5);
  EXPECT_LT(grad_error([&] { return sum(mul(sub(mul(a, b), scale(a, 0.3)), r)); }, {a, b}, 2), 1e-5);
  EXPECT_LT(grad_error([&] { return sum(mul(sigmoid(a), r)); }, {a}, 3), 1e-5);
  EXPECT_LT(grad_error([&] { return sum(mul(tanh(a), r)); }, {a}, 4), 1e-5);
  EXPECT_LT(grad_error([&] { return sum(mul(leaky_relu(a), r)); }, {a}, 5), 1e-5);
  EXPECT_LT(grad_error([&] { return sum(mul(relu(a), r)); }, {a}, 6), 1e-5);
  EXPECT_LT(grad_error([&] { return mean(mul(softmax(a, 0), r)); }, {a}, 7), 1e-5);
  EXPECT_LT(grad_error([&] { return mean(mul(softmax(a, 1), r)); }, {a}, 8), 1e-5);
  EXPECT_LT(grad_error([&] { return l1_mean(a, b); }, {a, b}, 9), 1e-5);
  EXPECT_LT(grad_error([&] { return sum(mul(clamp(a, -0.5, 0.5), r)); }, {a}, 10), 1e-5);
  Tensor s = Tensor::scalar(0.7).set_requires_grad();
  EXPECT_LT(grad_error([&] { return sum(mul(mul(a, s), r)); }, {a, s}, 11), 1e-5);
}

TEST(Gradients, ShapeOps) {
  std::mt19937_64 rng(10);
  Tensor a = oracle::random_tensor({4, 4, 6}, rng).set_requires_grad();
  Tensor b = oracle::random_tensor({2, 4, 6}, rng).set_requires_grad();
  Tensor p = oracle::random_tensor({4, 6}, rng).set_requires_grad();
  const Tensor r = oracle::random_tensor({6, 4, 6}, rng);
  EXPECT_LT(grad_error([&] { return sum(mul(concat({a, b}), r)); }, {a, b}, 1), 1e-5);
  EXPECT_LT(grad_error([&] { return sum(mul(reshape(slice(a, 1, 3), {4, 2, 6}), reshape(slice(r, 0, 2), {4, 2, 6}))); }, {a}, 2), 1e-5);
  EXPECT_LT(grad_error([&] { return sum(mul(mul_plane(a, p), slice(r, 0, 4))); }, {a, p}, 3), 1e-5);
  const Tensor ru = oracle::random_tensor({4, 8, 12}, rng);
  EXPECT_LT(grad_error([&] { return sum(mul(bilinear_upsample(a, 2), ru)); }, {a}, 4), 1e-5);
  const Tensor rp = oracle::random_tensor({4, 2, 3}, rng);
  EXPECT_LT(grad_error([&] { return sum(mul(avg_pool2(a), rp)); }, {a}, 5), 1e-5);
}

TEST(Gradients, Convolutions) {
  std::mt19937_64 rng(11);
  Tensor x = oracle::random_tensor({2, 6, 6}, rng).set_requires_grad();
  Tensor w = oracle::random_tensor({3, 2, 3, 3}, rng).set_requires_grad();
  Tensor b = oracle::random_tensor({3}, rng).set_requires_grad();
  const Tensor r = oracle::random_tensor({3, 6, 6}, rng);
  EXPECT_LT(grad_error([&] { return sum(mul(conv2d(x, w, b), r)); }, {x, w, b}, 1), 1e-5);
  const Tensor rs = oracle::random_tensor({3, 3, 3}, rng);
  EXPECT_LT(grad_error([&] { return sum(mul(conv2d(x, w, b, 2), rs)); }, {x, w, b}, 2), 1e-5);

  Tensor x3 = oracle::random_tensor({2, 3, 5, 5}, rng).set_requires_grad();
  Tensor w3 = oracle::random_tensor({2, 2, 3, 3, 3}, rng).set_requires_grad();
  Tensor b3 = oracle::random_tensor({2}, rng).set_requires_grad();
  const Tensor r3 = oracle::random_tensor({2, 3, 5, 5}, rng);
  EXPECT_LT(grad_error([&] { return sum(mul(conv3d(x3, w3, b3), r3)); }, {x3, w3, b3}, 3), 1e-5);
}
