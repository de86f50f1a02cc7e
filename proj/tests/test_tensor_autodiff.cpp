#include <gtest/gtest.h>

#include <cmath>

#include "backdrop/autodiff.hpp"
#include "backdrop/tensor.hpp"
#include "oracles.hpp"

using namespace backdrop;
using namespace backdrop::testing;

TEST(Tensor, RejectsZeroExtent) {
  EXPECT_THROW(Tensor({2, 0, 3}), std::invalid_argument);
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>(3)), std::invalid_argument);
  Tensor t({2, 3}, 1.5);
  EXPECT_EQ(t.numel(), 6u);
  EXPECT_EQ(t.rank(), 2u);
  EXPECT_FALSE(t.has_grad());
}

TEST(Tensor, SgdStepExamples) {
  Tensor w({2}, std::vector<double>{1.0, -2.0});
  Tensor g({2}, std::vector<double>{0.5, 0.5});
  sgd_step(w, g, 0.1);
  EXPECT_DOUBLE_EQ(w.values[0], 0.95);
  EXPECT_DOUBLE_EQ(w.values[1], -2.05);
  EXPECT_THROW(sgd_step(w, Tensor({3}), 0.1), std::invalid_argument);
  EXPECT_THROW(sgd_step(w, g, 0.0), std::invalid_argument);
  EXPECT_THROW(sgd_step(w, g, -1.0), std::invalid_argument);
}

TEST(Tensor, L1PenaltyValue) {
  Tensor a({2}, std::vector<double>{1.0, -2.0});
  Tensor b({1}, std::vector<double>{-0.5});
  const std::vector<const Tensor*> ps = {&a, &b};
  EXPECT_DOUBLE_EQ(l1_penalty(ps, 0.1), 0.35);
  EXPECT_DOUBLE_EQ(l1_penalty(ps, 0.0), 0.0);
}

TEST(Tensor, AllFinite) {
  Tensor t({2}, std::vector<double>{1.0, 2.0});
  EXPECT_TRUE(t.all_finite());
  t.values[1] = NAN;
  EXPECT_FALSE(t.all_finite());
}

TEST(Autodiff, ConvAgainstFiniteDifferences) {
  for (std::uint64_t s = 0; s < 25; ++s) EXPECT_LT(oracle_conv2d(s).max_rel, 1e-4) << "seed " << s;
}

TEST(Autodiff, DenseAgainstFiniteDifferences) {
  for (std::uint64_t s = 0; s < 25; ++s) EXPECT_LT(oracle_dense(s).max_rel, 1e-4) << "seed " << s;
}

TEST(Autodiff, ReluCompositeAgainstFiniteDifferences) {
  for (std::uint64_t s = 0; s < 25; ++s)
    EXPECT_LT(oracle_relu_composite(s).max_rel, 1e-4) << "seed " << s;
}

TEST(Autodiff, SoftmaxCrossEntropyAgainstFiniteDifferences) {
  for (std::uint64_t s = 0; s < 25; ++s) EXPECT_LT(oracle_softmax_ce(s).max_rel, 1e-4) << "seed " << s;
}

TEST(Autodiff, L1AgainstFiniteDifferences) {
  for (std::uint64_t s = 0; s < 25; ++s) EXPECT_LT(oracle_l1(s).max_rel, 1e-4) << "seed " << s;
}

TEST(Autodiff, SoftmaxCrossEntropyIsStableForLargeLogits) {
  Tape t;
  Var z = t.constant(Tensor({3}, std::vector<double>{1000.0, 0.0, -1000.0}));
  Var l = t.softmax_cross_entropy(z, 0);
  EXPECT_NEAR(t.value(l).values[0], 0.0, 1e-12);
  Var l2 = t.softmax_cross_entropy(z, 1);
  EXPECT_NEAR(t.value(l2).values[0], 1000.0, 1e-9);
  EXPECT_THROW(t.softmax_cross_entropy(z, 3), std::invalid_argument);
}

TEST(Autodiff, SoftmaxGradientIsProbabilitiesMinusOneHot) {
  Tensor z({3}, std::vector<double>{1.0, 2.0, 3.0});
  Tape t;
  Var v = t.parameter(z);
  t.backward(t.softmax_cross_entropy(v, 1));
  const double s = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  EXPECT_NEAR(z.grad[0], std::exp(1.0) / s, 1e-12);
  EXPECT_NEAR(z.grad[1], std::exp(2.0) / s - 1.0, 1e-12);
  EXPECT_NEAR(z.grad[2], std::exp(3.0) / s, 1e-12);
}

TEST(Autodiff, L1SubgradientAtZeroIsZero) {
  Tensor w({3}, std::vector<double>{0.0, 2.0, -3.0});
  Tape t;
  Var v = t.parameter(w);
  const std::vector<Var> ps = {v};
  Var p = t.l1_penalty(ps, 0.5);
  EXPECT_DOUBLE_EQ(t.value(p).values[0], 2.5);
  t.backward(p);
  EXPECT_EQ(w.grad, (std::vector<double>{0.0, 0.5, -0.5}));
  EXPECT_THROW(t.l1_penalty(ps, -1.0), std::invalid_argument);
}

TEST(Autodiff, ParameterGradientsAccumulateAcrossBackwardCalls) {
  Tensor w({1}, std::vector<double>{2.0});
  for (int i = 0; i < 2; ++i) {
    Tape t;
    Var v = t.parameter(w);
    const std::vector<Var> ps = {v};
    t.backward(t.l1_penalty(ps, 1.0));
  }
  EXPECT_DOUBLE_EQ(w.grad[0], 2.0);
  w.zero_grad();
  EXPECT_DOUBLE_EQ(w.grad[0], 0.0);
}

TEST(Autodiff, BackwardVisitsEveryNodeOnce) {
  Tensor x({2, 4, 4}, 0.5), k({3, 2, 3, 3}, 0.1), w({3, 2}, 0.2), b({2}, 0.0);
  Tape t;
  Var vx = t.constant(x), vk = t.parameter(k), vw = t.parameter(w), vb = t.parameter(b);
  Var y = t.softmax_cross_entropy(t.dense(t.global_avg_pool(t.relu(t.conv2d(vx, vk, 1, 1))), vw, vb), 0);
  EXPECT_EQ(t.backward(y), t.size());
  EXPECT_THROW(t.backward(vk), std::invalid_argument);  // not a scalar
  EXPECT_THROW(t.backward(Var{999}), std::out_of_range);
}

TEST(Autodiff, ShapeErrorsNameBothShapes) {
  Tape t;
  Var x = t.constant(Tensor({2, 5, 5}));
  Var k = t.constant(Tensor({3, 4, 3, 3}));
  try {
    t.conv2d(x, k, 1, 0);
    FAIL() << "expected a shape error";
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2,5,5]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[3,4,3,3]"), std::string::npos) << msg;
  }
  EXPECT_THROW(t.add(x, t.constant(Tensor({2, 5, 4}))), std::invalid_argument);
  EXPECT_THROW(t.channel_bias(x, t.constant(Tensor({3}))), std::invalid_argument);
  EXPECT_THROW(t.dense(t.constant(Tensor({3})), t.constant(Tensor({4, 2})), t.constant(Tensor({2}))),
               std::invalid_argument);
}

TEST(Autodiff, ScaledSumAndAdd) {
  Tensor a({1}, std::vector<double>{2.0}), b({1}, std::vector<double>{3.0});
  Tape t;
  Var va = t.parameter(a), vb = t.parameter(b);
  const std::vector<Var> both = {va, vb};
  Var s = t.scaled_sum(both, 0.5);
  EXPECT_DOUBLE_EQ(t.value(s).values[0], 2.5);
  t.backward(t.add(s, va));
  EXPECT_DOUBLE_EQ(a.grad[0], 1.5);
  EXPECT_DOUBLE_EQ(b.grad[0], 0.5);
}
