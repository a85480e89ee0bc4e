// Copyright 2026 The tsptta Authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "tsptta/autodiff.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "gradient_check.hpp"

namespace tsptta {
namespace {

using testing::check_gradients;
using testing::random_tensor;

constexpr double kPrimitiveTol = 1e-4;

Tensor mat(std::size_t r, std::size_t c, std::vector<double> v) {
  return Tensor::matrix(r, c, std::move(v));
}

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  const Var out = matmul(constant(mat(2, 2, {1, 0, 0, 1})), constant(mat(2, 2, {1, 2, 3, 4})));
  EXPECT_EQ(out.value(), mat(2, 2, {1, 2, 3, 4}));
}

TEST(Matmul, SelectorKeepsFirstRow) {
  const Var out = matmul(constant(mat(2, 2, {1, 0, 0, 0})), constant(mat(2, 2, {5, 6, 7, 8})));
  EXPECT_EQ(out.value(), mat(2, 2, {5, 6, 0, 0}));
}

TEST(Matmul, GradientOfSumMatchesFiniteDifferences) {
  Rng rng(11);
  const std::vector<Tensor> in{random_tensor({3, 3}, rng), random_tensor({3, 3}, rng)};
  auto f = [&](const Tensor& a) {
    NoGradGuard g;
    return sum(matmul(constant(a), constant(in[1]))).value().item();
  };
  const Var a = parameter(in[0]);
  backward(sum(matmul(a, constant(in[1]))));
  EXPECT_LT(testing::max_relative_error(a.grad(), testing::numeric_gradient(f, in[0])), 1e-6);
}

TEST(Matmul, RejectsInnerDimensionMismatch) {
  EXPECT_THROW(matmul(constant(Tensor({2, 3})), constant(Tensor({2, 3}))), DimensionError);
}

TEST(MatmulNt, MatchesExplicitTranspose) {
  Rng rng(3);
  const Tensor a = random_tensor({2, 4}, rng), b = random_tensor({3, 4}, rng);
  EXPECT_EQ(matmul_nt(constant(a), constant(b)).value().shape(), (Shape{2, 3}));
  const Tensor ref = matmul(constant(a), transpose(constant(b))).value();
  const Tensor got = matmul_nt(constant(a), constant(b)).value();
  for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(got[i], ref[i], 1e-15);
  EXPECT_LT(check_gradients([](const auto& v) { return matmul_nt(v[0], v[1]); },
                            {a, b}),
            kPrimitiveTol);
}

TEST(Softmax, UniformLogitsGiveUniformDistribution) {
  const Var p = softmax(constant(Tensor::vector({0, 0, 0})), {false, false, false});
  for (double v : p.value().data()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(Softmax, SingleSurvivorGetsAllMass) {
  const Var p = softmax(constant(Tensor::vector({5, 5})), {false, true});
  EXPECT_EQ(p.value()[0], 1.0);
  EXPECT_EQ(p.value()[1], 0.0);
}

TEST(Softmax, AllMaskedThrows) {
  EXPECT_THROW(softmax(constant(Tensor::vector({1, 2})), {true, true}), InvalidMaskError);
}

TEST(Softmax, GradientMatchesFiniteDifferences) {
  Rng rng(5);
  const std::vector<bool> mask{false, true, false, false, true, false};
  for (int trial = 0; trial < 5; ++trial) {
    const Tensor x = random_tensor({1, 6}, rng);
    EXPECT_LT(check_gradients([](const auto& v) { return softmax(v[0]); }, {x}, trial), 1e-6);
    EXPECT_LT(check_gradients([&](const auto& v) { return softmax(v[0], mask); }, {x}, trial),
              1e-6);
  }
}

TEST(Softmax, OutputIsAMaskedProbabilityVector) {
  Rng rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.below(12);
    std::vector<bool> mask(n);
    for (std::size_t j = 0; j < n; ++j) mask[j] = rng.uniform() < 0.4;
    mask[rng.below(n)] = false;
    const Tensor x = random_tensor({n}, rng, -30.0, 30.0);
    const Tensor p = softmax(constant(x), mask).value();
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      EXPECT_GE(p[j], 0.0);
      if (mask[j]) {
        EXPECT_EQ(p[j], 0.0);
      }
      total += p[j];
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(LayerNorm, ConstantRowCollapsesToBias) {
  const Var y = layer_norm(constant(mat(1, 4, {3, 3, 3, 3})), constant(Tensor::vector({1, 1, 1, 1})),
                           constant(Tensor::vector({0, 0, 0, 0})));
  for (double v : y.value().data()) EXPECT_EQ(v, 0.0);
}

TEST(LayerNorm, UnitVarianceInputIsPreserved) {
  const Var y = layer_norm(constant(mat(1, 2, {1, -1})), constant(Tensor::vector({1, 1})),
                           constant(Tensor::vector({0, 0})));
  const double scale = 1.0 / std::sqrt(1.0 + kLayerNormEps);
  EXPECT_NEAR(y.value()[0], scale, 1e-15);
  EXPECT_NEAR(y.value()[1], -scale, 1e-15);
  EXPECT_NEAR(y.value()[0], 1.0, 1e-5);
}

TEST(LayerNorm, GradientMatchesFiniteDifferences) {
  Rng rng(21);
  const std::vector<Tensor> in{random_tensor({2, 8}, rng), random_tensor({8}, rng),
                               random_tensor({8}, rng)};
  EXPECT_LT(check_gradients([](const auto& v) { return layer_norm(v[0], v[1], v[2]); }, in),
            1e-5);
}

TEST(LayerNorm, RejectsSingleFeature) {
  EXPECT_THROW(layer_norm(constant(Tensor({3, 1})), constant(Tensor({1})), constant(Tensor({1}))),
               DimensionError);
}

TEST(Primitives, TrivialValues) {
  const Var a = constant(mat(2, 2, {1, -2, 3, -4}));
  EXPECT_EQ(add(a, a).value(), mat(2, 2, {2, -4, 6, -8}));
  EXPECT_EQ(mul(a, a).value(), mat(2, 2, {1, 4, 9, 16}));
  EXPECT_EQ(mul_scalar(a, 0.5).value(), mat(2, 2, {0.5, -1, 1.5, -2}));
  EXPECT_EQ(relu(a).value(), mat(2, 2, {1, 0, 3, 0}));
  EXPECT_EQ(log(constant(Tensor::vector({1.0}))).value()[0], 0.0);
  EXPECT_EQ(transpose(a).value(), mat(2, 2, {1, 3, -2, -4}));
  EXPECT_EQ(sum(a).value().item(), -2.0);
  EXPECT_EQ(mean(a).value().item(), -0.5);
  EXPECT_EQ(gather_rows(a, {1, 1, 0}).value(), mat(3, 2, {3, -4, 3, -4, 1, -2}));
  EXPECT_EQ(concat({a, a}, 0).value().shape(), (Shape{4, 2}));
  EXPECT_EQ(concat({a, a}, 1).value(), mat(2, 4, {1, -2, 1, -2, 3, -4, 3, -4}));
  EXPECT_EQ(slice_cols(a, 1, 1).value(), mat(2, 1, {-2, -4}));
  EXPECT_EQ(element(a, 2).value().item(), 3.0);
  EXPECT_EQ(add_bias(a, constant(Tensor::vector({10, 20}))).value(),
            mat(2, 2, {11, 18, 13, 16}));
}

// Every primitive against central differences (h = 1e-5) on inputs drawn
// from [-2, 2].
TEST(Primitives, GradientsMatchFiniteDifferences) {
  Rng rng(1234);
  for (int trial = 0; trial < 3; ++trial) {
    const std::uint64_t s = static_cast<std::uint64_t>(trial);
    const Tensor a = random_tensor({3, 4}, rng), b = random_tensor({3, 4}, rng);
    const Tensor bias = random_tensor({4}, rng);
    Tensor positive = random_tensor({3, 4}, rng, 0.5, 2.0);
    Tensor away_from_kink = a;
    for (double& v : away_from_kink.data()) v += v >= 0 ? 0.1 : -0.1;

    EXPECT_LT(check_gradients([](const auto& v) { return add(v[0], v[1]); }, {a, b}, s), kPrimitiveTol);
    EXPECT_LT(check_gradients([](const auto& v) { return mul(v[0], v[1]); }, {a, b}, s), kPrimitiveTol);
    EXPECT_LT(check_gradients([](const auto& v) { return add_bias(v[0], v[1]); }, {a, bias}, s),
              kPrimitiveTol);
    EXPECT_LT(check_gradients([](const auto& v) { return mul_scalar(v[0], -1.7); }, {a}, s),
              kPrimitiveTol);
    EXPECT_LT(check_gradients([](const auto& v) { return relu(v[0]); }, {away_from_kink}, s),
              kPrimitiveTol);
    EXPECT_LT(check_gradients([](const auto& v) { return log(v[0]); }, {positive}, s), kPrimitiveTol);
    EXPECT_LT(check_gradients([](const auto& v) { return transpose(v[0]); }, {a}, s), kPrimitiveTol);
    EXPECT_LT(check_gradients([](const auto& v) { return sum(v[0]); }, {a}, s), kPrimitiveTol);
    EXPECT_LT(check_gradients([](const auto& v) { return mean(v[0]); }, {a}, s), kPrimitiveTol);
    EXPECT_LT(check_gradients([](const auto& v) { return element(v[0], 5); }, {a}, s), kPrimitiveTol);
    EXPECT_LT(check_gradients([](const auto& v) { return gather_rows(v[0], {2, 0, 2}); }, {a}, s),
              kPrimitiveTol);
    EXPECT_LT(check_gradients([](const auto& v) { return concat({v[0], v[1], v[0]}, 0); }, {a, b}, s),
              kPrimitiveTol);
    EXPECT_LT(check_gradients([](const auto& v) { return concat({v[1], v[0]}, 1); }, {a, b}, s),
              kPrimitiveTol);
    EXPECT_LT(check_gradients([](const auto& v) { return slice_cols(v[0], 1, 2); }, {a}, s),
              kPrimitiveTol);
    EXPECT_LT(check_gradients([](const auto& v) { return matmul(v[0], transpose(v[1])); }, {a, b}, s),
              kPrimitiveTol);
  }
}

TEST(Backward, SumGivesAllOnes) {
  const Var p = parameter(Tensor::vector({1, 2, 3}));
  backward(sum(p));
  EXPECT_EQ(p.grad(), Tensor::vector({1, 1, 1}));
}

TEST(Backward, FanOutAccumulates) {
  // sum(p^2) with p used twice in one product
  const Var p = parameter(Tensor::vector({1, 2, 3}));
  backward(sum(mul(p, p)));
  EXPECT_EQ(p.grad(), Tensor::vector({2, 4, 6}));
}

TEST(Backward, NonScalarLossIsAContractViolation) {
  const Var p = parameter(Tensor::vector({1, 2}));
  EXPECT_THROW(backward(mul_scalar(p, 2.0)), ContractViolation);
}

TEST(Backward, ConstantsReceiveNoGradient) {
  const Var p = parameter(Tensor::vector({1, 2}));
  const Var c = constant(Tensor::vector({3, 4}));
  backward(sum(mul(p, c)));
  EXPECT_EQ(p.grad(), Tensor::vector({3, 4}));
  EXPECT_FALSE(c.requires_grad());
  EXPECT_EQ(c.grad(), Tensor::vector({0, 0}));
}

TEST(Backward, NoGradGuardSkipsRecording) {
  const Var p = parameter(Tensor::vector({1, 2}));
  NoGradGuard guard;
  EXPECT_FALSE(sum(p).requires_grad());
}

TEST(Backward, IsLinearInTheLoss) {
  Rng rng(77);
  const Tensor x = random_tensor({3, 4}, rng), w = random_tensor({4, 2}, rng);
  auto l1 = [&](const Var& p) { return sum(relu(matmul(constant(x), p))); };
  auto l2 = [&](const Var& p) { return mean(softmax(matmul(constant(x), p))); };
  const double alpha = 0.7, beta = -2.3;

  const Var p1 = parameter(w), p2 = parameter(w), p12 = parameter(w);
  backward(l1(p1));
  backward(l2(p2));
  backward(add(mul_scalar(l1(p12), alpha), mul_scalar(l2(p12), beta)));
  const Tensor g1 = p1.grad(), g2 = p2.grad(), g12 = p12.grad();
  for (std::size_t i = 0; i < g12.size(); ++i)
    EXPECT_NEAR(g12[i], alpha * g1[i] + beta * g2[i], 1e-10);
}

TEST(Tensor, RejectsMismatchedData) {
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
  EXPECT_THROW(Tensor({0, 2}), DimensionError);
}

}  // namespace
}  // namespace tsptta
