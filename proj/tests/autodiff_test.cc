/*
 * Copyright 2026 The Prunex Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "grad_check.h"
#include "prunex/autodiff.h"
#include "test_util.h"

namespace prunex {
namespace {

TEST(Forward, MatMulIdentity) {
  Graph<double> g;
  const Var a = g.Input(Tensor<double>({2, 2}, {1, 0, 0, 1}));
  const Var b = g.Input(Tensor<double>({2, 1}, {3, 4}));
  const Tensor<double>& out = g.value(g.MatMul(a, b));
  EXPECT_EQ(out, Tensor<double>({2, 1}, {3, 4}));
}

TEST(Forward, ReluDefinition) {
  Graph<float> g;
  const Var x = g.Input(Tensor<float>({3}, {-1, 0, 2}));
  EXPECT_EQ(g.value(g.Relu(x)), Tensor<float>({3}, {0, 0, 2}));
}

TEST(Forward, IdentityKernelConvolution) {
  std::mt19937_64 rng(3);
  const Tensor<double> image = test::UniformTensor<double>({1, 3, 3, 1}, rng);
  Graph<double> g;
  const Var x = g.Input(image);
  const Var k = g.Input(Tensor<double>::Filled({1, 1, 1, 1}, 1.0));
  EXPECT_EQ(g.value(g.Conv2D(x, k, {1, 0})), image);
}

TEST(Forward, ConvolutionMatchesDirectSum) {
  std::mt19937_64 rng(5);
  const auto x = test::UniformTensor<double>({2, 5, 6, 3}, rng);
  const auto k = test::UniformTensor<double>({3, 3, 3, 4}, rng);
  const Conv2DOptions opt{2, 1};
  const Tensor<double> out = Conv2DForward(x, k, opt);
  ASSERT_EQ(out.shape(), (Shape{2, 3, 3, 4}));
  for (std::size_t n = 0; n < 2; ++n) {
    for (std::size_t oy = 0; oy < 3; ++oy) {
      for (std::size_t ox = 0; ox < 3; ++ox) {
        for (std::size_t co = 0; co < 4; ++co) {
          double want = 0.0;
          for (std::size_t ky = 0; ky < 3; ++ky) {
            for (std::size_t kx = 0; kx < 3; ++kx) {
              const long iy = static_cast<long>(oy * 2 + ky) - 1;
              const long ix = static_cast<long>(ox * 2 + kx) - 1;
              if (iy < 0 || ix < 0 || iy >= 5 || ix >= 6) continue;
              for (std::size_t ci = 0; ci < 3; ++ci) {
                want += x[((n * 5 + iy) * 6 + ix) * 3 + ci] * k[((ky * 3 + kx) * 3 + ci) * 4 + co];
              }
            }
          }
          EXPECT_NEAR(out[((n * 3 + oy) * 3 + ox) * 4 + co], want, 1e-12);
        }
      }
    }
  }
}

TEST(Forward, GlobalAvgPoolAndSoftmaxCrossEntropy) {
  Graph<double> g;
  const Var x = g.Input(Tensor<double>({1, 2, 1, 2}, {1, 10, 3, 20}));
  EXPECT_EQ(g.value(g.GlobalAvgPool(x)), Tensor<double>({1, 2}, {2, 15}));
  const Var logits = g.Input(Tensor<double>({2, 2}, {0, 0, std::log(3.0), 0}));
  const std::vector<int> labels = {1, 0};
  const double loss = g.value(g.SoftmaxCrossEntropy(logits, labels))[0];
  EXPECT_NEAR(loss, 0.5 * (std::log(2.0) + std::log(4.0 / 3.0)), 1e-15);
}

TEST(Forward, ShapeMismatchNamesBothShapes) {
  Graph<double> g;
  const Var a = g.Input(Tensor<double>({2, 3}));
  const Var b = g.Input(Tensor<double>({2, 3}));
  try {
    g.MatMul(a, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2,3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("and [2,3]"), std::string::npos) << msg;
  }
  const Var c = g.Input(Tensor<double>({3, 2}));
  EXPECT_THROW(g.Add(a, c), ShapeError);
  const Var img = g.Input(Tensor<double>({1, 4, 4, 2}));
  const Var k = g.Input(Tensor<double>({3, 3, 3, 1}));
  EXPECT_THROW(g.Conv2D(img, k, {}), ShapeError);
}

TEST(Backward, LinearFunctionGradientIsWeight) {
  Graph<double> g;
  const Tensor<double> w({4}, {0.5, -2, 3, 0.25});
  const Var x = g.Input(Tensor<double>({4}, {7, -1, 0.3, 2}), true);
  const Var y = g.Sum(g.Mul(g.Input(w), x));
  g.Backward(y);
  EXPECT_EQ(g.grad(x), w);
}

TEST(Backward, SumOfRelu) {
  Graph<double> g;
  const Var x = g.Input(Tensor<double>({2}, {-1, 2}), true);
  g.Backward(g.Sum(g.Relu(x)));
  EXPECT_EQ(g.grad(x), Tensor<double>({2}, {0, 1}));
}

TEST(Backward, RejectsNonScalarLoss) {
  Graph<double> g;
  const Var x = g.Input(Tensor<double>({2}, {1, 2}), true);
  EXPECT_THROW(g.Backward(g.Relu(x)), std::invalid_argument);
}

TEST(Backward, ReachesEveryRequestedLeafWithMatchingShape) {
  const test::GraphCase c = test::DrawSmoothCase(11);
  Graph<double> g;
  std::vector<Var> vars;
  g.Backward(test::BuildCase(g, c, c.leaves, &vars));
  for (std::size_t i = 0; i < vars.size(); ++i) {
    EXPECT_EQ(g.grad(vars[i]).shape(), c.leaves[i].shape());
  }
}

TEST(Backward, FiniteDifferences64Bit) {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const double err = test::MaxRelativeGradError<double>(test::DrawSmoothCase(seed));
    EXPECT_LT(err, 1e-4) << "seed " << seed;
    worst = std::max(worst, err);
  }
  RecordProperty("max_relative_error", std::to_string(worst));
}

TEST(Backward, FiniteDifferences32Bit) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const double err =
        test::MaxRelativeGradError<float>(test::DrawSmoothCase(seed), 1e-5, 1e-3);
    EXPECT_LT(err, 1e-2) << "seed " << seed;
  }
}

TEST(Backward, Linearity) {
  std::mt19937_64 rng(17);
  const auto x0 = test::UniformTensor<double>({3, 5}, rng);
  const auto w = test::UniformTensor<double>({5, 4}, rng);
  const auto z = test::UniformTensor<double>({3, 5}, rng);
  auto f = [&](Graph<double>& g, Var x) { return g.Sum(g.Relu(g.MatMul(x, g.Input(w)))); };
  auto h = [&](Graph<double>& g, Var x) { return g.Sum(g.Mul(g.Mul(x, x), g.Input(z))); };
  auto grad_of = [&](auto&& build) {
    Graph<double> g;
    const Var x = g.Input(x0, true);
    g.Backward(build(g, x));
    return g.grad(x);
  };
  const double a = 1.7, b = -0.6;
  const Tensor<double> gf = grad_of(f);
  const Tensor<double> gh = grad_of(h);
  const Tensor<double> combined = grad_of([&](Graph<double>& g, Var x) {
    return g.Add(g.Scale(f(g, x), a), g.Scale(h(g, x), b));
  });
  for (std::size_t i = 0; i < combined.size(); ++i) {
    EXPECT_NEAR(combined[i], a * gf[i] + b * gh[i], 1e-10);
  }
}

TEST(Backward, DeterministicAcrossRepeats) {
  const test::GraphCase c = test::DrawSmoothCase(23);
  auto run = [&] {
    Graph<float> g;
    std::vector<Tensor<float>> leaves;
    for (const auto& t : c.leaves) leaves.push_back(t.Cast<float>());
    std::vector<Var> vars;
    const Var loss = test::BuildCase(g, c, leaves, &vars);
    g.Backward(loss);
    std::vector<Tensor<float>> out = {g.value(loss)};
    for (Var v : vars) out.push_back(g.grad(v));
    return out;
  };
  EXPECT_EQ(run(), run());
}

TEST(Backward, GradientOfLeafWithoutRequestThrows) {
  Graph<double> g;
  const Var frozen = g.Input(Tensor<double>({2}, {1, 2}));
  const Var x = g.Input(Tensor<double>({2}, {3, 4}), true);
  g.Backward(g.Sum(g.Mul(frozen, x)));
  EXPECT_THROW(g.grad(frozen), std::logic_error);
}

}  // namespace
}  // namespace prunex
