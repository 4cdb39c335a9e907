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
#include <fstream>
#include <random>
#include <vector>

#include "prunex/attribution.h"
#include "test_util.h"

namespace prunex {
namespace {

constexpr std::size_t kSide = 4, kChannels = 3, kClasses = 3;

// f(x) = flatten(x) . W, logits [N, kClasses].
DifferentiableFn<double> LinearFn(const Tensor<double>& w) {
  return [w](Graph<double>& g, Var images) {
    const std::size_t n = g.value(images).dim(0);
    const Var flat = g.Reshape(images, {n, kSide * kSide * kChannels});
    return g.MatMul(flat, g.Input(w));
  };
}

Tensor<double> RandomWeights(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return test::UniformTensor<double>({kSide * kSide * kChannels, kClasses}, rng);
}

Tensor<double> RandomImage(std::uint64_t seed, const Shape& shape = {kSide, kSide, kChannels}) {
  std::mt19937_64 rng(seed);
  return test::UniformTensor<double>(shape, rng, 0.0, 1.0);
}

double WeightAt(const Tensor<double>& w, std::size_t pixel, std::size_t c, int cls) {
  return w[(pixel * kChannels + c) * kClasses + static_cast<std::size_t>(cls)];
}

TEST(VanillaGradients, LinearModelGivesAbsWeights) {
  const Tensor<double> w = RandomWeights(1);
  const AttributionMap map = VanillaGradients(LinearFn(w), RandomImage(2), 2);
  ASSERT_EQ(map.values.shape(), (Shape{kSide, kSide}));
  EXPECT_EQ(map.method, AttributionMethod::kVanillaGradients);
  EXPECT_EQ(map.target_class, 2);
  for (std::size_t p = 0; p < kSide * kSide; ++p) {
    double want = 0.0;
    for (std::size_t c = 0; c < kChannels; ++c) {
      want = std::max(want, std::abs(WeightAt(w, p, c, 2)));
      EXPECT_EQ(map.signed_values[p * kChannels + c], WeightAt(w, p, c, 2));
    }
    EXPECT_EQ(map.values[p], want);
  }
}

TEST(VanillaGradients, SumAbsReduction) {
  const Tensor<double> w = RandomWeights(3);
  AttributionOptions opt;
  opt.reduction = ChannelReduction::kSumAbs;
  const AttributionMap map = VanillaGradients(LinearFn(w), RandomImage(4), 0, opt);
  for (std::size_t p = 0; p < kSide * kSide; ++p) {
    double want = 0.0;
    for (std::size_t c = 0; c < kChannels; ++c) want += std::abs(WeightAt(w, p, c, 0));
    EXPECT_NEAR(map.values[p], want, 1e-15);
  }
}

TEST(VanillaGradients, DeadRegionGetsZero) {
  Tensor<double> w = RandomWeights(5);
  // The model ignores the top-left 2x2 block.
  for (std::size_t y = 0; y < 2; ++y) {
    for (std::size_t x = 0; x < 2; ++x) {
      for (std::size_t c = 0; c < kChannels; ++c) {
        for (std::size_t k = 0; k < kClasses; ++k) w[((y * kSide + x) * kChannels + c) * kClasses + k] = 0;
      }
    }
  }
  const AttributionMap map = VanillaGradients(LinearFn(w), RandomImage(6), 1);
  for (std::size_t y = 0; y < kSide; ++y) {
    for (std::size_t x = 0; x < kSide; ++x) {
      if (y < 2 && x < 2) {
        EXPECT_EQ(map.values[y * kSide + x], 0.0);
      } else {
        EXPECT_GT(map.values[y * kSide + x], 0.0);
      }
    }
  }
}

TEST(VanillaGradients, RejectsInvalidClass) {
  const auto fn = LinearFn(RandomWeights(1));
  EXPECT_THROW(VanillaGradients(fn, RandomImage(1), 3), std::invalid_argument);
  EXPECT_THROW(VanillaGradients(fn, RandomImage(1), -1), std::invalid_argument);
}

// Central differences of the class score around `image`, step h.
Tensor<double> NumericGradient(const DifferentiableFn<double>& fn, const Tensor<double>& image,
                               int cls, AttributionTarget target, double h = 1e-5) {
  Shape batch = image.shape();
  batch.insert(batch.begin(), 1);
  const std::vector<int> classes = {cls};
  Tensor<double> probe = image.Reshaped(batch);
  Tensor<double> out(image.shape());
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double x = probe[i];
    probe[i] = x + h;
    const double up = ClassScores(fn, probe, classes, target)[0];
    probe[i] = x - h;
    const double down = ClassScores(fn, probe, classes, target)[0];
    probe[i] = x;
    out[i] = (up - down) / (2 * h);
  }
  return out;
}

double MaxRelativeDiff(const Tensor<double>& a, const Tensor<double>& b) {
  double diff = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff = std::max(diff, std::abs(a[i] - b[i]));
    scale = std::max({scale, std::abs(a[i]), std::abs(b[i])});
  }
  return diff / scale;
}

class RandomNet : public ::testing::TestWithParam<int> {
 protected:
  RandomNet() : model_(test::TinyConfig(100 + static_cast<std::uint64_t>(GetParam()))) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(GetParam()));
    test::RandomizeBiases(model_.params(), rng, 0.1);
  }
  Model<double> model_;
};

TEST_P(RandomNet, VanillaGradientsMatchFiniteDifferences) {
  const auto fn = LogitsFunction(model_);
  const Tensor<double> x = RandomImage(static_cast<std::uint64_t>(GetParam()), {8, 8, 3});
  const int cls = GetParam() % 10;
  const AttributionMap map = VanillaGradients(fn, x, cls);
  EXPECT_LT(MaxRelativeDiff(map.signed_values, NumericGradient(fn, x, cls, AttributionTarget::kLogit)),
            1e-3);
  AttributionOptions prob;
  prob.target = AttributionTarget::kProbability;
  const AttributionMap pmap = VanillaGradients(fn, x, cls, prob);
  EXPECT_LT(MaxRelativeDiff(pmap.signed_values,
                            NumericGradient(fn, x, cls, AttributionTarget::kProbability)),
            1e-3);
}

INSTANTIATE_TEST_SUITE_P(Seeds, RandomNet, ::testing::Range(0, 5));

TEST(IntegratedGradients, LinearModelZeroBaselineIsWeightTimesInput) {
  const Tensor<double> w = RandomWeights(7);
  const Tensor<double> x = RandomImage(8);
  const Baseline zero = Baseline::Zero(x.shape());
  for (std::size_t m : {1u, 7u, 32u}) {
    AttributionOptions opt;
    opt.ig_steps = m;
    const AttributionMap map = IntegratedGradients(LinearFn(w), x, zero, 1, opt);
    const AttributionMap vg = VanillaGradients(LinearFn(w), x, 1, opt);
    for (std::size_t p = 0; p < kSide * kSide; ++p) {
      for (std::size_t c = 0; c < kChannels; ++c) {
        const std::size_t i = p * kChannels + c;
        EXPECT_NEAR(map.signed_values[i], WeightAt(w, p, c, 1) * x[i], 1e-15) << "m=" << m;
        EXPECT_NEAR(map.signed_values[i], vg.signed_values[i] * x[i], 1e-15);
      }
    }
  }
}

TEST(IntegratedGradients, InputEqualToBaselineGivesZeroMap) {
  const Model<double> model(test::TinyConfig(3));
  const Baseline b = Baseline::Constant({8, 8, 3}, 0.5);
  const AttributionMap map =
      IntegratedGradients(LogitsFunction(model), b.image, b, 4, AttributionOptions{});
  for (double v : map.values.data()) EXPECT_EQ(v, 0.0);
  for (double v : map.signed_values.data()) EXPECT_EQ(v, 0.0);
}

TEST(IntegratedGradients, RejectsZeroSteps) {
  AttributionOptions opt;
  opt.ig_steps = 0;
  const Tensor<double> x = RandomImage(1);
  EXPECT_THROW(IntegratedGradients(LinearFn(RandomWeights(1)), x, Baseline::Zero(x.shape()), 0, opt),
               std::invalid_argument);
  EXPECT_THROW(IntegratedGradients(LinearFn(RandomWeights(1)), x, Baseline::Zero({2, 2, 3}), 0,
                                   AttributionOptions{}),
               ShapeError);
}

TEST(IntegratedGradients, CompletenessOnRandomNets) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    ModelConfig c;
    c.seed = 1000 + seed;
    Model<double> model(c);
    std::mt19937_64 rng(seed);
    test::RandomizeBiases(model.params(), rng, 0.1);
    const auto fn = LogitsFunction(model);
    const Tensor<double> x = RandomImage(seed, {32, 32, 3});
    const int cls = static_cast<int>(seed % 10);
    AttributionOptions opt;
    opt.ig_steps = 128;
    const Baseline zero = Baseline::Zero(x.shape());
    const AttributionMap map = IntegratedGradients(fn, x, zero, cls, opt);
    double total = 0.0;
    for (double v : map.signed_values.data()) total += v;
    const std::vector<int> classes = {cls};
    const double fx = ClassScores(fn, x.Reshaped({1, 32, 32, 3}), classes, AttributionTarget::kLogit)[0];
    const double f0 =
        ClassScores(fn, zero.image.Reshaped({1, 32, 32, 3}), classes, AttributionTarget::kLogit)[0];
    EXPECT_LT(std::abs(total - (fx - f0)) / std::abs(fx - f0), 0.01) << "seed " << seed;
  }
}

TEST(Attribution, DeterministicAndBatchMatchesSingle) {
  Model<float> model(test::TinyConfig(9));
  std::mt19937_64 rng(9);
  test::RandomizeBiases(model.params(), rng, 0.1);
  const auto fn = LogitsFunction(model);
  const Tensor<float> batch = test::UniformTensor<float>({5, 8, 8, 3}, rng, 0.0, 1.0);
  const std::vector<int> classes = {0, 3, 3, 9, 1};
  const Baseline zero = Baseline::Zero({8, 8, 3});
  AttributionOptions opt;
  opt.ig_steps = 6;
  for (auto method : {AttributionMethod::kVanillaGradients, AttributionMethod::kIntegratedGradients}) {
    const auto maps = AttributeBatch(fn, batch, classes, method, zero, opt);
    const auto again = AttributeBatch(fn, batch, classes, method, zero, opt);
    ASSERT_EQ(maps.size(), 5u);
    for (std::size_t i = 0; i < maps.size(); ++i) {
      EXPECT_EQ(maps[i].values, again[i].values);
      EXPECT_EQ(maps[i].target_class, classes[i]);
      const Tensor<float> one(Shape{8, 8, 3},
                              std::vector<float>(batch.vec().begin() + i * 192,
                                                 batch.vec().begin() + (i + 1) * 192));
      const AttributionMap single =
          method == AttributionMethod::kVanillaGradients
              ? VanillaGradients(fn, one, classes[i], opt)
              : IntegratedGradients(fn, one, zero, classes[i], opt);
      for (std::size_t k = 0; k < single.values.size(); ++k) {
        EXPECT_NEAR(maps[i].values[k], single.values[k], 1e-6);
      }
    }
  }
}

TEST(Baseline, KindsAndShapes) {
  const LabeledDataset d = GenerateShapes(1, 2, 16);
  const Baseline mean = Baseline::DatasetMean(d);
  EXPECT_EQ(mean.kind, BaselineKind::kDatasetMean);
  ASSERT_EQ(mean.image.shape(), (Shape{16, 16, 3}));
  double want = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) want += d.images[i * 768 + 5];
  EXPECT_NEAR(mean.image[5], want / static_cast<double>(d.size()), 1e-12);
  const Baseline c = Baseline::Constant({2, 2, 3}, 0.25);
  for (double v : c.image.data()) EXPECT_EQ(v, 0.25);
}

TEST(Attribution, NamesRoundTrip) {
  for (auto m : {AttributionMethod::kVanillaGradients, AttributionMethod::kIntegratedGradients}) {
    EXPECT_EQ(ParseMethod(MethodName(m)), m);
  }
  EXPECT_EQ(ParseTarget(TargetName(AttributionTarget::kProbability)), AttributionTarget::kProbability);
  EXPECT_EQ(ParseReduction(ReductionName(ChannelReduction::kSumAbs)), ChannelReduction::kSumAbs);
  EXPECT_EQ(ParseBaselineKind(BaselineKindName(BaselineKind::kDatasetMean)), BaselineKind::kDatasetMean);
  EXPECT_THROW(ParseMethod("gradcam"), std::invalid_argument);
}

TEST(Attribution, SaveLoadRoundTripAndPgm) {
  test::ScratchDir dir("attrib");
  const auto fn = LinearFn(RandomWeights(2));
  std::vector<AttributionMap> maps = {VanillaGradients(fn, RandomImage(1), 0),
                                      VanillaGradients(fn, RandomImage(2), 2)};
  SaveAttributions(dir / "a.pxb", maps, {{"run", "t"}});
  nlohmann::json meta;
  const auto back = LoadAttributions(dir / "a.pxb", &meta);
  ASSERT_EQ(back.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(back[i].values, maps[i].values);
    EXPECT_EQ(back[i].signed_values, maps[i].signed_values);
    EXPECT_EQ(back[i].target_class, maps[i].target_class);
    EXPECT_EQ(back[i].method, maps[i].method);
  }
  EXPECT_EQ(meta.at("run"), "t");

  WritePgm(maps[0].values, dir / "m.pgm");
  std::ifstream in(dir / "m.pgm", std::ios::binary);
  std::string magic;
  std::size_t w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  in.get();
  EXPECT_EQ(magic, "P5");
  EXPECT_EQ(w, kSide);
  EXPECT_EQ(h, kSide);
  std::vector<unsigned char> px(kSide * kSide);
  in.read(reinterpret_cast<char*>(px.data()), static_cast<std::streamsize>(px.size()));
  EXPECT_EQ(*std::max_element(px.begin(), px.end()), 255);
}

}  // namespace
}  // namespace prunex
