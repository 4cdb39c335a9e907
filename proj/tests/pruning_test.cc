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

#include <random>
#include <vector>

#include "pruning_check.h"
#include "prunex/pruning.h"
#include "prunex/training.h"
#include "test_util.h"

namespace prunex {
namespace {

ParamStore<double> OneTensor(std::vector<double> w) {
  ParamStore<double> ps;
  ps.Add("w", ParamKind::kWeight, Tensor<double>({w.size()}, w));
  ps.Add("b", ParamKind::kBias, Tensor<double>({2}, {0.001, -0.002}));
  return ps;
}

std::vector<std::uint8_t> Bits(const PruningMask& m, const std::string& name) {
  const auto d = m.masks.at(name).data();
  return {d.begin(), d.end()};
}

TEST(GlobalMagnitudePrune, ZeroFractionKeepsEverything) {
  const auto ps = OneTensor({0.1, -0.5, 0.3});
  const PruningMask m = GlobalMagnitudePrune(ps, 0.0);
  EXPECT_EQ(Bits(m, "w"), (std::vector<std::uint8_t>{1, 1, 1}));
  EXPECT_EQ(m.Sparsity(), 0.0);
}

TEST(GlobalMagnitudePrune, PrunesTwoSmallestMagnitudes) {
  const auto ps = OneTensor({0.1, -0.5, 0.3, -0.05, 0.2});
  const PruningMask m = GlobalMagnitudePrune(ps, 0.4);
  EXPECT_EQ(Bits(m, "w"), (std::vector<std::uint8_t>{0, 1, 1, 0, 1}));
  EXPECT_EQ(m.masks.count("b"), 0u);
}

TEST(GlobalMagnitudePrune, ThresholdIsGlobalAcrossTensors) {
  ParamStore<double> ps;
  ps.Add("big", ParamKind::kWeight, Tensor<double>({1}, {1.0}));
  ps.Add("small", ParamKind::kWeight, Tensor<double>({1}, {0.001}));
  const PruningMask m = GlobalMagnitudePrune(ps, 0.5);
  EXPECT_EQ(Bits(m, "big"), std::vector<std::uint8_t>{1});
  EXPECT_EQ(Bits(m, "small"), std::vector<std::uint8_t>{0});
}

TEST(GlobalMagnitudePrune, TiesBrokenByNameThenIndex) {
  ParamStore<double> ps;
  ps.Add("z", ParamKind::kWeight, Tensor<double>({2}, {0.5, 0.5}));
  ps.Add("a", ParamKind::kWeight, Tensor<double>({2}, {0.5, 0.5}));
  const PruningMask m = GlobalMagnitudePrune(ps, 0.75);
  EXPECT_EQ(Bits(m, "a"), (std::vector<std::uint8_t>{0, 0}));
  EXPECT_EQ(Bits(m, "z"), (std::vector<std::uint8_t>{0, 1}));
}

TEST(GlobalMagnitudePrune, RejectsBadFractionsAndDenserTarget) {
  const auto ps = OneTensor({1, 2, 3, 4});
  EXPECT_THROW(GlobalMagnitudePrune(ps, 1.0), std::invalid_argument);
  EXPECT_THROW(GlobalMagnitudePrune(ps, -0.1), std::invalid_argument);
  const PruningMask half = GlobalMagnitudePrune(ps, 0.5);
  EXPECT_THROW(GlobalMagnitudePrune(ps, 0.25, &half), std::invalid_argument);
}

TEST(GlobalMagnitudePrune, PriorZerosAreNeverRevived) {
  auto ps = OneTensor({0.9, 0.8, 0.7, 0.6});
  PruningMask prior = AllOnesMask(ps);
  prior.masks.at("w")[0] = 0;  // the largest weight, pruned earlier
  const PruningMask m = GlobalMagnitudePrune(ps, 0.5, &prior);
  EXPECT_EQ(Bits(m, "w"), (std::vector<std::uint8_t>{0, 1, 1, 0}));
}

TEST(GlobalMagnitudePrune, RandomizedAgainstFullSortOracle) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const test::PruningReport r = test::CheckRandomPruning(seed, seed % 2 ? 10000 : 200);
    EXPECT_TRUE(r.violations.empty()) << r.violations.front();
    EXPECT_EQ(r.levels, 4u);
  }
}

TEST(RewindToInit, AllOnesRestoresInit) {
  Model<double> model(test::TinyConfig(3));
  auto& ps = model.params();
  for (auto& p : ps.entries()) {
    for (double& v : p.value.data()) v += 0.25;
  }
  RewindToInit(ps, AllOnesMask(ps));
  for (const auto& p : ps.entries()) EXPECT_EQ(p.value, p.init) << p.name;
}

TEST(RewindToInit, SingleSurvivor) {
  ParamStore<double> ps;
  ps.Add("w", ParamKind::kWeight, Tensor<double>({3}, {1, 2, 3}));
  ps.at("w").value = Tensor<double>({3}, {7, 8, 9});
  PruningMask m = AllOnesMask(ps);
  m.masks.at("w") = Tensor<std::uint8_t>({3}, {0, 1, 0});
  RewindToInit(ps, m);
  EXPECT_EQ(ps.at("w").value, Tensor<double>({3}, {0, 2, 0}));
}

TEST(RewindToInit, RandomMaskIsInitTimesMask) {
  Model<double> model(test::TinyConfig(8));
  auto& ps = model.params();
  std::mt19937_64 rng(4);
  test::RandomizeBiases(ps, rng, 1.0);  // live biases drift from init
  for (auto& p : ps.entries()) {
    if (p.kind == ParamKind::kWeight) p.value = test::UniformTensor<double>(p.value.shape(), rng);
  }
  PruningMask m = AllOnesMask(ps);
  for (auto& [name, bits] : m.masks) {
    for (auto& b : bits.data()) b = static_cast<std::uint8_t>(rng() & 1);
  }
  RewindToInit(ps, m);
  for (const auto& p : ps.entries()) {
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double want =
          p.kind == ParamKind::kBias ? p.init[i] : p.init[i] * m.masks.at(p.name)[i];
      ASSERT_EQ(p.value[i], want) << p.name << "[" << i << "]";
    }
  }
}

TEST(RewindToInit, RejectsShapeMismatch) {
  auto ps = OneTensor({1, 2});
  PruningMask m = AllOnesMask(ps);
  m.masks.at("w") = Tensor<std::uint8_t>({3});
  EXPECT_THROW(RewindToInit(ps, m), ShapeError);
}

TEST(SparsitySchedule, Validation) {
  SparsitySchedule s;
  s.Validate();
  s.targets = {0.1, 0.1};
  EXPECT_THROW(s.Validate(), std::invalid_argument);
  s.targets = {0.5, 1.0};
  EXPECT_THROW(s.Validate(), std::invalid_argument);
}

class LotteryTicketToy : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    train_ = new LabeledDataset(test::BrightnessToy(11, 200));
    test_ = new LabeledDataset(test::BrightnessToy(12, 100));
    dense_ = new Model<float>(test::ToyConfig(8, 5));
    TrainOptions opt;
    opt.epochs = 8;
    Train(*dense_, *train_, opt);
  }
  static void TearDownTestSuite() {
    delete train_;
    delete test_;
    delete dense_;
  }
  static TrainOptions Finetune() {
    TrainOptions opt;
    opt.seed = 3;
    return opt;
  }
  static LabeledDataset* train_;
  static LabeledDataset* test_;
  static Model<float>* dense_;
};
LabeledDataset* LotteryTicketToy::train_ = nullptr;
LabeledDataset* LotteryTicketToy::test_ = nullptr;
Model<float>* LotteryTicketToy::dense_ = nullptr;

TEST_F(LotteryTicketToy, SingleLevelSparsityAccounting) {
  SparsitySchedule s;
  s.targets = {0.10};
  s.finetune_epochs = 2;
  std::size_t callbacks = 0;
  const auto levels = RunLotteryTicketCycle<float>(*dense_, *train_, *test_, s, Finetune(),
                                                   [&](const PruningLevel<float>&) { ++callbacks; });
  ASSERT_EQ(levels.size(), 2u);
  EXPECT_EQ(callbacks, 2u);
  EXPECT_EQ(levels[0].measured_sparsity, 0.0);
  const double w = static_cast<double>(dense_->params().WeightCount());
  EXPECT_NEAR(levels[1].measured_sparsity, 0.10, 1.0 / w);
  EXPECT_EQ(levels[1].measured_sparsity, levels[1].mask.Sparsity());
  for (const auto& [name, bits] : levels[1].mask.masks) {
    const auto& v = levels[1].model.params().at(name).value;
    for (std::size_t i = 0; i < bits.size(); ++i) {
      if (bits[i] == 0) ASSERT_EQ(v[i], 0.0f);
    }
  }
}

TEST_F(LotteryTicketToy, MasksGrowMonotonically) {
  SparsitySchedule s;
  s.targets = {0.10, 0.20};
  s.finetune_epochs = 1;
  const auto levels = RunLotteryTicketCycle<float>(*dense_, *train_, *test_, s, Finetune());
  ASSERT_EQ(levels.size(), 3u);
  for (const auto& [name, second] : levels[2].mask.masks) {
    const auto& first = levels[1].mask.masks.at(name);
    for (std::size_t i = 0; i < first.size(); ++i) {
      if (first[i] == 0) ASSERT_EQ(second[i], 0) << name << "[" << i << "]";
    }
  }
}

TEST_F(LotteryTicketToy, HalfSparsityStaysWithinFivePoints) {
  SparsitySchedule s;
  s.targets = {0.2, 0.5};
  s.finetune_epochs = 8;
  const auto levels = RunLotteryTicketCycle<float>(*dense_, *train_, *test_, s, Finetune());
  EXPECT_GT(levels.front().accuracy, 0.9);
  EXPECT_GE(levels.back().accuracy, levels.front().accuracy - 0.05)
      << "dense " << levels.front().accuracy << " vs 50% " << levels.back().accuracy;
}

}  // namespace
}  // namespace prunex
