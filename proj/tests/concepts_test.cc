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

#include <fstream>
#include <random>
#include <set>
#include <vector>

#include "prunex/concepts.h"
#include "test_util.h"

namespace prunex {
namespace {

Eigen::MatrixXd RandomPositive(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols) {
  std::uniform_real_distribution<double> u(0.1, 1.0);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

TEST(ResizeBilinear, SameSizeIsIdentityAndConstantStaysConstant) {
  std::mt19937_64 rng(1);
  const auto img = test::UniformTensor<float>({6, 5, 3}, rng, 0.0, 1.0);
  EXPECT_EQ(ResizeBilinear(img, 6, 5), img);
  const auto flat = Tensor<float>::Filled({4, 4, 3}, 0.25f);
  const Tensor<float> resized = ResizeBilinear(flat, 9, 7);
  for (float v : resized.data()) EXPECT_FLOAT_EQ(v, 0.25f);
}

TEST(CropAndResize, TilesWithStrideEqualToPatch) {
  const LabeledDataset d = GenerateShapes(1, 1);
  const std::vector<std::size_t> idx = {0};
  const PatchSet p = CropAndResize(d, idx, d.labels[0], 16, 16, 32, 32);
  ASSERT_EQ(p.size(), 4u);
  const std::set<std::pair<std::size_t, std::size_t>> corners = {{0, 0}, {0, 16}, {16, 0}, {16, 16}};
  std::set<std::pair<std::size_t, std::size_t>> got;
  for (const auto& c : p.coords) {
    got.insert({c.y, c.x});
    EXPECT_EQ(c.size, 16u);
  }
  EXPECT_EQ(got, corners);
  EXPECT_EQ(p.images.shape(), (Shape{4, 32, 32, 3}));
}

TEST(CropAndResize, FullSizePatchIsTheImage) {
  const LabeledDataset d = GenerateShapes(2, 1);
  const std::vector<std::size_t> idx = {3};
  const PatchSet p = CropAndResize(d, idx, d.labels[3], 32, 8, 32, 32);
  ASSERT_EQ(p.size(), 1u);
  EXPECT_EQ(p.images.Reshaped({32, 32, 3}), d.Image(3));
  EXPECT_THROW(CropAndResize(d, idx, 0, 33, 8, 32, 32), std::invalid_argument);
}

TEST(CropAndResize, OverlappingStrideCount) {
  const LabeledDataset d = GenerateShapes(2, 1);
  const std::vector<std::size_t> idx = {0, 1};
  // (32 - 16) / 8 + 1 = 3 positions per axis.
  EXPECT_EQ(CropAndResize(d, idx, 0, 16, 8, 32, 32).size(), 18u);
}

TEST(ExtractPatches, OnlyImagesPredictedAsTheClass) {
  Model<float> model{ModelConfig()};
  std::mt19937_64 rng(3);
  test::RandomizeBiases(model.params(), rng, 0.5);
  const LabeledDataset d = GenerateShapes(6, 4);
  const std::vector<int> preds = model.Predict(d.images);
  std::map<int, std::size_t> hist;
  for (int p : preds) ++hist[p];
  const int y = hist.begin()->first;
  const PatchSet p = ExtractPatches(model, d, y, 16, 16);
  EXPECT_EQ(p.source_images, hist.at(y));
  EXPECT_EQ(p.size(), 4 * hist.at(y));
  for (const auto& c : p.coords) EXPECT_EQ(preds[c.image], y);

  int missing = -1;
  for (int c = 0; c < 10; ++c) {
    if (hist.count(c) == 0) missing = c;
  }
  ASSERT_GE(missing, 0) << "a random model should not cover all classes";
  EXPECT_THROW(ExtractPatches(model, d, missing, 16, 16), std::runtime_error);
}

TEST(TapActivations, NonNegativePooledFeatures) {
  Model<double> model{ModelConfig()};
  std::mt19937_64 rng(4);
  test::RandomizeBiases(model.params(), rng, 0.2);
  const LabeledDataset d = GenerateShapes(2, 1);
  const Eigen::MatrixXd a = TapActivations(model, d.images);
  EXPECT_EQ(a.rows(), 10);
  EXPECT_EQ(a.cols(), 16);
  EXPECT_GE(a.minCoeff(), 0.0);
  const Tensor<double> pooled = model.PooledFeatures(d.images.Cast<double>());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      EXPECT_NEAR(a(i, j), pooled[static_cast<std::size_t>(i * 16 + j)], 1e-12);
    }
  }
}

TEST(ClassHead, MatchesModelLogits) {
  Model<double> model{ModelConfig()};
  std::mt19937_64 rng(5);
  test::RandomizeBiases(model.params(), rng, 0.2);
  const LabeledDataset d = GenerateShapes(3, 1);
  const Eigen::MatrixXd a = TapActivations(model, d.images);
  const Tensor<double> logits = model.Logits(d.images.Cast<double>());
  const Eigen::VectorXd s = ClassHead(model, 7)(a);
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    EXPECT_NEAR(s(i), logits[static_cast<std::size_t>(i * 10 + 7)], 1e-10);
  }
  EXPECT_THROW(ClassHead(model, 10), std::invalid_argument);
}

void ExpectNmfInvariants(const ConceptBank& bank) {
  EXPECT_GE(bank.concepts.minCoeff(), 0.0);
  EXPECT_GE(bank.coefficients.minCoeff(), 0.0);
  for (std::size_t i = 1; i < bank.error_history.size(); ++i) {
    ASSERT_LE(bank.error_history[i], bank.error_history[i - 1]) << "iteration " << i;
  }
}

double RelativeError(const Eigen::MatrixXd& a, const ConceptBank& bank) {
  return (a - bank.coefficients * bank.concepts).norm() / a.norm();
}

TEST(Nmf, RecoversRankOne) {
  std::mt19937_64 rng(6);
  const Eigen::MatrixXd a = RandomPositive(rng, 40, 1) * RandomPositive(rng, 1, 16);
  const ConceptBank bank = Nmf(a, {1, 2000, 0.0, 1});
  ExpectNmfInvariants(bank);
  EXPECT_LT(RelativeError(a, bank), 1e-6);
  EXPECT_NEAR(bank.error_history.back(), RelativeError(a, bank), 1e-12);
}

TEST(Nmf, RecoversExactRankThree) {
  std::mt19937_64 rng(7);
  const Eigen::MatrixXd a = RandomPositive(rng, 60, 3) * RandomPositive(rng, 3, 16);
  const ConceptBank bank = Nmf(a, {3, 20000, 0.0, 2});
  ExpectNmfInvariants(bank);
  EXPECT_LT(RelativeError(a, bank), 1e-3);
  EXPECT_EQ(bank.concepts.rows(), 3);
  EXPECT_EQ(bank.coefficients.cols(), 3);
}

TEST(Nmf, LargeToleranceStopsAfterOneIteration) {
  std::mt19937_64 rng(8);
  const Eigen::MatrixXd a = RandomPositive(rng, 20, 10);
  const ConceptBank bank = Nmf(a, {4, 500, 1e9, 3});
  EXPECT_EQ(bank.iterations(), 1u);
  EXPECT_LE(bank.error_history[1], bank.error_history[0]);
}

TEST(Nmf, MonotoneOnRandomMatrices) {
  std::mt19937_64 rng(9);
  for (int i = 0; i < 10; ++i) {
    const Eigen::MatrixXd a = RandomPositive(rng, 10 + i, 8).array() - 0.1;  // some exact zeros
    ExpectNmfInvariants(Nmf(a.cwiseMax(0.0), {static_cast<std::size_t>(1 + i % 5), 300, 0.0,
                                             static_cast<std::uint64_t>(i)}));
  }
}

TEST(Nmf, DeterministicForSeed) {
  std::mt19937_64 rng(10);
  const Eigen::MatrixXd a = RandomPositive(rng, 12, 6);
  const ConceptBank x = Nmf(a, {3, 50, 1e-4, 5}), y = Nmf(a, {3, 50, 1e-4, 5});
  EXPECT_EQ(x.concepts, y.concepts);
  EXPECT_EQ(x.error_history, y.error_history);
}

TEST(Nmf, RejectsInvalidInput) {
  Eigen::MatrixXd a = Eigen::MatrixXd::Ones(4, 3);
  EXPECT_THROW(Nmf(a, {0, 10, 1e-4, 0}), std::invalid_argument);
  EXPECT_THROW(Nmf(a, {4, 10, 1e-4, 0}), std::invalid_argument);
  a(1, 2) = -1e-9;
  EXPECT_THROW(Nmf(a, {2, 10, 1e-4, 0}), std::invalid_argument);
}

// One patch with u = (1, 1) and W = I, so the head sees the masks directly.
ConceptImportance SobolOnMasks(const HeadFunction& head, std::size_t r, std::size_t n,
                               SobolOrder order = SobolOrder::kTotal, std::uint64_t seed = 0) {
  return SobolImportance(head, Eigen::MatrixXd::Ones(1, static_cast<Eigen::Index>(r)),
                         Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(r)),
                         {n, seed, order});
}

TEST(Sobol, AdditiveHeadMatchesAnalyticTotals) {
  const HeadFunction head = [](const Eigen::MatrixXd& x) -> Eigen::VectorXd {
    return x.col(0) + 2.0 * x.col(1);
  };
  const ConceptImportance imp = SobolOnMasks(head, 2, 4096);
  ASSERT_EQ(imp.indices.size(), 2u);
  EXPECT_EQ(imp.n_samples, 4096u);
  EXPECT_NEAR(imp.indices[0], 0.2, 0.05);
  EXPECT_NEAR(imp.indices[1], 0.8, 0.05);
  EXPECT_LE(std::abs(imp.indices[0] - 0.2), 3 * imp.std_errors[0]);
  EXPECT_LE(std::abs(imp.indices[1] - 0.8), 3 * imp.std_errors[1]);
  const ConceptImportance first = SobolOnMasks(head, 2, 4096, SobolOrder::kFirst);
  EXPECT_NEAR(first.indices[0], 0.2, 0.05);
  EXPECT_NEAR(first.indices[1], 0.8, 0.05);
}

TEST(Sobol, ConstantHeadGivesZero) {
  const HeadFunction head = [](const Eigen::MatrixXd& x) -> Eigen::VectorXd {
    return Eigen::VectorXd::Constant(x.rows(), 3.0);
  };
  for (double v : SobolOnMasks(head, 3, 1024).indices) EXPECT_LT(std::abs(v), 0.02);
}

TEST(Sobol, SingleConceptCarriesAllVariance) {
  const HeadFunction head = [](const Eigen::MatrixXd& x) -> Eigen::VectorXd {
    return x.col(0).array().square();
  };
  const ConceptImportance imp = SobolOnMasks(head, 1, 2048);
  EXPECT_NEAR(imp.indices[0], 1.0, 0.05);
}

TEST(Sobol, FirstOrderSumBoundedForInteractingHead) {
  const HeadFunction head = [](const Eigen::MatrixXd& x) -> Eigen::VectorXd {
    return x.col(0).array() * x.col(1).array() + x.col(2).array().sin();
  };
  const ConceptImportance imp = SobolOnMasks(head, 3, 4096, SobolOrder::kFirst, 3);
  double sum = 0.0;
  for (double v : imp.indices) sum += v;
  EXPECT_LE(sum, 1.1);
  const ConceptImportance total = SobolOnMasks(head, 3, 4096, SobolOrder::kTotal, 3);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_GE(total.indices[i], imp.indices[i] - 0.05);
}

TEST(Sobol, SeededAndValidated) {
  const HeadFunction head = [](const Eigen::MatrixXd& x) -> Eigen::VectorXd { return x.rowwise().sum(); };
  EXPECT_EQ(SobolOnMasks(head, 3, 64, SobolOrder::kTotal, 9).indices,
            SobolOnMasks(head, 3, 64, SobolOrder::kTotal, 9).indices);
  EXPECT_NE(SobolOnMasks(head, 3, 64, SobolOrder::kTotal, 9).indices,
            SobolOnMasks(head, 3, 64, SobolOrder::kTotal, 10).indices);
  EXPECT_THROW(SobolOnMasks(head, 3, 1), std::invalid_argument);
  EXPECT_EQ(ParseSobolOrder(SobolOrderName(SobolOrder::kFirst)), SobolOrder::kFirst);
}

TEST(RankConcepts, SortsDescendingWithIdTies) {
  const std::vector<double> a = {0.3, 0.5, 0.2};
  EXPECT_EQ(RankConcepts(a), (std::vector<std::size_t>{1, 0, 2}));
  const std::vector<double> ties = {0.1, 0.4, 0.4, 0.1};
  EXPECT_EQ(RankConcepts(ties), (std::vector<std::size_t>{1, 2, 0, 3}));
}

TEST(RankAndExport, ManifestRoundTripAndGrids) {
  test::ScratchDir dir("concepts");
  const LabeledDataset d = GenerateShapes(3, 1);
  const std::vector<std::size_t> idx = {0, 1, 2};
  const PatchSet patches = CropAndResize(d, idx, 0, 16, 8, 32, 32);
  std::mt19937_64 rng(11);
  ConceptBank bank;
  bank.rank = 3;
  bank.concepts = RandomPositive(rng, 3, 16);
  bank.coefficients = RandomPositive(rng, static_cast<Eigen::Index>(patches.size()), 3);
  bank.error_history = {1.0, 0.5};
  const ConceptImportance imp{{0.3, 0.5, 0.2}, {0.01, 0.02, 0.03}, 256, SobolOrder::kTotal};
  const ConceptReport report = RankAndExport(bank, imp, patches, 4, dir.path(), {{"level", 0.1}});

  ASSERT_EQ(report.concepts.size(), 3u);
  EXPECT_EQ(report.concepts[0].concept_id, 1u);
  EXPECT_EQ(report.concepts[1].concept_id, 0u);
  EXPECT_EQ(report.concepts[2].concept_id, 2u);
  // Top patches are those with the largest coefficient for the concept.
  const auto& top = report.concepts[0].top_patches;
  ASSERT_EQ(top.size(), 4u);
  double min_top = INFINITY;
  std::set<std::size_t> chosen;
  for (const auto& c : top) {
    const auto it = std::find(patches.coords.begin(), patches.coords.end(), c);
    ASSERT_NE(it, patches.coords.end());
    const auto row = static_cast<Eigen::Index>(it - patches.coords.begin());
    chosen.insert(static_cast<std::size_t>(row));
    min_top = std::min(min_top, bank.coefficients(row, 1));
  }
  for (Eigen::Index row = 0; row < bank.coefficients.rows(); ++row) {
    if (chosen.count(static_cast<std::size_t>(row)) == 0) {
      EXPECT_LE(bank.coefficients(row, 1), min_top);
    }
  }

  std::ifstream in(dir / "concepts.json");
  const ConceptReport parsed = ConceptReport::FromJson(nlohmann::json::parse(in));
  ASSERT_EQ(parsed.concepts.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(parsed.concepts[i].concept_id, report.concepts[i].concept_id);
    EXPECT_EQ(parsed.concepts[i].importance, report.concepts[i].importance);
    EXPECT_EQ(parsed.concepts[i].std_error, report.concepts[i].std_error);
    EXPECT_EQ(parsed.concepts[i].top_patches, report.concepts[i].top_patches);
  }
  EXPECT_EQ(parsed.n_samples, 256u);
  for (std::size_t id = 0; id < 3; ++id) {
    EXPECT_TRUE(std::filesystem::exists(dir / ("concept_" + std::to_string(id) + ".ppm")));
  }
}

}  // namespace
}  // namespace prunex
