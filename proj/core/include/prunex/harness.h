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

#ifndef PRUNEX_HARNESS_H_
#define PRUNEX_HARNESS_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "prunex/attribution.h"
#include "prunex/concepts.h"
#include "prunex/model.h"
#include "prunex/pruning.h"
#include "prunex/training.h"

namespace prunex {

struct DataSettings {
  std::string source = "synthetic";  // synthetic | cifar
  std::string cifar_dir;
  std::size_t train_per_class = 200;  // for cifar: cap per split / 10, 0 = all
  std::size_t test_per_class = 50;
  std::size_t image_size = 32;
};

struct AttributionSettings {
  std::vector<AttributionMethod> methods = {AttributionMethod::kVanillaGradients,
                                            AttributionMethod::kIntegratedGradients};
  AttributionOptions options;
  BaselineKind baseline = BaselineKind::kZero;
  double baseline_value = 0.5;
  std::size_t pgm_count = 8;
};

struct MetricSettings {
  std::vector<double> fractions = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  std::size_t eval_subset = 200;
};

struct ConceptSettings {
  std::vector<int> classes = {0, 1, 2};
  std::size_t rank = 10;
  std::size_t patch_size = 16;
  std::size_t stride = 8;
  std::size_t sobol_samples = 1024;
  SobolOrder sobol_order = SobolOrder::kTotal;
  std::size_t top_k = 6;
  std::size_t nmf_max_iters = 500;
  double nmf_tol = 1e-4;
};

// Whole-experiment configuration, read from an INI file:
//
//   seed = 0
//   precision = f32            ; f32 | f64
//   output = prunex-out
//   [data]         source, cifar_dir, train_per_class, test_per_class, image_size
//   [model]        widths, stem_stride, classes
//   [train]        epochs, lr, momentum, batch_size, clip
//   [prune]        schedule, finetune_epochs
//   [attribution]  methods, ig_steps, baseline, baseline_value, target,
//                  reduction, pgm_count
//   [metrics]      fractions, eval_subset
//   [concepts]     classes, rank, patch_size, stride, sobol_samples,
//                  sobol_order, top_k, nmf_max_iters, nmf_tol
//
// Lists are comma separated. Unknown sections or keys are rejected.
struct ExperimentConfig {
  std::uint64_t seed = 0;
  Precision precision = Precision::kFloat32;
  std::filesystem::path output = "prunex-out";
  DataSettings data;
  ModelConfig model;
  TrainOptions train;
  SparsitySchedule schedule;
  AttributionSettings attribution;
  MetricSettings metrics;
  ConceptSettings concepts;

  ExperimentConfig();

  static ExperimentConfig Parse(std::string_view ini_text);
  static ExperimentConfig Load(const std::filesystem::path& path);

  // Throws std::invalid_argument on inconsistent values.
  void Validate() const;

  // Fully resolved INI text (every key, defaults included) except `output`.
  // Also the provenance block embedded in every results file.
  std::string Canonical() const;
  // Canonical text of the named sections ("" = top-level keys).
  std::string CanonicalSections(std::initializer_list<std::string_view> sections) const;

  // Applies `seed` to the model init and the training shuffle.
  void SetSeed(std::uint64_t seed);
};

class MissingArtifact : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Directory name of a sparsity level: "s00", "s10", ..., "s70".
std::string LevelName(double sparsity);

struct StageOutcome {
  std::size_t computed = 0;  // units of work redone
  std::size_t skipped = 0;   // units whose stamp matched
};

// Hex SHA-256 of a byte string / a file's contents.
std::string Sha256Hex(std::string_view bytes);
std::string Sha256File(const std::filesystem::path& path);

// Pipeline stages. Each writes under `out`, checks the artifacts of the
// previous stage (throwing MissingArtifact naming the stage to run), and is
// skipped when the SHA-256 of its inputs matches the stamp of a previous run.
class Pipeline {
 public:
  Pipeline(ExperimentConfig config, std::filesystem::path out);

  const ExperimentConfig& config() const { return config_; }
  const std::filesystem::path& out() const { return out_; }

  StageOutcome Train();
  StageOutcome Prune();
  StageOutcome Attribute();
  StageOutcome Evaluate();
  StageOutcome Concepts();
  StageOutcome Report();
  void RunAll();

  // Sparsity levels of the run, dense first.
  std::vector<double> Levels() const;
  std::filesystem::path CheckpointPath(double sparsity) const;
  std::filesystem::path ResultsDir() const { return out_ / "results"; }

 private:
  template <typename T>
  StageOutcome TrainImpl();
  template <typename T>
  StageOutcome PruneImpl();
  template <typename T>
  StageOutcome AttributeImpl();
  template <typename T>
  StageOutcome EvaluateImpl();
  template <typename T>
  StageOutcome ConceptsImpl();

  ExperimentConfig config_;
  std::filesystem::path out_;
};

// Rows of a results CSV, skipping '#' provenance lines; the first row is the
// header.
std::vector<std::vector<std::string>> ReadCsv(const std::filesystem::path& path);

// Renders results/{accuracy,gini,aopc,road_<method>}.svg and summary.json from
// the CSVs in `results_dir`.
void WriteReport(const std::filesystem::path& results_dir);

}  // namespace prunex

#endif  // PRUNEX_HARNESS_H_
