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

#include <fmt/format.h>
#include <openssl/evp.h>
#include <spdlog/spdlog.h>

#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include "csv.h"
#include "prunex/checkpoint.h"
#include "prunex/dataset.h"
#include "prunex/harness.h"
#include "prunex/metrics.h"

namespace prunex {
namespace {

namespace fs = std::filesystem;
using internal::FormatNumber;
using internal::WriteCsv;
using internal::WriteTextFile;

constexpr std::uint64_t kTestSeedOffset = 0x9e3779b97f4a7c15ULL;

struct Datasets {
  LabeledDataset train;
  LabeledDataset test;
};

LabeledDataset Cap(const LabeledDataset& data, std::size_t per_class) {
  return per_class == 0 ? data : data.Head(10 * per_class);
}

Datasets LoadData(const ExperimentConfig& config) {
  const DataSettings& d = config.data;
  if (d.source == "cifar") {
    return {Cap(LoadCifarBinary(d.cifar_dir, Split::kTrain), d.train_per_class),
            Cap(LoadCifarBinary(d.cifar_dir, Split::kTest), d.test_per_class)};
  }
  return {GenerateShapes(config.seed, d.train_per_class, d.image_size, Split::kTrain),
          GenerateShapes(config.seed + kTestSeedOffset, d.test_per_class, d.image_size,
                         Split::kTest)};
}

LabeledDataset EvalSubset(const ExperimentConfig& config, const LabeledDataset& test) {
  return test.Head(config.metrics.eval_subset);
}

std::string ReadStamp(const fs::path& path) {
  std::ifstream in(path);
  std::string s;
  std::getline(in, s);
  return s;
}

// True when `stamp` records `hash` and every output exists.
bool UpToDate(std::string_view stage, const fs::path& stamp, const std::string& hash,
              std::initializer_list<fs::path> outputs) {
  if (!fs::exists(stamp) || ReadStamp(stamp) != hash) return false;
  for (const auto& o : outputs) {
    if (!fs::exists(o)) return false;
  }
  spdlog::info("{}: input hash {} matches {}, skipping", stage, hash.substr(0, 16),
               stamp.string());
  return true;
}

void WriteStamp(const fs::path& stamp, const std::string& hash) {
  WriteTextFile(stamp, hash + "\n");
}

void RequireFile(const fs::path& path, std::string_view stage) {
  if (!fs::exists(path)) {
    throw MissingArtifact("missing " + path.string() + "; run `prunex " + std::string(stage) +
                          "` first");
  }
}

class Timer {
 public:
  explicit Timer(std::string name) : name_(std::move(name)) {}
  ~Timer() {
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    spdlog::info("{} took {:.1f}s", name_, s);
  }

 private:
  std::string name_;
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

Baseline MakeBaseline(const ExperimentConfig& config, const Datasets& data) {
  const Shape shape = {data.test.height(), data.test.width(), data.test.channels()};
  switch (config.attribution.baseline) {
    case BaselineKind::kZero: return Baseline::Zero(shape);
    case BaselineKind::kDatasetMean: return Baseline::DatasetMean(data.train);
    case BaselineKind::kConstant: return Baseline::Constant(shape, config.attribution.baseline_value);
  }
  throw std::logic_error("unhandled baseline kind");
}

fs::path AttribPath(const fs::path& level_dir, AttributionMethod m) {
  return level_dir / "attrib" / (std::string(MethodName(m)) + ".pxb");
}

}  // namespace

std::string LevelName(double sparsity) {
  return fmt::format("s{:02d}", std::llround(100.0 * sparsity));
}

std::string Sha256Hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256 failed");
  }
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
  return hex;
}

std::string Sha256File(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifact("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return Sha256Hex(ss.str());
}

Pipeline::Pipeline(ExperimentConfig config, fs::path out)
    : config_(std::move(config)), out_(std::move(out)) {
  config_.Validate();
}

std::vector<double> Pipeline::Levels() const {
  std::vector<double> levels = {0.0};
  levels.insert(levels.end(), config_.schedule.targets.begin(), config_.schedule.targets.end());
  return levels;
}

fs::path Pipeline::CheckpointPath(double sparsity) const {
  return out_ / LevelName(sparsity) / "checkpoint" / "model.pxb";
}

#define PRUNEX_DISPATCH(name)                                                 \
  StageOutcome Pipeline::name() {                                             \
    return config_.precision == Precision::kFloat32 ? name##Impl<float>()     \
                                                    : name##Impl<double>();   \
  }
PRUNEX_DISPATCH(Train)
PRUNEX_DISPATCH(Prune)
PRUNEX_DISPATCH(Attribute)
PRUNEX_DISPATCH(Evaluate)
PRUNEX_DISPATCH(Concepts)
#undef PRUNEX_DISPATCH

template <typename T>
StageOutcome Pipeline::TrainImpl() {
  const fs::path ckpt = CheckpointPath(0.0);
  const fs::path stamp = ckpt.parent_path() / ".stamp";
  const std::string hash = Sha256Hex("train\n" + config_.CanonicalSections({"", "data", "model", "train"}));
  if (UpToDate("train", stamp, hash, {ckpt})) return {0, 1};
  Timer timer("train");
  const Datasets data = LoadData(config_);
  Model<T> model(config_.model);
  spdlog::info("train: {} parameters, {} training images", model.ParameterCount(), data.train.size());
  const TrainLog log = prunex::Train(model, data.train, config_.train);
  const double acc = EvaluateAccuracy(model, data.test);
  spdlog::info("train: dense test accuracy {:.4f}", acc);
  Checkpoint<T> ck{config_.model, model.params(), AllOnesMask(model.params()),
                   {{"stage", "train"},
                    {"epochs", config_.train.epochs},
                    {"seed", config_.seed},
                    {"target_sparsity", 0.0},
                    {"measured_sparsity", 0.0},
                    {"accuracy", acc},
                    {"final_loss", log.epoch_loss.empty() ? 0.0 : log.epoch_loss.back()},
                    {"dataset", data.train.provenance}}};
  ck.Save(ckpt);
  WriteStamp(stamp, hash);
  return {1, 0};
}

template <typename T>
StageOutcome Pipeline::PruneImpl() {
  const fs::path dense = CheckpointPath(0.0);
  RequireFile(dense, "train");
  const fs::path stamp = out_ / ".prune.stamp";
  const std::string hash =
      Sha256Hex("prune\n" + Sha256File(dense) + "\n" +
                config_.CanonicalSections({"", "data", "train", "prune"}));
  bool all_present = true;
  for (double s : config_.schedule.targets) all_present = all_present && fs::exists(CheckpointPath(s));
  if (all_present && UpToDate("prune", stamp, hash, {})) return {0, config_.schedule.targets.size()};
  Timer timer("prune");
  const Datasets data = LoadData(config_);
  const Checkpoint<T> base = Checkpoint<T>::Load(dense);
  const Model<T> model = base.ToModel();
  std::size_t computed = 0;
  double parent = 0.0;
  RunLotteryTicketCycle<T>(
      model, data.train, data.test, config_.schedule, config_.train,
      [&](const PruningLevel<T>& level) {
        if (level.target_sparsity == 0.0) return;
        Checkpoint<T> ck{config_.model, level.model.params(), level.mask,
                         {{"stage", "prune"},
                          {"epochs", config_.schedule.finetune_epochs},
                          {"seed", config_.seed},
                          {"target_sparsity", level.target_sparsity},
                          {"measured_sparsity", level.measured_sparsity},
                          {"accuracy", level.accuracy},
                          {"final_loss", level.log.epoch_loss.empty() ? 0.0
                                                                      : level.log.epoch_loss.back()},
                          {"parent_sparsity", parent},
                          {"dataset", data.train.provenance}}};
        ck.Save(CheckpointPath(level.target_sparsity));
        parent = level.target_sparsity;
        ++computed;
      });
  WriteStamp(stamp, hash);
  return {computed, 0};
}

template <typename T>
StageOutcome Pipeline::AttributeImpl() {
  StageOutcome outcome;
  std::optional<Datasets> data;
  for (double s : Levels()) {
    const fs::path ckpt = CheckpointPath(s);
    RequireFile(ckpt, s == 0.0 ? "train" : "prune");
    const fs::path dir = out_ / LevelName(s);
    const fs::path stamp = dir / "attrib" / ".stamp";
    const std::string hash =
        Sha256Hex("attribute\n" + Sha256File(ckpt) + "\n" +
                  config_.CanonicalSections({"", "data", "attribution", "metrics"}));
    bool present = true;
    for (auto m : config_.attribution.methods) present = present && fs::exists(AttribPath(dir, m));
    if (present && UpToDate("attribute " + LevelName(s), stamp, hash, {})) {
      ++outcome.skipped;
      continue;
    }
    Timer timer("attribute " + LevelName(s));
    if (!data) data = LoadData(config_);
    const LabeledDataset eval = EvalSubset(config_, data->test);
    const Model<T> model = Checkpoint<T>::Load(ckpt).ToModel();
    const auto fn = LogitsFunction(model);
    const Baseline baseline = MakeBaseline(config_, *data);
    const Tensor<T> images = eval.images.Cast<T>();
    for (auto method : config_.attribution.methods) {
      const auto maps = AttributeBatch<T>(fn, images, eval.labels, method, baseline,
                                          config_.attribution.options);
      SaveAttributions(AttribPath(dir, method), maps,
                       {{"checkpoint_sha256", Sha256File(ckpt)},
                        {"baseline", BaselineKindName(config_.attribution.baseline)},
                        {"target", TargetName(config_.attribution.options.target)},
                        {"ig_steps", config_.attribution.options.ig_steps}});
      for (std::size_t i = 0; i < std::min(config_.attribution.pgm_count, maps.size()); ++i) {
        WritePgm(maps[i].values,
                 dir / "attrib" / fmt::format("{}_{:03d}.pgm", MethodName(method), i));
      }
    }
    WriteStamp(stamp, hash);
    ++outcome.computed;
  }
  return outcome;
}

template <typename T>
StageOutcome Pipeline::EvaluateImpl() {
  StageOutcome outcome;
  std::optional<Datasets> data;
  const std::string provenance = config_.Canonical();
  std::vector<std::vector<std::string>> acc_rows, gini_rows, road_rows, aopc_rows;
  for (double s : Levels()) {
    const fs::path ckpt = CheckpointPath(s);
    RequireFile(ckpt, s == 0.0 ? "train" : "prune");
    const fs::path dir = out_ / LevelName(s);
    std::string inputs = "evaluate\n" + Sha256File(ckpt) + "\n";
    for (auto m : config_.attribution.methods) {
      RequireFile(AttribPath(dir, m), "attribute");
      inputs += Sha256File(AttribPath(dir, m)) + "\n";
    }
    inputs += config_.CanonicalSections({"", "data", "attribution", "metrics"});
    const std::string hash = Sha256Hex(inputs);
    const fs::path metrics_json = dir / "metrics" / "metrics.json";
    const fs::path stamp = dir / "metrics" / ".stamp";
    nlohmann::json metrics;
    if (UpToDate("evaluate " + LevelName(s), stamp, hash, {metrics_json})) {
      std::ifstream in(metrics_json);
      metrics = nlohmann::json::parse(in);
      ++outcome.skipped;
    } else {
      Timer timer("evaluate " + LevelName(s));
      if (!data) data = LoadData(config_);
      const LabeledDataset eval = EvalSubset(config_, data->test);
      const Checkpoint<T> ck = Checkpoint<T>::Load(ckpt);
      const Model<T> model = ck.ToModel();
      metrics["sparsity_level"] = s;
      metrics["measured_sparsity"] = ck.metadata.at("measured_sparsity");
      metrics["accuracy"] = ck.metadata.at("accuracy");
      for (auto m : config_.attribution.methods) {
        const auto maps = LoadAttributions(AttribPath(dir, m));
        std::vector<double> ginis;
        for (const auto& map : maps) ginis.push_back(Gini(map).value);
        const MeanStd g = Summarize(ginis);
        const PerturbationCurve curve =
            RoadMorf(ModelClassifier(model), eval, maps, config_.metrics.fractions);
        const std::string name(MethodName(m));
        metrics["gini"][name] = {{"mean", g.mean}, {"std", g.std}, {"n", ginis.size()},
                                 {"values", ginis}};
        metrics["road"][name] = {{"fractions", curve.fractions},
                                 {"accuracies", curve.accuracies},
                                 {"aopc", Aopc(curve).value}};
        spdlog::info("evaluate {} {}: gini {:.4f} +- {:.4f}, aopc {:.4f}", LevelName(s), name,
                     g.mean, g.std, Aopc(curve).value);
      }
      WriteTextFile(metrics_json, metrics.dump(2) + "\n");
      WriteStamp(stamp, hash);
      ++outcome.computed;
    }
    const std::string level = FormatNumber(s);
    acc_rows.push_back({level, FormatNumber(metrics.at("measured_sparsity").get<double>()),
                        FormatNumber(metrics.at("accuracy").get<double>())});
    for (auto m : config_.attribution.methods) {
      const std::string name(MethodName(m));
      const auto& g = metrics.at("gini").at(name);
      gini_rows.push_back({level, name, FormatNumber(g.at("mean").get<double>()),
                           FormatNumber(g.at("std").get<double>()),
                           std::to_string(g.at("n").get<std::size_t>())});
      const auto& r = metrics.at("road").at(name);
      const auto fr = r.at("fractions").get<std::vector<double>>();
      const auto ac = r.at("accuracies").get<std::vector<double>>();
      for (std::size_t k = 0; k < fr.size(); ++k) {
        road_rows.push_back({level, name, FormatNumber(fr[k]), FormatNumber(ac[k])});
      }
      aopc_rows.push_back({level, name, FormatNumber(r.at("aopc").get<double>())});
    }
  }
  const fs::path results = ResultsDir();
  WriteCsv(results / "accuracy.csv", provenance,
           {"sparsity_level", "measured_sparsity", "accuracy"}, acc_rows);
  WriteCsv(results / "gini.csv", provenance,
           {"sparsity_level", "method", "gini_mean", "gini_std", "n"}, gini_rows);
  WriteCsv(results / "road.csv", provenance, {"sparsity_level", "method", "fraction", "accuracy"},
           road_rows);
  WriteCsv(results / "aopc.csv", provenance, {"sparsity_level", "method", "aopc"}, aopc_rows);
  return outcome;
}

template <typename T>
StageOutcome Pipeline::ConceptsImpl() {
  StageOutcome outcome;
  std::optional<Datasets> data;
  const ConceptSettings& cs = config_.concepts;
  std::vector<std::vector<std::string>> rows;
  for (double s : Levels()) {
    const fs::path ckpt = CheckpointPath(s);
    RequireFile(ckpt, s == 0.0 ? "train" : "prune");
    const fs::path dir = out_ / LevelName(s) / "concepts";
    const fs::path stamp = dir / ".stamp";
    const fs::path index = dir / "index.json";
    const std::string hash = Sha256Hex("concepts\n" + Sha256File(ckpt) + "\n" +
                                       config_.CanonicalSections({"", "data", "metrics", "concepts"}));
    nlohmann::json summary;
    if (UpToDate("concepts " + LevelName(s), stamp, hash, {index})) {
      std::ifstream in(index);
      summary = nlohmann::json::parse(in);
      ++outcome.skipped;
    } else {
      Timer timer("concepts " + LevelName(s));
      if (!data) data = LoadData(config_);
      const LabeledDataset eval = EvalSubset(config_, data->test);
      const Model<T> model = Checkpoint<T>::Load(ckpt).ToModel();
      summary = nlohmann::json::array();
      for (int y : cs.classes) {
        const fs::path class_dir = dir / fmt::format("class_{}", y);
        try {
          const PatchSet patches = ExtractPatches(model, eval, y, cs.patch_size, cs.stride);
          const Eigen::MatrixXd acts = TapActivations(model, patches.images);
          const std::size_t rank = std::min<std::size_t>(cs.rank, patches.size());
          const ConceptBank bank =
              Nmf(acts, {rank, cs.nmf_max_iters, cs.nmf_tol, config_.seed});
          const ConceptImportance imp = SobolImportance(
              ClassHead(model, y), bank.coefficients, bank.concepts,
              {cs.sobol_samples, config_.seed, cs.sobol_order});
          const ConceptReport report =
              RankAndExport(bank, imp, patches, cs.top_k, class_dir,
                            {{"sparsity_level", s},
                             {"patches", patches.size()},
                             {"source_images", patches.source_images},
                             {"nmf_iterations", bank.iterations()},
                             {"nmf_relative_error", bank.error_history.back()}});
          summary.push_back({{"class", y}, {"report", report.ToJson()}});
        } catch (const std::runtime_error& e) {
          spdlog::warn("concepts {} class {}: {}", LevelName(s), y, e.what());
          summary.push_back({{"class", y}, {"error", e.what()}});
        }
      }
      WriteTextFile(index, summary.dump(2) + "\n");
      WriteStamp(stamp, hash);
      ++outcome.computed;
    }
    for (const auto& entry : summary) {
      if (!entry.contains("report")) continue;
      const ConceptReport report = ConceptReport::FromJson(entry.at("report"));
      for (std::size_t r = 0; r < report.concepts.size(); ++r) {
        const ConceptEntry& e = report.concepts[r];
        rows.push_back({FormatNumber(s), std::to_string(report.class_id), std::to_string(r),
                        std::to_string(e.concept_id), FormatNumber(e.importance),
                        FormatNumber(e.std_error)});
      }
    }
  }
  WriteCsv(ResultsDir() / "concepts.csv", config_.Canonical(),
           {"sparsity_level", "class", "rank", "concept_id", "importance", "std_error"}, rows);
  return outcome;
}

StageOutcome Pipeline::Report() {
  Timer timer("report");
  WriteReport(ResultsDir());
  return {1, 0};
}

void Pipeline::RunAll() {
  Timer timer("run-all");
  WriteTextFile(out_ / "config.resolved.ini", config_.Canonical());
  Train();
  Prune();
  Attribute();
  Evaluate();
  Concepts();
  Report();
}

}  // namespace prunex
