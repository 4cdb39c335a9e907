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

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "prunex/harness.h"

namespace prunex {
namespace {

std::string Trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return "";
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> SplitList(const std::string& text) {
  std::vector<std::string> items;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = Trim(item);
    if (!item.empty()) items.push_back(item);
  }
  return items;
}

template <typename N>
N ParseNumber(const std::string& text, std::string_view key) {
  const std::string t = Trim(text);
  N value{};
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) {
    throw std::invalid_argument("config: '" + std::string(key) + "' expects a number, got '" +
                                t + "'");
  }
  return value;
}

template <typename N>
std::vector<N> ParseNumbers(const std::string& text, std::string_view key) {
  std::vector<N> out;
  for (const auto& item : SplitList(text)) out.push_back(ParseNumber<N>(item, key));
  return out;
}

template <typename Range>
std::string JoinNumbers(const Range& values) {
  return fmt::format("{}", fmt::join(values, ", "));
}

struct Field {
  std::string_view section;  // "" for top-level keys
  std::string_view key;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

#define PRUNEX_SIZE_FIELD(sec, name, member)                                               \
  Field {                                                                                   \
    sec, name,                                                                              \
        [](ExperimentConfig& c, const std::string& v) {                                     \
          c.member = ParseNumber<std::size_t>(v, name);                                     \
        },                                                                                  \
        [](const ExperimentConfig& c) { return fmt::format("{}", c.member); }               \
  }
#define PRUNEX_DOUBLE_FIELD(sec, name, member)                                             \
  Field {                                                                                   \
    sec, name,                                                                              \
        [](ExperimentConfig& c, const std::string& v) {                                     \
          c.member = ParseNumber<double>(v, name);                                          \
        },                                                                                  \
        [](const ExperimentConfig& c) { return fmt::format("{}", c.member); }               \
  }

const std::vector<Field>& Fields() {
  static const std::vector<Field> fields = {
      {"", "seed",
       [](ExperimentConfig& c, const std::string& v) {
         c.SetSeed(ParseNumber<std::uint64_t>(v, "seed"));
       },
       [](const ExperimentConfig& c) { return fmt::format("{}", c.seed); }},
      {"", "precision",
       [](ExperimentConfig& c, const std::string& v) { c.precision = ParsePrecision(Trim(v)); },
       [](const ExperimentConfig& c) { return std::string(PrecisionName(c.precision)); }},
      {"", "output", [](ExperimentConfig& c, const std::string& v) { c.output = Trim(v); },
       [](const ExperimentConfig& c) { return c.output.string(); }},

      {"data", "source", [](ExperimentConfig& c, const std::string& v) { c.data.source = Trim(v); },
       [](const ExperimentConfig& c) { return c.data.source; }},
      {"data", "cifar_dir",
       [](ExperimentConfig& c, const std::string& v) { c.data.cifar_dir = Trim(v); },
       [](const ExperimentConfig& c) { return c.data.cifar_dir; }},
      PRUNEX_SIZE_FIELD("data", "train_per_class", data.train_per_class),
      PRUNEX_SIZE_FIELD("data", "test_per_class", data.test_per_class),
      {"data", "image_size",
       [](ExperimentConfig& c, const std::string& v) {
         c.data.image_size = ParseNumber<std::size_t>(v, "image_size");
         c.model.input_height = c.model.input_width = c.data.image_size;
       },
       [](const ExperimentConfig& c) { return fmt::format("{}", c.data.image_size); }},

      {"model", "widths",
       [](ExperimentConfig& c, const std::string& v) {
         c.model.block_widths = ParseNumbers<std::size_t>(v, "widths");
       },
       [](const ExperimentConfig& c) { return JoinNumbers(c.model.block_widths); }},
      PRUNEX_SIZE_FIELD("model", "stem_stride", model.stem_stride),
      PRUNEX_SIZE_FIELD("model", "classes", model.num_classes),

      PRUNEX_SIZE_FIELD("train", "epochs", train.epochs),
      PRUNEX_DOUBLE_FIELD("train", "lr", train.learning_rate),
      PRUNEX_DOUBLE_FIELD("train", "momentum", train.momentum),
      PRUNEX_SIZE_FIELD("train", "batch_size", train.batch_size),
      PRUNEX_DOUBLE_FIELD("train", "clip", train.clip_grad_norm),

      {"prune", "schedule",
       [](ExperimentConfig& c, const std::string& v) {
         c.schedule.targets = ParseNumbers<double>(v, "schedule");
       },
       [](const ExperimentConfig& c) { return JoinNumbers(c.schedule.targets); }},
      PRUNEX_SIZE_FIELD("prune", "finetune_epochs", schedule.finetune_epochs),

      {"attribution", "methods",
       [](ExperimentConfig& c, const std::string& v) {
         c.attribution.methods.clear();
         for (const auto& m : SplitList(v)) c.attribution.methods.push_back(ParseMethod(m));
       },
       [](const ExperimentConfig& c) {
         std::vector<std::string_view> names;
         for (auto m : c.attribution.methods) names.push_back(MethodName(m));
         return fmt::format("{}", fmt::join(names, ", "));
       }},
      PRUNEX_SIZE_FIELD("attribution", "ig_steps", attribution.options.ig_steps),
      {"attribution", "baseline",
       [](ExperimentConfig& c, const std::string& v) {
         c.attribution.baseline = ParseBaselineKind(Trim(v));
       },
       [](const ExperimentConfig& c) {
         return std::string(BaselineKindName(c.attribution.baseline));
       }},
      PRUNEX_DOUBLE_FIELD("attribution", "baseline_value", attribution.baseline_value),
      {"attribution", "target",
       [](ExperimentConfig& c, const std::string& v) {
         c.attribution.options.target = ParseTarget(Trim(v));
       },
       [](const ExperimentConfig& c) {
         return std::string(TargetName(c.attribution.options.target));
       }},
      {"attribution", "reduction",
       [](ExperimentConfig& c, const std::string& v) {
         c.attribution.options.reduction = ParseReduction(Trim(v));
       },
       [](const ExperimentConfig& c) {
         return std::string(ReductionName(c.attribution.options.reduction));
       }},
      PRUNEX_SIZE_FIELD("attribution", "pgm_count", attribution.pgm_count),

      {"metrics", "fractions",
       [](ExperimentConfig& c, const std::string& v) {
         c.metrics.fractions = ParseNumbers<double>(v, "fractions");
       },
       [](const ExperimentConfig& c) { return JoinNumbers(c.metrics.fractions); }},
      PRUNEX_SIZE_FIELD("metrics", "eval_subset", metrics.eval_subset),

      {"concepts", "classes",
       [](ExperimentConfig& c, const std::string& v) {
         c.concepts.classes = ParseNumbers<int>(v, "classes");
       },
       [](const ExperimentConfig& c) { return JoinNumbers(c.concepts.classes); }},
      PRUNEX_SIZE_FIELD("concepts", "rank", concepts.rank),
      PRUNEX_SIZE_FIELD("concepts", "patch_size", concepts.patch_size),
      PRUNEX_SIZE_FIELD("concepts", "stride", concepts.stride),
      PRUNEX_SIZE_FIELD("concepts", "sobol_samples", concepts.sobol_samples),
      {"concepts", "sobol_order",
       [](ExperimentConfig& c, const std::string& v) {
         c.concepts.sobol_order = ParseSobolOrder(Trim(v));
       },
       [](const ExperimentConfig& c) {
         return std::string(SobolOrderName(c.concepts.sobol_order));
       }},
      PRUNEX_SIZE_FIELD("concepts", "top_k", concepts.top_k),
      PRUNEX_SIZE_FIELD("concepts", "nmf_max_iters", concepts.nmf_max_iters),
      PRUNEX_DOUBLE_FIELD("concepts", "nmf_tol", concepts.nmf_tol),
  };
  return fields;
}

#undef PRUNEX_SIZE_FIELD
#undef PRUNEX_DOUBLE_FIELD

const Field* FindField(std::string_view section, std::string_view key) {
  for (const Field& f : Fields()) {
    if (f.section == section && f.key == key) return &f;
  }
  return nullptr;
}

}  // namespace

ExperimentConfig::ExperimentConfig() {
  train.epochs = 15;
  SetSeed(seed);
}

void ExperimentConfig::SetSeed(std::uint64_t s) {
  seed = s;
  model.seed = s;
  train.seed = s;
}

ExperimentConfig ExperimentConfig::Parse(std::string_view ini_text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in{std::string(ini_text)};
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  ExperimentConfig config;
  auto apply = [&](std::string_view section, const std::string& key, const std::string& value) {
    const Field* f = FindField(section, key);
    if (f == nullptr) {
      throw std::invalid_argument(
          "config: unknown key '" +
          (section.empty() ? key : std::string(section) + "." + key) + "'");
    }
    f->set(config, value);
  };
  // Top-level keys are applied first so sections can override derived values.
  auto is_section = [](const std::string& name) {
    return std::any_of(Fields().begin(), Fields().end(),
                       [&](const Field& f) { return !f.section.empty() && f.section == name; });
  };
  for (const auto& [name, node] : tree) {
    if (node.empty() && !is_section(name)) apply("", name, node.data());
  }
  for (const auto& [name, node] : tree) {
    if (node.empty() && !is_section(name)) continue;
    if (!is_section(name)) throw std::invalid_argument("config: unknown section [" + name + "]");
    for (const auto& [key, leaf] : node) apply(name, key, leaf.data());
  }
  config.Validate();
  return config;
}

ExperimentConfig ExperimentConfig::Load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config: cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return Parse(ss.str());
}

void ExperimentConfig::Validate() const {
  if (data.source != "synthetic" && data.source != "cifar") {
    throw std::invalid_argument("config: data.source must be synthetic or cifar");
  }
  if (data.source == "cifar" && data.cifar_dir.empty()) {
    throw std::invalid_argument("config: data.cifar_dir is required for the cifar source");
  }
  if (data.source == "cifar" && data.image_size != kCifarSide) {
    throw std::invalid_argument("config: cifar images are 32x32");
  }
  if (data.source == "synthetic" && data.image_size < 12) {
    throw std::invalid_argument("config: synthetic images need image_size >= 12");
  }
  if (data.source == "synthetic" && data.train_per_class == 0) {
    throw std::invalid_argument("config: data.train_per_class must be >= 1");
  }
  if (model.num_classes != 10) throw std::invalid_argument("config: both datasets have 10 classes");
  model.Validate();
  schedule.Validate();
  if (train.batch_size == 0) throw std::invalid_argument("config: train.batch_size must be >= 1");
  if (attribution.methods.empty()) throw std::invalid_argument("config: no attribution methods");
  if (attribution.options.ig_steps < 1) throw std::invalid_argument("config: ig_steps must be >= 1");
  if (metrics.fractions.size() < 2 || metrics.fractions[0] != 0.0) {
    throw std::invalid_argument("config: metrics.fractions must start at 0 and have >= 2 entries");
  }
  for (std::size_t i = 0; i < metrics.fractions.size(); ++i) {
    if (metrics.fractions[i] >= 1.0 || (i > 0 && metrics.fractions[i] <= metrics.fractions[i - 1])) {
      throw std::invalid_argument("config: metrics.fractions must increase strictly below 1");
    }
  }
  if (metrics.eval_subset == 0) throw std::invalid_argument("config: eval_subset must be >= 1");
  for (int c : concepts.classes) {
    if (c < 0 || static_cast<std::size_t>(c) >= model.num_classes) {
      throw std::invalid_argument("config: concept class " + std::to_string(c) + " out of range");
    }
  }
  if (concepts.rank < 1 || concepts.rank > model.feature_width()) {
    throw std::invalid_argument("config: concepts.rank must be in [1, last width]");
  }
  if (concepts.patch_size == 0 || concepts.patch_size > data.image_size || concepts.stride == 0) {
    throw std::invalid_argument("config: invalid concept patch size or stride");
  }
  if (concepts.sobol_samples < 2) throw std::invalid_argument("config: sobol_samples must be >= 2");
}

std::string ExperimentConfig::CanonicalSections(
    std::initializer_list<std::string_view> sections) const {
  std::string out;
  for (std::string_view section : sections) {
    if (!section.empty()) out += "[" + std::string(section) + "]\n";
    for (const Field& f : Fields()) {
      if (f.section != section || f.key == "output") continue;
      out += std::string(f.key) + " = " + f.get(*this) + "\n";
    }
  }
  return out;
}

std::string ExperimentConfig::Canonical() const {
  return CanonicalSections(
      {"", "data", "model", "train", "prune", "attribution", "metrics", "concepts"});
}

}  // namespace prunex
