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

#include "prunex/checkpoint.h"

#include <string>

#include "prunex/container.h"

namespace prunex {

template <typename T>
void Checkpoint<T>::Save(const std::filesystem::path& path) const {
  TensorContainer c;
  nlohmann::json order = nlohmann::json::array();
  for (const auto& p : params.entries()) {
    c.Put(p.name, p.value);
    c.Put(p.name + ".init", p.init);
    order.push_back({{"name", p.name},
                     {"kind", p.kind == ParamKind::kWeight ? "weight" : "bias"}});
  }
  if (mask.has_value()) {
    for (const auto& [name, m] : mask->masks) c.Put(name + ".mask", m);
  }
  c.metadata = {{"precision", PrecisionName(PrecisionOf<T>())},
                {"model", config.ToJson()},
                {"parameters", order},
                {"has_mask", mask.has_value()},
                {"target_sparsity", mask ? mask->target_sparsity : 0.0},
                {"training", metadata}};
  c.Save(path);
}

template <typename T>
Checkpoint<T> Checkpoint<T>::Load(const std::filesystem::path& path) {
  const TensorContainer c = TensorContainer::Load(path);
  const std::string precision = c.metadata.at("precision").get<std::string>();
  if (ParsePrecision(precision) != PrecisionOf<T>()) {
    throw ContainerError("checkpoint " + path.string() + " holds " + precision +
                         " parameters but " +
                         std::string(PrecisionName(PrecisionOf<T>())) + " was requested");
  }
  Checkpoint<T> ck;
  ck.config = ModelConfig::FromJson(c.metadata.at("model"));
  for (const auto& e : c.metadata.at("parameters")) {
    const auto name = e.at("name").get<std::string>();
    const auto kind = e.at("kind").get<std::string>() == "weight" ? ParamKind::kWeight
                                                                  : ParamKind::kBias;
    ck.params.Add(name, kind, c.Get<T>(name), c.Get<T>(name + ".init"));
  }
  if (c.metadata.at("has_mask").get<bool>()) {
    PruningMask m;
    m.target_sparsity = c.metadata.at("target_sparsity").get<double>();
    for (const auto& p : ck.params.entries()) {
      if (p.kind == ParamKind::kWeight) {
        m.masks.emplace(p.name, c.Get<std::uint8_t>(p.name + ".mask"));
      }
    }
    CheckMaskCompatible(m, ck.params);
    ck.mask = std::move(m);
  }
  ck.metadata = c.metadata.at("training");
  return ck;
}

Precision PeekCheckpointPrecision(const std::filesystem::path& path) {
  return ParsePrecision(
      TensorContainer::ReadManifest(path).at("metadata").at("precision").get<std::string>());
}

template struct Checkpoint<float>;
template struct Checkpoint<double>;

}  // namespace prunex
