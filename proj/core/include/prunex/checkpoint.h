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

#ifndef PRUNEX_CHECKPOINT_H_
#define PRUNEX_CHECKPOINT_H_

#include <filesystem>
#include <optional>

#include <nlohmann/json.hpp>

#include "prunex/mask.h"
#include "prunex/model.h"
#include "prunex/tensor.h"

namespace prunex {

// Model parameters, their init snapshot, an optional pruning mask and free
// form training metadata (epochs, seed, accuracy, ...). Stored in the tensor
// container as "<param>", "<param>.init" and "<param>.mask".
template <typename T>
struct Checkpoint {
  ModelConfig config;
  ParamStore<T> params;
  std::optional<PruningMask> mask;
  nlohmann::json metadata = nlohmann::json::object();

  void Save(const std::filesystem::path& path) const;
  // Throws ContainerError when the file was written with the other precision.
  static Checkpoint Load(const std::filesystem::path& path);

  Model<T> ToModel() const { return Model<T>(config, params); }
};

Precision PeekCheckpointPrecision(const std::filesystem::path& path);

extern template struct Checkpoint<float>;
extern template struct Checkpoint<double>;

}  // namespace prunex

#endif  // PRUNEX_CHECKPOINT_H_
