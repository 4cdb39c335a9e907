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

#ifndef PRUNEX_MODEL_H_
#define PRUNEX_MODEL_H_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "prunex/autodiff.h"
#include "prunex/tensor.h"

namespace prunex {

// Desk-scale residual CNN:
//   stem conv3x3 (stride `stem_stride`) -> ReLU
//   -> blocks: relu(skip(x) + conv3x3(relu(conv3x3(x))))
//   -> global average pool -> dense head.
// A 1x1 projection is used on the skip path when a block changes width.
struct ModelConfig {
  std::size_t input_height = 32;
  std::size_t input_width = 32;
  std::size_t input_channels = 3;
  std::vector<std::size_t> block_widths = {16, 16, 16};
  std::size_t stem_stride = 2;
  std::size_t num_classes = 10;
  std::uint64_t seed = 0;

  void Validate() const;
  std::size_t feature_width() const { return block_widths.back(); }

  nlohmann::json ToJson() const;
  static ModelConfig FromJson(const nlohmann::json& j);
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

enum class ParamKind { kWeight, kBias };

template <typename T>
struct Parameter {
  std::string name;
  ParamKind kind = ParamKind::kWeight;
  Tensor<T> value;
  Tensor<T> init;  // snapshot taken at construction; the rewind target
};

// Named parameters in insertion order, each paired with its initial value.
template <typename T>
class ParamStore {
 public:
  // Adds a parameter and snapshots its current value as the init value.
  void Add(std::string name, ParamKind kind, Tensor<T> value);
  // Adds a parameter with an explicit init snapshot (checkpoint loading).
  void Add(std::string name, ParamKind kind, Tensor<T> value, Tensor<T> init);

  bool contains(std::string_view name) const;
  Parameter<T>& at(std::string_view name);
  const Parameter<T>& at(std::string_view name) const;

  std::span<Parameter<T>> entries() { return entries_; }
  std::span<const Parameter<T>> entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  std::size_t TotalCount() const;
  std::size_t WeightCount() const;

  // Throws if any init snapshot disagrees in shape with its live value.
  void CheckSnapshotShapes() const;

  friend bool operator==(const ParamStore& a, const ParamStore& b) {
    if (a.entries_.size() != b.entries_.size()) return false;
    for (std::size_t i = 0; i < a.entries_.size(); ++i) {
      const auto& x = a.entries_[i];
      const auto& y = b.entries_[i];
      if (x.name != y.name || x.kind != y.kind || !(x.value == y.value) ||
          !(x.init == y.init)) {
        return false;
      }
    }
    return true;
  }

 private:
  std::vector<Parameter<T>> entries_;
};

template <typename T>
class Model {
 public:
  // Builds the architecture with He-style random init drawn from config.seed.
  explicit Model(ModelConfig config);
  // Wraps existing parameters; names and shapes must match the architecture.
  Model(ModelConfig config, ParamStore<T> params);

  const ModelConfig& config() const { return config_; }
  ParamStore<T>& params() { return params_; }
  const ParamStore<T>& params() const { return params_; }
  std::size_t ParameterCount() const { return params_.TotalCount(); }

  struct Outputs {
    Var logits;    // [N, classes]
    Var features;  // last block output, post-ReLU, [N, h, w, C]
  };

  // Appends the forward pass over `images` ([N,H,W,C]) to `graph`. When
  // `param_vars` is non-null it receives one Var per parameter, in
  // params().entries() order.
  Outputs Forward(Graph<T>& graph, Var images, bool param_grads,
                  std::vector<Var>* param_vars = nullptr) const;

  Tensor<T> Logits(const Tensor<T>& images) const;
  // Spatially pooled tap-layer features, [N, feature_width].
  Tensor<T> PooledFeatures(const Tensor<T>& images) const;
  // Dense head applied to pooled features.
  Tensor<T> HeadLogits(const Tensor<T>& pooled) const;
  // Arg-max class per image, evaluated in chunks of `batch`.
  std::vector<int> Predict(const Tensor<float>& images,
                           std::size_t batch = 128) const;

 private:
  void CheckInput(const Shape& shape) const;

  ModelConfig config_;
  ParamStore<T> params_;
};

// Index of the largest entry in each row of a [N,K] logits tensor; ties go to
// the lower class index.
template <typename T>
std::vector<int> ArgMaxRows(const Tensor<T>& logits);

extern template class ParamStore<float>;
extern template class ParamStore<double>;
extern template class Model<float>;
extern template class Model<double>;

}  // namespace prunex

#endif  // PRUNEX_MODEL_H_
