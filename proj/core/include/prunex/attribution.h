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

#ifndef PRUNEX_ATTRIBUTION_H_
#define PRUNEX_ATTRIBUTION_H_

#include <cstddef>
#include <filesystem>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "prunex/autodiff.h"
#include "prunex/dataset.h"
#include "prunex/model.h"
#include "prunex/tensor.h"

namespace prunex {

enum class AttributionMethod { kVanillaGradients, kIntegratedGradients };
enum class AttributionTarget { kLogit, kProbability };
enum class ChannelReduction { kMaxAbs, kSumAbs };
enum class BaselineKind { kZero, kDatasetMean, kConstant };

std::string_view MethodName(AttributionMethod m);  // "vg" | "ig"
AttributionMethod ParseMethod(std::string_view name);
std::string_view TargetName(AttributionTarget t);
AttributionTarget ParseTarget(std::string_view name);
std::string_view ReductionName(ChannelReduction r);
ChannelReduction ParseReduction(std::string_view name);
std::string_view BaselineKindName(BaselineKind k);
BaselineKind ParseBaselineKind(std::string_view name);

// Maps a batch of images [N,H,W,C] to logits [N,K] on the given graph.
template <typename T>
using DifferentiableFn = std::function<Var(Graph<T>&, Var)>;

// Adapter for a model; the model must outlive the returned function.
template <typename T>
DifferentiableFn<T> LogitsFunction(const Model<T>& model);

// Reference image for Integrated Gradients, [H,W,C].
struct Baseline {
  BaselineKind kind = BaselineKind::kZero;
  Tensor<double> image;

  static Baseline Zero(const Shape& image_shape);
  static Baseline Constant(const Shape& image_shape, double value);
  // Per-pixel mean over the dataset.
  static Baseline DatasetMean(const LabeledDataset& data);
};

struct AttributionOptions {
  AttributionTarget target = AttributionTarget::kLogit;
  ChannelReduction reduction = ChannelReduction::kMaxAbs;
  std::size_t ig_steps = 32;
};

// Per-pixel importance for one image and one class.
struct AttributionMap {
  Tensor<double> values;  // [H,W], non-negative
  Tensor<double> signed_values;  // [H,W,C], before abs and channel reduction
  int target_class = 0;
  AttributionMethod method = AttributionMethod::kVanillaGradients;
  ChannelReduction reduction = ChannelReduction::kMaxAbs;
};

// Gradient of the class score with respect to each input pixel.
// Throws std::invalid_argument for a class outside [0, K).
template <typename T>
AttributionMap VanillaGradients(const DifferentiableFn<T>& fn, const Tensor<T>& image,
                                int target_class, const AttributionOptions& options = {});

// Midpoint-rule Integrated Gradients with `options.ig_steps` points along the
// straight path from the baseline. Throws when ig_steps < 1.
template <typename T>
AttributionMap IntegratedGradients(const DifferentiableFn<T>& fn, const Tensor<T>& image,
                                   const Baseline& baseline, int target_class,
                                   const AttributionOptions& options = {});

// Class score f(x) for every image of a batch (logit or softmax probability).
template <typename T>
std::vector<double> ClassScores(const DifferentiableFn<T>& fn, const Tensor<T>& images,
                                std::span<const int> classes, AttributionTarget target);

// One map per image, targeting `classes[i]`. Vanilla gradients are batched.
template <typename T>
std::vector<AttributionMap> AttributeBatch(const DifferentiableFn<T>& fn,
                                           const Tensor<T>& images,
                                           std::span<const int> classes,
                                           AttributionMethod method,
                                           const Baseline& baseline,
                                           const AttributionOptions& options);

// Reduces a signed [H,W,C] gradient-like tensor to a non-negative [H,W] map.
Tensor<double> ReduceChannels(const Tensor<double>& signed_values, ChannelReduction r);

// 8-bit grayscale, scaled so the map maximum becomes 255.
void WritePgm(const Tensor<double>& map, const std::filesystem::path& path);

// Stacked maps in the tensor container ("values" [N,H,W], "signed" [N,H,W,C]).
void SaveAttributions(const std::filesystem::path& path,
                      std::span<const AttributionMap> maps,
                      const nlohmann::json& metadata);
std::vector<AttributionMap> LoadAttributions(const std::filesystem::path& path,
                                             nlohmann::json* metadata = nullptr);

}  // namespace prunex

#endif  // PRUNEX_ATTRIBUTION_H_
