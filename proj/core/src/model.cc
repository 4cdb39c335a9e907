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

#include "prunex/model.h"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <utility>

namespace prunex {
namespace {

constexpr double kResidualInitScale = 0.1;

template <typename T>
Tensor<T> HeNormal(Shape shape, std::size_t fan_in, double gain,
                   std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, gain * std::sqrt(2.0 / fan_in));
  Tensor<T> t(std::move(shape));
  for (T& v : t.data()) v = static_cast<T>(dist(rng));
  return t;
}

std::string BlockName(std::size_t b, std::string_view part) {
  return "block" + std::to_string(b) + "." + std::string(part);
}

// Parameter names and shapes for a config, in forward order.
struct ParamSpec {
  std::string name;
  ParamKind kind;
  Shape shape;
  std::size_t fan_in;
  double gain;
};

std::vector<ParamSpec> Architecture(const ModelConfig& c) {
  std::vector<ParamSpec> specs;
  const std::size_t c0 = c.block_widths.front();
  specs.push_back({"stem.weight", ParamKind::kWeight, {3, 3, c.input_channels, c0},
                   9 * c.input_channels, 1.0});
  specs.push_back({"stem.bias", ParamKind::kBias, {c0}, 0, 0.0});
  std::size_t in = c0;
  for (std::size_t b = 0; b < c.block_widths.size(); ++b) {
    const std::size_t w = c.block_widths[b];
    specs.push_back({BlockName(b, "conv1.weight"), ParamKind::kWeight, {3, 3, in, w}, 9 * in, 1.0});
    specs.push_back({BlockName(b, "conv1.bias"), ParamKind::kBias, {w}, 0, 0.0});
    specs.push_back({BlockName(b, "conv2.weight"), ParamKind::kWeight, {3, 3, w, w}, 9 * w,
                     kResidualInitScale});
    specs.push_back({BlockName(b, "conv2.bias"), ParamKind::kBias, {w}, 0, 0.0});
    if (w != in) {
      specs.push_back({BlockName(b, "proj.weight"), ParamKind::kWeight, {1, 1, in, w}, in, 1.0});
    }
    in = w;
  }
  specs.push_back({"head.weight", ParamKind::kWeight, {in, c.num_classes}, in,
                   std::sqrt(0.5)});
  specs.push_back({"head.bias", ParamKind::kBias, {c.num_classes}, 0, 0.0});
  return specs;
}

}  // namespace

void ModelConfig::Validate() const {
  if (num_classes < 2) throw std::invalid_argument("model config: num_classes must be >= 2");
  if (block_widths.empty()) throw std::invalid_argument("model config: need at least one block");
  for (std::size_t w : block_widths) {
    if (w < 1) throw std::invalid_argument("model config: block widths must be >= 1");
  }
  if (input_height < 3 || input_width < 3 || input_channels < 1) {
    throw std::invalid_argument("model config: input must be at least 3x3x1");
  }
  if (stem_stride < 1) throw std::invalid_argument("model config: stem_stride must be >= 1");
}

nlohmann::json ModelConfig::ToJson() const {
  return {{"input_height", input_height},   {"input_width", input_width},
          {"input_channels", input_channels}, {"block_widths", block_widths},
          {"stem_stride", stem_stride},     {"num_classes", num_classes},
          {"seed", seed}};
}

ModelConfig ModelConfig::FromJson(const nlohmann::json& j) {
  ModelConfig c;
  c.input_height = j.at("input_height").get<std::size_t>();
  c.input_width = j.at("input_width").get<std::size_t>();
  c.input_channels = j.at("input_channels").get<std::size_t>();
  c.block_widths = j.at("block_widths").get<std::vector<std::size_t>>();
  c.stem_stride = j.at("stem_stride").get<std::size_t>();
  c.num_classes = j.at("num_classes").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.Validate();
  return c;
}

template <typename T>
void ParamStore<T>::Add(std::string name, ParamKind kind, Tensor<T> value) {
  Tensor<T> init = value;
  Add(std::move(name), kind, std::move(value), std::move(init));
}

template <typename T>
void ParamStore<T>::Add(std::string name, ParamKind kind, Tensor<T> value,
                        Tensor<T> init) {
  if (contains(name)) throw std::invalid_argument("param store: duplicate parameter '" + name + "'");
  if (value.shape() != init.shape()) {
    throw MakeShapeError("param store init snapshot for '" + name + "'",
                         value.shape(), init.shape());
  }
  entries_.push_back({std::move(name), kind, std::move(value), std::move(init)});
}

template <typename T>
bool ParamStore<T>::contains(std::string_view name) const {
  return std::any_of(entries_.begin(), entries_.end(),
                     [&](const Parameter<T>& p) { return p.name == name; });
}

template <typename T>
Parameter<T>& ParamStore<T>::at(std::string_view name) {
  for (auto& p : entries_) {
    if (p.name == name) return p;
  }
  throw std::out_of_range("param store: no parameter '" + std::string(name) + "'");
}

template <typename T>
const Parameter<T>& ParamStore<T>::at(std::string_view name) const {
  return const_cast<ParamStore*>(this)->at(name);
}

template <typename T>
std::size_t ParamStore<T>::TotalCount() const {
  std::size_t n = 0;
  for (const auto& p : entries_) n += p.value.size();
  return n;
}

template <typename T>
std::size_t ParamStore<T>::WeightCount() const {
  std::size_t n = 0;
  for (const auto& p : entries_) {
    if (p.kind == ParamKind::kWeight) n += p.value.size();
  }
  return n;
}

template <typename T>
void ParamStore<T>::CheckSnapshotShapes() const {
  for (const auto& p : entries_) {
    if (p.value.shape() != p.init.shape()) {
      throw MakeShapeError("init snapshot of '" + p.name + "'", p.value.shape(),
                           p.init.shape());
    }
  }
}

template <typename T>
Model<T>::Model(ModelConfig config) : config_(std::move(config)) {
  config_.Validate();
  std::mt19937_64 rng(config_.seed);
  for (const ParamSpec& spec : Architecture(config_)) {
    Tensor<T> value = spec.kind == ParamKind::kBias
                          ? Tensor<T>(spec.shape)
                          : HeNormal<T>(spec.shape, spec.fan_in, spec.gain, rng);
    params_.Add(spec.name, spec.kind, std::move(value));
  }
}

template <typename T>
Model<T>::Model(ModelConfig config, ParamStore<T> params)
    : config_(std::move(config)), params_(std::move(params)) {
  config_.Validate();
  const std::vector<ParamSpec> specs = Architecture(config_);
  if (specs.size() != params_.size()) {
    throw std::invalid_argument("model: expected " + std::to_string(specs.size()) +
                                " parameters, got " + std::to_string(params_.size()));
  }
  for (const ParamSpec& spec : specs) {
    const Parameter<T>& p = params_.at(spec.name);
    if (p.value.shape() != spec.shape) {
      throw MakeShapeError("model parameter '" + spec.name + "'", p.value.shape(), spec.shape);
    }
    if (p.kind != spec.kind) {
      throw std::invalid_argument("model: parameter '" + spec.name + "' has the wrong kind");
    }
  }
  params_.CheckSnapshotShapes();
}

template <typename T>
void Model<T>::CheckInput(const Shape& shape) const {
  const Shape expected{0, config_.input_height, config_.input_width,
                       config_.input_channels};
  if (shape.size() != 4 || shape[1] != expected[1] || shape[2] != expected[2] ||
      shape[3] != expected[3]) {
    throw MakeShapeError("model input", shape, expected);
  }
}

template <typename T>
typename Model<T>::Outputs Model<T>::Forward(Graph<T>& g, Var images,
                                             bool param_grads,
                                             std::vector<Var>* param_vars) const {
  CheckInput(g.value(images).shape());
  std::vector<Var> vars;
  vars.reserve(params_.size());
  for (const auto& p : params_.entries()) vars.push_back(g.Input(p.value, param_grads));
  auto var = [&](std::string_view name) {
    const auto entries = params_.entries();
    for (std::size_t i = 0; i < entries.size(); ++i) {
      if (entries[i].name == name) return vars[i];
    }
    throw std::out_of_range("model: missing parameter " + std::string(name));
  };
  const Conv2DOptions same{1, 1};
  Var h = g.Conv2D(images, var("stem.weight"), {config_.stem_stride, 1});
  h = g.Relu(g.AddBias(h, var("stem.bias")));
  std::size_t in = config_.block_widths.front();
  for (std::size_t b = 0; b < config_.block_widths.size(); ++b) {
    const std::size_t w = config_.block_widths[b];
    Var r = g.AddBias(g.Conv2D(h, var(BlockName(b, "conv1.weight")), same),
                      var(BlockName(b, "conv1.bias")));
    r = g.Relu(r);
    r = g.AddBias(g.Conv2D(r, var(BlockName(b, "conv2.weight")), same),
                  var(BlockName(b, "conv2.bias")));
    Var skip = h;
    if (w != in) skip = g.Conv2D(h, var(BlockName(b, "proj.weight")), {1, 0});
    h = g.Relu(g.ResidualAdd(skip, r));
    in = w;
  }
  Var pooled = g.GlobalAvgPool(h);
  Var logits = g.AddBias(g.MatMul(pooled, var("head.weight")), var("head.bias"));
  if (param_vars != nullptr) *param_vars = std::move(vars);
  return {logits, h};
}

template <typename T>
Tensor<T> Model<T>::Logits(const Tensor<T>& images) const {
  Graph<T> g;
  const Outputs out = Forward(g, g.Input(images), false);
  return g.value(out.logits);
}

template <typename T>
Tensor<T> Model<T>::PooledFeatures(const Tensor<T>& images) const {
  Graph<T> g;
  const Outputs out = Forward(g, g.Input(images), false);
  return g.value(g.GlobalAvgPool(out.features));
}

template <typename T>
Tensor<T> Model<T>::HeadLogits(const Tensor<T>& pooled) const {
  if (pooled.rank() != 2 || pooled.dim(1) != config_.feature_width()) {
    throw MakeShapeError("head", pooled.shape(), Shape{0, config_.feature_width()});
  }
  Tensor<T> out = MatMulForward(pooled, params_.at("head.weight").value);
  const Tensor<T>& bias = params_.at("head.bias").value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bias[i % bias.size()];
  return out;
}

template <typename T>
std::vector<int> Model<T>::Predict(const Tensor<float>& images,
                                   std::size_t batch) const {
  CheckInput(images.shape());
  const std::size_t n = images.dim(0);
  const std::size_t stride = images.size() / std::max<std::size_t>(n, 1);
  std::vector<int> preds;
  preds.reserve(n);
  for (std::size_t start = 0; start < n; start += batch) {
    const std::size_t count = std::min(batch, n - start);
    std::vector<T> chunk(count * stride);
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      chunk[i] = static_cast<T>(images[start * stride + i]);
    }
    const Tensor<T> logits = Logits(Tensor<T>(
        {count, images.dim(1), images.dim(2), images.dim(3)}, std::move(chunk)));
    const std::vector<int> p = ArgMaxRows(logits);
    preds.insert(preds.end(), p.begin(), p.end());
  }
  return preds;
}

template <typename T>
std::vector<int> ArgMaxRows(const Tensor<T>& logits) {
  if (logits.rank() != 2 || logits.dim(1) == 0) {
    throw ShapeError("argmax: expected non-empty [N,K] logits, got " +
                     ShapeToString(logits.shape()));
  }
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const T* row = logits.data().data() + i * k;
    out[i] = static_cast<int>(std::max_element(row, row + k) - row);
  }
  return out;
}

template class ParamStore<float>;
template class ParamStore<double>;
template class Model<float>;
template class Model<double>;
template std::vector<int> ArgMaxRows(const Tensor<float>&);
template std::vector<int> ArgMaxRows(const Tensor<double>&);

}  // namespace prunex
