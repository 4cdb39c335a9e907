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

#include "prunex/training.h"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

namespace prunex {

std::size_t PruningMask::WeightCount() const {
  std::size_t n = 0;
  for (const auto& [name, m] : masks) n += m.size();
  return n;
}

std::size_t PruningMask::ZeroCount() const {
  std::size_t n = 0;
  for (const auto& [name, m] : masks) {
    n += static_cast<std::size_t>(std::count(m.data().begin(), m.data().end(), 0));
  }
  return n;
}

double PruningMask::Sparsity() const {
  const std::size_t total = WeightCount();
  return total == 0 ? 0.0 : static_cast<double>(ZeroCount()) / static_cast<double>(total);
}

template <typename T>
PruningMask AllOnesMask(const ParamStore<T>& params) {
  PruningMask mask;
  for (const auto& p : params.entries()) {
    if (p.kind == ParamKind::kWeight) {
      mask.masks.emplace(p.name, Tensor<std::uint8_t>::Filled(p.value.shape(), 1));
    }
  }
  return mask;
}

template <typename T>
void CheckMaskCompatible(const PruningMask& mask, const ParamStore<T>& params) {
  std::size_t weights = 0;
  for (const auto& p : params.entries()) {
    if (p.kind != ParamKind::kWeight) {
      if (mask.masks.count(p.name) != 0) {
        throw std::invalid_argument("mask: bias parameter '" + p.name + "' must not be masked");
      }
      continue;
    }
    ++weights;
    auto it = mask.masks.find(p.name);
    if (it == mask.masks.end()) {
      throw std::invalid_argument("mask: no entry for weight '" + p.name + "'");
    }
    if (it->second.shape() != p.value.shape()) {
      throw MakeShapeError("mask for '" + p.name + "'", it->second.shape(), p.value.shape());
    }
  }
  if (weights != mask.masks.size()) {
    throw std::invalid_argument("mask: has entries for unknown parameters");
  }
}

template <typename T>
void ApplyMask(const PruningMask& mask, ParamStore<T>& params) {
  CheckMaskCompatible(mask, params);
  for (auto& p : params.entries()) {
    if (p.kind != ParamKind::kWeight) continue;
    const Tensor<std::uint8_t>& m = mask.masks.at(p.name);
    for (std::size_t i = 0; i < m.size(); ++i) {
      p.value[i] *= static_cast<T>(m[i]);
    }
  }
}

double AccuracyFromPredictions(std::span<const int> predictions,
                               std::span<const int> labels) {
  if (predictions.size() != labels.size()) {
    throw std::invalid_argument("accuracy: prediction/label count mismatch");
  }
  if (labels.empty()) throw std::invalid_argument("accuracy: no samples");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    correct += predictions[i] == labels[i] ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

template <typename T>
double AccuracyFromLogits(const Tensor<T>& logits, std::span<const int> labels) {
  if (logits.rank() != 2 || logits.dim(1) == 0 || logits.dim(0) == 0) {
    throw std::invalid_argument("accuracy: empty logits " + ShapeToString(logits.shape()));
  }
  return AccuracyFromPredictions(ArgMaxRows(logits), labels);
}

template <typename T>
double EvaluateAccuracy(const Model<T>& model, const LabeledDataset& data) {
  if (data.empty()) throw std::invalid_argument("evaluate_accuracy: empty dataset");
  return AccuracyFromPredictions(model.Predict(data.images), data.labels);
}

template <typename T>
TrainLog Train(Model<T>& model, const LabeledDataset& data,
               const TrainOptions& options, const PruningMask* mask) {
  if (data.empty()) throw std::invalid_argument("train: empty dataset");
  if (options.batch_size == 0) throw std::invalid_argument("train: batch_size must be >= 1");
  ParamStore<T>& params = model.params();
  if (mask != nullptr) {
    CheckMaskCompatible(*mask, params);
    ApplyMask(*mask, params);
  }
  const auto entries = params.entries();
  // Per-parameter mask pointer (null for biases or when unmasked).
  std::vector<const Tensor<std::uint8_t>*> masks(entries.size(), nullptr);
  if (mask != nullptr) {
    for (std::size_t i = 0; i < entries.size(); ++i) {
      if (entries[i].kind == ParamKind::kWeight) masks[i] = &mask->masks.at(entries[i].name);
    }
  }
  std::vector<Tensor<T>> velocity;
  velocity.reserve(entries.size());
  for (const auto& p : entries) velocity.emplace_back(p.value.shape());

  const T lr = static_cast<T>(options.learning_rate);
  const T mu = static_cast<T>(options.momentum);
  std::mt19937_64 rng(options.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainLog log;
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      const std::size_t count = std::min(options.batch_size, order.size() - start);
      const std::span<const std::size_t> idx(order.data() + start, count);
      std::vector<int> labels(count);
      for (std::size_t i = 0; i < count; ++i) labels[i] = data.labels[idx[i]];

      Graph<T> g;
      std::vector<Var> pvars;
      const auto out = model.Forward(g, g.Input(data.Batch<T>(idx)), true, &pvars);
      const Var loss = g.SoftmaxCrossEntropy(out.logits, labels);
      const double loss_value = static_cast<double>(g.value(loss)[0]);
      if (!std::isfinite(loss_value)) {
        throw TrainingDiverged("train: loss became " + std::to_string(loss_value) +
                               " at epoch " + std::to_string(epoch) + ", step " +
                               std::to_string(log.steps) + " (lr=" +
                               std::to_string(options.learning_rate) + ")");
      }
      const std::vector<int> preds = ArgMaxRows(g.value(out.logits));
      for (std::size_t i = 0; i < count; ++i) correct += preds[i] == labels[i] ? 1 : 0;
      loss_sum += loss_value * static_cast<double>(count);
      g.Backward(loss);

      double sq_norm = 0;
      for (std::size_t p = 0; p < entries.size(); ++p) {
        const Tensor<T>& grad = g.grad(pvars[p]);
        const Tensor<std::uint8_t>* m = masks[p];
        for (std::size_t i = 0; i < grad.size(); ++i) {
          const double gi = m != nullptr ? grad[i] * static_cast<T>((*m)[i]) : grad[i];
          sq_norm += gi * gi;
        }
      }
      const double norm = std::sqrt(sq_norm);
      const T clip = options.clip_grad_norm > 0 && norm > options.clip_grad_norm
                         ? static_cast<T>(options.clip_grad_norm / norm)
                         : T{1};
      for (std::size_t p = 0; p < entries.size(); ++p) {
        Tensor<T>& w = entries[p].value;
        Tensor<T>& v = velocity[p];
        const Tensor<T>& grad = g.grad(pvars[p]);
        const Tensor<std::uint8_t>* m = masks[p];
        for (std::size_t i = 0; i < w.size(); ++i) {
          T gi = grad[i] * clip;
          if (m != nullptr) gi *= static_cast<T>((*m)[i]);
          v[i] = mu * v[i] + gi;
          w[i] -= lr * v[i];
          if (m != nullptr) w[i] *= static_cast<T>((*m)[i]);
        }
      }
      ++log.steps;
    }
    log.epoch_loss.push_back(loss_sum / static_cast<double>(data.size()));
    log.epoch_accuracy.push_back(static_cast<double>(correct) /
                                 static_cast<double>(data.size()));
    spdlog::debug("epoch {}: loss {:.4f} train-acc {:.3f}", epoch,
                  log.epoch_loss.back(), log.epoch_accuracy.back());
  }
  return log;
}

template PruningMask AllOnesMask(const ParamStore<float>&);
template PruningMask AllOnesMask(const ParamStore<double>&);
template void CheckMaskCompatible(const PruningMask&, const ParamStore<float>&);
template void CheckMaskCompatible(const PruningMask&, const ParamStore<double>&);
template void ApplyMask(const PruningMask&, ParamStore<float>&);
template void ApplyMask(const PruningMask&, ParamStore<double>&);
template double AccuracyFromLogits(const Tensor<float>&, std::span<const int>);
template double AccuracyFromLogits(const Tensor<double>&, std::span<const int>);
template double EvaluateAccuracy(const Model<float>&, const LabeledDataset&);
template double EvaluateAccuracy(const Model<double>&, const LabeledDataset&);
template TrainLog Train(Model<float>&, const LabeledDataset&, const TrainOptions&,
                        const PruningMask*);
template TrainLog Train(Model<double>&, const LabeledDataset&, const TrainOptions&,
                        const PruningMask*);

}  // namespace prunex
