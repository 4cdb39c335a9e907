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

#ifndef PRUNEX_TRAINING_H_
#define PRUNEX_TRAINING_H_

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "prunex/dataset.h"
#include "prunex/mask.h"
#include "prunex/model.h"

namespace prunex {

struct TrainOptions {
  std::size_t epochs = 10;
  double learning_rate = 0.05;
  double momentum = 0.9;
  std::size_t batch_size = 32;
  // Rescales each step's gradient to at most this global L2 norm; 0 disables.
  double clip_grad_norm = 2.0;
  std::uint64_t seed = 0;
};

struct TrainLog {
  std::vector<double> epoch_loss;
  std::vector<double> epoch_accuracy;  // running accuracy on the training batches
  std::size_t steps = 0;
};

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Mini-batch SGD with momentum on mean softmax cross-entropy, with optional
// global-norm gradient clipping. With a mask,
// masked gradients and weights are zeroed on every step, so pruned weights
// stay exactly 0. Throws TrainingDiverged when the loss stops being finite.
template <typename T>
TrainLog Train(Model<T>& model, const LabeledDataset& data,
               const TrainOptions& options, const PruningMask* mask = nullptr);

// Top-1 accuracy in [0, 1]. Throws on an empty dataset.
template <typename T>
double EvaluateAccuracy(const Model<T>& model, const LabeledDataset& data);

// Fraction of rows whose arg-max matches `labels`. Throws on empty logits.
template <typename T>
double AccuracyFromLogits(const Tensor<T>& logits, std::span<const int> labels);

double AccuracyFromPredictions(std::span<const int> predictions,
                               std::span<const int> labels);

}  // namespace prunex

#endif  // PRUNEX_TRAINING_H_
