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

#ifndef PRUNEX_PRUNING_H_
#define PRUNEX_PRUNING_H_

#include <cstddef>
#include <functional>
#include <optional>
#include <vector>

#include "prunex/dataset.h"
#include "prunex/mask.h"
#include "prunex/model.h"
#include "prunex/training.h"

namespace prunex {

// Global unstructured magnitude pruning. Pools |w| over every weight tensor
// (biases excluded) and zeroes the round(p * total) smallest, counting weights
// already zero in `prior` as pruned; those are never revived. Ties are broken
// by parameter name, then flat index. Throws std::invalid_argument if p is
// outside [0, 1) or `prior` is already sparser than p.
template <typename T>
PruningMask GlobalMagnitudePrune(const ParamStore<T>& params, double p,
                                 const PruningMask* prior = nullptr);

// Resets every parameter to its init snapshot, then zeroes pruned weights:
// weights become init * mask, biases become init.
template <typename T>
void RewindToInit(ParamStore<T>& params, const PruningMask& mask);

// Cumulative sparsity targets, each in [0,1) and strictly increasing.
struct SparsitySchedule {
  std::vector<double> targets = {0.10, 0.20, 0.30, 0.50, 0.70};
  std::size_t finetune_epochs = 15;

  void Validate() const;
};

template <typename T>
struct PruningLevel {
  double target_sparsity = 0.0;
  double measured_sparsity = 0.0;
  double accuracy = 0.0;
  Model<T> model;
  PruningMask mask;
  TrainLog log;
};

template <typename T>
using LevelCallback = std::function<void(const PruningLevel<T>&)>;

// Iterative prune -> rewind -> masked fine-tune -> evaluate, starting from an
// already-trained dense model. The returned list starts with the dense
// baseline (sparsity 0, all-ones mask) followed by one entry per target.
// `on_level` is invoked as soon as each level is finished.
template <typename T>
std::vector<PruningLevel<T>> RunLotteryTicketCycle(
    const Model<T>& dense, const LabeledDataset& train,
    const LabeledDataset& test, const SparsitySchedule& schedule,
    const TrainOptions& finetune, const LevelCallback<T>& on_level = {});

}  // namespace prunex

#endif  // PRUNEX_PRUNING_H_
