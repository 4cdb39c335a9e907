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

#include "prunex/pruning.h"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

namespace prunex {

template <typename T>
PruningMask GlobalMagnitudePrune(const ParamStore<T>& params, double p,
                                 const PruningMask* prior) {
  if (!(p >= 0.0 && p < 1.0)) {
    throw std::invalid_argument("prune: fraction " + std::to_string(p) +
                                " outside [0, 1)");
  }
  PruningMask mask = prior != nullptr ? *prior : AllOnesMask(params);
  CheckMaskCompatible(mask, params);
  mask.target_sparsity = p;

  // std::map iterates by name, which fixes the tie-break order.
  struct Candidate {
    double magnitude;
    std::uint8_t* bit;
  };
  std::vector<Candidate> candidates;
  const std::size_t total = mask.WeightCount();
  std::size_t already = 0;
  for (auto& [name, m] : mask.masks) {
    const Tensor<T>& w = params.at(name).value;
    for (std::size_t i = 0; i < m.size(); ++i) {
      if (m[i] == 0) {
        ++already;
      } else {
        candidates.push_back({std::abs(static_cast<double>(w[i])), &m[i]});
      }
    }
  }
  const auto target = static_cast<std::size_t>(std::llround(p * static_cast<double>(total)));
  if (already > target) {
    throw std::invalid_argument("prune: prior mask already has sparsity " +
                                std::to_string(static_cast<double>(already) / total) +
                                " > requested " + std::to_string(p));
  }
  const std::size_t to_prune = target - already;
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const Candidate& a, const Candidate& b) {
                     return a.magnitude < b.magnitude;
                   });
  for (std::size_t i = 0; i < to_prune; ++i) *candidates[i].bit = 0;
  return mask;
}

template <typename T>
void RewindToInit(ParamStore<T>& params, const PruningMask& mask) {
  CheckMaskCompatible(mask, params);
  params.CheckSnapshotShapes();
  for (auto& p : params.entries()) p.value = p.init;
  ApplyMask(mask, params);
}

void SparsitySchedule::Validate() const {
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (!(targets[i] >= 0.0 && targets[i] < 1.0)) {
      throw std::invalid_argument("schedule: target " + std::to_string(targets[i]) +
                                  " outside [0, 1)");
    }
    if (i > 0 && !(targets[i] > targets[i - 1])) {
      throw std::invalid_argument("schedule: targets must be strictly increasing");
    }
  }
}

template <typename T>
std::vector<PruningLevel<T>> RunLotteryTicketCycle(
    const Model<T>& dense, const LabeledDataset& train,
    const LabeledDataset& test, const SparsitySchedule& schedule,
    const TrainOptions& finetune, const LevelCallback<T>& on_level) {
  schedule.Validate();
  std::vector<PruningLevel<T>> levels;
  levels.push_back({0.0, 0.0, EvaluateAccuracy(dense, test), dense,
                    AllOnesMask(dense.params()), {}});
  if (on_level) on_level(levels.back());

  for (double target : schedule.targets) {
    const PruningLevel<T>& prev = levels.back();
    PruningMask mask = GlobalMagnitudePrune(prev.model.params(), target, &prev.mask);
    Model<T> model = prev.model;
    RewindToInit(model.params(), mask);
    TrainOptions opts = finetune;
    opts.epochs = schedule.finetune_epochs;
    TrainLog log = Train(model, train, opts, &mask);
    const double acc = EvaluateAccuracy(model, test);
    spdlog::info("pruned to {:.1f}% (measured {:.4f}): test accuracy {:.4f}",
                 100.0 * target, mask.Sparsity(), acc);
    const double measured = mask.Sparsity();
    levels.push_back({target, measured, acc, std::move(model), std::move(mask),
                      std::move(log)});
    if (on_level) on_level(levels.back());
  }
  return levels;
}

template PruningMask GlobalMagnitudePrune(const ParamStore<float>&, double,
                                          const PruningMask*);
template PruningMask GlobalMagnitudePrune(const ParamStore<double>&, double,
                                          const PruningMask*);
template void RewindToInit(ParamStore<float>&, const PruningMask&);
template void RewindToInit(ParamStore<double>&, const PruningMask&);
template std::vector<PruningLevel<float>> RunLotteryTicketCycle(
    const Model<float>&, const LabeledDataset&, const LabeledDataset&,
    const SparsitySchedule&, const TrainOptions&, const LevelCallback<float>&);
template std::vector<PruningLevel<double>> RunLotteryTicketCycle(
    const Model<double>&, const LabeledDataset&, const LabeledDataset&,
    const SparsitySchedule&, const TrainOptions&, const LevelCallback<double>&);

}  // namespace prunex
