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

#ifndef PRUNEX_MASK_H_
#define PRUNEX_MASK_H_

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>

#include "prunex/model.h"
#include "prunex/tensor.h"

namespace prunex {

// Binary survival mask over the weight parameters of a ParamStore
// (1 = surviving, 0 = pruned). Bias parameters never have entries.
struct PruningMask {
  std::map<std::string, Tensor<std::uint8_t>> masks;
  double target_sparsity = 0.0;

  std::size_t WeightCount() const;
  std::size_t ZeroCount() const;
  // Exactly ZeroCount() / WeightCount().
  double Sparsity() const;

  friend bool operator==(const PruningMask&, const PruningMask&) = default;
};

template <typename T>
PruningMask AllOnesMask(const ParamStore<T>& params);

// Throws ShapeError / std::invalid_argument unless `mask` covers exactly the
// weight parameters of `params` with matching shapes.
template <typename T>
void CheckMaskCompatible(const PruningMask& mask, const ParamStore<T>& params);

// Multiplies every masked weight by its mask bit.
template <typename T>
void ApplyMask(const PruningMask& mask, ParamStore<T>& params);

}  // namespace prunex

#endif  // PRUNEX_MASK_H_
