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

#ifndef PRUNEX_METRICS_H_
#define PRUNEX_METRICS_H_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "prunex/attribution.h"
#include "prunex/dataset.h"
#include "prunex/model.h"
#include "prunex/tensor.h"

namespace prunex {

struct GiniScore {
  double value = 0.0;
  std::size_t d = 0;
};

// Gini index of |values| (0 = uniform mass, 1 - 1/d = one-hot). Throws
// std::invalid_argument when every value is zero or any is non-finite.
GiniScore Gini(std::span<const double> values);
inline GiniScore Gini(const AttributionMap& map) { return Gini(map.values.data()); }

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
};
MeanStd Summarize(std::span<const double> values);

// Accuracy after removing increasing fractions of the most relevant pixels.
struct PerturbationCurve {
  std::vector<double> fractions;
  std::vector<double> accuracies;
  std::string ordering = "MoRF";

  // Throws unless fractions start at 0, increase strictly, stay below 1, and
  // accuracies lie in [0,1] with one per fraction.
  void Validate() const;
};

struct AOPCScore {
  double value = 0.0;
};

// Mean of (acc_0 - acc_k) over the nonzero fractions. Needs >= 2 points.
AOPCScore Aopc(const PerturbationCurve& curve);

// Fills the removed pixels of an [H,W,C] image (`removed` holds one flag per
// pixel). A removed pixel with at least one kept 8-neighbour becomes the mean
// of its kept neighbours; removed pixels enclosed by removed pixels take the
// mean of all their neighbours, which is solved exactly as a sparse linear
// system. Kept pixels are returned unchanged, and the result never depends on
// the original values of removed pixels. With nothing kept, every pixel
// becomes 0.
using Imputer =
    std::function<Tensor<double>(const Tensor<double>&, std::span<const std::uint8_t>)>;
Tensor<double> ImputeNeighborMean(const Tensor<double>& image,
                                  std::span<const std::uint8_t> removed);

// Same fixed point reached by Jacobi sweeps seeded with the mean of the kept
// pixels, stopping once no value moves by more than `tolerance`.
Tensor<double> ImputeNeighborMeanJacobi(const Tensor<double>& image,
                                        std::span<const std::uint8_t> removed,
                                        double tolerance = 1e-4,
                                        std::size_t max_sweeps = 1000000);

// Pixel indices by descending attribution, ties by ascending flat index.
std::vector<std::size_t> MorfOrder(const Tensor<double>& map);

// Predicts one class per image of an [N,H,W,C] batch.
using Classifier = std::function<std::vector<int>(const Tensor<float>&)>;

template <typename T>
Classifier ModelClassifier(const Model<T>& model);

// ROAD with the most-relevant-first ordering: for each fraction, removes the
// round(fraction * H * W) top-ranked pixels of every image, imputes them, and
// records the accuracy. Throws for a fraction outside [0,1) or a map count
// that differs from the dataset size.
PerturbationCurve RoadMorf(const Classifier& classify, const LabeledDataset& data,
                           std::span<const AttributionMap> maps,
                           std::span<const double> fractions,
                           const Imputer& imputer = ImputeNeighborMean);

// Copy of `data` with the top round(fraction * H * W) pixels of every image
// (by its map) replaced through `imputer`.
LabeledDataset RemoveTopPixels(const LabeledDataset& data, std::span<const AttributionMap> maps,
                               double fraction, const Imputer& imputer = ImputeNeighborMean);

// Maps filled with i.i.d. uniform values: a random-ranking reference.
std::vector<AttributionMap> RandomAttributions(const LabeledDataset& data, std::uint64_t seed);

// Maps equal to 1 on each image's recorded class region and 0 elsewhere.
std::vector<AttributionMap> RegionAttributions(const LabeledDataset& data);

std::vector<double> DefaultFractions();  // 0, 0.1, ..., 0.9

}  // namespace prunex

#endif  // PRUNEX_METRICS_H_
