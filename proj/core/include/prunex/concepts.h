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

#ifndef PRUNEX_CONCEPTS_H_
#define PRUNEX_CONCEPTS_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "prunex/dataset.h"
#include "prunex/model.h"
#include "prunex/tensor.h"

namespace prunex {

struct PatchCoord {
  std::size_t image = 0;  // index into the source dataset
  std::size_t y = 0;
  std::size_t x = 0;
  std::size_t size = 0;

  friend bool operator==(const PatchCoord&, const PatchCoord&) = default;
};

struct PatchSet {
  int class_id = 0;
  std::size_t patch_size = 0;
  std::size_t stride = 0;
  std::vector<PatchCoord> coords;
  Tensor<float> images;  // [n, H, W, C], resized to the model input size
  std::size_t source_images = 0;

  std::size_t size() const { return coords.size(); }
};

// Bilinear resampling of an [H,W,C] image with half-pixel centres.
Tensor<float> ResizeBilinear(const Tensor<float>& image, std::size_t out_height,
                             std::size_t out_width);

// Square crops at `stride` over the selected images, resized to
// out_height x out_width. Crops start at 0, stride, ... while they fit.
PatchSet CropAndResize(const LabeledDataset& data, std::span<const std::size_t> indices,
                       int class_id, std::size_t patch_size, std::size_t stride,
                       std::size_t out_height, std::size_t out_width);

// Patches from the images the model predicts as `class_id`. Throws
// std::runtime_error, listing the predicted-class histogram, when no image is
// predicted as that class.
template <typename T>
PatchSet ExtractPatches(const Model<T>& model, const LabeledDataset& data, int class_id,
                        std::size_t patch_size, std::size_t stride);

// Pooled post-ReLU output of the last residual block, [n, feature_width].
template <typename T>
Eigen::MatrixXd TapActivations(const Model<T>& model, const Tensor<float>& images);

struct NmfOptions {
  std::size_t rank = 10;
  std::size_t max_iters = 500;
  double tol = 1e-4;
  std::uint64_t seed = 0;
};

// A ~ U * W with U [n, r] and W [r, d], all entries >= 0.
struct ConceptBank {
  Eigen::MatrixXd concepts;      // W
  Eigen::MatrixXd coefficients;  // U
  std::size_t rank = 0;
  // Relative Frobenius error ||A - UW|| / ||A||, starting with the initial
  // factors and then one entry per accepted iteration. Stops early once an
  // update would not lower the error in floating point.
  std::vector<double> error_history;

  std::size_t iterations() const {
    return error_history.empty() ? 0 : error_history.size() - 1;
  }
};

// Multiplicative-update NMF. Throws std::invalid_argument for negative or
// non-finite entries or for a rank outside [1, min(n, d)].
ConceptBank Nmf(const Eigen::MatrixXd& activations, const NmfOptions& options);

// Class score for each row of a [samples, d] activation matrix.
using HeadFunction = std::function<Eigen::VectorXd(const Eigen::MatrixXd&)>;

template <typename T>
HeadFunction ClassHead(const Model<T>& model, int class_id);

enum class SobolOrder { kTotal, kFirst };
std::string_view SobolOrderName(SobolOrder order);
SobolOrder ParseSobolOrder(std::string_view name);

struct SobolOptions {
  std::size_t n_samples = 1024;
  std::uint64_t seed = 0;
  SobolOrder order = SobolOrder::kTotal;
};

struct ConceptImportance {
  std::vector<double> indices;  // one per concept, averaged over patches
  std::vector<double> std_errors;
  std::size_t n_samples = 0;
  SobolOrder order = SobolOrder::kTotal;
};

// Sobol indices of the concept coefficients. For each patch the coefficients
// u are multiplied by independent Uniform(0,1) masks, reconstructed as
// (mask * u) W and scored by `head`. Total indices use the Jansen estimator,
// first-order ones the Saltelli estimator. Throws when n_samples < 2.
ConceptImportance SobolImportance(const HeadFunction& head, const Eigen::MatrixXd& coefficients,
                                  const Eigen::MatrixXd& concepts, const SobolOptions& options);

// Concept ids by descending importance, ties by ascending id.
std::vector<std::size_t> RankConcepts(std::span<const double> importances);

struct ConceptEntry {
  std::size_t concept_id = 0;
  double importance = 0.0;
  double std_error = 0.0;
  std::vector<PatchCoord> top_patches;
};

struct ConceptReport {
  int class_id = 0;
  std::size_t n_samples = 0;
  SobolOrder order = SobolOrder::kTotal;
  std::vector<ConceptEntry> concepts;  // sorted by rank

  nlohmann::json ToJson() const;
  static ConceptReport FromJson(const nlohmann::json& j);
};

ConceptReport RankConceptsForReport(const ConceptBank& bank, const ConceptImportance& importance,
                                    const PatchSet& patches, std::size_t k_top);

// Writes concepts.json plus one concept_<id>.ppm grid of top patches per
// concept into `dir`.
ConceptReport RankAndExport(const ConceptBank& bank, const ConceptImportance& importance,
                            const PatchSet& patches, std::size_t k_top,
                            const std::filesystem::path& dir,
                            const nlohmann::json& provenance = nlohmann::json::object());

// Binary PPM of [H,W,3] images laid out in one row, separated by 1-pixel gaps.
void WritePpmRow(std::span<const Tensor<float>> images, const std::filesystem::path& path);

}  // namespace prunex

#endif  // PRUNEX_CONCEPTS_H_
