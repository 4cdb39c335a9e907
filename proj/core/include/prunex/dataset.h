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

#ifndef PRUNEX_DATASET_H_
#define PRUNEX_DATASET_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "prunex/tensor.h"

namespace prunex {

enum class Split { kTrain, kTest };

std::string_view SplitName(Split split);

struct LabeledDataset {
  Tensor<float> images;             // [N, H, W, C], values in [0, 1]
  std::vector<int> labels;          // N entries, each < num_classes
  Tensor<std::uint8_t> regions;     // [N, H, W] class-determining pixels, or empty
  Split split = Split::kTrain;
  int num_classes = 10;
  std::string provenance;

  std::size_t size() const { return labels.size(); }
  bool empty() const { return labels.empty(); }
  std::size_t height() const { return images.rank() == 4 ? images.dim(1) : 0; }
  std::size_t width() const { return images.rank() == 4 ? images.dim(2) : 0; }
  std::size_t channels() const { return images.rank() == 4 ? images.dim(3) : 0; }
  std::size_t image_size() const { return height() * width() * channels(); }
  bool has_regions() const { return !regions.empty(); }

  // Throws std::invalid_argument describing the first violated invariant.
  void Validate() const;

  // [H, W, C] copy of one image.
  Tensor<float> Image(std::size_t index) const;

  // Images at `indices`, stacked as [n, H, W, C] and converted to T.
  template <typename T>
  Tensor<T> Batch(std::span<const std::size_t> indices) const {
    const std::size_t stride = image_size();
    AlignedVector<T> data(indices.size() * stride);
    for (std::size_t b = 0; b < indices.size(); ++b) {
      const float* src = images.data().data() + indices[b] * stride;
      for (std::size_t i = 0; i < stride; ++i) {
        data[b * stride + i] = static_cast<T>(src[i]);
      }
    }
    return Tensor<T>({indices.size(), height(), width(), channels()},
                     std::move(data));
  }

  LabeledDataset Subset(std::span<const std::size_t> indices) const;
  // First `count` images (or all when fewer exist).
  LabeledDataset Head(std::size_t count) const;
};

// Seeded 10-class synthetic set: five shapes (circle, square, triangle,
// cross, ring) times two fill styles (solid, outline) on a textured noisy
// background. Class id = 2 * shape + fill. Pixels are quantized to k/255 so
// that the CIFAR binary export round-trips exactly. The drawn shape is
// recorded per image in `regions`.
LabeledDataset GenerateShapes(std::uint64_t seed, std::size_t n_per_class,
                              std::size_t size = 32, Split split = Split::kTrain);

// Seeded 10-class set whose label is carried only by a small square patch of
// a class-specific colour placed at a random position on textured noise. The
// patch is recorded in `regions`.
LabeledDataset GeneratePlanted(std::uint64_t seed, std::size_t n_per_class,
                               std::size_t size = 32, std::size_t patch = 4,
                               Split split = Split::kTrain);

inline constexpr std::size_t kCifarSide = 32;
inline constexpr std::size_t kCifarRecordBytes = 1 + 3 * kCifarSide * kCifarSide;

// Loads CIFAR-10 binary records (1 label byte followed by the 1024-byte red,
// green and blue planes). `path` is either one batch file or a directory with
// the standard data_batch_{1..5}.bin / test_batch.bin names.
LabeledDataset LoadCifarBinary(const std::filesystem::path& path, Split split);

// Writes 32x32x3 images in the same record layout (pixels rounded to bytes).
void WriteCifarBinary(const LabeledDataset& dataset,
                      const std::filesystem::path& path);

}  // namespace prunex

#endif  // PRUNEX_DATASET_H_
