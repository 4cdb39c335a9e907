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

#include "prunex/dataset.h"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <random>
#include <stdexcept>

namespace prunex {
namespace {

float Quantize(double v) {
  const double c = std::clamp(v, 0.0, 1.0);
  return static_cast<float>(std::lround(c * 255.0)) / 255.0f;
}

// Textured background shared by both synthetic generators: a tinted base
// level, a random oriented sinusoid and per-pixel uniform noise.
class Background {
 public:
  Background(std::mt19937_64& rng, double base_lo, double base_hi) {
    std::uniform_real_distribution<double> base(base_lo, base_hi);
    std::uniform_real_distribution<double> tint(-0.05, 0.05);
    std::uniform_real_distribution<double> freq(0.2, 0.9);
    std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
    const double b = base(rng);
    for (double& c : base_) c = b + tint(rng);
    const double f = freq(rng), a = angle(rng);
    fx_ = f * std::cos(a);
    fy_ = f * std::sin(a);
    phase_ = angle(rng);
  }

  double At(std::size_t x, std::size_t y, std::size_t c,
            std::mt19937_64& rng) const {
    std::uniform_real_distribution<double> noise(-0.06, 0.06);
    const double wave = 0.07 * std::sin(fx_ * x + fy_ * y + phase_);
    return base_[c] + wave + noise(rng);
  }

 private:
  std::array<double, 3> base_{};
  double fx_ = 0, fy_ = 0, phase_ = 0;
};

double BoxSdf(double dx, double dy, double hx, double hy) {
  const double qx = std::abs(dx) - hx, qy = std::abs(dy) - hy;
  const double ox = std::max(qx, 0.0), oy = std::max(qy, 0.0);
  return std::hypot(ox, oy) + std::min(std::max(qx, qy), 0.0);
}

// Signed distance (negative inside) to one of the five base shapes centred at
// the origin with nominal radius r.
double ShapeSdf(int shape, double dx, double dy, double r) {
  switch (shape) {
    case 0:  // circle
      return std::hypot(dx, dy) - r;
    case 1:  // square
      return BoxSdf(dx, dy, 0.85 * r, 0.85 * r);
    case 2: {  // upward triangle; max of edge half-plane distances
      const double ax = 0, ay = -r, bx = -0.95 * r, by = 0.75 * r,
                   cx = 0.95 * r, cy = 0.75 * r;
      auto edge = [&](double x0, double y0, double x1, double y1) {
        const double ex = x1 - x0, ey = y1 - y0;
        const double len = std::hypot(ex, ey);
        // Outward normal for counter-clockwise winding in image coordinates.
        return ((dx - x0) * ey - (dy - y0) * ex) / len;
      };
      return std::max({edge(ax, ay, cx, cy), edge(cx, cy, bx, by),
                       edge(bx, by, ax, ay)});
    }
    case 3: {  // cross
      const double arm = 0.32 * r;
      return std::min(BoxSdf(dx, dy, r, arm), BoxSdf(dx, dy, arm, r));
    }
    default: {  // ring
      const double inner = 0.5 * r;
      return std::abs(std::hypot(dx, dy) - 0.5 * (r + inner)) -
             0.5 * (r - inner);
    }
  }
}

LabeledDataset Allocate(std::size_t n, std::size_t size, Split split) {
  LabeledDataset ds;
  ds.images = Tensor<float>({n, size, size, 3});
  ds.regions = Tensor<std::uint8_t>({n, size, size});
  ds.labels.resize(n);
  ds.split = split;
  ds.num_classes = 10;
  return ds;
}

}  // namespace

std::string_view SplitName(Split split) {
  return split == Split::kTrain ? "train" : "test";
}

void LabeledDataset::Validate() const {
  if (images.rank() != 4 && !(images.empty() && labels.empty())) {
    throw std::invalid_argument("dataset: images must be [N,H,W,C], got " +
                                ShapeToString(images.shape()));
  }
  if (!labels.empty() && images.dim(0) != labels.size()) {
    throw std::invalid_argument("dataset: " + std::to_string(images.dim(0)) +
                                " images but " + std::to_string(labels.size()) +
                                " labels");
  }
  if (num_classes < 2) throw std::invalid_argument("dataset: need >= 2 classes");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes) {
      throw std::invalid_argument("dataset: label " + std::to_string(labels[i]) +
                                  " at index " + std::to_string(i) +
                                  " outside [0," + std::to_string(num_classes) +
                                  ")");
    }
  }
  for (float v : images.data()) {
    if (!(v >= 0.0f && v <= 1.0f)) {
      throw std::invalid_argument("dataset: pixel value outside [0,1]");
    }
  }
  if (has_regions() &&
      regions.shape() != Shape{size(), height(), width()}) {
    throw std::invalid_argument("dataset: region mask shape " +
                                ShapeToString(regions.shape()) +
                                " does not match images");
  }
}

Tensor<float> LabeledDataset::Image(std::size_t index) const {
  const std::size_t stride = image_size();
  const auto begin = images.vec().begin() + static_cast<std::ptrdiff_t>(index * stride);
  return Tensor<float>({height(), width(), channels()},
                       std::vector<float>(begin, begin + static_cast<std::ptrdiff_t>(stride)));
}

LabeledDataset LabeledDataset::Subset(std::span<const std::size_t> indices) const {
  LabeledDataset out;
  out.images = Batch<float>(indices);
  out.labels.reserve(indices.size());
  for (std::size_t i : indices) out.labels.push_back(labels.at(i));
  if (has_regions()) {
    const std::size_t hw = height() * width();
    std::vector<std::uint8_t> r(indices.size() * hw);
    for (std::size_t b = 0; b < indices.size(); ++b) {
      std::copy_n(regions.data().data() + indices[b] * hw, hw, r.data() + b * hw);
    }
    out.regions = Tensor<std::uint8_t>({indices.size(), height(), width()}, std::move(r));
  }
  out.split = split;
  out.num_classes = num_classes;
  out.provenance = provenance;
  return out;
}

LabeledDataset LabeledDataset::Head(std::size_t count) const {
  std::vector<std::size_t> idx(std::min(count, size()));
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return Subset(idx);
}

LabeledDataset GenerateShapes(std::uint64_t seed, std::size_t n_per_class,
                              std::size_t size, Split split) {
  if (n_per_class < 1) throw std::invalid_argument("generate_shapes: n_per_class must be >= 1");
  if (size < 12) throw std::invalid_argument("generate_shapes: size must be >= 12");
  const std::size_t n = 10 * n_per_class;
  LabeledDataset ds = Allocate(n, size, split);
  ds.provenance = "shapes(seed=" + std::to_string(seed) +
                  ",n_per_class=" + std::to_string(n_per_class) +
                  ",size=" + std::to_string(size) + ")";
  std::mt19937_64 rng(seed);
  const double scale = static_cast<double>(size) / 32.0;
  std::uniform_real_distribution<double> radius(6.0 * scale, 10.0 * scale);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> bright(0.6, 1.0);
  const double stroke = 1.6 * std::max(1.0, scale);
  for (std::size_t i = 0; i < n; ++i) {
    // Interleave classes so that any prefix is roughly balanced.
    const int label = static_cast<int>(i % 10);
    const int shape = label / 2;
    const bool outline = label % 2 == 1;
    ds.labels[i] = label;
    Background bg(rng, 0.05, 0.35);
    const double r = radius(rng);
    const double margin = r + 1.0;
    const double cx = margin + unit(rng) * (size - 2 * margin);
    const double cy = margin + unit(rng) * (size - 2 * margin);
    std::array<double, 3> color{};
    for (double& c : color) c = bright(rng);
    float* img = ds.images.data().data() + i * size * size * 3;
    std::uint8_t* region = ds.regions.data().data() + i * size * size;
    for (std::size_t y = 0; y < size; ++y) {
      for (std::size_t x = 0; x < size; ++x) {
        const double d = ShapeSdf(shape, x + 0.5 - cx, y + 0.5 - cy, r);
        const bool on = outline ? std::abs(d) <= 0.5 * stroke : d <= 0.0;
        region[y * size + x] = on ? 1 : 0;
        for (std::size_t c = 0; c < 3; ++c) {
          const double v = bg.At(x, y, c, rng);
          img[(y * size + x) * 3 + c] = Quantize(on ? color[c] : v);
        }
      }
    }
  }
  return ds;
}

LabeledDataset GeneratePlanted(std::uint64_t seed, std::size_t n_per_class,
                               std::size_t size, std::size_t patch,
                               Split split) {
  if (n_per_class < 1) throw std::invalid_argument("generate_planted: n_per_class must be >= 1");
  if (patch < 1 || patch >= size) throw std::invalid_argument("generate_planted: patch must be in [1, size)");
  static constexpr std::array<std::array<double, 3>, 10> kPalette = {{
      {1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}, {0.0, 0.0, 1.0}, {1.0, 1.0, 0.0},
      {1.0, 0.0, 1.0}, {0.0, 1.0, 1.0}, {1.0, 0.5, 0.0}, {0.5, 0.0, 1.0},
      {1.0, 1.0, 1.0}, {0.0, 0.0, 0.0},
  }};
  const std::size_t n = 10 * n_per_class;
  LabeledDataset ds = Allocate(n, size, split);
  ds.provenance = "planted(seed=" + std::to_string(seed) +
                  ",n_per_class=" + std::to_string(n_per_class) +
                  ",size=" + std::to_string(size) +
                  ",patch=" + std::to_string(patch) + ")";
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pos(0, size - patch);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % 10);
    ds.labels[i] = label;
    Background bg(rng, 0.4, 0.6);
    const std::size_t px = pos(rng), py = pos(rng);
    float* img = ds.images.data().data() + i * size * size * 3;
    std::uint8_t* region = ds.regions.data().data() + i * size * size;
    for (std::size_t y = 0; y < size; ++y) {
      for (std::size_t x = 0; x < size; ++x) {
        const bool on = x >= px && x < px + patch && y >= py && y < py + patch;
        region[y * size + x] = on ? 1 : 0;
        for (std::size_t c = 0; c < 3; ++c) {
          const double v = bg.At(x, y, c, rng);
          img[(y * size + x) * 3 + c] = Quantize(on ? kPalette[label][c] : v);
        }
      }
    }
  }
  return ds;
}

namespace {

std::vector<unsigned char> ReadAll(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in),
                                    std::istreambuf_iterator<char>());
}

void AppendRecords(const std::filesystem::path& path,
                   std::vector<float>* pixels, std::vector<int>* labels) {
  const std::vector<unsigned char> bytes = ReadAll(path);
  if (bytes.empty()) {
    spdlog::warn("CIFAR file {} is empty; no records loaded", path.string());
    return;
  }
  if (bytes.size() % kCifarRecordBytes != 0) {
    throw std::runtime_error("CIFAR file " + path.string() + " has " +
                             std::to_string(bytes.size()) +
                             " bytes, not a multiple of the " +
                             std::to_string(kCifarRecordBytes) +
                             "-byte record size (truncated?)");
  }
  const std::size_t records = bytes.size() / kCifarRecordBytes;
  constexpr std::size_t plane = kCifarSide * kCifarSide;
  for (std::size_t r = 0; r < records; ++r) {
    const unsigned char* rec = bytes.data() + r * kCifarRecordBytes;
    if (rec[0] > 9) {
      throw std::runtime_error("CIFAR file " + path.string() + ": record " +
                               std::to_string(r) + " has label byte " +
                               std::to_string(rec[0]) + " > 9");
    }
    labels->push_back(rec[0]);
    for (std::size_t p = 0; p < plane; ++p) {
      for (std::size_t c = 0; c < 3; ++c) {
        pixels->push_back(static_cast<float>(rec[1 + c * plane + p]) / 255.0f);
      }
    }
  }
}

}  // namespace

LabeledDataset LoadCifarBinary(const std::filesystem::path& path, Split split) {
  std::vector<std::filesystem::path> files;
  if (std::filesystem::is_directory(path)) {
    if (split == Split::kTrain) {
      for (int b = 1; b <= 5; ++b) {
        files.push_back(path / ("data_batch_" + std::to_string(b) + ".bin"));
      }
    } else {
      files.push_back(path / "test_batch.bin");
    }
  } else {
    files.push_back(path);
  }
  std::vector<float> pixels;
  std::vector<int> labels;
  for (const auto& f : files) AppendRecords(f, &pixels, &labels);
  LabeledDataset ds;
  ds.labels = std::move(labels);
  ds.images = Tensor<float>({ds.labels.size(), kCifarSide, kCifarSide, 3},
                            std::move(pixels));
  ds.split = split;
  ds.num_classes = 10;
  ds.provenance = "cifar-binary(" + path.string() + ")";
  return ds;
}

void WriteCifarBinary(const LabeledDataset& dataset,
                      const std::filesystem::path& path) {
  if (!dataset.empty() && (dataset.height() != kCifarSide ||
                           dataset.width() != kCifarSide ||
                           dataset.channels() != 3)) {
    throw std::invalid_argument("write_cifar_binary: images must be 32x32x3");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  constexpr std::size_t plane = kCifarSide * kCifarSide;
  std::vector<unsigned char> rec(kCifarRecordBytes);
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (dataset.labels[i] < 0 || dataset.labels[i] > 9) {
      throw std::invalid_argument("write_cifar_binary: label outside [0,9]");
    }
    rec[0] = static_cast<unsigned char>(dataset.labels[i]);
    const float* img = dataset.images.data().data() + i * plane * 3;
    for (std::size_t p = 0; p < plane; ++p) {
      for (std::size_t c = 0; c < 3; ++c) {
        const double v = std::clamp(static_cast<double>(img[p * 3 + c]), 0.0, 1.0);
        rec[1 + c * plane + p] = static_cast<unsigned char>(std::lround(v * 255.0));
      }
    }
    out.write(reinterpret_cast<const char*>(rec.data()),
              static_cast<std::streamsize>(rec.size()));
  }
}

}  // namespace prunex
