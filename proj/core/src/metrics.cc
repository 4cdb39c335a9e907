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

#include "prunex/metrics.h"

#include "prunex/training.h"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

namespace prunex {
namespace {

struct Grid {
  std::size_t height, width, channels;

  // Calls fn(neighbour_pixel) for every in-bounds 8-neighbour of pixel p.
  template <typename Fn>
  void ForNeighbors(std::size_t p, Fn&& fn) const {
    const auto y = static_cast<std::ptrdiff_t>(p / width);
    const auto x = static_cast<std::ptrdiff_t>(p % width);
    for (std::ptrdiff_t dy = -1; dy <= 1; ++dy) {
      for (std::ptrdiff_t dx = -1; dx <= 1; ++dx) {
        if (dy == 0 && dx == 0) continue;
        const std::ptrdiff_t ny = y + dy, nx = x + dx;
        if (ny < 0 || nx < 0 || ny >= static_cast<std::ptrdiff_t>(height) ||
            nx >= static_cast<std::ptrdiff_t>(width)) {
          continue;
        }
        fn(static_cast<std::size_t>(ny) * width + static_cast<std::size_t>(nx));
      }
    }
  }
};

enum PixelRole : std::uint8_t { kKept, kEdge, kInterior };

// Classifies pixels and fills kEdge pixels (removed, with a kept neighbour)
// with the mean of their kept neighbours. Removed pixels of `out` that are
// interior are left for the caller.
std::vector<PixelRole> FillEdges(const Grid& grid, const Tensor<double>& image,
                                 std::span<const std::uint8_t> removed, Tensor<double>& out) {
  const std::size_t pixels = grid.height * grid.width, c = grid.channels;
  std::vector<PixelRole> role(pixels, kKept);
  for (std::size_t p = 0; p < pixels; ++p) {
    if (removed[p] == 0) continue;
    std::vector<double> sum(c, 0.0);
    std::size_t kept = 0;
    grid.ForNeighbors(p, [&](std::size_t q) {
      if (removed[q] != 0) return;
      ++kept;
      for (std::size_t ch = 0; ch < c; ++ch) sum[ch] += image[q * c + ch];
    });
    role[p] = kept > 0 ? kEdge : kInterior;
    for (std::size_t ch = 0; ch < c; ++ch) {
      out[p * c + ch] = kept > 0 ? sum[ch] / static_cast<double>(kept) : 0.0;
    }
  }
  return role;
}

Grid CheckImputeArgs(const Tensor<double>& image, std::span<const std::uint8_t> removed) {
  if (image.rank() != 3) {
    throw ShapeError("impute: expected an [H,W,C] image, got " + ShapeToString(image.shape()));
  }
  const Grid grid{image.dim(0), image.dim(1), image.dim(2)};
  if (removed.size() != grid.height * grid.width) {
    throw MakeShapeError("impute mask", Shape{removed.size()}, Shape{grid.height, grid.width});
  }
  return grid;
}

}  // namespace

GiniScore Gini(std::span<const double> values) {
  const std::size_t d = values.size();
  std::vector<double> a(d);
  double mx = 0;
  for (std::size_t i = 0; i < d; ++i) {
    if (!std::isfinite(values[i])) {
      throw std::invalid_argument("gini: non-finite value at index " + std::to_string(i));
    }
    a[i] = std::abs(values[i]);
    mx = std::max(mx, a[i]);
  }
  if (mx == 0) throw std::invalid_argument("gini: all-zero attribution has no defined Gini index");
  // Dividing by the maximum keeps one-hot and constant inputs exact.
  for (double& v : a) v /= mx;
  std::sort(a.begin(), a.end());
  const double total = std::accumulate(a.begin(), a.end(), 0.0);
  // sum_k a_(k) (2k - d - 1), summed by pairing the k-th smallest with the
  // k-th largest so every term is a non-negative difference.
  double weighted = 0;
  for (std::size_t k = 1; 2 * k <= d; ++k) {
    weighted += (a[d - k] - a[k - 1]) * static_cast<double>(d + 1 - 2 * k);
  }
  const double scaled_total = static_cast<double>(d) * total;
  return {1.0 - (scaled_total - weighted) / scaled_total, d};
}

MeanStd Summarize(std::span<const double> values) {
  if (values.empty()) return {};
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double sq = 0;
  for (double v : values) sq += (v - mean) * (v - mean);
  return {mean, std::sqrt(sq / n)};
}

void PerturbationCurve::Validate() const {
  if (fractions.size() != accuracies.size()) {
    throw std::invalid_argument("curve: fraction/accuracy count mismatch");
  }
  if (fractions.empty() || fractions[0] != 0.0) {
    throw std::invalid_argument("curve: fractions must start at 0");
  }
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    if (i > 0 && !(fractions[i] > fractions[i - 1])) {
      throw std::invalid_argument("curve: fractions must increase strictly");
    }
    if (!(fractions[i] < 1.0)) throw std::invalid_argument("curve: fraction >= 1");
    if (!(accuracies[i] >= 0.0 && accuracies[i] <= 1.0)) {
      throw std::invalid_argument("curve: accuracy outside [0,1]");
    }
  }
}

AOPCScore Aopc(const PerturbationCurve& curve) {
  curve.Validate();
  if (curve.fractions.size() < 2) throw std::invalid_argument("aopc: curve needs >= 2 points");
  double drop = 0;
  for (std::size_t k = 1; k < curve.accuracies.size(); ++k) {
    drop += curve.accuracies[0] - curve.accuracies[k];
  }
  return {drop / static_cast<double>(curve.accuracies.size() - 1)};
}

Tensor<double> ImputeNeighborMean(const Tensor<double>& image,
                                  std::span<const std::uint8_t> removed) {
  const Grid grid = CheckImputeArgs(image, removed);
  const std::size_t pixels = grid.height * grid.width, c = grid.channels;
  Tensor<double> out = image;
  if (std::none_of(removed.begin(), removed.end(), [](auto r) { return r == 0; })) {
    std::fill(out.data().begin(), out.data().end(), 0.0);
    return out;
  }
  const std::vector<PixelRole> role = FillEdges(grid, image, removed, out);

  std::vector<std::ptrdiff_t> unknown(pixels, -1);
  std::vector<std::size_t> interior;
  for (std::size_t p = 0; p < pixels; ++p) {
    if (role[p] == kInterior) {
      unknown[p] = static_cast<std::ptrdiff_t>(interior.size());
      interior.push_back(p);
    }
  }
  if (interior.empty()) return out;

  // deg(p) x_p - sum_{interior q ~ p} x_q = sum_{edge q ~ p} value_q
  const auto n = static_cast<Eigen::Index>(interior.size());
  std::vector<Eigen::Triplet<double>> triplets;
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(c));
  for (Eigen::Index row = 0; row < n; ++row) {
    const std::size_t p = interior[static_cast<std::size_t>(row)];
    double degree = 0;
    grid.ForNeighbors(p, [&](std::size_t q) {
      degree += 1;
      if (unknown[q] >= 0) {
        triplets.emplace_back(row, unknown[q], -1.0);
      } else {
        for (std::size_t ch = 0; ch < c; ++ch) {
          rhs(row, static_cast<Eigen::Index>(ch)) += out[q * c + ch];
        }
      }
    });
    triplets.emplace_back(row, row, degree);
  }
  Eigen::SparseMatrix<double> system(n, n);
  system.setFromTriplets(triplets.begin(), triplets.end());
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(system);
  if (solver.info() != Eigen::Success) throw std::runtime_error("impute: factorization failed");
  const Eigen::MatrixXd solution = solver.solve(rhs);
  for (Eigen::Index row = 0; row < n; ++row) {
    const std::size_t p = interior[static_cast<std::size_t>(row)];
    for (std::size_t ch = 0; ch < c; ++ch) {
      out[p * c + ch] = solution(row, static_cast<Eigen::Index>(ch));
    }
  }
  return out;
}

Tensor<double> ImputeNeighborMeanJacobi(const Tensor<double>& image,
                                        std::span<const std::uint8_t> removed,
                                        double tolerance, std::size_t max_sweeps) {
  const Grid grid = CheckImputeArgs(image, removed);
  const std::size_t pixels = grid.height * grid.width, c = grid.channels;
  Tensor<double> out = image;
  std::vector<double> seed(c, 0.0);
  std::size_t kept = 0;
  for (std::size_t p = 0; p < pixels; ++p) {
    if (removed[p] != 0) continue;
    ++kept;
    for (std::size_t ch = 0; ch < c; ++ch) seed[ch] += image[p * c + ch];
  }
  if (kept == 0) {
    std::fill(out.data().begin(), out.data().end(), 0.0);
    return out;
  }
  for (double& s : seed) s /= static_cast<double>(kept);
  const std::vector<PixelRole> role = FillEdges(grid, image, removed, out);
  for (std::size_t p = 0; p < pixels; ++p) {
    if (role[p] != kInterior) continue;
    for (std::size_t ch = 0; ch < c; ++ch) out[p * c + ch] = seed[ch];
  }
  Tensor<double> next = out;
  for (std::size_t sweep = 0; sweep < max_sweeps; ++sweep) {
    double change = 0;
    for (std::size_t p = 0; p < pixels; ++p) {
      if (role[p] != kInterior) continue;
      for (std::size_t ch = 0; ch < c; ++ch) {
        double sum = 0, count = 0;
        grid.ForNeighbors(p, [&](std::size_t q) {
          sum += out[q * c + ch];
          count += 1;
        });
        next[p * c + ch] = sum / count;
        change = std::max(change, std::abs(next[p * c + ch] - out[p * c + ch]));
      }
    }
    std::swap(out, next);
    if (change < tolerance) break;
  }
  return out;
}

std::vector<std::size_t> MorfOrder(const Tensor<double>& map) {
  std::vector<std::size_t> order(map.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return map[a] > map[b]; });
  return order;
}

template <typename T>
Classifier ModelClassifier(const Model<T>& model) {
  return [&model](const Tensor<float>& images) { return model.Predict(images); };
}

LabeledDataset RemoveTopPixels(const LabeledDataset& data, std::span<const AttributionMap> maps,
                               double fraction, const Imputer& imputer) {
  if (!(fraction >= 0.0 && fraction < 1.0)) {
    throw std::invalid_argument("road: fraction " + std::to_string(fraction) +
                                " outside [0, 1)");
  }
  if (maps.size() != data.size()) {
    throw std::invalid_argument("road: " + std::to_string(maps.size()) + " maps for " +
                                std::to_string(data.size()) + " images");
  }
  LabeledDataset out = data;
  const std::size_t h = data.height(), w = data.width(), c = data.channels();
  const std::size_t pixels = h * w;
  const auto count = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(pixels)));
  if (count == 0) return out;
  for (std::size_t n = 0; n < data.size(); ++n) {
    if (maps[n].values.shape() != Shape{h, w}) {
      throw MakeShapeError("road map", maps[n].values.shape(), Shape{h, w});
    }
    const std::vector<std::size_t> order = MorfOrder(maps[n].values);
    std::vector<std::uint8_t> removed(pixels, 0);
    for (std::size_t i = 0; i < count; ++i) removed[order[i]] = 1;
    const Tensor<double> image = data.Image(n).Cast<double>();
    const Tensor<double> filled = imputer(image, removed);
    float* dst = out.images.data().data() + n * pixels * c;
    for (std::size_t i = 0; i < pixels * c; ++i) dst[i] = static_cast<float>(filled[i]);
  }
  return out;
}

PerturbationCurve RoadMorf(const Classifier& classify, const LabeledDataset& data,
                           std::span<const AttributionMap> maps,
                           std::span<const double> fractions, const Imputer& imputer) {
  if (data.empty()) throw std::invalid_argument("road: empty dataset");
  PerturbationCurve curve;
  for (double f : fractions) {
    const LabeledDataset perturbed = RemoveTopPixels(data, maps, f, imputer);
    curve.fractions.push_back(f);
    curve.accuracies.push_back(AccuracyFromPredictions(classify(perturbed.images), data.labels));
  }
  curve.Validate();
  return curve;
}

std::vector<AttributionMap> RandomAttributions(const LabeledDataset& data, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::vector<AttributionMap> maps(data.size());
  for (std::size_t n = 0; n < data.size(); ++n) {
    Tensor<double> v({data.height(), data.width()});
    for (double& x : v.data()) x = uniform(rng);
    maps[n].signed_values = v.Reshaped({data.height(), data.width(), 1});
    maps[n].values = std::move(v);
    maps[n].target_class = data.labels[n];
  }
  return maps;
}

std::vector<AttributionMap> RegionAttributions(const LabeledDataset& data) {
  if (!data.has_regions()) throw std::invalid_argument("region attributions: dataset has no regions");
  const std::size_t pixels = data.height() * data.width();
  std::vector<AttributionMap> maps(data.size());
  for (std::size_t n = 0; n < data.size(); ++n) {
    Tensor<double> v({data.height(), data.width()});
    for (std::size_t p = 0; p < pixels; ++p) v[p] = data.regions[n * pixels + p] != 0 ? 1.0 : 0.0;
    maps[n].signed_values = v.Reshaped({data.height(), data.width(), 1});
    maps[n].values = std::move(v);
    maps[n].target_class = data.labels[n];
  }
  return maps;
}

std::vector<double> DefaultFractions() {
  std::vector<double> f;
  for (int i = 0; i < 10; ++i) f.push_back(i / 10.0);
  return f;
}

template Classifier ModelClassifier(const Model<float>&);
template Classifier ModelClassifier(const Model<double>&);

}  // namespace prunex
