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

#include "prunex/concepts.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

namespace prunex {
namespace {

std::uint64_t SplitMix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Uniform [0,1) draw addressed by (seed, counter), independent of call order.
double CounterUniform(std::uint64_t seed, std::uint64_t counter) {
  const std::uint64_t bits = SplitMix64(SplitMix64(seed) ^ counter);
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

double FrobeniusError(const Eigen::MatrixXd& a, const Eigen::MatrixXd& u,
                      const Eigen::MatrixXd& w) {
  return (a - u * w).norm();
}

}  // namespace

Tensor<float> ResizeBilinear(const Tensor<float>& image, std::size_t out_height,
                             std::size_t out_width) {
  if (image.rank() != 3 || out_height == 0 || out_width == 0) {
    throw ShapeError("resize: expected an [H,W,C] image, got " + ShapeToString(image.shape()));
  }
  const std::size_t h = image.dim(0), w = image.dim(1), c = image.dim(2);
  Tensor<float> out({out_height, out_width, c});
  const double sy = static_cast<double>(h) / static_cast<double>(out_height);
  const double sx = static_cast<double>(w) / static_cast<double>(out_width);
  auto source = [](std::size_t dst, double scale, std::size_t extent, std::size_t& lo,
                   std::size_t& hi) {
    double s = (static_cast<double>(dst) + 0.5) * scale - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(extent - 1));
    lo = static_cast<std::size_t>(std::floor(s));
    hi = std::min(lo + 1, extent - 1);
    return s - static_cast<double>(lo);
  };
  for (std::size_t y = 0; y < out_height; ++y) {
    std::size_t y0, y1;
    const double fy = source(y, sy, h, y0, y1);
    for (std::size_t x = 0; x < out_width; ++x) {
      std::size_t x0, x1;
      const double fx = source(x, sx, w, x0, x1);
      for (std::size_t ch = 0; ch < c; ++ch) {
        auto at = [&](std::size_t yy, std::size_t xx) {
          return static_cast<double>(image[(yy * w + xx) * c + ch]);
        };
        const double top = at(y0, x0) + fx * (at(y0, x1) - at(y0, x0));
        const double bottom = at(y1, x0) + fx * (at(y1, x1) - at(y1, x0));
        out[(y * out_width + x) * c + ch] = static_cast<float>(top + fy * (bottom - top));
      }
    }
  }
  return out;
}

PatchSet CropAndResize(const LabeledDataset& data, std::span<const std::size_t> indices,
                       int class_id, std::size_t patch_size, std::size_t stride,
                       std::size_t out_height, std::size_t out_width) {
  const std::size_t h = data.height(), w = data.width(), c = data.channels();
  if (patch_size == 0 || stride == 0 || patch_size > std::min(h, w)) {
    throw std::invalid_argument("patches: patch size " + std::to_string(patch_size) +
                                " / stride " + std::to_string(stride) + " invalid for " +
                                std::to_string(h) + "x" + std::to_string(w) + " images");
  }
  PatchSet set;
  set.class_id = class_id;
  set.patch_size = patch_size;
  set.stride = stride;
  set.source_images = indices.size();
  std::vector<float> pixels;
  for (std::size_t index : indices) {
    const Tensor<float> image = data.Image(index);
    for (std::size_t y = 0; y + patch_size <= h; y += stride) {
      for (std::size_t x = 0; x + patch_size <= w; x += stride) {
        Tensor<float> crop({patch_size, patch_size, c});
        for (std::size_t yy = 0; yy < patch_size; ++yy) {
          for (std::size_t xx = 0; xx < patch_size; ++xx) {
            for (std::size_t ch = 0; ch < c; ++ch) {
              crop[(yy * patch_size + xx) * c + ch] = image[((y + yy) * w + x + xx) * c + ch];
            }
          }
        }
        const Tensor<float> resized =
            patch_size == out_height && patch_size == out_width
                ? std::move(crop)
                : ResizeBilinear(crop, out_height, out_width);
        pixels.insert(pixels.end(), resized.vec().begin(), resized.vec().end());
        set.coords.push_back({index, y, x, patch_size});
      }
    }
  }
  set.images = Tensor<float>({set.coords.size(), out_height, out_width, c}, std::move(pixels));
  return set;
}

template <typename T>
PatchSet ExtractPatches(const Model<T>& model, const LabeledDataset& data, int class_id,
                        std::size_t patch_size, std::size_t stride) {
  if (data.empty()) throw std::invalid_argument("patches: empty dataset");
  const std::vector<int> predicted = model.Predict(data.images);
  std::vector<std::size_t> selected;
  std::map<int, std::size_t> histogram;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    ++histogram[predicted[i]];
    if (predicted[i] == class_id) selected.push_back(i);
  }
  if (selected.empty()) {
    std::string stats;
    for (const auto& [cls, count] : histogram) {
      stats += (stats.empty() ? "" : ", ") + std::to_string(cls) + ":" + std::to_string(count);
    }
    throw std::runtime_error("patches: no image of " + std::to_string(data.size()) +
                             " is predicted as class " + std::to_string(class_id) +
                             " (predicted counts " + stats + ")");
  }
  const ModelConfig& config = model.config();
  return CropAndResize(data, selected, class_id, patch_size, stride, config.input_height,
                       config.input_width);
}

template <typename T>
Eigen::MatrixXd TapActivations(const Model<T>& model, const Tensor<float>& images) {
  const std::size_t n = images.rank() == 4 ? images.dim(0) : 0;
  const std::size_t d = model.config().feature_width();
  Eigen::MatrixXd a(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  constexpr std::size_t kBatch = 128;
  const std::size_t stride = n == 0 ? 0 : images.size() / n;
  for (std::size_t start = 0; start < n; start += kBatch) {
    const std::size_t count = std::min(kBatch, n - start);
    Shape shape = images.shape();
    shape[0] = count;
    std::vector<T> chunk(count * stride);
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      chunk[i] = static_cast<T>(images[start * stride + i]);
    }
    const Tensor<T> pooled = model.PooledFeatures(Tensor<T>(shape, std::move(chunk)));
    for (std::size_t i = 0; i < count; ++i) {
      for (std::size_t j = 0; j < d; ++j) {
        a(static_cast<Eigen::Index>(start + i), static_cast<Eigen::Index>(j)) =
            static_cast<double>(pooled[i * d + j]);
      }
    }
  }
  return a;
}

ConceptBank Nmf(const Eigen::MatrixXd& activations, const NmfOptions& options) {
  const Eigen::Index n = activations.rows(), d = activations.cols();
  const auto r = static_cast<Eigen::Index>(options.rank);
  if (r < 1 || r > std::min(n, d)) {
    throw std::invalid_argument("nmf: rank " + std::to_string(options.rank) +
                                " outside [1, min(" + std::to_string(n) + ", " +
                                std::to_string(d) + ")]");
  }
  for (Eigen::Index i = 0; i < activations.size(); ++i) {
    const double v = activations.data()[i];
    if (!std::isfinite(v) || v < 0) {
      throw std::invalid_argument("nmf: entry " + std::to_string(v) +
                                  " is negative or non-finite");
    }
  }
  const double norm = activations.norm();
  ConceptBank bank;
  bank.rank = options.rank;
  if (norm == 0) {
    bank.coefficients = Eigen::MatrixXd::Zero(n, r);
    bank.concepts = Eigen::MatrixXd::Zero(r, d);
    bank.error_history = {0.0};
    return bank;
  }
  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const double scale = std::sqrt(activations.mean() / static_cast<double>(r));
  auto draw = [&] { return (1.0 - uniform(rng)) * scale; };  // (0, 1] * scale
  Eigen::MatrixXd u(n, r), w(r, d);
  for (Eigen::Index i = 0; i < u.size(); ++i) u.data()[i] = draw();
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = draw();

  constexpr double kEps = std::numeric_limits<double>::min();
  bank.error_history.push_back(FrobeniusError(activations, u, w) / norm);
  for (std::size_t it = 0; it < options.max_iters; ++it) {
    const Eigen::MatrixXd u_num = activations * w.transpose();
    const Eigen::MatrixXd u_den = u * (w * w.transpose());
    Eigen::MatrixXd next_u = u.cwiseProduct(u_num.cwiseQuotient(u_den.array().max(kEps).matrix()));
    const Eigen::MatrixXd w_num = next_u.transpose() * activations;
    const Eigen::MatrixXd w_den = (next_u.transpose() * next_u) * w;
    Eigen::MatrixXd next_w = w.cwiseProduct(w_num.cwiseQuotient(w_den.array().max(kEps).matrix()));
    const double prev = bank.error_history.back();
    const double err = FrobeniusError(activations, next_u, next_w) / norm;
    // The exact updates never increase the error; an increase here is
    // rounding at the precision floor, so keep the previous factors and stop.
    if (err > prev) break;
    u = std::move(next_u);
    w = std::move(next_w);
    bank.error_history.push_back(err);
    if (prev == 0 || (prev - err) / prev < options.tol) break;
  }
  bank.coefficients = std::move(u);
  bank.concepts = std::move(w);
  return bank;
}

template <typename T>
HeadFunction ClassHead(const Model<T>& model, int class_id) {
  if (class_id < 0 || static_cast<std::size_t>(class_id) >= model.config().num_classes) {
    throw std::invalid_argument("head: class " + std::to_string(class_id) + " out of range");
  }
  return [&model, class_id](const Eigen::MatrixXd& activations) {
    const auto rows = static_cast<std::size_t>(activations.rows());
    const auto d = static_cast<std::size_t>(activations.cols());
    std::vector<T> data(rows * d);
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t j = 0; j < d; ++j) {
        data[i * d + j] = static_cast<T>(
            activations(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
      }
    }
    const Tensor<T> logits = model.HeadLogits(Tensor<T>({rows, d}, std::move(data)));
    const std::size_t k = logits.dim(1);
    Eigen::VectorXd out(static_cast<Eigen::Index>(rows));
    for (std::size_t i = 0; i < rows; ++i) {
      out(static_cast<Eigen::Index>(i)) =
          static_cast<double>(logits[i * k + static_cast<std::size_t>(class_id)]);
    }
    return out;
  };
}

std::string_view SobolOrderName(SobolOrder order) {
  return order == SobolOrder::kTotal ? "total" : "first";
}

SobolOrder ParseSobolOrder(std::string_view name) {
  if (name == "total") return SobolOrder::kTotal;
  if (name == "first") return SobolOrder::kFirst;
  throw std::invalid_argument("unknown Sobol order '" + std::string(name) +
                              "' (expected total|first)");
}

ConceptImportance SobolImportance(const HeadFunction& head, const Eigen::MatrixXd& coefficients,
                                  const Eigen::MatrixXd& concepts, const SobolOptions& options) {
  if (options.n_samples < 2) throw std::invalid_argument("sobol: n_samples must be >= 2");
  if (coefficients.cols() != concepts.rows()) {
    throw MakeShapeError("sobol",
                         Shape{static_cast<std::size_t>(coefficients.rows()),
                               static_cast<std::size_t>(coefficients.cols())},
                         Shape{static_cast<std::size_t>(concepts.rows()),
                               static_cast<std::size_t>(concepts.cols())});
  }
  const Eigen::Index patches = coefficients.rows(), r = coefficients.cols();
  const auto n = static_cast<Eigen::Index>(options.n_samples);
  ConceptImportance result;
  result.n_samples = options.n_samples;
  result.order = options.order;
  result.indices.assign(static_cast<std::size_t>(r), 0.0);
  std::vector<double> variance_sum(static_cast<std::size_t>(r), 0.0);
  if (patches == 0) {
    result.std_errors.assign(static_cast<std::size_t>(r), 0.0);
    return result;
  }

  for (Eigen::Index p = 0; p < patches; ++p) {
    Eigen::MatrixXd mask_a(n, r), mask_b(n, r);
    for (Eigen::Index j = 0; j < n; ++j) {
      for (Eigen::Index i = 0; i < r; ++i) {
        const auto base = static_cast<std::uint64_t>(((p * n + j) * r + i) * 2);
        mask_a(j, i) = CounterUniform(options.seed, base);
        mask_b(j, i) = CounterUniform(options.seed, base + 1);
      }
    }
    const Eigen::RowVectorXd u = coefficients.row(p);
    auto evaluate = [&](const Eigen::MatrixXd& masks) {
      return head((masks.array().rowwise() * u.array()).matrix() * concepts);
    };
    const Eigen::VectorXd fa = evaluate(mask_a);
    const Eigen::VectorXd fb = evaluate(mask_b);
    const double mean = (fa.sum() + fb.sum()) / static_cast<double>(2 * n);
    const double var = ((fa.array() - mean).square().sum() + (fb.array() - mean).square().sum()) /
                       static_cast<double>(2 * n - 1);
    for (Eigen::Index i = 0; i < r; ++i) {
      Eigen::MatrixXd mixed = mask_a;
      mixed.col(i) = mask_b.col(i);
      const Eigen::VectorXd fab = evaluate(mixed);
      // Per-sample terms whose mean estimates the partial variance.
      const Eigen::ArrayXd terms = options.order == SobolOrder::kTotal
                                       ? Eigen::ArrayXd(0.5 * (fa - fab).array().square())
                                       : Eigen::ArrayXd(fb.array() * (fab - fa).array());
      const double mean_term = terms.mean();
      const double term_var =
          (terms - mean_term).square().sum() / static_cast<double>(n - 1);
      if (var > 0) {
        result.indices[static_cast<std::size_t>(i)] += mean_term / var;
        variance_sum[static_cast<std::size_t>(i)] +=
            term_var / static_cast<double>(n) / (var * var);
      }
    }
  }
  const auto count = static_cast<double>(patches);
  for (std::size_t i = 0; i < result.indices.size(); ++i) {
    result.indices[i] /= count;
    result.std_errors.push_back(std::sqrt(variance_sum[i]) / count);
  }
  return result;
}

std::vector<std::size_t> RankConcepts(std::span<const double> importances) {
  std::vector<std::size_t> order(importances.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return importances[a] > importances[b];
  });
  return order;
}

nlohmann::json ConceptReport::ToJson() const {
  nlohmann::json list = nlohmann::json::array();
  for (std::size_t rank = 0; rank < concepts.size(); ++rank) {
    const ConceptEntry& e = concepts[rank];
    nlohmann::json patches = nlohmann::json::array();
    for (const PatchCoord& p : e.top_patches) {
      patches.push_back({{"image", p.image}, {"y", p.y}, {"x", p.x}, {"size", p.size}});
    }
    list.push_back({{"rank", rank},
                    {"concept_id", e.concept_id},
                    {"importance", e.importance},
                    {"std_error", e.std_error},
                    {"grid", "concept_" + std::to_string(e.concept_id) + ".ppm"},
                    {"top_patches", patches}});
  }
  return {{"class", class_id},
          {"sobol_order", SobolOrderName(order)},
          {"n_samples", n_samples},
          {"ranking", [&] {
             std::vector<std::size_t> ids;
             for (const auto& e : concepts) ids.push_back(e.concept_id);
             return ids;
           }()},
          {"concepts", list}};
}

ConceptReport ConceptReport::FromJson(const nlohmann::json& j) {
  ConceptReport report;
  report.class_id = j.at("class").get<int>();
  report.order = ParseSobolOrder(j.at("sobol_order").get<std::string>());
  report.n_samples = j.at("n_samples").get<std::size_t>();
  for (const auto& c : j.at("concepts")) {
    ConceptEntry e;
    e.concept_id = c.at("concept_id").get<std::size_t>();
    e.importance = c.at("importance").get<double>();
    e.std_error = c.at("std_error").get<double>();
    for (const auto& p : c.at("top_patches")) {
      e.top_patches.push_back({p.at("image").get<std::size_t>(), p.at("y").get<std::size_t>(),
                               p.at("x").get<std::size_t>(), p.at("size").get<std::size_t>()});
    }
    report.concepts.push_back(std::move(e));
  }
  return report;
}

ConceptReport RankConceptsForReport(const ConceptBank& bank, const ConceptImportance& importance,
                                    const PatchSet& patches, std::size_t k_top) {
  if (importance.indices.size() != bank.rank ||
      static_cast<std::size_t>(bank.coefficients.rows()) != patches.size()) {
    throw std::invalid_argument("concept report: bank, importances and patches disagree");
  }
  ConceptReport report;
  report.class_id = patches.class_id;
  report.n_samples = importance.n_samples;
  report.order = importance.order;
  for (std::size_t id : RankConcepts(importance.indices)) {
    ConceptEntry e;
    e.concept_id = id;
    e.importance = importance.indices[id];
    e.std_error = importance.std_errors.at(id);
    std::vector<std::size_t> by_weight(patches.size());
    std::iota(by_weight.begin(), by_weight.end(), std::size_t{0});
    const auto col = static_cast<Eigen::Index>(id);
    std::stable_sort(by_weight.begin(), by_weight.end(), [&](std::size_t a, std::size_t b) {
      return bank.coefficients(static_cast<Eigen::Index>(a), col) >
             bank.coefficients(static_cast<Eigen::Index>(b), col);
    });
    for (std::size_t k = 0; k < std::min(k_top, by_weight.size()); ++k) {
      e.top_patches.push_back(patches.coords[by_weight[k]]);
    }
    report.concepts.push_back(std::move(e));
  }
  return report;
}

void WritePpmRow(std::span<const Tensor<float>> images, const std::filesystem::path& path) {
  std::size_t h = 0, w = 0;
  for (const auto& img : images) {
    if (img.rank() != 3 || img.dim(2) != 3) {
      throw ShapeError("ppm: expected [H,W,3] images, got " + ShapeToString(img.shape()));
    }
    h = std::max(h, img.dim(0));
    w += img.dim(1);
  }
  if (!images.empty()) w += images.size() - 1;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("ppm: cannot write " + path.string());
  out << "P6\n" << std::max<std::size_t>(w, 1) << ' ' << std::max<std::size_t>(h, 1) << "\n255\n";
  std::vector<unsigned char> canvas(std::max<std::size_t>(w, 1) * std::max<std::size_t>(h, 1) * 3,
                                    255);
  std::size_t x0 = 0;
  for (const auto& img : images) {
    for (std::size_t y = 0; y < img.dim(0); ++y) {
      for (std::size_t x = 0; x < img.dim(1); ++x) {
        for (std::size_t ch = 0; ch < 3; ++ch) {
          const double v = std::clamp(static_cast<double>(img[(y * img.dim(1) + x) * 3 + ch]),
                                      0.0, 1.0);
          canvas[(y * w + x0 + x) * 3 + ch] = static_cast<unsigned char>(std::lround(v * 255));
        }
      }
    }
    x0 += img.dim(1) + 1;
  }
  out.write(reinterpret_cast<const char*>(canvas.data()),
            static_cast<std::streamsize>(canvas.size()));
}

ConceptReport RankAndExport(const ConceptBank& bank, const ConceptImportance& importance,
                            const PatchSet& patches, std::size_t k_top,
                            const std::filesystem::path& dir, const nlohmann::json& provenance) {
  ConceptReport report = RankConceptsForReport(bank, importance, patches, k_top);
  std::filesystem::create_directories(dir);
  const std::size_t stride = patches.size() == 0 ? 0 : patches.images.size() / patches.size();
  const Shape image_shape(patches.images.shape().begin() + 1, patches.images.shape().end());
  for (const ConceptEntry& e : report.concepts) {
    std::vector<Tensor<float>> tiles;
    for (const PatchCoord& coord : e.top_patches) {
      const auto it = std::find(patches.coords.begin(), patches.coords.end(), coord);
      const auto index = static_cast<std::size_t>(it - patches.coords.begin());
      const auto first = patches.images.vec().begin() + static_cast<std::ptrdiff_t>(index * stride);
      tiles.emplace_back(image_shape,
                         std::vector<float>(first, first + static_cast<std::ptrdiff_t>(stride)));
    }
    WritePpmRow(tiles, dir / ("concept_" + std::to_string(e.concept_id) + ".ppm"));
  }
  nlohmann::json j = report.ToJson();
  j["provenance"] = provenance;
  std::ofstream out(dir / "concepts.json");
  if (!out) throw std::runtime_error("concepts: cannot write " + (dir / "concepts.json").string());
  out << j.dump(2) << '\n';
  return report;
}

#define PRUNEX_INSTANTIATE(T)                                                                   \
  template PatchSet ExtractPatches(const Model<T>&, const LabeledDataset&, int, std::size_t,    \
                                   std::size_t);                                                \
  template Eigen::MatrixXd TapActivations(const Model<T>&, const Tensor<float>&);               \
  template HeadFunction ClassHead(const Model<T>&, int);
PRUNEX_INSTANTIATE(float)
PRUNEX_INSTANTIATE(double)
#undef PRUNEX_INSTANTIATE

}  // namespace prunex
