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

#include "prunex/attribution.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>

#include "prunex/container.h"

namespace prunex {
namespace {

constexpr std::size_t kMaxGraphBatch = 64;

template <typename E>
struct NamedEnum {
  E value;
  std::string_view name;
};

template <typename E, std::size_t N>
std::string_view NameOf(const NamedEnum<E> (&table)[N], E value) {
  for (const auto& e : table) {
    if (e.value == value) return e.name;
  }
  throw std::logic_error("unnamed enum value");
}

template <typename E, std::size_t N>
E Parse(const NamedEnum<E> (&table)[N], std::string_view name, std::string_view what) {
  std::string options;
  for (const auto& e : table) {
    if (e.name == name) return e.value;
    options += options.empty() ? "" : "|";
    options += e.name;
  }
  throw std::invalid_argument("unknown " + std::string(what) + " '" + std::string(name) +
                              "' (expected " + options + ")");
}

constexpr NamedEnum<AttributionMethod> kMethods[] = {
    {AttributionMethod::kVanillaGradients, "vg"},
    {AttributionMethod::kIntegratedGradients, "ig"}};
constexpr NamedEnum<AttributionTarget> kTargets[] = {
    {AttributionTarget::kLogit, "logit"}, {AttributionTarget::kProbability, "probability"}};
constexpr NamedEnum<ChannelReduction> kReductions[] = {
    {ChannelReduction::kMaxAbs, "max_abs"}, {ChannelReduction::kSumAbs, "sum_abs"}};
constexpr NamedEnum<BaselineKind> kBaselines[] = {{BaselineKind::kZero, "zero"},
                                                  {BaselineKind::kDatasetMean, "mean"},
                                                  {BaselineKind::kConstant, "constant"}};

void CheckImage(const Shape& shape) {
  if (shape.size() != 3) {
    throw ShapeError("attribution: expected an [H,W,C] image, got " + ShapeToString(shape));
  }
}

std::vector<double> Softmax(std::span<const double> logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double z = 0;
  for (std::size_t k = 0; k < logits.size(); ++k) z += p[k] = std::exp(logits[k] - mx);
  for (double& v : p) v /= z;
  return p;
}

// Per-row class scores and d(score_i)/d(images_i) for a [B,H,W,C] batch.
template <typename T>
std::vector<double> ScoreGradients(const DifferentiableFn<T>& fn, const Tensor<T>& images,
                                   std::span<const int> classes, AttributionTarget target,
                                   Tensor<T>* grads) {
  Graph<T> g;
  const Var x = g.Input(images, grads != nullptr);
  const Var logits = fn(g, x);
  const Tensor<T>& lv = g.value(logits);
  if (lv.rank() != 2 || lv.dim(0) != classes.size()) {
    throw MakeShapeError("attribution logits", lv.shape(), Shape{classes.size()});
  }
  const std::size_t n = lv.dim(0), k = lv.dim(1);
  for (int c : classes) {
    if (c < 0 || static_cast<std::size_t>(c) >= k) {
      throw std::invalid_argument("attribution: class " + std::to_string(c) +
                                  " outside [0," + std::to_string(k) + ")");
    }
  }
  std::vector<double> scores(n);
  std::vector<double> probs(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> row(k);
    for (std::size_t j = 0; j < k; ++j) row[j] = static_cast<double>(lv[i * k + j]);
    probs[i] = Softmax(row)[static_cast<std::size_t>(classes[i])];
    scores[i] = target == AttributionTarget::kLogit ? row[static_cast<std::size_t>(classes[i])]
                                                    : probs[i];
  }
  if (grads == nullptr) return scores;

  if (target == AttributionTarget::kLogit) {
    g.Backward(g.Sum(g.Pick(logits, classes)));
    *grads = g.grad(x);
  } else {
    // d p_y = -p_y * d CE_y; the loss is a batch mean, hence the factor n.
    g.Backward(g.SoftmaxCrossEntropy(logits, classes));
    *grads = g.grad(x);
    const std::size_t stride = images.size() / n;
    for (std::size_t i = 0; i < n; ++i) {
      const T factor = static_cast<T>(-probs[i] * static_cast<double>(n));
      for (std::size_t j = 0; j < stride; ++j) (*grads)[i * stride + j] *= factor;
    }
  }
  return scores;
}

AttributionMap MakeMap(Tensor<double> signed_values, int target_class,
                       AttributionMethod method, ChannelReduction reduction) {
  AttributionMap m;
  m.values = ReduceChannels(signed_values, reduction);
  m.signed_values = std::move(signed_values);
  m.target_class = target_class;
  m.method = method;
  m.reduction = reduction;
  return m;
}

Tensor<double> Slice(const Tensor<double>& stacked, std::size_t i) {
  Shape shape(stacked.shape().begin() + 1, stacked.shape().end());
  const std::size_t n = NumElements(shape);
  const auto begin = stacked.vec().begin() + static_cast<std::ptrdiff_t>(i * n);
  return Tensor<double>(std::move(shape), std::vector<double>(begin, begin + static_cast<std::ptrdiff_t>(n)));
}

}  // namespace

std::string_view MethodName(AttributionMethod m) { return NameOf(kMethods, m); }
AttributionMethod ParseMethod(std::string_view n) { return Parse(kMethods, n, "method"); }
std::string_view TargetName(AttributionTarget t) { return NameOf(kTargets, t); }
AttributionTarget ParseTarget(std::string_view n) { return Parse(kTargets, n, "target"); }
std::string_view ReductionName(ChannelReduction r) { return NameOf(kReductions, r); }
ChannelReduction ParseReduction(std::string_view n) {
  return Parse(kReductions, n, "reduction");
}
std::string_view BaselineKindName(BaselineKind k) { return NameOf(kBaselines, k); }
BaselineKind ParseBaselineKind(std::string_view n) { return Parse(kBaselines, n, "baseline"); }

template <typename T>
DifferentiableFn<T> LogitsFunction(const Model<T>& model) {
  return [&model](Graph<T>& g, Var images) { return model.Forward(g, images, false).logits; };
}

Baseline Baseline::Zero(const Shape& image_shape) {
  CheckImage(image_shape);
  return {BaselineKind::kZero, Tensor<double>(image_shape)};
}

Baseline Baseline::Constant(const Shape& image_shape, double value) {
  CheckImage(image_shape);
  return {BaselineKind::kConstant, Tensor<double>::Filled(image_shape, value)};
}

Baseline Baseline::DatasetMean(const LabeledDataset& data) {
  if (data.empty()) throw std::invalid_argument("baseline: empty dataset");
  Tensor<double> mean({data.height(), data.width(), data.channels()});
  const std::size_t stride = data.image_size();
  for (std::size_t n = 0; n < data.size(); ++n) {
    for (std::size_t i = 0; i < stride; ++i) mean[i] += data.images[n * stride + i];
  }
  for (double& v : mean.data()) v /= static_cast<double>(data.size());
  return {BaselineKind::kDatasetMean, std::move(mean)};
}

Tensor<double> ReduceChannels(const Tensor<double>& signed_values, ChannelReduction r) {
  CheckImage(signed_values.shape());
  const std::size_t h = signed_values.dim(0), w = signed_values.dim(1),
                    c = signed_values.dim(2);
  Tensor<double> out({h, w});
  for (std::size_t p = 0; p < h * w; ++p) {
    double acc = 0;
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double a = std::abs(signed_values[p * c + ch]);
      acc = r == ChannelReduction::kMaxAbs ? std::max(acc, a) : acc + a;
    }
    out[p] = acc;
  }
  return out;
}

template <typename T>
std::vector<double> ClassScores(const DifferentiableFn<T>& fn, const Tensor<T>& images,
                                std::span<const int> classes, AttributionTarget target) {
  return ScoreGradients<T>(fn, images, classes, target, nullptr);
}

template <typename T>
AttributionMap VanillaGradients(const DifferentiableFn<T>& fn, const Tensor<T>& image,
                                int target_class, const AttributionOptions& options) {
  CheckImage(image.shape());
  Shape batch_shape = {1};
  batch_shape.insert(batch_shape.end(), image.shape().begin(), image.shape().end());
  Tensor<T> grads;
  const int cls[] = {target_class};
  ScoreGradients(fn, image.Reshaped(batch_shape), cls, options.target, &grads);
  return MakeMap(grads.template Cast<double>().Reshaped(image.shape()), target_class,
                 AttributionMethod::kVanillaGradients, options.reduction);
}

template <typename T>
AttributionMap IntegratedGradients(const DifferentiableFn<T>& fn, const Tensor<T>& image,
                                   const Baseline& baseline, int target_class,
                                   const AttributionOptions& options) {
  CheckImage(image.shape());
  if (options.ig_steps < 1) throw std::invalid_argument("integrated_gradients: steps must be >= 1");
  if (baseline.image.shape() != image.shape()) {
    throw MakeShapeError("integrated_gradients baseline", baseline.image.shape(), image.shape());
  }
  const std::size_t m = options.ig_steps;
  const std::size_t size = image.size();
  std::vector<double> grad_sum(size, 0.0);
  for (std::size_t start = 0; start < m; start += kMaxGraphBatch) {
    const std::size_t count = std::min(kMaxGraphBatch, m - start);
    Shape shape = {count};
    shape.insert(shape.end(), image.shape().begin(), image.shape().end());
    Tensor<T> path(shape);
    for (std::size_t s = 0; s < count; ++s) {
      const double alpha = (static_cast<double>(start + s) + 0.5) / static_cast<double>(m);
      for (std::size_t i = 0; i < size; ++i) {
        const double base = baseline.image[i];
        path[s * size + i] = static_cast<T>(base + alpha * (static_cast<double>(image[i]) - base));
      }
    }
    Tensor<T> grads;
    const std::vector<int> cls(count, target_class);
    ScoreGradients(fn, path, cls, options.target, &grads);
    for (std::size_t s = 0; s < count; ++s) {
      for (std::size_t i = 0; i < size; ++i) grad_sum[i] += static_cast<double>(grads[s * size + i]);
    }
  }
  Tensor<double> signed_values(image.shape());
  for (std::size_t i = 0; i < size; ++i) {
    signed_values[i] = (static_cast<double>(image[i]) - baseline.image[i]) * grad_sum[i] /
                       static_cast<double>(m);
  }
  return MakeMap(std::move(signed_values), target_class,
                 AttributionMethod::kIntegratedGradients, options.reduction);
}

template <typename T>
std::vector<AttributionMap> AttributeBatch(const DifferentiableFn<T>& fn,
                                           const Tensor<T>& images,
                                           std::span<const int> classes,
                                           AttributionMethod method,
                                           const Baseline& baseline,
                                           const AttributionOptions& options) {
  if (images.rank() != 4 || images.dim(0) != classes.size()) {
    throw MakeShapeError("attribute_batch", images.shape(), Shape{classes.size()});
  }
  const std::size_t n = images.dim(0);
  const Shape image_shape(images.shape().begin() + 1, images.shape().end());
  const std::size_t size = NumElements(image_shape);
  std::vector<AttributionMap> maps;
  maps.reserve(n);
  if (method == AttributionMethod::kVanillaGradients) {
    for (std::size_t start = 0; start < n; start += kMaxGraphBatch) {
      const std::size_t count = std::min(kMaxGraphBatch, n - start);
      Shape shape = {count};
      shape.insert(shape.end(), image_shape.begin(), image_shape.end());
      const auto first = images.vec().begin() + static_cast<std::ptrdiff_t>(start * size);
      Tensor<T> chunk(shape, std::vector<T>(first, first + static_cast<std::ptrdiff_t>(count * size)));
      Tensor<T> grads;
      ScoreGradients(fn, chunk, classes.subspan(start, count), options.target, &grads);
      const Tensor<double> stacked = grads.template Cast<double>();
      for (std::size_t i = 0; i < count; ++i) {
        maps.push_back(MakeMap(Slice(stacked, i), classes[start + i], method, options.reduction));
      }
    }
    return maps;
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto first = images.vec().begin() + static_cast<std::ptrdiff_t>(i * size);
    Tensor<T> image(image_shape, std::vector<T>(first, first + static_cast<std::ptrdiff_t>(size)));
    maps.push_back(IntegratedGradients(fn, image, baseline, classes[i], options));
  }
  return maps;
}

void WritePgm(const Tensor<double>& map, const std::filesystem::path& path) {
  if (map.rank() != 2) throw ShapeError("pgm: expected [H,W], got " + ShapeToString(map.shape()));
  double mx = 0;
  for (double v : map.data()) mx = std::max(mx, v);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("pgm: cannot write " + path.string());
  out << "P5\n" << map.dim(1) << ' ' << map.dim(0) << "\n255\n";
  for (double v : map.data()) {
    const long level = mx > 0 ? std::lround(255.0 * std::max(v, 0.0) / mx) : 0;
    out.put(static_cast<char>(static_cast<unsigned char>(level)));
  }
}

void SaveAttributions(const std::filesystem::path& path, std::span<const AttributionMap> maps,
                      const nlohmann::json& metadata) {
  TensorContainer c;
  nlohmann::json targets = nlohmann::json::array();
  if (!maps.empty()) {
    const Shape& vs = maps[0].values.shape();
    const Shape& ss = maps[0].signed_values.shape();
    std::vector<double> values, signed_values;
    values.reserve(maps.size() * NumElements(vs));
    signed_values.reserve(maps.size() * NumElements(ss));
    for (const auto& m : maps) {
      if (m.values.shape() != vs || m.signed_values.shape() != ss) {
        throw MakeShapeError("save_attributions", m.values.shape(), vs);
      }
      values.insert(values.end(), m.values.vec().begin(), m.values.vec().end());
      signed_values.insert(signed_values.end(), m.signed_values.vec().begin(),
                           m.signed_values.vec().end());
      targets.push_back(m.target_class);
    }
    Shape stacked_vs = {maps.size()};
    stacked_vs.insert(stacked_vs.end(), vs.begin(), vs.end());
    Shape stacked_ss = {maps.size()};
    stacked_ss.insert(stacked_ss.end(), ss.begin(), ss.end());
    c.Put("values", Tensor<double>(stacked_vs, std::move(values)));
    c.Put("signed", Tensor<double>(stacked_ss, std::move(signed_values)));
  }
  c.metadata = {{"count", maps.size()},
                {"targets", targets},
                {"method", maps.empty() ? "" : std::string(MethodName(maps[0].method))},
                {"reduction", maps.empty() ? "" : std::string(ReductionName(maps[0].reduction))},
                {"run", metadata}};
  c.Save(path);
}

std::vector<AttributionMap> LoadAttributions(const std::filesystem::path& path,
                                             nlohmann::json* metadata) {
  const TensorContainer c = TensorContainer::Load(path);
  if (metadata != nullptr) *metadata = c.metadata.at("run");
  const auto count = c.metadata.at("count").get<std::size_t>();
  std::vector<AttributionMap> maps;
  if (count == 0) return maps;
  const auto method = ParseMethod(c.metadata.at("method").get<std::string>());
  const auto reduction = ParseReduction(c.metadata.at("reduction").get<std::string>());
  const auto targets = c.metadata.at("targets").get<std::vector<int>>();
  const Tensor<double>& values = c.Get<double>("values");
  const Tensor<double>& signed_values = c.Get<double>("signed");
  if (values.dim(0) != count || signed_values.dim(0) != count || targets.size() != count) {
    throw ContainerError("attributions: inconsistent map count in " + path.string());
  }
  for (std::size_t i = 0; i < count; ++i) {
    AttributionMap m;
    m.values = Slice(values, i);
    m.signed_values = Slice(signed_values, i);
    m.target_class = targets[i];
    m.method = method;
    m.reduction = reduction;
    maps.push_back(std::move(m));
  }
  return maps;
}

#define PRUNEX_INSTANTIATE(T)                                                          \
  template DifferentiableFn<T> LogitsFunction(const Model<T>&);                        \
  template std::vector<double> ClassScores(const DifferentiableFn<T>&, const Tensor<T>&, \
                                           std::span<const int>, AttributionTarget);    \
  template AttributionMap VanillaGradients(const DifferentiableFn<T>&, const Tensor<T>&, \
                                           int, const AttributionOptions&);             \
  template AttributionMap IntegratedGradients(const DifferentiableFn<T>&,               \
                                              const Tensor<T>&, const Baseline&, int,   \
                                              const AttributionOptions&);               \
  template std::vector<AttributionMap> AttributeBatch(                                 \
      const DifferentiableFn<T>&, const Tensor<T>&, std::span<const int>,               \
      AttributionMethod, const Baseline&, const AttributionOptions&);
PRUNEX_INSTANTIATE(float)
PRUNEX_INSTANTIATE(double)
#undef PRUNEX_INSTANTIATE

}  // namespace prunex
