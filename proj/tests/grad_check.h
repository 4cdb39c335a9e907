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

#ifndef PRUNEX_TESTS_GRAD_CHECK_H_
#define PRUNEX_TESTS_GRAD_CHECK_H_

// Random small graphs over every primitive, checked against central finite
// differences. Shared by the unit tests and the acceptance binary.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "prunex/autodiff.h"
#include "prunex/tensor.h"

namespace prunex::test {

struct GraphCase {
  int kind = 0;  // 0: MLP, 1: residual conv net, 2: pick/mul/reshape mix
  std::vector<Tensor<double>> leaves;
  std::vector<int> labels;
  std::size_t classes = 0;
  Conv2DOptions conv;
};

// Builds the scalar loss of `c` on `g` from `leaves` (same order as c.leaves).
// Every ReLU input is appended to `relu_inputs` when given.
template <typename T>
Var BuildCase(Graph<T>& g, const GraphCase& c, const std::vector<Tensor<T>>& leaves,
              std::vector<Var>* leaf_vars, std::vector<Var>* relu_inputs = nullptr) {
  std::vector<Var> v;
  for (const auto& t : leaves) v.push_back(g.Input(t, true));
  if (leaf_vars != nullptr) *leaf_vars = v;
  auto relu = [&](Var x) {
    if (relu_inputs != nullptr) relu_inputs->push_back(x);
    return g.Relu(x);
  };
  switch (c.kind) {
    case 0: {
      const Var h = relu(g.AddBias(g.MatMul(v[0], v[1]), v[2]));
      const Var logits = g.AddBias(g.MatMul(h, v[3]), v[4]);
      return g.SoftmaxCrossEntropy(logits, c.labels);
    }
    case 1: {
      const Var a = relu(g.AddBias(g.Conv2D(v[0], v[1], c.conv), v[2]));
      const Var b = g.AddBias(g.Conv2D(a, v[3], {1, 1}), v[4]);
      const Var r = relu(g.ResidualAdd(a, b));
      const Var logits = g.AddBias(g.MatMul(g.GlobalAvgPool(r), v[5]), v[6]);
      return g.SoftmaxCrossEntropy(logits, c.labels);
    }
    default: {
      const Shape& s = c.leaves[0].shape();
      const Var flat = g.Reshape(v[0], {s[0], s[1] * s[2]});
      const Var picked = g.Pick(g.MatMul(flat, v[1]), c.labels);
      const Var gated = g.Mul(relu(g.Add(flat, v[2])), g.Scale(flat, T(0.7)));
      return g.Add(g.Sum(picked), g.Scale(g.Sum(gated), T(0.5)));
    }
  }
}

inline GraphCase DrawCase(std::mt19937_64& rng) {
  auto dim = [&](int lo, int hi) {
    return static_cast<std::size_t>(std::uniform_int_distribution<int>(lo, hi)(rng));
  };
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  auto tensor = [&](Shape shape, double scale) {
    Tensor<double> t(std::move(shape));
    for (double& x : t.data()) x = scale * u(rng);
    return t;
  };
  GraphCase c;
  c.kind = static_cast<int>(dim(0, 2));
  const std::size_t n = dim(1, 4);
  c.classes = dim(2, 5);
  switch (c.kind) {
    case 0: {
      const std::size_t d = dim(2, 6), h = dim(2, 8);
      c.leaves = {tensor({n, d}, 1.0), tensor({d, h}, 1.0), tensor({h}, 0.5),
                  tensor({h, c.classes}, 1.0), tensor({c.classes}, 0.5)};
      break;
    }
    case 1: {
      const std::size_t side = dim(3, 6), cin = dim(1, 3), f = dim(2, 4);
      c.conv = {dim(1, 2), dim(0, 1)};
      c.leaves = {tensor({n, side, side, cin}, 1.0), tensor({3, 3, cin, f}, 0.5),
                  tensor({f}, 0.3), tensor({3, 3, f, f}, 0.3), tensor({f}, 0.3),
                  tensor({f, c.classes}, 1.0), tensor({c.classes}, 0.3)};
      break;
    }
    default: {
      const std::size_t a = dim(1, 3), b = dim(1, 3);
      c.leaves = {tensor({n, a, b}, 1.0), tensor({a * b, c.classes}, 1.0),
                  tensor({n, a * b}, 1.0)};
      break;
    }
  }
  std::uniform_int_distribution<int> label(0, static_cast<int>(c.classes) - 1);
  for (std::size_t i = 0; i < n; ++i) c.labels.push_back(label(rng));
  return c;
}

// Smallest |ReLU input| of the case: finite differences are only valid when
// the step cannot push a unit across its kink.
inline double ReluMargin(const GraphCase& c) {
  Graph<double> g;
  std::vector<Var> relu_inputs;
  BuildCase(g, c, c.leaves, nullptr, &relu_inputs);
  double margin = INFINITY;
  for (Var r : relu_inputs) {
    for (double x : g.value(r).data()) margin = std::min(margin, std::abs(x));
  }
  return margin;
}

// Draws cases from `seed` until every ReLU input clears `margin`.
inline GraphCase DrawSmoothCase(std::uint64_t seed, double margin = 1e-3) {
  std::mt19937_64 rng(seed);
  for (;;) {
    GraphCase c = DrawCase(rng);
    if (ReluMargin(c) >= margin) return c;
  }
}

inline double LossAt(const GraphCase& c, const std::vector<Tensor<double>>& leaves) {
  Graph<double> g;
  const Var loss = BuildCase(g, c, leaves, nullptr);
  return g.value(loss)[0];
}

// Max over all leaf entries of |analytic - numeric| / max(|analytic|,
// |numeric|, floor). Analytic gradients are taken in precision T; the central
// differences always run in double with step `h`.
template <typename T>
double MaxRelativeGradError(const GraphCase& c, double h = 1e-5, double floor = 1e-6) {
  std::vector<Tensor<T>> leaves;
  for (const auto& t : c.leaves) leaves.push_back(t.template Cast<T>());
  Graph<T> g;
  std::vector<Var> vars;
  const Var loss = BuildCase(g, c, leaves, &vars);
  g.Backward(loss);

  double worst = 0.0;
  std::vector<Tensor<double>> probe = c.leaves;
  for (std::size_t l = 0; l < probe.size(); ++l) {
    const Tensor<T>& analytic = g.grad(vars[l]);
    for (std::size_t i = 0; i < probe[l].size(); ++i) {
      const double x = probe[l][i];
      probe[l][i] = x + h;
      const double up = LossAt(c, probe);
      probe[l][i] = x - h;
      const double down = LossAt(c, probe);
      probe[l][i] = x;
      const double numeric = (up - down) / (2.0 * h);
      const double a = static_cast<double>(analytic[i]);
      const double denom = std::max({std::abs(a), std::abs(numeric), floor});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace prunex::test

#endif  // PRUNEX_TESTS_GRAD_CHECK_H_
