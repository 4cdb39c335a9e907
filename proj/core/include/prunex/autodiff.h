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

#ifndef PRUNEX_AUTODIFF_H_
#define PRUNEX_AUTODIFF_H_

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "prunex/tensor.h"

namespace prunex {

struct Conv2DOptions {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

// Handle to a node in a Graph. Only meaningful for the graph that issued it.
struct Var {
  std::size_t id = 0;
};

// Reverse-mode tape. Nodes are appended in execution order, so the tape is
// topologically sorted by construction. Layout conventions:
//   images / activations  [N, H, W, C]
//   convolution kernels   [KH, KW, Cin, Cout]
//   dense weights         [In, Out]
template <typename T>
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  Graph(Graph&&) = default;
  Graph& operator=(Graph&&) = default;

  // Leaf node. Gradients are only accumulated for leaves that request them
  // and for nodes downstream of such leaves.
  Var Input(Tensor<T> value, bool requires_grad = false);

  Var MatMul(Var a, Var b);                           // [M,K]x[K,N] -> [M,N]
  Var Conv2D(Var input, Var kernel, Conv2DOptions options);
  Var Add(Var a, Var b);                              // equal shapes
  Var ResidualAdd(Var a, Var b) { return Add(a, b); }
  Var AddBias(Var x, Var bias);                       // bias over last axis
  Var Relu(Var x);
  Var GlobalAvgPool(Var x);                           // [N,H,W,C] -> [N,C]
  // Mean softmax cross-entropy over the batch; returns a scalar.
  Var SoftmaxCrossEntropy(Var logits, std::span<const int> labels);
  Var Scale(Var x, T factor);
  Var Mul(Var a, Var b);                              // elementwise
  Var Sum(Var x);                                     // -> scalar
  // Selects logits[n, classes[n]] for every row; [N,K] -> [N].
  Var Pick(Var logits, std::span<const int> classes);
  Var Reshape(Var x, Shape shape);

  const Tensor<T>& value(Var v) const { return nodes_.at(v.id).value; }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  // Accumulates d(loss)/d(node) into every node that requires gradients.
  // Throws if `loss` is not a single-element tensor.
  void Backward(Var loss);

  // Gradient of the last Backward() loss. Throws if none was computed.
  const Tensor<T>& grad(Var v) const;

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    bool has_grad = false;
    std::vector<std::size_t> inputs;
    // Propagates this node's grad into its inputs' grads.
    std::function<void(std::vector<Node>&, std::size_t)> backward;
  };

  Var Push(Tensor<T> value, std::vector<std::size_t> inputs,
           std::function<void(std::vector<Node>&, std::size_t)> backward);
  static Tensor<T>& GradOf(std::vector<Node>& nodes, std::size_t id);

  std::vector<Node> nodes_;
};

// Free-standing kernels shared by the graph ops and by inference code that
// does not need a tape.
template <typename T>
Tensor<T> Conv2DForward(const Tensor<T>& input, const Tensor<T>& kernel,
                        Conv2DOptions options);

template <typename T>
Tensor<T> MatMulForward(const Tensor<T>& a, const Tensor<T>& b);

extern template class Graph<float>;
extern template class Graph<double>;

}  // namespace prunex

#endif  // PRUNEX_AUTODIFF_H_
