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

#include "prunex/autodiff.h"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>

namespace prunex {
namespace {

struct ConvGeometry {
  std::size_t n, h, w, cin, kh, kw, cout, oh, ow, stride, pad;
};

ConvGeometry CheckConv(const Shape& in, const Shape& k, Conv2DOptions opt) {
  if (in.size() != 4 || k.size() != 4 || in[3] != k[2]) {
    throw MakeShapeError("conv2d", in, k);
  }
  if (opt.stride == 0) throw std::invalid_argument("conv2d: stride must be >= 1");
  if (in[1] + 2 * opt.padding < k[0] || in[2] + 2 * opt.padding < k[1]) {
    throw MakeShapeError("conv2d (kernel larger than padded input)", in, k);
  }
  ConvGeometry g{};
  g.n = in[0];
  g.h = in[1];
  g.w = in[2];
  g.cin = in[3];
  g.kh = k[0];
  g.kw = k[1];
  g.cout = k[3];
  g.stride = opt.stride;
  g.pad = opt.padding;
  g.oh = (g.h + 2 * g.pad - g.kh) / g.stride + 1;
  g.ow = (g.w + 2 * g.pad - g.kw) / g.stride + 1;
  return g;
}

// Maps an output coordinate plus kernel offset back to an input coordinate;
// returns false when it lands in the zero padding.
inline bool InputCoord(std::size_t o, std::size_t k, const ConvGeometry& g,
                       std::size_t limit, std::size_t* i) {
  const std::ptrdiff_t v = static_cast<std::ptrdiff_t>(o * g.stride + k) -
                           static_cast<std::ptrdiff_t>(g.pad);
  if (v < 0 || v >= static_cast<std::ptrdiff_t>(limit)) return false;
  *i = static_cast<std::size_t>(v);
  return true;
}

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

// Unfolds every receptive field into one row: [N*OH*OW, KH*KW*Cin]. Padding
// positions stay zero.
template <typename T>
RowMatrix<T> Im2Col(const Tensor<T>& input, const ConvGeometry& g) {
  RowMatrix<T> cols(static_cast<Eigen::Index>(g.n * g.oh * g.ow),
                    static_cast<Eigen::Index>(g.kh * g.kw * g.cin));
  const T* x = input.data().data();
  T* c = cols.data();
  const std::size_t row_len = g.kh * g.kw * g.cin;
  for (std::size_t n = 0; n < g.n; ++n) {
    for (std::size_t oh = 0; oh < g.oh; ++oh) {
      for (std::size_t ow = 0; ow < g.ow; ++ow) {
        T* row = c + ((n * g.oh + oh) * g.ow + ow) * row_len;
        for (std::size_t kh = 0; kh < g.kh; ++kh) {
          std::size_t ih;
          const bool row_ok = InputCoord(oh, kh, g, g.h, &ih);
          for (std::size_t kw = 0; kw < g.kw; ++kw) {
            T* dst = row + (kh * g.kw + kw) * g.cin;
            std::size_t iw;
            if (row_ok && InputCoord(ow, kw, g, g.w, &iw)) {
              std::copy_n(x + ((n * g.h + ih) * g.w + iw) * g.cin, g.cin, dst);
            } else {
              std::fill_n(dst, g.cin, T{0});
            }
          }
        }
      }
    }
  }
  return cols;
}

// Adjoint of Im2Col: scatters column gradients back onto the input layout.
template <typename T>
void Col2ImAdd(const RowMatrix<T>& cols, const ConvGeometry& g, T* gx) {
  const T* c = cols.data();
  const std::size_t row_len = g.kh * g.kw * g.cin;
  for (std::size_t n = 0; n < g.n; ++n) {
    for (std::size_t oh = 0; oh < g.oh; ++oh) {
      for (std::size_t ow = 0; ow < g.ow; ++ow) {
        const T* row = c + ((n * g.oh + oh) * g.ow + ow) * row_len;
        for (std::size_t kh = 0; kh < g.kh; ++kh) {
          std::size_t ih;
          if (!InputCoord(oh, kh, g, g.h, &ih)) continue;
          for (std::size_t kw = 0; kw < g.kw; ++kw) {
            std::size_t iw;
            if (!InputCoord(ow, kw, g, g.w, &iw)) continue;
            T* dst = gx + ((n * g.h + ih) * g.w + iw) * g.cin;
            const T* src = row + (kh * g.kw + kw) * g.cin;
            for (std::size_t ci = 0; ci < g.cin; ++ci) dst[ci] += src[ci];
          }
        }
      }
    }
  }
}

template <typename T>
ConstMatrixMap<T> KernelMatrix(const Tensor<T>& kernel, const ConvGeometry& g) {
  return ConstMatrixMap<T>(kernel.data().data(),
                           static_cast<Eigen::Index>(g.kh * g.kw * g.cin),
                           static_cast<Eigen::Index>(g.cout));
}

template <typename T>
ConstMatrixMap<T> OutputMatrix(const Tensor<T>& out, const ConvGeometry& g) {
  return ConstMatrixMap<T>(out.data().data(),
                           static_cast<Eigen::Index>(g.n * g.oh * g.ow),
                           static_cast<Eigen::Index>(g.cout));
}

template <typename T>
void ConvBackward(const RowMatrix<T>& cols, const Tensor<T>& kernel,
                  const Tensor<T>& grad_out, const ConvGeometry& g,
                  Tensor<T>* grad_in, Tensor<T>* grad_kernel) {
  const auto go = OutputMatrix(grad_out, g);
  if (grad_kernel != nullptr) {
    MatrixMap<T> gk(grad_kernel->data().data(),
                    static_cast<Eigen::Index>(g.kh * g.kw * g.cin),
                    static_cast<Eigen::Index>(g.cout));
    gk.noalias() += cols.transpose() * go;
  }
  if (grad_in != nullptr) {
    const RowMatrix<T> gcols = go * KernelMatrix(kernel, g).transpose();
    Col2ImAdd(gcols, g, grad_in->data().data());
  }
}

template <typename T>
Tensor<T> ConvFromCols(const RowMatrix<T>& cols, const Tensor<T>& kernel,
                       const ConvGeometry& g) {
  Tensor<T> out({g.n, g.oh, g.ow, g.cout});
  MatrixMap<T> o(out.data().data(), static_cast<Eigen::Index>(g.n * g.oh * g.ow),
                 static_cast<Eigen::Index>(g.cout));
  o.noalias() = cols * KernelMatrix(kernel, g);
  return out;
}

}  // namespace

template <typename T>
Tensor<T> Conv2DForward(const Tensor<T>& input, const Tensor<T>& kernel,
                        Conv2DOptions options) {
  const ConvGeometry g = CheckConv(input.shape(), kernel.shape(), options);
  return ConvFromCols(Im2Col(input, g), kernel, g);
}

template <typename T>
Tensor<T> MatMulForward(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw MakeShapeError("matmul", a.shape(), b.shape());
  }
  const auto m = static_cast<Eigen::Index>(a.dim(0));
  const auto k = static_cast<Eigen::Index>(a.dim(1));
  const auto n = static_cast<Eigen::Index>(b.dim(1));
  Tensor<T> out({a.dim(0), b.dim(1)});
  MatrixMap<T>(out.data().data(), m, n).noalias() =
      ConstMatrixMap<T>(a.data().data(), m, k) *
      ConstMatrixMap<T>(b.data().data(), k, n);
  return out;
}

template <typename T>
Tensor<T>& Graph<T>::GradOf(std::vector<Node>& nodes, std::size_t id) {
  Node& node = nodes[id];
  if (!node.has_grad) {
    node.grad = Tensor<T>(node.value.shape());
    node.has_grad = true;
  }
  return node.grad;
}

template <typename T>
Var Graph<T>::Push(
    Tensor<T> value, std::vector<std::size_t> inputs,
    std::function<void(std::vector<Node>&, std::size_t)> backward) {
  Node node;
  node.value = std::move(value);
  for (std::size_t in : inputs) {
    node.requires_grad = node.requires_grad || nodes_[in].requires_grad;
  }
  node.inputs = std::move(inputs);
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

template <typename T>
Var Graph<T>::Input(Tensor<T> value, bool requires_grad) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

template <typename T>
Var Graph<T>::MatMul(Var a, Var b) {
  Tensor<T> out = MatMulForward(value(a), value(b));
  const std::size_t ia = a.id, ib = b.id;
  return Push(std::move(out), {ia, ib},
              [ia, ib](std::vector<Node>& nodes, std::size_t self) {
                const Tensor<T>& av = nodes[ia].value;
                const Tensor<T>& bv = nodes[ib].value;
                const auto m = static_cast<Eigen::Index>(av.dim(0));
                const auto k = static_cast<Eigen::Index>(av.dim(1));
                const auto n = static_cast<Eigen::Index>(bv.dim(1));
                const ConstMatrixMap<T> g(nodes[self].grad.data().data(), m, n);
                if (nodes[ia].requires_grad) {
                  MatrixMap<T>(GradOf(nodes, ia).data().data(), m, k).noalias() +=
                      g * ConstMatrixMap<T>(bv.data().data(), k, n).transpose();
                }
                if (nodes[ib].requires_grad) {
                  MatrixMap<T>(GradOf(nodes, ib).data().data(), k, n).noalias() +=
                      ConstMatrixMap<T>(av.data().data(), m, k).transpose() * g;
                }
              });
}

template <typename T>
Var Graph<T>::Conv2D(Var input, Var kernel, Conv2DOptions options) {
  const ConvGeometry geom =
      CheckConv(value(input).shape(), value(kernel).shape(), options);
  auto cols = std::make_shared<const RowMatrix<T>>(Im2Col(value(input), geom));
  Tensor<T> out = ConvFromCols(*cols, value(kernel), geom);
  const std::size_t ix = input.id, ik = kernel.id;
  const bool need_cols = nodes_[ik].requires_grad;
  if (!need_cols) cols.reset();
  return Push(std::move(out), {ix, ik},
              [ix, ik, geom, cols](std::vector<Node>& nodes, std::size_t self) {
                Tensor<T>* gx =
                    nodes[ix].requires_grad ? &GradOf(nodes, ix) : nullptr;
                Tensor<T>* gk =
                    nodes[ik].requires_grad ? &GradOf(nodes, ik) : nullptr;
                static const RowMatrix<T> kEmpty;
                ConvBackward(cols ? *cols : kEmpty, nodes[ik].value,
                             nodes[self].grad, geom, gx, gk);
              });
}

template <typename T>
Var Graph<T>::Add(Var a, Var b) {
  const Tensor<T>& av = value(a);
  const Tensor<T>& bv = value(b);
  if (av.shape() != bv.shape()) throw MakeShapeError("add", av.shape(), bv.shape());
  Tensor<T> out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  const std::size_t ia = a.id, ib = b.id;
  return Push(std::move(out), {ia, ib},
              [ia, ib](std::vector<Node>& nodes, std::size_t self) {
                for (std::size_t id : {ia, ib}) {
                  if (!nodes[id].requires_grad) continue;
                  Tensor<T>& gi = GradOf(nodes, id);
                  const Tensor<T>& g = nodes[self].grad;
                  for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
                }
              });
}

template <typename T>
Var Graph<T>::AddBias(Var x, Var bias) {
  const Tensor<T>& xv = value(x);
  const Tensor<T>& bv = value(bias);
  if (bv.rank() != 1 || xv.rank() == 0 || xv.shape().back() != bv.dim(0)) {
    throw MakeShapeError("add_bias", xv.shape(), bv.shape());
  }
  const std::size_t c = bv.dim(0);
  Tensor<T> out = xv;
  for (std::size_t row = 0; row < out.size(); row += c) {
    T* o = out.data().data() + row;
    for (std::size_t j = 0; j < c; ++j) o[j] += bv[j];
  }
  const std::size_t ix = x.id, ib = bias.id;
  return Push(std::move(out), {ix, ib},
              [ix, ib, c](std::vector<Node>& nodes, std::size_t self) {
                const Tensor<T>& g = nodes[self].grad;
                if (nodes[ix].requires_grad) {
                  Tensor<T>& gx = GradOf(nodes, ix);
                  for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                }
                if (nodes[ib].requires_grad) {
                  Tensor<T>& gb = GradOf(nodes, ib);
                  for (std::size_t row = 0; row < g.size(); row += c) {
                    const T* gr = g.data().data() + row;
                    for (std::size_t j = 0; j < c; ++j) gb[j] += gr[j];
                  }
                }
              });
}

template <typename T>
Var Graph<T>::Relu(Var x) {
  Tensor<T> out = value(x);
  for (T& v : out.data()) v = v > T{0} ? v : T{0};
  const std::size_t ix = x.id;
  return Push(std::move(out), {ix},
              [ix](std::vector<Node>& nodes, std::size_t self) {
                Tensor<T>& gx = GradOf(nodes, ix);
                const Tensor<T>& g = nodes[self].grad;
                const Tensor<T>& xv = nodes[ix].value;
                for (std::size_t i = 0; i < g.size(); ++i) {
                  gx[i] += xv[i] > T{0} ? g[i] : T{0};
                }
              });
}

template <typename T>
Var Graph<T>::GlobalAvgPool(Var x) {
  const Tensor<T>& xv = value(x);
  if (xv.rank() != 4) throw ShapeError("global_avg_pool: expected [N,H,W,C], got " + ShapeToString(xv.shape()));
  const std::size_t n = xv.dim(0), hw = xv.dim(1) * xv.dim(2), c = xv.dim(3);
  Tensor<T> out({n, c});
  const T inv = T{1} / static_cast<T>(hw);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t p = 0; p < hw; ++p) {
      const T* row = xv.data().data() + (b * hw + p) * c;
      for (std::size_t ch = 0; ch < c; ++ch) out[b * c + ch] += row[ch];
    }
    for (std::size_t ch = 0; ch < c; ++ch) out[b * c + ch] *= inv;
  }
  const std::size_t ix = x.id;
  return Push(std::move(out), {ix},
              [ix, n, hw, c, inv](std::vector<Node>& nodes, std::size_t self) {
                Tensor<T>& gx = GradOf(nodes, ix);
                const Tensor<T>& g = nodes[self].grad;
                for (std::size_t b = 0; b < n; ++b) {
                  for (std::size_t p = 0; p < hw; ++p) {
                    T* row = gx.data().data() + (b * hw + p) * c;
                    for (std::size_t ch = 0; ch < c; ++ch) {
                      row[ch] += g[b * c + ch] * inv;
                    }
                  }
                }
              });
}

template <typename T>
Var Graph<T>::SoftmaxCrossEntropy(Var logits, std::span<const int> labels) {
  const Tensor<T>& lv = value(logits);
  if (lv.rank() != 2 || lv.dim(0) != labels.size() || lv.dim(1) == 0) {
    throw MakeShapeError("softmax_cross_entropy", lv.shape(),
                         Shape{labels.size()});
  }
  const std::size_t n = lv.dim(0), k = lv.dim(1);
  Tensor<T> probs({n, k});
  T loss = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= k) {
      throw std::invalid_argument("softmax_cross_entropy: label " +
                                  std::to_string(y) + " outside [0," +
                                  std::to_string(k) + ")");
    }
    const T* row = lv.data().data() + i * k;
    const T mx = *std::max_element(row, row + k);
    T z = 0;
    for (std::size_t j = 0; j < k; ++j) {
      probs[i * k + j] = std::exp(row[j] - mx);
      z += probs[i * k + j];
    }
    for (std::size_t j = 0; j < k; ++j) probs[i * k + j] /= z;
    loss += std::log(z) + mx - row[y];
  }
  loss /= static_cast<T>(n);
  std::vector<int> label_copy(labels.begin(), labels.end());
  const std::size_t il = logits.id;
  return Push(Tensor<T>({}, {loss}), {il},
              [il, n, k, probs = std::move(probs),
               label_copy = std::move(label_copy)](std::vector<Node>& nodes,
                                                   std::size_t self) {
                Tensor<T>& gl = GradOf(nodes, il);
                const T scale = nodes[self].grad[0] / static_cast<T>(n);
                for (std::size_t i = 0; i < n; ++i) {
                  for (std::size_t j = 0; j < k; ++j) {
                    T d = probs[i * k + j];
                    if (static_cast<int>(j) == label_copy[i]) d -= T{1};
                    gl[i * k + j] += scale * d;
                  }
                }
              });
}

template <typename T>
Var Graph<T>::Scale(Var x, T factor) {
  Tensor<T> out = value(x);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= factor;
  const std::size_t ix = x.id;
  return Push(std::move(out), {ix},
              [ix, factor](std::vector<Node>& nodes, std::size_t self) {
                Tensor<T>& gx = GradOf(nodes, ix);
                const Tensor<T>& g = nodes[self].grad;
                for (std::size_t i = 0; i < g.size(); ++i) gx[i] += factor * g[i];
              });
}

template <typename T>
Var Graph<T>::Mul(Var a, Var b) {
  const Tensor<T>& av = value(a);
  const Tensor<T>& bv = value(b);
  if (av.shape() != bv.shape()) throw MakeShapeError("mul", av.shape(), bv.shape());
  Tensor<T> out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const std::size_t ia = a.id, ib = b.id;
  return Push(std::move(out), {ia, ib},
              [ia, ib](std::vector<Node>& nodes, std::size_t self) {
                const Tensor<T>& g = nodes[self].grad;
                if (nodes[ia].requires_grad) {
                  Tensor<T>& ga = GradOf(nodes, ia);
                  for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * nodes[ib].value[i];
                }
                if (nodes[ib].requires_grad) {
                  Tensor<T>& gb = GradOf(nodes, ib);
                  for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * nodes[ia].value[i];
                }
              });
}

template <typename T>
Var Graph<T>::Sum(Var x) {
  T total = 0;
  for (const T& v : value(x).data()) total += v;
  const std::size_t ix = x.id;
  return Push(Tensor<T>({}, {total}), {ix},
              [ix](std::vector<Node>& nodes, std::size_t self) {
                Tensor<T>& gx = GradOf(nodes, ix);
                const T g = nodes[self].grad[0];
                for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
              });
}

template <typename T>
Var Graph<T>::Pick(Var logits, std::span<const int> classes) {
  const Tensor<T>& lv = value(logits);
  if (lv.rank() != 2 || lv.dim(0) != classes.size()) {
    throw MakeShapeError("pick", lv.shape(), Shape{classes.size()});
  }
  const std::size_t n = lv.dim(0), k = lv.dim(1);
  Tensor<T> out({n});
  std::vector<std::size_t> cols(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (classes[i] < 0 || static_cast<std::size_t>(classes[i]) >= k) {
      throw std::invalid_argument("pick: class index " +
                                  std::to_string(classes[i]) +
                                  " outside [0," + std::to_string(k) + ")");
    }
    cols[i] = static_cast<std::size_t>(classes[i]);
    out[i] = lv[i * k + cols[i]];
  }
  const std::size_t il = logits.id;
  return Push(std::move(out), {il},
              [il, k, cols = std::move(cols)](std::vector<Node>& nodes,
                                              std::size_t self) {
                Tensor<T>& gl = GradOf(nodes, il);
                const Tensor<T>& g = nodes[self].grad;
                for (std::size_t i = 0; i < cols.size(); ++i) {
                  gl[i * k + cols[i]] += g[i];
                }
              });
}

template <typename T>
Var Graph<T>::Reshape(Var x, Shape shape) {
  const Tensor<T>& xv = value(x);
  if (NumElements(shape) != xv.size()) {
    throw MakeShapeError("reshape", xv.shape(), shape);
  }
  const std::size_t ix = x.id;
  return Push(xv.Reshaped(std::move(shape)), {ix},
              [ix](std::vector<Node>& nodes, std::size_t self) {
                Tensor<T>& gx = GradOf(nodes, ix);
                const Tensor<T>& g = nodes[self].grad;
                for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
              });
}

template <typename T>
void Graph<T>::Backward(Var loss) {
  if (loss.id >= nodes_.size()) throw std::out_of_range("backward: unknown node");
  if (value(loss).size() != 1) {
    throw ShapeError("backward: loss must be scalar, got shape " +
                     ShapeToString(value(loss).shape()));
  }
  for (Node& node : nodes_) {
    node.grad = Tensor<T>();
    node.has_grad = false;
  }
  GradOf(nodes_, loss.id)[0] = T{1};
  for (std::size_t id = loss.id + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (!node.requires_grad || !node.backward) continue;
    if (!node.has_grad) continue;  // not on the loss path
    node.backward(nodes_, id);
  }
  for (std::size_t id = 0; id < nodes_.size(); ++id) {
    if (nodes_[id].requires_grad) GradOf(nodes_, id);
  }
}

template <typename T>
const Tensor<T>& Graph<T>::grad(Var v) const {
  const Node& node = nodes_.at(v.id);
  if (!node.requires_grad || !node.has_grad) {
    throw std::logic_error("grad: node " + std::to_string(v.id) +
                           " has no gradient (not requested or no backward)");
  }
  return node.grad;
}

template class Graph<float>;
template class Graph<double>;
template Tensor<float> Conv2DForward(const Tensor<float>&, const Tensor<float>&,
                                     Conv2DOptions);
template Tensor<double> Conv2DForward(const Tensor<double>&,
                                      const Tensor<double>&, Conv2DOptions);
template Tensor<float> MatMulForward(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> MatMulForward(const Tensor<double>&,
                                      const Tensor<double>&);

}  // namespace prunex
