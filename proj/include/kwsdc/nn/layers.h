// Copyright 2026 The kwsdc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Parameterised layers built on the differentiable ops. Matrices are
// initialised uniformly in +-sqrt(6 / (fan_in + fan_out)); biases start at 0.
//
// Each layer exposes Visit(prefix, fn) calling fn(name, tensor, trainable)
// for every parameter and buffer, in a fixed order.

#ifndef KWSDC_NN_LAYERS_H_
#define KWSDC_NN_LAYERS_H_

#include <cmath>
#include <string>
#include <vector>

#include "kwsdc/nn/ops.h"
#include "kwsdc/random.h"

namespace kwsdc::nn {

template <typename T>
Tensor<T> XavierUniform(const Shape& shape, int fan_in, int fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  std::vector<T> values(NumElements(shape));
  for (T& v : values) v = static_cast<T>(rng.Uniform(-limit, limit));
  return Tensor<T>::FromValues(shape, std::move(values), true);
}

template <typename T>
Tensor<T> ZeroParam(const Shape& shape) {
  return Tensor<T>::Zeros(shape, true);
}

template <typename T>
struct Dense {
  Tensor<T> weight;  // [in, out]
  Tensor<T> bias;    // [out]

  Dense() = default;
  Dense(int in, int out, Rng& rng)
      : weight(XavierUniform<T>({in, out}, in, out, rng)),
        bias(ZeroParam<T>({out})) {}

  Tensor<T> Forward(const Tensor<T>& x) const {
    return AddBias(MatMul(x, weight), bias);
  }

  template <typename Fn>
  void Visit(const std::string& prefix, Fn&& fn) {
    fn(prefix + ".weight", weight, true);
    fn(prefix + ".bias", bias, true);
  }
};

template <typename T>
struct Conv2dLayer {
  Tensor<T> weight;  // [out, in, k, k]
  Tensor<T> bias;    // [out]
  int stride_t = 1;

  Conv2dLayer() = default;
  Conv2dLayer(int in, int out, int kernel, int stride, Rng& rng)
      : weight(XavierUniform<T>({out, in, kernel, kernel}, in * kernel * kernel,
                                out * kernel * kernel, rng)),
        bias(ZeroParam<T>({out})),
        stride_t(stride) {}

  Tensor<T> Forward(const Tensor<T>& x) const {
    return Conv2d(x, weight, bias, stride_t);
  }

  template <typename Fn>
  void Visit(const std::string& prefix, Fn&& fn) {
    fn(prefix + ".weight", weight, true);
    fn(prefix + ".bias", bias, true);
  }
};

template <typename T>
struct BatchNormLayer {
  Tensor<T> gamma;
  Tensor<T> beta;
  BatchNormState<T> state;

  BatchNormLayer() = default;
  explicit BatchNormLayer(int channels)
      : gamma(Tensor<T>::Full({channels}, T(1), true)),
        beta(ZeroParam<T>({channels})),
        state(channels) {}

  Tensor<T> Forward(const Tensor<T>& x, bool training,
                    const std::vector<int>& lengths = {}) {
    return BatchNorm(x, gamma, beta, state, training, lengths);
  }

  template <typename Fn>
  void Visit(const std::string& prefix, Fn&& fn) {
    fn(prefix + ".gamma", gamma, true);
    fn(prefix + ".beta", beta, true);
    fn(prefix + ".running_mean", state.running_mean, false);
    fn(prefix + ".running_var", state.running_var, false);
  }
};

template <typename T>
struct BiGruLayer {
  GruWeights<T> forward;
  GruWeights<T> backward;

  BiGruLayer() = default;
  BiGruLayer(int in, int hidden, Rng& rng)
      : forward(Make(in, hidden, rng)), backward(Make(in, hidden, rng)) {}

  int hidden() const { return forward.w_hidden.dim(0); }

  Tensor<T> Forward(const Tensor<T>& x) const { return BiGru(x, forward, backward); }

  // Independent sequences stacked along the rows of x.
  Tensor<T> Forward(const Tensor<T>& x, const std::vector<int>& segments) const {
    return BiGruPacked(x, segments, forward, backward);
  }

  template <typename Fn>
  void Visit(const std::string& prefix, Fn&& fn) {
    VisitDirection(prefix + ".fwd", forward, fn);
    VisitDirection(prefix + ".bwd", backward, fn);
  }

 private:
  static GruWeights<T> Make(int in, int hidden, Rng& rng) {
    return {XavierUniform<T>({in, 3 * hidden}, in, hidden, rng),
            XavierUniform<T>({hidden, 3 * hidden}, hidden, hidden, rng),
            ZeroParam<T>({3 * hidden}), ZeroParam<T>({3 * hidden})};
  }

  template <typename Fn>
  static void VisitDirection(const std::string& prefix, GruWeights<T>& w, Fn& fn) {
    fn(prefix + ".w_input", w.w_input, true);
    fn(prefix + ".w_hidden", w.w_hidden, true);
    fn(prefix + ".b_input", w.b_input, true);
    fn(prefix + ".b_hidden", w.b_hidden, true);
  }
};

template <typename T>
struct EmbeddingLayer {
  Tensor<T> table;  // [vocab, width]

  EmbeddingLayer() = default;
  EmbeddingLayer(int vocab, int width, Rng& rng)
      : table(XavierUniform<T>({vocab, width}, vocab, width, rng)) {}

  Tensor<T> Forward(const std::vector<int>& indices) const {
    return Embedding(table, indices);
  }

  template <typename Fn>
  void Visit(const std::string& prefix, Fn&& fn) {
    fn(prefix + ".table", table, true);
  }
};

template <typename T>
struct AttentionOutput {
  Tensor<T> context;  // [n, model_dim]
  Tensor<T> weights;  // [n, m], rows sum to 1
};

// Single-head scaled dot-product attention with learned query/key/value and
// output projections: softmax(Q K^T / sqrt(A)) V Wo.
template <typename T>
struct CrossAttention {
  Dense<T> query;
  Dense<T> key;
  Dense<T> value;
  Dense<T> output;

  CrossAttention() = default;
  CrossAttention(int model_dim, int attention_dim, Rng& rng)
      : query(model_dim, attention_dim, rng),
        key(model_dim, attention_dim, rng),
        value(model_dim, attention_dim, rng),
        output(attention_dim, model_dim, rng) {}

  int attention_dim() const { return query.weight.dim(1); }

  // q[n, D] attends over k[m, D] / v[m, D]; only the first key_length keys
  // are visible when key_length >= 0.
  AttentionOutput<T> Forward(const Tensor<T>& q, const Tensor<T>& k,
                             const Tensor<T>& v, int key_length = -1) const {
    if (k.rank() != 2 || v.rank() != 2 || k.dim(0) != v.dim(0))
      Fail(ErrorCode::kShapeError, "CrossAttention: keys " +
                                       ShapeString(k.shape()) + " values " +
                                       ShapeString(v.shape()));
    const Tensor<T> qp = query.Forward(q);
    const Tensor<T> kp = key.Forward(k);
    const Tensor<T> vp = value.Forward(v);
    const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(attention_dim())));
    Tensor<T> weights = SoftmaxRows(Scale(MatMulNT(qp, kp), scale), key_length);
    Tensor<T> context = output.Forward(MatMul(weights, vp));
    return {std::move(context), std::move(weights)};
  }

  template <typename Fn>
  void Visit(const std::string& prefix, Fn&& fn) {
    query.Visit(prefix + ".query", fn);
    key.Visit(prefix + ".key", fn);
    value.Visit(prefix + ".value", fn);
    output.Visit(prefix + ".output", fn);
  }
};

}  // namespace kwsdc::nn

#endif  // KWSDC_NN_LAYERS_H_
