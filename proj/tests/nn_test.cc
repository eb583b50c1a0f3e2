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

#include <cmath>
#include <functional>
#include <memory>
#include <vector>

#include <gtest/gtest.h>

#include "kwsdc/nn/adam.h"
#include "kwsdc/nn/layers.h"
#include "kwsdc/nn/ops.h"
#include "kwsdc/random.h"

namespace kwsdc::nn {
namespace {

using T64 = Tensor<double>;

T64 RandomTensor(const Shape& shape, Rng& rng, bool grad = true, double scale = 1.0) {
  std::vector<double> v(NumElements(shape));
  for (double& x : v) x = scale * rng.Uniform(-1.0, 1.0);
  return T64::FromValues(shape, std::move(v), grad);
}

// Compares analytic gradients of <f(), seed> against central differences for
// every element of every listed input. Inputs with an identically zero
// gradient (such as a key bias under softmax) are judged against a 1e-6 floor.
void CheckGradients(const std::function<T64()>& f, std::vector<T64> inputs,
                    std::uint64_t seed_value) {
  Rng rng(seed_value);
  const T64 probe = f();
  std::vector<double> seed(probe.size());
  for (double& s : seed) s = rng.Uniform(-1.0, 1.0);
  for (auto& in : inputs) in.ZeroGrad();
  f().Backward(seed);
  auto objective = [&] {
    const T64 out = f();
    double acc = 0;
    for (size_t i = 0; i < out.size(); ++i) acc += out.at(i) * seed[i];
    return acc;
  };
  const double h = 1e-5;
  for (size_t p = 0; p < inputs.size(); ++p) {
    auto& in = inputs[p];
    std::vector<double> analytic(in.grad().begin(), in.grad().end());
    if (analytic.empty()) analytic.assign(in.size(), 0.0);
    double diff2 = 0, a2 = 0, n2 = 0;
    for (size_t i = 0; i < in.size(); ++i) {
      const double saved = in.at(i);
      in.at(i) = saved + h;
      const double up = objective();
      in.at(i) = saved - h;
      const double down = objective();
      in.at(i) = saved;
      const double numeric = (up - down) / (2 * h);
      diff2 += (numeric - analytic[i]) * (numeric - analytic[i]);
      a2 += analytic[i] * analytic[i];
      n2 += numeric * numeric;
    }
    const double rel = std::sqrt(diff2) / std::max(std::sqrt(a2) + std::sqrt(n2), 1e-6);
    EXPECT_LT(rel, 1e-4) << "input " << p << " shape " << ShapeString(in.shape());
  }
}

TEST(TensorTest, ShapeChecks) {
  EXPECT_THROW(T64::FromValues({2, 3}, std::vector<double>(5)), Error);
  Rng rng(1);
  EXPECT_THROW(MatMul(RandomTensor({2, 3}, rng), RandomTensor({2, 3}, rng)), Error);
  EXPECT_THROW(RandomTensor({2, 2}, rng).Backward(), Error);
}

TEST(TensorTest, GradientAccumulatesAcrossUses) {
  T64 x = T64::FromValues({1}, {3.0}, true);
  T64 y = Add(Scale(x, 2.0), Scale(x, 5.0));
  y.Backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 7.0);
}

TEST(TensorTest, NoGradGuardRecordsNothing) {
  T64 x = T64::FromValues({1}, {3.0}, true);
  NoGradGuard guard;
  EXPECT_FALSE(Scale(x, 2.0).requires_grad());
}

TEST(GradCheck, Dense) {
  Rng rng(2);
  for (auto [n, in, out] : {std::tuple{1, 3, 2}, {4, 5, 3}, {7, 2, 6}}) {
    Dense<double> layer(in, out, rng);
    T64 x = RandomTensor({n, in}, rng);
    CheckGradients([&] { return layer.Forward(x); }, {x, layer.weight, layer.bias},
                   n * 100 + in);
  }
}

TEST(GradCheck, Conv2d) {
  Rng rng(3);
  for (auto [b, cin, cout, t, f, k, s] :
       {std::tuple{1, 1, 2, 5, 4, 3, 1}, {2, 2, 3, 6, 3, 3, 2}, {1, 3, 2, 7, 5, 5, 3}}) {
    Conv2dLayer<double> conv(cin, cout, k, s, rng);
    conv.bias = RandomTensor({cout}, rng);
    T64 x = RandomTensor({b, cin, t, f}, rng);
    CheckGradients([&] { return conv.Forward(x); }, {x, conv.weight, conv.bias},
                   b * 10 + t);
  }
}

TEST(GradCheck, BatchNorm) {
  Rng rng(4);
  struct Case {
    Shape shape;
    std::vector<int> lengths;
  };
  for (const Case& c : {Case{{2, 2, 3, 2}, {}}, Case{{3, 1, 4, 3}, {4, 2, 3}},
                        Case{{1, 3, 5, 2}, {}}}) {
    BatchNormLayer<double> bn(c.shape[1]);
    bn.gamma = RandomTensor({c.shape[1]}, rng);
    bn.beta = RandomTensor({c.shape[1]}, rng);
    T64 x = RandomTensor(c.shape, rng);
    CheckGradients([&] { return bn.Forward(x, true, c.lengths); },
                   {x, bn.gamma, bn.beta}, c.shape[0] * 7 + c.shape[2]);
  }
}

TEST(GradCheck, BiGru) {
  Rng rng(5);
  for (auto [steps, in, hidden] : {std::tuple{1, 2, 3}, {4, 3, 2}, {6, 5, 4}}) {
    BiGruLayer<double> gru(in, hidden, rng);
    for (auto* w : {&gru.forward, &gru.backward}) {
      w->b_input = RandomTensor({3 * hidden}, rng, true, 0.5);
      w->b_hidden = RandomTensor({3 * hidden}, rng, true, 0.5);
    }
    T64 x = RandomTensor({steps, in}, rng);
    std::vector<T64> inputs{x};
    gru.Visit("g", [&](const std::string&, T64& t, bool) { inputs.push_back(t); });
    CheckGradients([&] { return gru.Forward(x); }, inputs, steps * 31 + hidden);
    CheckGradients([&] { return GruFinalStates(gru.Forward(x)); }, inputs, steps + 1);
  }
}

TEST(GradCheck, BiGruPacked) {
  Rng rng(15);
  BiGruLayer<double> gru(3, 2, rng);
  for (auto* w : {&gru.forward, &gru.backward})
    w->b_hidden = RandomTensor({6}, rng, true, 0.5);
  T64 x = RandomTensor({7, 3}, rng);
  std::vector<T64> inputs{x};
  gru.Visit("g", [&](const std::string&, T64& t, bool) { inputs.push_back(t); });
  CheckGradients([&] { return gru.Forward(x, {3, 1, 3}); }, inputs, 17);
}

TEST(BiGruTest, PackedEqualsSeparateSequences) {
  Rng rng(16);
  BiGruLayer<double> gru(3, 4, rng);
  T64 x = RandomTensor({9, 3}, rng, false);
  const std::vector<int> segments{4, 2, 3};
  const T64 packed = gru.Forward(x, segments);
  int row = 0;
  for (int len : segments) {
    const T64 alone = gru.Forward(RowSlice(x, row, len));
    for (size_t i = 0; i < alone.size(); ++i)
      EXPECT_NEAR(packed.at(row * 8 + i), alone.at(i), 1e-14);
    row += len;
  }
  EXPECT_THROW(gru.Forward(x, {4, 4}), Error);
}

// Gradients must not depend on where the allocator places the buffers.
TEST(DeterminismTest, GradientsIgnoreHeapLayout) {
  std::vector<std::vector<float>> grads[2];
  std::vector<std::unique_ptr<char[]>> junk;
  for (int run = 0; run < 2; ++run) {
    for (int j = 0; j < 40 * run; ++j) junk.emplace_back(new char[4 + 12 * (j % 7)]);
    Rng rng(21);
    BiGruLayer<float> gru(24, 8, rng);
    BatchNormLayer<float> bn(3);
    std::vector<float> xv(2 * 3 * 9 * 8);
    for (float& v : xv) v = static_cast<float>(rng.Uniform(-1, 1));
    auto x = Tensor<float>::FromValues({2, 3, 9, 8}, xv, true);
    const std::vector<int> lengths{9, 5};
    Tensor<float> y = gru.Forward(FrameFlattenPacked(bn.Forward(x, true, lengths), lengths),
                                  lengths);
    std::vector<float> seed(y.size());
    for (float& v : seed) v = static_cast<float>(rng.Uniform(-1, 1));
    y.Backward(seed);
    grads[run].push_back({x.grad().begin(), x.grad().end()});
    auto keep = [&](const std::string&, Tensor<float>& t, bool trainable) {
      if (trainable) grads[run].push_back({t.grad().begin(), t.grad().end()});
    };
    gru.Visit("g", keep);
    bn.Visit("bn", keep);
  }
  EXPECT_EQ(grads[0], grads[1]);
}

TEST(GradCheck, FrameFlattenPackedAndRowSlice) {
  Rng rng(18);
  T64 x = RandomTensor({3, 2, 4, 3}, rng);
  CheckGradients([&] { return FrameFlattenPacked(x, {2, 4, 1}); }, {x}, 4);
  T64 m = RandomTensor({5, 3}, rng);
  CheckGradients([&] { return RowSlice(m, 1, 3); }, {m}, 5);
  EXPECT_THROW(RowSlice(m, 3, 3), Error);
  EXPECT_THROW(FrameFlattenPacked(x, {2, 5, 1}), Error);
}

TEST(FrameFlattenTest, PackedStacksPerItemFlattening) {
  Rng rng(19);
  T64 x = RandomTensor({3, 2, 4, 3}, rng, false);
  const std::vector<int> lengths{2, 4, 1};
  const T64 packed = FrameFlattenPacked(x, lengths);
  EXPECT_EQ(packed.shape(), (Shape{7, 6}));
  std::vector<T64> parts;
  for (int b = 0; b < 3; ++b) parts.push_back(FrameFlatten(x, b, lengths[b]));
  EXPECT_EQ(packed.values(), ConcatRows(parts).values());
}

TEST(GradCheck, CrossAttention) {
  Rng rng(6);
  for (auto [n, m, dim, adim, key_len] :
       {std::tuple{1, 3, 4, 2, -1}, {3, 5, 4, 3, 3}, {4, 2, 6, 5, -1}}) {
    CrossAttention<double> att(dim, adim, rng);
    T64 q = RandomTensor({n, dim}, rng);
    T64 kv = RandomTensor({m, dim}, rng);
    std::vector<T64> inputs{q, kv};
    att.Visit("a", [&](const std::string&, T64& t, bool) { inputs.push_back(t); });
    CheckGradients([&] { return att.Forward(q, kv, kv, key_len).context; }, inputs,
                   n * 13 + m);
  }
}

TEST(GradCheck, SigmoidBceAndElementwise) {
  Rng rng(7);
  for (int n : {1, 4, 9}) {
    T64 x = RandomTensor({n, 1}, rng, true, 4.0);
    std::vector<int> targets(n);
    for (int i = 0; i < n; ++i) targets[i] = i % 2;
    CheckGradients([&] { return SigmoidBce(x, targets); }, {x}, n);
    CheckGradients([&] { return Sigmoid(x); }, {x}, n + 50);
    CheckGradients([&] { return Tanh(x); }, {x}, n + 60);
    CheckGradients([&] { return SoftmaxRows(MatMulNT(x, x)); }, {x}, n + 70);
  }
}

TEST(GradCheck, EmbeddingConcatAndFlatten) {
  Rng rng(8);
  EmbeddingLayer<double> emb(6, 3, rng);
  CheckGradients([&] { return emb.Forward({1, 4, 1, 0}); }, {emb.table}, 1);
  T64 a = RandomTensor({2, 3}, rng), b = RandomTensor({1, 3}, rng);
  CheckGradients([&] { return ConcatRows<double>({a, b}); }, {a, b}, 2);
  T64 x = RandomTensor({2, 3, 4, 2}, rng);
  CheckGradients([&] { return FrameFlatten(x, 1, 3); }, {x}, 3);
}

TEST(Conv2dTest, MatchesDirectLoop) {
  Rng rng(9);
  const int b = 2, cin = 2, cout = 3, t = 7, f = 4, k = 3, s = 2;
  T64 x = RandomTensor({b, cin, t, f}, rng, false);
  T64 w = RandomTensor({cout, cin, k, k}, rng, false);
  T64 bias = RandomTensor({cout}, rng, false);
  const T64 y = Conv2d(x, w, bias, s);
  const int tout = (t + s - 1) / s;
  ASSERT_EQ(y.shape(), (Shape{b, cout, tout, f}));
  auto xi = [&](int bb, int c, int tt, int ff) {
    if (tt < 0 || tt >= t || ff < 0 || ff >= f) return 0.0;
    return x.at(((bb * cin + c) * t + tt) * f + ff);
  };
  for (int bb = 0; bb < b; ++bb)
    for (int o = 0; o < cout; ++o)
      for (int to = 0; to < tout; ++to)
        for (int ff = 0; ff < f; ++ff) {
          double acc = bias.at(o);
          for (int c = 0; c < cin; ++c)
            for (int i = 0; i < k; ++i)
              for (int j = 0; j < k; ++j)
                acc += w.at(((o * cin + c) * k + i) * k + j) *
                       xi(bb, c, to * s + i - 1, ff + j - 1);
          EXPECT_NEAR(y.at(((bb * cout + o) * tout + to) * f + ff), acc, 1e-12);
        }
}

TEST(BatchNormTest, TrainOutputIsStandardised) {
  Rng rng(10);
  BatchNormLayer<double> bn(3);
  T64 x = RandomTensor({4, 3, 5, 2}, rng, false, 3.0);
  const T64 y = bn.Forward(x, true);
  for (int c = 0; c < 3; ++c) {
    double sum = 0, sq = 0;
    int count = 0;
    for (int b = 0; b < 4; ++b)
      for (int i = 0; i < 10; ++i) {
        const double v = y.at((b * 3 + c) * 10 + i);
        sum += v;
        sq += v * v;
        ++count;
      }
    EXPECT_NEAR(sum / count, 0.0, 1e-12);
    EXPECT_NEAR(sq / count, 1.0, 1e-3);
  }
}

TEST(BatchNormTest, PaddingIsInvisible) {
  Rng rng(11);
  BatchNormLayer<double> a(2), b(2);
  T64 x = RandomTensor({2, 2, 6, 3}, rng, false);
  T64 padded = x.Detach();
  // Item 1 has 4 valid steps; scribble on its padding.
  for (int c = 0; c < 2; ++c)
    for (int t = 4; t < 6; ++t)
      for (int f = 0; f < 3; ++f) padded.at(((1 * 2 + c) * 6 + t) * 3 + f) = 1e3;
  const T64 ya = a.Forward(x, true, {6, 4});
  const T64 yb = b.Forward(padded, true, {6, 4});
  for (size_t i = 0; i < ya.size(); ++i) EXPECT_NEAR(ya.at(i), yb.at(i), 1e-12);
  for (int c = 0; c < 2; ++c)
    for (int t = 4; t < 6; ++t)
      for (int f = 0; f < 3; ++f) EXPECT_EQ(yb.at(((1 * 2 + c) * 6 + t) * 3 + f), 0.0);
  EXPECT_EQ(a.state.running_mean.values(), b.state.running_mean.values());
}

TEST(BatchNormTest, EvalUsesRunningMoments) {
  BatchNormLayer<double> bn(1);
  bn.state.running_mean.at(0) = 2.0;
  bn.state.running_var.at(0) = 4.0;
  T64 x = T64::Full({1, 1, 2, 1}, 6.0);
  const T64 y = bn.Forward(x, false);
  EXPECT_NEAR(y.at(0), 4.0 / std::sqrt(4.0 + 1e-5), 1e-12);
  EXPECT_THROW(bn.Forward(T64::Zeros({0, 1, 2, 1}), true), Error);
}

// Scalar reference GRU, forward direction only.
std::vector<std::vector<double>> ReferenceGru(const T64& x, const GruWeights<double>& w) {
  const int steps = x.dim(0), in = x.dim(1), h = w.w_hidden.dim(0);
  std::vector<double> state(h, 0.0);
  std::vector<std::vector<double>> out;
  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  for (int t = 0; t < steps; ++t) {
    std::vector<double> gx(3 * h), gh(3 * h);
    for (int j = 0; j < 3 * h; ++j) {
      gx[j] = w.b_input.at(j);
      gh[j] = w.b_hidden.at(j);
      for (int i = 0; i < in; ++i) gx[j] += x.at(t * in + i) * w.w_input.at(i * 3 * h + j);
      for (int i = 0; i < h; ++i) gh[j] += state[i] * w.w_hidden.at(i * 3 * h + j);
    }
    std::vector<double> next(h);
    for (int j = 0; j < h; ++j) {
      const double z = sig(gx[j] + gh[j]);
      const double r = sig(gx[h + j] + gh[h + j]);
      const double n = std::tanh(gx[2 * h + j] + r * gh[2 * h + j]);
      next[j] = z * state[j] + (1 - z) * n;
    }
    state = next;
    out.push_back(state);
  }
  return out;
}

TEST(BiGruTest, MatchesScalarReferenceBothDirections) {
  Rng rng(12);
  BiGruLayer<double> gru(3, 4, rng);
  gru.forward.b_hidden = RandomTensor({12}, rng, true);
  gru.backward.b_input = RandomTensor({12}, rng, true);
  T64 x = RandomTensor({5, 3}, rng, false);
  const T64 y = gru.Forward(x);
  const auto fwd = ReferenceGru(x, gru.forward);
  std::vector<double> rev_values;
  for (int t = 4; t >= 0; --t)
    for (int i = 0; i < 3; ++i) rev_values.push_back(x.at(t * 3 + i));
  const auto bwd = ReferenceGru(T64::FromValues({5, 3}, rev_values), gru.backward);
  for (int t = 0; t < 5; ++t)
    for (int j = 0; j < 4; ++j) {
      EXPECT_NEAR(y.at(t * 8 + j), fwd[t][j], 1e-12);
      EXPECT_NEAR(y.at(t * 8 + 4 + j), bwd[4 - t][j], 1e-12);
    }
  const T64 fin = GruFinalStates(y);
  EXPECT_EQ(fin.shape(), (Shape{1, 8}));
  EXPECT_EQ(fin.at(0), y.at(4 * 8));
  EXPECT_EQ(fin.at(4), y.at(4));
}

TEST(AttentionTest, WeightsAreDistributionsAndMaskHolds) {
  Rng rng(13);
  CrossAttention<double> att(4, 3, rng);
  T64 q = RandomTensor({3, 4}, rng, false), kv = RandomTensor({6, 4}, rng, false);
  const auto out = att.Forward(q, kv, kv, 4);
  EXPECT_EQ(out.context.shape(), (Shape{3, 4}));
  for (int i = 0; i < 3; ++i) {
    double sum = 0;
    for (int j = 0; j < 6; ++j) {
      const double w = out.weights.at(i * 6 + j);
      EXPECT_GE(w, 0.0);
      if (j >= 4) {
        EXPECT_EQ(w, 0.0);
      }
      sum += w;
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
  // Keys beyond the mask cannot influence the result.
  T64 kv2 = kv.Detach();
  for (int j = 16; j < 24; ++j) kv2.at(j) = 50.0;
  const auto out2 = att.Forward(q, kv2, kv2, 4);
  for (size_t i = 0; i < out.context.size(); ++i)
    EXPECT_NEAR(out.context.at(i), out2.context.at(i), 1e-12);
}

TEST(DropoutTest, EvalIdentityTrainScaling) {
  Rng rng(14);
  T64 x = T64::Full({1000, 10}, 1.0);
  EXPECT_EQ(Dropout(x, 0.5, false, rng).values(), x.values());
  const T64 y = Dropout(x, 0.25, true, rng);
  double sum = 0;
  int zeros = 0;
  for (double v : y.values()) {
    sum += v;
    if (v == 0.0) {
      ++zeros;
    } else {
      EXPECT_NEAR(v, 1.0 / 0.75, 1e-12);
    }
  }
  EXPECT_NEAR(sum / y.size(), 1.0, 0.03);
  EXPECT_NEAR(zeros / 10000.0, 0.25, 0.02);
  EXPECT_THROW(Dropout(x, 1.0, true, rng), Error);
}

TEST(BceTest, KnownValuesAndExtremeLogits) {
  T64 x = T64::FromValues({3}, {0.0, 800.0, -800.0});
  const double loss = SigmoidBce(x, {1, 1, 1}).item();
  EXPECT_NEAR(loss, (std::log(2.0) + 0.0 + 800.0) / 3.0, 1e-9);
  EXPECT_TRUE(std::isfinite(loss));
}

TEST(AdamTest, FirstStepMovesByLearningRate) {
  T64 p = T64::FromValues({3}, {1.0, -2.0, 0.5}, true);
  Adam<double> adam({p}, {.lr = 0.01});
  p.mutable_grad() = {4.0, -0.5, 0.0};
  adam.Step();
  EXPECT_NEAR(p.at(0), 1.0 - 0.01 * 4.0 / (4.0 + 1e-8), 1e-12);
  EXPECT_NEAR(p.at(1), -2.0 + 0.01 * 0.5 / (0.5 + 1e-8), 1e-12);
  EXPECT_EQ(p.at(2), 0.5);
  EXPECT_EQ(adam.step(), 1);
}

TEST(AdamTest, MatchesScalarRecurrence) {
  T64 p = T64::FromValues({1}, {0.0}, true);
  Adam<double> adam({p}, {.lr = 0.05});
  double ref = 0.0, m = 0.0, v = 0.0;
  for (int t = 1; t <= 20; ++t) {
    const double g = 2.0 * (ref - 3.0);
    adam.ZeroGrad();
    p.mutable_grad()[0] = 2.0 * (p.at(0) - 3.0);
    adam.Step();
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    ref -= 0.05 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
    EXPECT_NEAR(p.at(0), ref, 1e-12);
  }
}

TEST(AdamTest, MinimisesQuadratic) {
  T64 p = T64::FromValues({2}, {5.0, -4.0}, true);
  Adam<double> adam({p}, {.lr = 0.1});
  for (int i = 0; i < 500; ++i) {
    adam.ZeroGrad();
    T64 loss = SigmoidBce(p, {1, 0});
    loss.Backward();
    adam.Step();
  }
  EXPECT_GT(p.at(0), 5.0);
  EXPECT_LT(p.at(1), -4.0);
}

}  // namespace
}  // namespace kwsdc::nn
