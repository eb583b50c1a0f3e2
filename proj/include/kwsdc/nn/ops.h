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

// Differentiable operations. Every function checks shapes up front and
// throws ShapeError on mismatch; backward closures only touch gradients of
// inputs that require them.

#ifndef KWSDC_NN_OPS_H_
#define KWSDC_NN_OPS_H_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "kwsdc/nn/tensor.h"
#include "kwsdc/random.h"

namespace kwsdc::nn {

namespace internal {

// Sum of f(0) .. f(n - 1) over 16 index-interleaved lanes. The order of
// additions depends only on n, never on the address of the data.
template <typename T, typename F>
double LaneSum(size_t n, F&& f) {
  constexpr size_t kLanes = 16;
  T acc[kLanes] = {};
  size_t i = 0;
  for (; i + kLanes <= n; i += kLanes)
    for (size_t j = 0; j < kLanes; ++j) acc[j] += f(i + j);
  double total = 0;
  for (T a : acc) total += a;
  for (; i < n; ++i) total += f(i);
  return total;
}

inline void CheckRank(const Shape& shape, size_t rank, const char* op) {
  if (shape.size() != rank)
    Fail(ErrorCode::kShapeError, std::string(op) + ": expected rank " +
                                     std::to_string(rank) + ", got " +
                                     ShapeString(shape));
}

template <typename T>
ConstMatrixMap<T> Cm(const std::shared_ptr<Node<T>>& node, Eigen::Index rows,
                     Eigen::Index cols) {
  return ConstMatrixMap<T>(node->value.data(), rows, cols);
}

template <typename T>
T StableSigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

}  // namespace internal

// ---------------------------------------------------------------------------
// Elementwise and linear algebra

template <typename T>
Tensor<T> Add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape())
    Fail(ErrorCode::kShapeError, "Add: " + ShapeString(a.shape()) + " vs " +
                                     ShapeString(b.shape()));
  std::vector<T> out(a.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) + b.at(i);
  return Tensor<T>::FromOp(a.shape(), std::move(out), {a.node(), b.node()},
                           [](Node<T>& self) {
                             for (int p = 0; p < 2; ++p)
                               if (T* g = GradOf(self.parents[p]))
                                 for (size_t i = 0; i < self.grad.size(); ++i)
                                   g[i] += self.grad[i];
                           });
}

template <typename T>
Tensor<T> Scale(const Tensor<T>& x, T factor) {
  std::vector<T> out(x.values());
  for (T& v : out) v *= factor;
  return Tensor<T>::FromOp(x.shape(), std::move(out), {x.node()},
                           [factor](Node<T>& self) {
                             if (T* g = GradOf(self.parents[0]))
                               for (size_t i = 0; i < self.grad.size(); ++i)
                                 g[i] += factor * self.grad[i];
                           });
}

// a[n,k] * b[k,m]
template <typename T>
Tensor<T> MatMul(const Tensor<T>& a, const Tensor<T>& b) {
  internal::CheckRank(a.shape(), 2, "MatMul");
  internal::CheckRank(b.shape(), 2, "MatMul");
  const int n = a.dim(0), k = a.dim(1), m = b.dim(1);
  if (b.dim(0) != k)
    Fail(ErrorCode::kShapeError, "MatMul: " + ShapeString(a.shape()) + " x " +
                                     ShapeString(b.shape()));
  std::vector<T> out(static_cast<size_t>(n) * m);
  MatrixMap<T>(out.data(), n, m).noalias() = a.matrix() * b.matrix();
  return Tensor<T>::FromOp({n, m}, std::move(out), {a.node(), b.node()},
                           [n, k, m](Node<T>& self) {
    ConstMatrixMap<T> g(self.grad.data(), n, m);
    const auto& pa = self.parents[0];
    const auto& pb = self.parents[1];
    if (T* ga = GradOf(pa))
      MatrixMap<T>(ga, n, k).noalias() += g * internal::Cm(pb, k, m).transpose();
    if (T* gb = GradOf(pb))
      MatrixMap<T>(gb, k, m).noalias() += internal::Cm(pa, n, k).transpose() * g;
  });
}

// a[n,k] * b[m,k]^T
template <typename T>
Tensor<T> MatMulNT(const Tensor<T>& a, const Tensor<T>& b) {
  internal::CheckRank(a.shape(), 2, "MatMulNT");
  internal::CheckRank(b.shape(), 2, "MatMulNT");
  const int n = a.dim(0), k = a.dim(1), m = b.dim(0);
  if (b.dim(1) != k)
    Fail(ErrorCode::kShapeError, "MatMulNT: " + ShapeString(a.shape()) +
                                     " x " + ShapeString(b.shape()) + "^T");
  std::vector<T> out(static_cast<size_t>(n) * m);
  MatrixMap<T>(out.data(), n, m).noalias() = a.matrix() * b.matrix().transpose();
  return Tensor<T>::FromOp({n, m}, std::move(out), {a.node(), b.node()},
                           [n, k, m](Node<T>& self) {
    ConstMatrixMap<T> g(self.grad.data(), n, m);
    const auto& pa = self.parents[0];
    const auto& pb = self.parents[1];
    if (T* ga = GradOf(pa))
      MatrixMap<T>(ga, n, k).noalias() += g * internal::Cm(pb, m, k);
    if (T* gb = GradOf(pb))
      MatrixMap<T>(gb, m, k).noalias() += g.transpose() * internal::Cm(pa, n, k);
  });
}

// x[n,m] + bias[m] broadcast over rows.
template <typename T>
Tensor<T> AddBias(const Tensor<T>& x, const Tensor<T>& bias) {
  internal::CheckRank(x.shape(), 2, "AddBias");
  const int n = x.dim(0), m = x.dim(1);
  if (bias.size() != static_cast<size_t>(m))
    Fail(ErrorCode::kShapeError, "AddBias: bias " + ShapeString(bias.shape()) +
                                     " for " + ShapeString(x.shape()));
  std::vector<T> out(x.values());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) out[static_cast<size_t>(i) * m + j] += bias.at(j);
  return Tensor<T>::FromOp({n, m}, std::move(out), {x.node(), bias.node()},
                           [n, m](Node<T>& self) {
    if (T* gx = GradOf(self.parents[0]))
      for (size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i];
    if (T* gb = GradOf(self.parents[1]))
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) gb[j] += self.grad[static_cast<size_t>(i) * m + j];
  });
}

template <typename T>
Tensor<T> Sigmoid(const Tensor<T>& x) {
  std::vector<T> out(x.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = internal::StableSigmoid(x.at(i));
  return Tensor<T>::FromOp(x.shape(), out, {x.node()}, [out](Node<T>& self) {
    if (T* g = GradOf(self.parents[0]))
      for (size_t i = 0; i < out.size(); ++i)
        g[i] += self.grad[i] * out[i] * (T(1) - out[i]);
  });
}

template <typename T>
Tensor<T> Tanh(const Tensor<T>& x) {
  std::vector<T> out(x.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(x.at(i));
  return Tensor<T>::FromOp(x.shape(), out, {x.node()}, [out](Node<T>& self) {
    if (T* g = GradOf(self.parents[0]))
      for (size_t i = 0; i < out.size(); ++i)
        g[i] += self.grad[i] * (T(1) - out[i] * out[i]);
  });
}

template <typename T>
Tensor<T> Relu(const Tensor<T>& x) {
  const size_t size = x.size();
  std::vector<T> out(size);
  const T* xv = x.data().data();
  for (size_t i = 0; i < size; ++i) out[i] = xv[i] > T(0) ? xv[i] : T(0);
  return Tensor<T>::FromOp(x.shape(), std::move(out), {x.node()},
                           [size](Node<T>& self) {
    const auto& px = self.parents[0];
    T* __restrict g = GradOf(px);
    if (!g) return;
    const T* __restrict xv = px->value.data();
    const T* __restrict gy = self.grad.data();
    for (size_t i = 0; i < size; ++i) g[i] += xv[i] > T(0) ? gy[i] : T(0);
  });
}

// Row-wise softmax. When valid_cols >= 0, columns at or beyond it get zero
// probability (masked keys).
template <typename T>
Tensor<T> SoftmaxRows(const Tensor<T>& x, int valid_cols = -1) {
  internal::CheckRank(x.shape(), 2, "SoftmaxRows");
  const int n = x.dim(0), m = x.dim(1);
  const int valid = valid_cols < 0 ? m : valid_cols;
  if (valid < 1 || valid > m)
    Fail(ErrorCode::kShapeError, "SoftmaxRows: valid column count " +
                                     std::to_string(valid_cols) + " for " +
                                     ShapeString(x.shape()));
  std::vector<T> out(x.size(), T(0));
  for (int i = 0; i < n; ++i) {
    const T* row = x.data().data() + static_cast<size_t>(i) * m;
    T* dst = out.data() + static_cast<size_t>(i) * m;
    const T peak = *std::max_element(row, row + valid);
    T total = 0;
    for (int j = 0; j < valid; ++j) {
      dst[j] = std::exp(row[j] - peak);
      total += dst[j];
    }
    for (int j = 0; j < valid; ++j) dst[j] /= total;
  }
  return Tensor<T>::FromOp({n, m}, out, {x.node()}, [out, n, m](Node<T>& self) {
    T* g = GradOf(self.parents[0]);
    if (!g) return;
    for (int i = 0; i < n; ++i) {
      const size_t base = static_cast<size_t>(i) * m;
      T dot = 0;
      for (int j = 0; j < m; ++j) dot += self.grad[base + j] * out[base + j];
      for (int j = 0; j < m; ++j)
        g[base + j] += out[base + j] * (self.grad[base + j] - dot);
    }
  });
}

// Inverted dropout: survivors are scaled by 1 / (1 - rate). Identity when
// not training or when rate is 0. The mask is drawn from a counter-based
// stream keyed by one draw from `rng`; each 64-bit value decides two
// elements, one per 32-bit half.
template <typename T>
Tensor<T> Dropout(const Tensor<T>& x, double rate, bool training, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0))
    Fail(ErrorCode::kInvalidArgument, "dropout rate must be in [0, 1)");
  if (!training || rate == 0.0) return x;
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  const auto threshold = static_cast<std::uint32_t>(std::ldexp(rate, 32));
  const size_t size = x.size();
  auto keep = std::make_shared<std::vector<std::uint8_t>>(size);
  std::uint8_t* kp = keep->data();
  const std::uint64_t key = rng.Next();
  for (size_t i = 0; i < size; i += 2) {
    const std::uint64_t bits = SplitMix64(key + i);
    kp[i] = static_cast<std::uint32_t>(bits) >= threshold;
    if (i + 1 < size) kp[i + 1] = static_cast<std::uint32_t>(bits >> 32) >= threshold;
  }
  std::vector<T> out(size);
  const T* xv = x.data().data();
  for (size_t i = 0; i < size; ++i) out[i] = kp[i] ? xv[i] * keep_scale : T(0);
  return Tensor<T>::FromOp(x.shape(), std::move(out), {x.node()},
                           [keep, keep_scale, size](Node<T>& self) {
    T* __restrict g = GradOf(self.parents[0]);
    if (!g) return;
    const std::uint8_t* __restrict kp = keep->data();
    const T* __restrict gy = self.grad.data();
    for (size_t i = 0; i < size; ++i) g[i] += kp[i] ? gy[i] * keep_scale : T(0);
  });
}

// ---------------------------------------------------------------------------
// Indexing and reshaping

// Rows of table[V,E] selected by indices -> [n,E].
template <typename T>
Tensor<T> Embedding(const Tensor<T>& table, const std::vector<int>& indices) {
  internal::CheckRank(table.shape(), 2, "Embedding");
  const int vocab = table.dim(0), width = table.dim(1);
  const int n = static_cast<int>(indices.size());
  if (n < 1) Fail(ErrorCode::kShapeError, "Embedding: empty index sequence");
  std::vector<T> out(static_cast<size_t>(n) * width);
  for (int i = 0; i < n; ++i) {
    if (indices[i] < 0 || indices[i] >= vocab)
      Fail(ErrorCode::kShapeError, "Embedding: index " +
                                       std::to_string(indices[i]) +
                                       " outside vocabulary of " +
                                       std::to_string(vocab));
    std::copy_n(table.data().data() + static_cast<size_t>(indices[i]) * width,
                width, out.data() + static_cast<size_t>(i) * width);
  }
  return Tensor<T>::FromOp({n, width}, std::move(out), {table.node()},
                           [indices, width](Node<T>& self) {
    if (T* g = GradOf(self.parents[0]))
      for (size_t i = 0; i < indices.size(); ++i)
        for (int j = 0; j < width; ++j)
          g[static_cast<size_t>(indices[i]) * width + j] +=
              self.grad[i * width + j];
  });
}

// Stacks [r_i, c] tensors into [sum r_i, c].
template <typename T>
Tensor<T> ConcatRows(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) Fail(ErrorCode::kShapeError, "ConcatRows: no inputs");
  const int cols = static_cast<int>(parts[0].size() / parts[0].dim(0));
  int rows = 0;
  std::vector<std::shared_ptr<Node<T>>> parents;
  std::vector<T> out;
  for (const auto& part : parts) {
    internal::CheckRank(part.shape(), 2, "ConcatRows");
    if (part.dim(1) != cols)
      Fail(ErrorCode::kShapeError, "ConcatRows: column mismatch " +
                                       ShapeString(part.shape()));
    rows += part.dim(0);
    out.insert(out.end(), part.values().begin(), part.values().end());
    parents.push_back(part.node());
  }
  return Tensor<T>::FromOp({rows, cols}, std::move(out), std::move(parents),
                           [](Node<T>& self) {
    size_t offset = 0;
    for (const auto& p : self.parents) {
      const size_t count = p->value.size();
      if (T* g = GradOf(p))
        for (size_t i = 0; i < count; ++i) g[i] += self.grad[offset + i];
      offset += count;
    }
  });
}

// x[B,C,T,F] -> [length, C*F] for batch item b: row t is the channel-major
// flattening of time step t.
template <typename T>
Tensor<T> FrameFlatten(const Tensor<T>& x, int b, int length) {
  internal::CheckRank(x.shape(), 4, "FrameFlatten");
  const int batch = x.dim(0), ch = x.dim(1), frames = x.dim(2), bins = x.dim(3);
  if (b < 0 || b >= batch || length < 1 || length > frames)
    Fail(ErrorCode::kShapeError, "FrameFlatten: item " + std::to_string(b) +
                                     " length " + std::to_string(length) +
                                     " of " + ShapeString(x.shape()));
  const int width = ch * bins;
  auto source = [=](int t, int c, int f) {
    return ((static_cast<size_t>(b) * ch + c) * frames + t) * bins + f;
  };
  std::vector<T> out(static_cast<size_t>(length) * width);
  for (int t = 0; t < length; ++t)
    for (int c = 0; c < ch; ++c)
      std::copy_n(x.data().data() + source(t, c, 0), bins,
                  out.data() + static_cast<size_t>(t) * width + c * bins);
  return Tensor<T>::FromOp({length, width}, std::move(out), {x.node()},
                           [=](Node<T>& self) {
    T* g = GradOf(self.parents[0]);
    if (!g) return;
    for (int t = 0; t < length; ++t)
      for (int c = 0; c < ch; ++c)
        for (int f = 0; f < bins; ++f)
          g[source(t, c, f)] +=
              self.grad[static_cast<size_t>(t) * width + c * bins + f];
  });
}

// x[B,C,T,F] -> [sum(lengths), C*F]: FrameFlatten of every item, stacked.
template <typename T>
Tensor<T> FrameFlattenPacked(const Tensor<T>& x, const std::vector<int>& lengths) {
  internal::CheckRank(x.shape(), 4, "FrameFlattenPacked");
  const int batch = x.dim(0), ch = x.dim(1), frames = x.dim(2), bins = x.dim(3);
  if (lengths.size() != static_cast<size_t>(batch))
    Fail(ErrorCode::kShapeError, "FrameFlattenPacked: lengths size mismatch");
  int rows = 0;
  for (int len : lengths) {
    if (len < 1 || len > frames)
      Fail(ErrorCode::kShapeError, "FrameFlattenPacked: length " + std::to_string(len) +
                                       " of " + ShapeString(x.shape()));
    rows += len;
  }
  const int width = ch * bins;
  std::vector<T> out(static_cast<size_t>(rows) * width);
  auto for_each_run = [=](auto&& fn) {
    size_t row = 0;
    for (int b = 0; b < batch; ++b) {
      for (int t = 0; t < lengths[b]; ++t, ++row)
        for (int c = 0; c < ch; ++c)
          fn(((static_cast<size_t>(b) * ch + c) * frames + t) * bins,
             row * width + static_cast<size_t>(c) * bins);
    }
  };
  const T* xv = x.data().data();
  for_each_run([&](size_t src, size_t dst) { std::copy_n(xv + src, bins, out.data() + dst); });
  return Tensor<T>::FromOp({rows, width}, std::move(out), {x.node()},
                           [=](Node<T>& self) {
    T* g = GradOf(self.parents[0]);
    if (!g) return;
    const T* gy = self.grad.data();
    for_each_run([&](size_t src, size_t dst) {
      for (int f = 0; f < bins; ++f) g[src + f] += gy[dst + f];
    });
  });
}

// Rows [begin, begin + count) of x[n, m].
template <typename T>
Tensor<T> RowSlice(const Tensor<T>& x, int begin, int count) {
  internal::CheckRank(x.shape(), 2, "RowSlice");
  const int n = x.dim(0), m = x.dim(1);
  if (begin < 0 || count < 1 || begin + count > n)
    Fail(ErrorCode::kShapeError, "RowSlice: rows [" + std::to_string(begin) + ", " +
                                     std::to_string(begin + count) + ") of " +
                                     ShapeString(x.shape()));
  const size_t offset = static_cast<size_t>(begin) * m;
  std::vector<T> out(x.values().begin() + offset,
                     x.values().begin() + offset + static_cast<size_t>(count) * m);
  return Tensor<T>::FromOp({count, m}, std::move(out), {x.node()},
                           [offset](Node<T>& self) {
    if (T* g = GradOf(self.parents[0]))
      for (size_t i = 0; i < self.grad.size(); ++i) g[offset + i] += self.grad[i];
  });
}

// ---------------------------------------------------------------------------
// Convolution and normalization

// "Same" 2-D convolution over x[B,Cin,T,F] with kernel w[Cout,Cin,K,K] (K
// odd), bias[Cout], stride (stride_t, 1). Output [B,Cout,ceil(T/stride_t),F];
// output step i is centred on input step i*stride_t.
template <typename T>
Tensor<T> Conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias,
                 int stride_t) {
  internal::CheckRank(x.shape(), 4, "Conv2d");
  internal::CheckRank(w.shape(), 4, "Conv2d");
  const int batch = x.dim(0), cin = x.dim(1), frames = x.dim(2), bins = x.dim(3);
  const int cout = w.dim(0), ksize = w.dim(2);
  if (w.dim(1) != cin || w.dim(3) != ksize || ksize % 2 == 0 ||
      bias.size() != static_cast<size_t>(cout) || stride_t < 1)
    Fail(ErrorCode::kShapeError, "Conv2d: input " + ShapeString(x.shape()) +
                                     " kernel " + ShapeString(w.shape()) +
                                     " bias " + ShapeString(bias.shape()));
  if (batch < 1 || frames < 1 || bins < 1)
    Fail(ErrorCode::kShapeError, "Conv2d: empty input " + ShapeString(x.shape()));
  const int pad = ksize / 2;
  const int out_frames = (frames + stride_t - 1) / stride_t;
  const int patch = cin * ksize * ksize;
  const int positions = out_frames * bins;
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  auto im2col = [=](const T* xb, Mat& col) {
    col.setZero(patch, positions);
    for (int c = 0; c < cin; ++c)
      for (int kt = 0; kt < ksize; ++kt)
        for (int kf = 0; kf < ksize; ++kf) {
          T* dst = col.data() + static_cast<size_t>((c * ksize + kt) * ksize + kf) * positions;
          for (int to = 0; to < out_frames; ++to) {
            const int ti = to * stride_t + kt - pad;
            if (ti < 0 || ti >= frames) continue;
            const T* src = xb + (static_cast<size_t>(c) * frames + ti) * bins;
            const int f_lo = std::max(0, pad - kf);
            const int f_hi = std::min(bins, bins + pad - kf);
            if (f_hi > f_lo)
              std::copy_n(src + f_lo + kf - pad, f_hi - f_lo, dst + to * bins + f_lo);
          }
        }
  };

  const size_t in_item = static_cast<size_t>(cin) * frames * bins;
  const size_t out_item = static_cast<size_t>(cout) * positions;
  std::vector<T> out(out_item * batch);
  ConstMatrixMap<T> wm(w.data().data(), cout, patch);
  Mat col;
  for (int b = 0; b < batch; ++b) {
    im2col(x.data().data() + b * in_item, col);
    MatrixMap<T> ob(out.data() + b * out_item, cout, positions);
    ob.noalias() = wm * col;
    for (int o = 0; o < cout; ++o) ob.row(o).array() += bias.at(o);
  }

  return Tensor<T>::FromOp(
      {batch, cout, out_frames, bins}, std::move(out),
      {x.node(), w.node(), bias.node()}, [=](Node<T>& self) {
        const auto& px = self.parents[0];
        const auto& pw = self.parents[1];
        T* gx = GradOf(px);
        T* gw = GradOf(pw);
        T* gb = GradOf(self.parents[2]);
        ConstMatrixMap<T> wmat(pw->value.data(), cout, patch);
        Mat col_buf, gcol;
        for (int b = 0; b < batch; ++b) {
          ConstMatrixMap<T> g(self.grad.data() + b * out_item, cout, positions);
          if (gb)
            for (int o = 0; o < cout; ++o) {
              const T* row = g.data() + static_cast<size_t>(o) * positions;
              gb[o] += static_cast<T>(
                  internal::LaneSum<T>(positions, [row](size_t i) { return row[i]; }));
            }
          if (gw) {
            im2col(px->value.data() + b * in_item, col_buf);
            MatrixMap<T>(gw, cout, patch).noalias() += g * col_buf.transpose();
          }
          if (gx) {
            gcol.noalias() = wmat.transpose() * g;
            T* gxb = gx + b * in_item;
            for (int c = 0; c < cin; ++c)
              for (int kt = 0; kt < ksize; ++kt)
                for (int kf = 0; kf < ksize; ++kf) {
                  const T* src = gcol.data() +
                      static_cast<size_t>((c * ksize + kt) * ksize + kf) * positions;
                  for (int to = 0; to < out_frames; ++to) {
                    const int ti = to * stride_t + kt - pad;
                    if (ti < 0 || ti >= frames) continue;
                    T* __restrict dst =
                        gxb + (static_cast<size_t>(c) * frames + ti) * bins + kf - pad;
                    const T* __restrict row = src + to * bins;
                    const int f_lo = std::max(0, pad - kf);
                    const int f_hi = std::min(bins, bins + pad - kf);
                    for (int f = f_lo; f < f_hi; ++f) dst[f] += row[f];
                  }
                }
          }
        }
      });
}

// Running moments are plain tensors so they can be saved with the
// parameters; they never require gradients.
template <typename T>
struct BatchNormState {
  Tensor<T> running_mean;
  Tensor<T> running_var;
  double momentum = 0.9;
  double eps = 1e-5;

  explicit BatchNormState(int channels = 0)
      : running_mean(Tensor<T>::Zeros({channels})),
        running_var(Tensor<T>::Full({channels}, T(1))) {}
};

// Per-channel normalization of x[B,C,T,F] over batch, time and frequency.
// lengths[b] (optional) marks the valid time steps of item b; statistics
// ignore padded steps and their outputs are exactly zero. Train mode uses
// batch statistics and updates the running moments; eval mode uses the
// running moments.
template <typename T>
Tensor<T> BatchNorm(const Tensor<T>& x, const Tensor<T>& gamma,
                    const Tensor<T>& beta, BatchNormState<T>& state,
                    bool training, const std::vector<int>& lengths = {}) {
  internal::CheckRank(x.shape(), 4, "BatchNorm");
  const int batch = x.dim(0), ch = x.dim(1), frames = x.dim(2), bins = x.dim(3);
  if (batch < 1)
    Fail(ErrorCode::kShapeError, "BatchNorm: batch of size 0");
  if (gamma.size() != static_cast<size_t>(ch) ||
      beta.size() != static_cast<size_t>(ch) ||
      state.running_mean.size() != static_cast<size_t>(ch) ||
      state.running_var.size() != static_cast<size_t>(ch))
    Fail(ErrorCode::kShapeError, "BatchNorm: channel count mismatch for " +
                                     ShapeString(x.shape()));
  std::vector<int> valid(batch, frames);
  if (!lengths.empty()) {
    if (lengths.size() != static_cast<size_t>(batch))
      Fail(ErrorCode::kShapeError, "BatchNorm: lengths size mismatch");
    for (int b = 0; b < batch; ++b) valid[b] = std::clamp(lengths[b], 0, frames);
  }
  // The valid part of item b, channel c is one contiguous run.
  using Arr = Eigen::Array<T, Eigen::Dynamic, 1>;
  auto offset = [=](int b, int c) {
    return (static_cast<size_t>(b) * ch + c) * frames * bins;
  };
  auto run_length = [=](int b) { return static_cast<size_t>(valid[b]) * bins; };
  auto span = [=](const T* base, int b, int c) {
    return Eigen::Map<const Arr>(base + offset(b, c),
                                 static_cast<Eigen::Index>(run_length(b)));
  };
  auto mspan = [=](T* base, int b, int c) {
    return Eigen::Map<Arr>(base + offset(b, c), static_cast<Eigen::Index>(run_length(b)));
  };
  size_t count = 0;
  for (int b = 0; b < batch; ++b) count += static_cast<size_t>(valid[b]) * bins;
  if (count == 0) Fail(ErrorCode::kShapeError, "BatchNorm: no valid positions");

  std::vector<T> mean(ch), inv_std(ch);
  const T* xv = x.data().data();
  for (int c = 0; c < ch; ++c) {
    if (training) {
      double sum = 0, sq = 0;
      for (int b = 0; b < batch; ++b) {
        const T* run = xv + offset(b, c);
        sum += internal::LaneSum<T>(run_length(b), [run](size_t i) { return run[i]; });
      }
      const double mu = sum / count;
      for (int b = 0; b < batch; ++b) {
        const T* run = xv + offset(b, c);
        const T m = static_cast<T>(mu);
        sq += internal::LaneSum<T>(run_length(b), [run, m](size_t i) {
          const T d = run[i] - m;
          return d * d;
        });
      }
      const double var = sq / count;
      mean[c] = static_cast<T>(mu);
      inv_std[c] = static_cast<T>(1.0 / std::sqrt(var + state.eps));
      const double unbiased = count > 1 ? sq / (count - 1) : var;
      T& run_mean = state.running_mean.values()[c];
      T& run_var = state.running_var.values()[c];
      run_mean = static_cast<T>(state.momentum * run_mean +
                                (1.0 - state.momentum) * mu);
      run_var = static_cast<T>(state.momentum * run_var +
                               (1.0 - state.momentum) * unbiased);
    } else {
      mean[c] = state.running_mean.at(c);
      inv_std[c] = static_cast<T>(
          1.0 / std::sqrt(static_cast<double>(state.running_var.at(c)) + state.eps));
    }
  }

  std::vector<T> out(x.size(), T(0));
  for (int b = 0; b < batch; ++b)
    for (int c = 0; c < ch; ++c)
      mspan(out.data(), b, c) =
          (span(xv, b, c) - mean[c]) * (inv_std[c] * gamma.at(c)) + beta.at(c);

  return Tensor<T>::FromOp(
      x.shape(), std::move(out), {x.node(), gamma.node(), beta.node()},
      [=](Node<T>& self) {
        T* gx = GradOf(self.parents[0]);
        T* gg = GradOf(self.parents[1]);
        T* gb = GradOf(self.parents[2]);
        const T* xv = self.parents[0]->value.data();
        const auto& gamma_v = self.parents[1]->value;
        const T* gy = self.grad.data();
        const double n = static_cast<double>(count);
        for (int c = 0; c < ch; ++c) {
          double sum_g = 0, sum_gx = 0;
          for (int b = 0; b < batch; ++b) {
            const T* g = gy + offset(b, c);
            const T* run = xv + offset(b, c);
            const T m = mean[c];
            sum_g += internal::LaneSum<T>(run_length(b), [g](size_t i) { return g[i]; });
            sum_gx += internal::LaneSum<T>(run_length(b), [g, run, m](size_t i) {
                        return g[i] * (run[i] - m);
                      }) * inv_std[c];
          }
          if (gg) gg[c] += static_cast<T>(sum_gx);
          if (gb) gb[c] += static_cast<T>(sum_g);
          if (!gx) continue;
          const T scale = gamma_v[c] * inv_std[c];
          const T mean_g = static_cast<T>(sum_g / n);
          const T mean_gx = static_cast<T>(sum_gx / n);
          for (int b = 0; b < batch; ++b) {
            auto dst = mspan(gx, b, c);
            if (training)
              dst += scale * (span(gy, b, c) - mean_g -
                              (span(xv, b, c) - mean[c]) * (inv_std[c] * mean_gx));
            else
              dst += scale * span(gy, b, c);
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Recurrent layer

// Weights of one GRU direction. Gate blocks are ordered (update z, reset r,
// candidate n) along the 3H axis.
template <typename T>
struct GruWeights {
  Tensor<T> w_input;   // [in, 3H]
  Tensor<T> w_hidden;  // [H, 3H]
  Tensor<T> b_input;   // [3H]
  Tensor<T> b_hidden;  // [3H]
};

namespace internal {

template <typename T>
struct GruTrace {
  std::vector<T> z, r, n, hu_n, h_prev;  // N x H each
};

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// One direction over every segment of the packed input projections
// xw[N, 3H] (input bias not yet added). Hidden states go to column offset
// `column` of the [N, 2H] output.
template <typename T>
GruTrace<T> GruDirection(const RowMat<T>& xw, const std::vector<int>& segments,
                         int hidden, const Node<T>& wh, const Node<T>& bi,
                         const Node<T>& bh, bool reverse, T* out, int column) {
  using RowVec = Eigen::Matrix<T, 1, Eigen::Dynamic>;
  const int h3 = 3 * hidden;
  const int width = 2 * hidden;
  Eigen::Map<const RowVec> b_in(bi.value.data(), h3);
  Eigen::Map<const RowVec> b_hid(bh.value.data(), h3);
  ConstMatrixMap<T> w_hid(wh.value.data(), hidden, h3);
  GruTrace<T> trace;
  const size_t total = static_cast<size_t>(xw.rows()) * hidden;
  trace.z.resize(total);
  trace.r.resize(total);
  trace.n.resize(total);
  trace.hu_n.resize(total);
  trace.h_prev.resize(total);
  RowVec h(hidden), hu(h3);
  int offset = 0;
  for (int len : segments) {
    h.setZero();
    for (int s = 0; s < len; ++s) {
      const int t = offset + (reverse ? len - 1 - s : s);
      hu.noalias() = h * w_hid;
      hu += b_hid;
      const size_t base = static_cast<size_t>(t) * hidden;
      const T* xr = xw.data() + static_cast<size_t>(t) * h3;
      for (int j = 0; j < hidden; ++j) {
        const T z = StableSigmoid(xr[j] + b_in[j] + hu[j]);
        const T r = StableSigmoid(xr[hidden + j] + b_in[hidden + j] + hu[hidden + j]);
        const T n = std::tanh(xr[2 * hidden + j] + b_in[2 * hidden + j] +
                              r * hu[2 * hidden + j]);
        trace.z[base + j] = z;
        trace.r[base + j] = r;
        trace.n[base + j] = n;
        trace.hu_n[base + j] = hu[2 * hidden + j];
        trace.h_prev[base + j] = h[j];
      }
      for (int j = 0; j < hidden; ++j) {
        h[j] = trace.z[base + j] * h[j] + (T(1) - trace.z[base + j]) * trace.n[base + j];
        out[static_cast<size_t>(t) * width + column + j] = h[j];
      }
    }
    offset += len;
  }
  return trace;
}

// Backpropagation through time for one direction. Accumulates the hidden
// weight and both bias gradients and returns d(loss)/d(xw) [N, 3H].
template <typename T>
RowMat<T> GruDirectionBackward(const GruTrace<T>& trace, const std::vector<int>& segments,
                               int hidden, const std::shared_ptr<Node<T>>& wh,
                               const std::shared_ptr<Node<T>>& bi,
                               const std::shared_ptr<Node<T>>& bh, bool reverse,
                               const T* gout, int column) {
  using RowVec = Eigen::Matrix<T, 1, Eigen::Dynamic>;
  const int h3 = 3 * hidden;
  const int width = 2 * hidden;
  const int rows = static_cast<int>(trace.z.size() / hidden);
  ConstMatrixMap<T> w_hid(wh->value.data(), hidden, h3);
  RowMat<T> d_xw(rows, h3), d_hu(rows, h3);
  RowVec carry(hidden), dh(hidden);
  int offset = 0;
  for (int len : segments) {
    carry.setZero();
    for (int s = len - 1; s >= 0; --s) {
      const int t = offset + (reverse ? len - 1 - s : s);
      const size_t base = static_cast<size_t>(t) * hidden;
      for (int j = 0; j < hidden; ++j)
        dh[j] = gout[static_cast<size_t>(t) * width + column + j] + carry[j];
      for (int j = 0; j < hidden; ++j) {
        const T z = trace.z[base + j], r = trace.r[base + j], n = trace.n[base + j];
        const T dn_pre = dh[j] * (T(1) - z) * (T(1) - n * n);
        const T dz_pre = dh[j] * (trace.h_prev[base + j] - n) * z * (T(1) - z);
        const T dr_pre = dn_pre * trace.hu_n[base + j] * r * (T(1) - r);
        d_xw(t, j) = dz_pre;
        d_xw(t, hidden + j) = dr_pre;
        d_xw(t, 2 * hidden + j) = dn_pre;
        d_hu(t, j) = dz_pre;
        d_hu(t, hidden + j) = dr_pre;
        d_hu(t, 2 * hidden + j) = dn_pre * r;
        carry[j] = dh[j] * z;
      }
      carry.noalias() += d_hu.row(t) * w_hid.transpose();
    }
    offset += len;
  }
  ConstMatrixMap<T> h_prev(trace.h_prev.data(), rows, hidden);
  if (T* g = GradOf(wh)) MatrixMap<T>(g, hidden, h3).noalias() += h_prev.transpose() * d_hu;
  auto add_column_sums = [h3](const RowMat<T>& m, T* g) {
    for (Eigen::Index t = 0; t < m.rows(); ++t) {
      const T* row = m.data() + t * h3;
      for (int j = 0; j < h3; ++j) g[j] += row[j];
    }
  };
  if (T* g = GradOf(bh)) add_column_sums(d_hu, g);
  if (T* g = GradOf(bi)) add_column_sums(d_xw, g);
  return d_xw;
}

template <typename T>
void CheckGruWeights(const GruWeights<T>& w, int in, int hidden) {
  if (w.w_input.shape() != Shape{in, 3 * hidden} ||
      w.w_hidden.shape() != Shape{hidden, 3 * hidden} ||
      w.b_input.size() != static_cast<size_t>(3 * hidden) ||
      w.b_hidden.size() != static_cast<size_t>(3 * hidden))
    Fail(ErrorCode::kShapeError,
         "BiGru: weights do not match input width " + std::to_string(in) +
             " and hidden size " + std::to_string(hidden));
}

}  // namespace internal

// Bidirectional GRU over packed sequences. x[N, in] holds the segments
// back to back (segment lengths sum to N); every segment starts from zero
// states in both directions:
//   z = sigmoid(x Wz + bz + h Uz + cz)
//   r = sigmoid(x Wr + br + h Ur + cr)
//   n = tanh(x Wn + bn + r * (h Un + cn))
//   h' = z * h + (1 - z) * n
// Output [N, 2H]: forward states in columns [0, H), backward in [H, 2H).
template <typename T>
Tensor<T> BiGruPacked(const Tensor<T>& x, const std::vector<int>& segments,
                      const GruWeights<T>& fwd, const GruWeights<T>& bwd) {
  internal::CheckRank(x.shape(), 2, "BiGru");
  const int rows = x.dim(0), in = x.dim(1);
  if (rows < 1) Fail(ErrorCode::kShapeError, "BiGru: empty sequence");
  long covered = 0;
  for (int len : segments) {
    if (len < 1) Fail(ErrorCode::kShapeError, "BiGru: empty segment");
    covered += len;
  }
  if (covered != rows)
    Fail(ErrorCode::kShapeError, "BiGru: segment lengths sum to " +
                                     std::to_string(covered) + ", input has " +
                                     std::to_string(rows) + " rows");
  const int hidden = fwd.w_hidden.dim(0);
  if (hidden < 1) Fail(ErrorCode::kShapeError, "BiGru: hidden size must be >= 1");
  internal::CheckGruWeights(fwd, in, hidden);
  internal::CheckGruWeights(bwd, in, hidden);
  const int h3 = 3 * hidden;
  std::vector<T> out(static_cast<size_t>(rows) * 2 * hidden);
  ConstMatrixMap<T> xm(x.data().data(), rows, in);
  const internal::RowMat<T> xw_f =
      xm * ConstMatrixMap<T>(fwd.w_input.data().data(), in, h3);
  const internal::RowMat<T> xw_b =
      xm * ConstMatrixMap<T>(bwd.w_input.data().data(), in, h3);
  auto trace_f = std::make_shared<internal::GruTrace<T>>(
      internal::GruDirection(xw_f, segments, hidden, *fwd.w_hidden.node(),
                             *fwd.b_input.node(), *fwd.b_hidden.node(), false,
                             out.data(), 0));
  auto trace_b = std::make_shared<internal::GruTrace<T>>(
      internal::GruDirection(xw_b, segments, hidden, *bwd.w_hidden.node(),
                             *bwd.b_input.node(), *bwd.b_hidden.node(), true,
                             out.data(), hidden));
  return Tensor<T>::FromOp(
      {rows, 2 * hidden}, std::move(out),
      {x.node(), fwd.w_input.node(), fwd.w_hidden.node(), fwd.b_input.node(),
       fwd.b_hidden.node(), bwd.w_input.node(), bwd.w_hidden.node(),
       bwd.b_input.node(), bwd.b_hidden.node()},
      [=](Node<T>& self) {
        const auto& p = self.parents;
        const internal::RowMat<T> d_f = internal::GruDirectionBackward(
            *trace_f, segments, hidden, p[2], p[3], p[4], false, self.grad.data(), 0);
        const internal::RowMat<T> d_b = internal::GruDirectionBackward(
            *trace_b, segments, hidden, p[6], p[7], p[8], true, self.grad.data(), hidden);
        ConstMatrixMap<T> xv(p[0]->value.data(), rows, in);
        if (T* g = GradOf(p[1])) MatrixMap<T>(g, in, h3).noalias() += xv.transpose() * d_f;
        if (T* g = GradOf(p[5])) MatrixMap<T>(g, in, h3).noalias() += xv.transpose() * d_b;
        if (T* gx = GradOf(p[0])) {
          MatrixMap<T> gxm(gx, rows, in);
          gxm.noalias() += d_f * ConstMatrixMap<T>(p[1]->value.data(), in, h3).transpose();
          gxm.noalias() += d_b * ConstMatrixMap<T>(p[5]->value.data(), in, h3).transpose();
        }
      });
}

// A single sequence x[T, in].
template <typename T>
Tensor<T> BiGru(const Tensor<T>& x, const GruWeights<T>& fwd, const GruWeights<T>& bwd) {
  internal::CheckRank(x.shape(), 2, "BiGru");
  return BiGruPacked(x, {x.dim(0)}, fwd, bwd);
}

// Final states of a BiGru output y[T, 2H]: forward half of the last row and
// backward half of the first row -> [1, 2H].
template <typename T>
Tensor<T> GruFinalStates(const Tensor<T>& y) {
  internal::CheckRank(y.shape(), 2, "GruFinalStates");
  const int steps = y.dim(0), width = y.dim(1);
  if (width % 2 != 0 || steps < 1)
    Fail(ErrorCode::kShapeError, "GruFinalStates: " + ShapeString(y.shape()));
  const int hidden = width / 2;
  const size_t last = static_cast<size_t>(steps - 1) * width;
  std::vector<T> out(width);
  for (int j = 0; j < hidden; ++j) {
    out[j] = y.at(last + j);
    out[hidden + j] = y.at(hidden + j);
  }
  return Tensor<T>::FromOp({1, width}, std::move(out), {y.node()},
                           [=](Node<T>& self) {
    if (T* g = GradOf(self.parents[0]))
      for (int j = 0; j < hidden; ++j) {
        g[last + j] += self.grad[j];
        g[hidden + j] += self.grad[hidden + j];
      }
  });
}

// ---------------------------------------------------------------------------
// Loss

// Mean binary cross-entropy of sigmoid(logits) against 0/1 targets, in the
// log-sum-exp form max(x,0) - x*y + log(1 + exp(-|x|)).
template <typename T>
Tensor<T> SigmoidBce(const Tensor<T>& logits, const std::vector<int>& targets) {
  const size_t n = logits.size();
  if (n == 0 || targets.size() != n)
    Fail(ErrorCode::kShapeError, "SigmoidBce: " + std::to_string(n) +
                                     " logits for " +
                                     std::to_string(targets.size()) + " targets");
  double total = 0.0;
  for (size_t i = 0; i < n; ++i) {
    if (targets[i] != 0 && targets[i] != 1)
      Fail(ErrorCode::kInvalidArgument, "SigmoidBce: target must be 0 or 1");
    const double x = logits.at(i);
    total += std::max(x, 0.0) - x * targets[i] + std::log1p(std::exp(-std::abs(x)));
  }
  return Tensor<T>::FromOp({1}, {static_cast<T>(total / n)}, {logits.node()},
                           [targets, n](Node<T>& self) {
    const auto& px = self.parents[0];
    if (T* g = GradOf(px))
      for (size_t i = 0; i < n; ++i)
        g[i] += self.grad[0] *
                (internal::StableSigmoid(px->value[i]) - static_cast<T>(targets[i])) /
                static_cast<T>(n);
  });
}

}  // namespace kwsdc::nn

#endif  // KWSDC_NN_OPS_H_
