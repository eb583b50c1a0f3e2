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

// Short-time signal processing shared by every feature front-end:
// pre-emphasis, framing, Hamming windowing and the power spectrum.
// All functions are pure.

#ifndef KWSDC_DSP_H_
#define KWSDC_DSP_H_

#include <cmath>
#include <complex>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <unsupported/Eigen/FFT>

#include "kwsdc/error.h"

namespace kwsdc {

using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Waveform {
  std::vector<double> samples;  // normalized to [-1, 1)
  int sample_rate = 16000;
};

struct FrameMatrix {
  RowMatrix frames;  // T x frame_len
  int frame_len = 0;
  int hop = 0;
};

struct SpectrumMatrix {
  RowMatrix power;  // T x (nfft/2 + 1)
  int nfft = 0;
};

inline int MsToSamples(double ms, int sample_rate) {
  return static_cast<int>(std::lround(ms * sample_rate / 1000.0));
}

inline bool IsPowerOfTwo(int n) { return n > 0 && (n & (n - 1)) == 0; }

// out[0] = in[0]; out[t] = in[t] - alpha * in[t-1].
inline Waveform PreEmphasize(const Waveform& wave, double alpha) {
  Require(!wave.samples.empty(), ErrorCode::kEmptySignal,
          "pre-emphasis of an empty waveform");
  if (!(alpha >= 0.0 && alpha < 1.0))
    Fail(ErrorCode::kInvalidArgument, "pre-emphasis alpha must be in [0, 1)");
  Waveform out{std::vector<double>(wave.samples.size()), wave.sample_rate};
  out.samples[0] = wave.samples[0];
  for (size_t t = 1; t < wave.samples.size(); ++t)
    out.samples[t] = wave.samples[t] - alpha * wave.samples[t - 1];
  return out;
}

inline int NumFrames(size_t num_samples, int frame_len, int hop) {
  if (num_samples < static_cast<size_t>(frame_len)) return 0;
  return static_cast<int>((num_samples - frame_len) / hop) + 1;
}

// Frame t covers samples [t*hop, t*hop + frame_len). A trailing partial frame
// is dropped.
inline FrameMatrix FrameSignal(const Waveform& wave, int frame_len, int hop) {
  if (frame_len < 1 || hop < 1 || hop > frame_len)
    Fail(ErrorCode::kInvalidArgument,
         "frame_len >= 1 and 1 <= hop <= frame_len required");
  if (wave.samples.size() < static_cast<size_t>(frame_len))
    Fail(ErrorCode::kInsufficientSamples,
         std::to_string(wave.samples.size()) + " samples, frame needs " +
             std::to_string(frame_len));
  const int num_frames = NumFrames(wave.samples.size(), frame_len, hop);
  FrameMatrix out;
  out.frame_len = frame_len;
  out.hop = hop;
  out.frames.resize(num_frames, frame_len);
  for (int t = 0; t < num_frames; ++t)
    for (int n = 0; n < frame_len; ++n)
      out.frames(t, n) = wave.samples[static_cast<size_t>(t) * hop + n];
  return out;
}

inline std::vector<double> HammingWindow(int length) {
  std::vector<double> w(length, 1.0);
  if (length == 1) return w;
  for (int n = 0; n < length; ++n)
    w[n] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * n / (length - 1));
  return w;
}

inline FrameMatrix ApplyHamming(const FrameMatrix& frames) {
  const std::vector<double> w = HammingWindow(frames.frame_len);
  FrameMatrix out = frames;
  for (Eigen::Index t = 0; t < out.frames.rows(); ++t)
    for (int n = 0; n < frames.frame_len; ++n) out.frames(t, n) *= w[n];
  return out;
}

// |DFT_nfft(frame)|^2 for bins 0..nfft/2, each frame zero-padded to nfft.
inline SpectrumMatrix PowerSpectrum(const FrameMatrix& frames, int nfft) {
  if (!IsPowerOfTwo(nfft))
    Fail(ErrorCode::kBadFftSize, "nfft " + std::to_string(nfft) +
                                     " is not a power of two");
  if (nfft < frames.frame_len)
    Fail(ErrorCode::kBadFftSize, "nfft " + std::to_string(nfft) +
                                     " shorter than frame length " +
                                     std::to_string(frames.frame_len));
  const int num_bins = nfft / 2 + 1;
  SpectrumMatrix out;
  out.nfft = nfft;
  out.power.resize(frames.frames.rows(), num_bins);

  Eigen::FFT<double> fft;
  std::vector<double> buffer(nfft, 0.0);
  std::vector<std::complex<double>> bins;
  for (Eigen::Index t = 0; t < frames.frames.rows(); ++t) {
    std::fill(buffer.begin(), buffer.end(), 0.0);
    for (int n = 0; n < frames.frame_len; ++n) buffer[n] = frames.frames(t, n);
    fft.fwd(bins, buffer);
    for (int b = 0; b < num_bins; ++b) out.power(t, b) = std::norm(bins[b]);
  }
  return out;
}

}  // namespace kwsdc

#endif  // KWSDC_DSP_H_
