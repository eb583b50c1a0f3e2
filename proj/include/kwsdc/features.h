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

// Feature front-ends: log-mel spectrogram, MFCC (+deltas), PLP, RASTA-PLP and
// shifted delta coefficients stacked on the log-mel spectrogram.
//
// Every front-end shares the same analysis path: whole-waveform
// pre-emphasis, 25 ms / 10 ms framing, Hamming window, zero-padded FFT power
// spectrum. Power (magnitude squared) feeds every filter bank.

#ifndef KWSDC_FEATURES_H_
#define KWSDC_FEATURES_H_

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "kwsdc/dsp.h"
#include "kwsdc/error.h"

namespace kwsdc {

enum class FeatureKind : std::uint16_t {
  kMelSpec = 0,
  kMfcc = 1,
  kMfccDeltas = 2,
  kPlp = 3,
  kRastaPlp = 4,
  kSdc = 5,
};

// Names used on the command line and in configuration files.
inline std::string_view FeatureKindName(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::kMelSpec: return "mel";
    case FeatureKind::kMfcc: return "mfcc";
    case FeatureKind::kMfccDeltas: return "mfcc-dd";
    case FeatureKind::kPlp: return "plp";
    case FeatureKind::kRastaPlp: return "rasta-plp";
    case FeatureKind::kSdc: return "sdc";
  }
  return "unknown";
}

inline constexpr std::array<FeatureKind, 6> kAllFeatureKinds = {
    FeatureKind::kMelSpec, FeatureKind::kMfcc,     FeatureKind::kMfccDeltas,
    FeatureKind::kPlp,     FeatureKind::kRastaPlp, FeatureKind::kSdc};

inline std::optional<FeatureKind> ParseFeatureKind(std::string_view name) {
  for (FeatureKind kind : kAllFeatureKinds)
    if (FeatureKindName(kind) == name) return kind;
  return std::nullopt;
}

struct SdcConfig {
  int n = 40;  // base coefficients per frame
  int d = 1;   // delta half-span
  int p = 3;   // shift between consecutive delta blocks
  int k = 8;   // number of stacked delta blocks

  int OutputDim() const { return n * (k + 1); }

  std::string ToString() const {
    return std::to_string(n) + "-" + std::to_string(d) + "-" +
           std::to_string(p) + "-" + std::to_string(k);
  }

  void Validate() const {
    if (n < 1 || d < 1 || p < 1 || k < 1)
      Fail(ErrorCode::kInvalidArgument,
           "SDC parameters must all be >= 1, got " + ToString());
  }

  bool operator==(const SdcConfig&) const = default;
};

// Parses the "N-d-p-k" notation, e.g. "40-1-3-8".
inline SdcConfig ParseSdcConfig(std::string_view text) {
  std::array<int, 4> values{};
  size_t pos = 0;
  for (int i = 0; i < 4; ++i) {
    const size_t end = i < 3 ? text.find('-', pos) : text.size();
    if (end == std::string_view::npos)
      Fail(ErrorCode::kInvalidArgument,
           "SDC config must look like N-d-p-k, got '" + std::string(text) + "'");
    const std::string_view field = text.substr(pos, end - pos);
    auto [ptr, ec] =
        std::from_chars(field.data(), field.data() + field.size(), values[i]);
    if (ec != std::errc() || ptr != field.data() + field.size() || field.empty())
      Fail(ErrorCode::kInvalidArgument,
           "SDC config must look like N-d-p-k, got '" + std::string(text) + "'");
    pos = end + 1;
  }
  SdcConfig cfg{values[0], values[1], values[2], values[3]};
  cfg.Validate();
  return cfg;
}

struct FrontEndConfig {
  double frame_ms = 25.0;
  double hop_ms = 10.0;
  double pre_emphasis = 0.97;
  int nfft = 512;
  int num_mel = 40;
  int num_cepstra = 13;
  double log_floor = 1e-10;
  int delta_window = 2;
  int lpc_order = 12;
  double rasta_pole = 0.94;

  void Validate() const {
    if (!(frame_ms > 0 && hop_ms > 0 && frame_ms > hop_ms))
      Fail(ErrorCode::kInvalidArgument, "frame_ms > hop_ms > 0 required");
    if (!(pre_emphasis >= 0 && pre_emphasis < 1))
      Fail(ErrorCode::kInvalidArgument, "pre_emphasis must be in [0, 1)");
    if (nfft < 1 || num_mel < 1 || num_cepstra < 1 || delta_window < 1 ||
        lpc_order < 1 || !(log_floor > 0))
      Fail(ErrorCode::kInvalidArgument, "front-end sizes must be positive");
    if (num_cepstra > num_mel)
      Fail(ErrorCode::kInvalidArgument, "num_cepstra exceeds num_mel");
    if (!(rasta_pole > 0 && rasta_pole < 1))
      Fail(ErrorCode::kInvalidArgument, "rasta_pole must be in (0, 1)");
  }

  std::string ToString() const {
    std::ostringstream os;
    os.precision(17);
    os << "frame_ms=" << frame_ms << ";hop_ms=" << hop_ms
       << ";pre_emphasis=" << pre_emphasis << ";nfft=" << nfft
       << ";num_mel=" << num_mel << ";num_cepstra=" << num_cepstra
       << ";log_floor=" << log_floor << ";delta_window=" << delta_window
       << ";lpc_order=" << lpc_order << ";rasta_pole=" << rasta_pole;
    return os.str();
  }
};

inline std::uint64_t Fnv1a64(std::string_view text) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

struct FeatureMatrix {
  RowMatrix data;  // T x D, time-major
  FeatureKind kind = FeatureKind::kMelSpec;
  std::uint64_t config_fingerprint = 0;

  Eigen::Index frames() const { return data.rows(); }
  Eigen::Index dim() const { return data.cols(); }
};

inline std::uint64_t FeatureFingerprint(FeatureKind kind,
                                        const FrontEndConfig& cfg,
                                        const SdcConfig* sdc = nullptr) {
  std::string key = std::string(FeatureKindName(kind)) + ";" + cfg.ToString();
  if (sdc != nullptr) key += ";sdc=" + sdc->ToString();
  return Fnv1a64(key);
}

// ---------------------------------------------------------------------------
// Frequency warping

inline double HzToMel(double hz) {
  if (!(hz >= 0.0))
    Fail(ErrorCode::kBadFrequency, "negative frequency " + std::to_string(hz));
  return 2595.0 * std::log10(1.0 + hz / 700.0);
}

inline double MelToHz(double mel) {
  if (!(mel >= 0.0))
    Fail(ErrorCode::kBadFrequency, "negative mel value " + std::to_string(mel));
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

inline double HzToBark(double hz) { return 6.0 * std::asinh(hz / 600.0); }
inline double BarkToHz(double bark) { return 600.0 * std::sinh(bark / 6.0); }

// Triangular filters whose centres are equally spaced on the mel scale
// between 0 Hz and the Nyquist frequency. Weights are evaluated at the exact
// bin frequencies b * sr / nfft.
inline RowMatrix MelFilterbank(int num_mel, int nfft, int sample_rate) {
  if (num_mel < 1)
    Fail(ErrorCode::kInvalidArgument, "num_mel must be >= 1");
  if (nfft < 2 || sample_rate <= 0)
    Fail(ErrorCode::kInvalidArgument, "bad nfft or sample rate");
  const int num_bins = nfft / 2 + 1;
  const double max_mel = HzToMel(sample_rate / 2.0);
  std::vector<double> edges_hz(num_mel + 2);
  for (int i = 0; i < num_mel + 2; ++i)
    edges_hz[i] = MelToHz(max_mel * i / (num_mel + 1));

  RowMatrix fb = RowMatrix::Zero(num_mel, num_bins);
  for (int m = 0; m < num_mel; ++m) {
    const double lo = edges_hz[m], center = edges_hz[m + 1],
                 hi = edges_hz[m + 2];
    for (int b = 0; b < num_bins; ++b) {
      const double f = static_cast<double>(b) * sample_rate / nfft;
      double w = 0.0;
      if (f > lo && f <= center)
        w = (f - lo) / (center - lo);
      else if (f > center && f < hi)
        w = (hi - f) / (hi - center);
      fb(m, b) = w;
    }
    if (fb.row(m).maxCoeff() <= 0.0)
      Fail(ErrorCode::kDegenerateFilter,
           "mel filter " + std::to_string(m) + " of " +
               std::to_string(num_mel) + " covers no FFT bin at nfft=" +
               std::to_string(nfft));
  }
  return fb;
}

// Orthonormal DCT-II basis, rows = output coefficients.
inline RowMatrix DctMatrix(int num_out, int num_in) {
  RowMatrix dct(num_out, num_in);
  for (int k = 0; k < num_out; ++k) {
    const double scale =
        k == 0 ? std::sqrt(1.0 / num_in) : std::sqrt(2.0 / num_in);
    for (int n = 0; n < num_in; ++n)
      dct(k, n) =
          scale * std::cos(std::numbers::pi * k * (2.0 * n + 1.0) / (2.0 * num_in));
  }
  return dct;
}

// ---------------------------------------------------------------------------
// Frame-level transforms

inline int ClampIndex(long t, long num_frames) {
  return static_cast<int>(std::clamp(t, 0L, num_frames - 1));
}

// Regression delta with replicate-edge indexing:
//   d(t) = sum_j j * (x(t+j) - x(t-j)) / (2 * sum_j j^2)
inline RowMatrix Delta(const RowMatrix& feat, int half_width, int order = 1) {
  if (feat.rows() < 1)
    Fail(ErrorCode::kInvalidArgument, "delta of an empty matrix");
  if (half_width < 1 || order < 1 || order > 2)
    Fail(ErrorCode::kInvalidArgument, "delta half_width >= 1, order 1 or 2");
  double denom = 0.0;
  for (int j = 1; j <= half_width; ++j) denom += 2.0 * j * j;
  const long num_frames = feat.rows();
  RowMatrix out = RowMatrix::Zero(feat.rows(), feat.cols());
  for (long t = 0; t < num_frames; ++t) {
    for (int j = 1; j <= half_width; ++j) {
      out.row(t) += j * (feat.row(ClampIndex(t + j, num_frames)) -
                         feat.row(ClampIndex(t - j, num_frames)));
    }
    out.row(t) /= denom;
  }
  if (order == 2) return Delta(out, half_width, 1);
  return out;
}

// Shifted delta coefficients on a raw T x N matrix. Row t of the result is
//   [c(t) | dc(t,0) | ... | dc(t,k-1)],  dc(t,i) = c(t+ip+d) - c(t+ip-d),
// with frame indices clamped to [0, T-1].
inline RowMatrix SdcStack(const RowMatrix& base, const SdcConfig& cfg) {
  cfg.Validate();
  if (base.cols() != cfg.n)
    Fail(ErrorCode::kConfigMismatch,
         "SDC expects " + std::to_string(cfg.n) + " base coefficients, got " +
             std::to_string(base.cols()));
  if (base.rows() < 1)
    Fail(ErrorCode::kInvalidArgument, "SDC of an empty matrix");
  const long num_frames = base.rows();
  const int n = cfg.n;
  RowMatrix out(num_frames, cfg.OutputDim());
  for (long t = 0; t < num_frames; ++t) {
    out.row(t).head(n) = base.row(t);
    for (int i = 0; i < cfg.k; ++i) {
      const long center = t + static_cast<long>(i) * cfg.p;
      const int ahead = ClampIndex(center + cfg.d, num_frames);
      const int behind = ClampIndex(center - cfg.d, num_frames);
      out.row(t).segment(n * (i + 1), n) = base.row(ahead) - base.row(behind);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Linear prediction

struct LpcResult {
  std::vector<double> coeffs;  // a[0] = 1, A(z) = sum_i a[i] z^-i
  double error = 0.0;          // final prediction error power
};

// Levinson-Durbin recursion on autocorrelation r[0..order].
inline LpcResult LevinsonDurbin(const std::vector<double>& r, int order) {
  if (order < 1 || static_cast<int>(r.size()) < order + 1)
    Fail(ErrorCode::kInvalidArgument, "autocorrelation shorter than order + 1");
  LpcResult out;
  out.coeffs.assign(order + 1, 0.0);
  out.coeffs[0] = 1.0;
  double err = r[0];
  if (!(err > 0.0)) {
    out.error = 0.0;
    return out;
  }
  std::vector<double> prev(order + 1);
  for (int i = 1; i <= order; ++i) {
    double acc = r[i];
    for (int j = 1; j < i; ++j) acc += out.coeffs[j] * r[i - j];
    const double reflection = -acc / err;
    prev = out.coeffs;
    for (int j = 1; j < i; ++j)
      out.coeffs[j] = prev[j] + reflection * prev[i - j];
    out.coeffs[i] = reflection;
    err *= 1.0 - reflection * reflection;
    if (!(err > 0.0)) {
      err = 0.0;
      break;
    }
  }
  out.error = err;
  return out;
}

// Cepstrum of the all-pole model error / |A(e^jw)|^2: c0 = ln(error),
// c_n = -a_n - sum_{m=1}^{n-1} (m/n) c_m a_{n-m}.
inline std::vector<double> LpcToCepstrum(const LpcResult& lpc, int num_ceps) {
  const int order = static_cast<int>(lpc.coeffs.size()) - 1;
  std::vector<double> c(num_ceps, 0.0);
  c[0] = std::log(lpc.error);
  for (int n = 1; n < num_ceps; ++n) {
    double acc = n <= order ? lpc.coeffs[n] : 0.0;
    for (int m = 1; m < n; ++m) {
      if (n - m <= order) acc += (static_cast<double>(m) / n) * c[m] * lpc.coeffs[n - m];
    }
    c[n] = -acc;
  }
  return c;
}

// Autocorrelation r[0..order] of a power spectrum sampled at num_points
// equally spaced frequencies on [0, pi] (inverse DFT of the even extension).
inline std::vector<double> AutocorrelationFromPowerSpectrum(
    const std::vector<double>& spectrum, int order) {
  const int num_points = static_cast<int>(spectrum.size());
  if (num_points < 2)
    Fail(ErrorCode::kInvalidArgument, "spectrum needs at least two points");
  const int period = 2 * (num_points - 1);
  std::vector<double> r(order + 1, 0.0);
  for (int lag = 0; lag <= order; ++lag) {
    double acc = spectrum[0] + ((lag % 2 == 0) ? 1.0 : -1.0) * spectrum.back();
    for (int j = 1; j < num_points - 1; ++j)
      acc += 2.0 * spectrum[j] *
             std::cos(std::numbers::pi * j * lag / (num_points - 1));
    r[lag] = acc / period;
  }
  return r;
}

// ---------------------------------------------------------------------------
// RASTA band-pass filter
//
// H(z) = g * (2 + z^-1 - z^-3 - 2 z^-4) / (1 - pole z^-1), with g chosen so the
// peak magnitude response on [0, pi] is 1. H(1) = 0.
class RastaFilter {
 public:
  explicit RastaFilter(double pole = 0.94) : pole_(pole) {
    constexpr std::array<double, 5> kShape = {2.0, 1.0, 0.0, -1.0, -2.0};
    double peak = 0.0;
    constexpr int kGrid = 8192;
    for (int i = 0; i <= kGrid; ++i) {
      const double w = std::numbers::pi * i / kGrid;
      std::complex<double> num = 0.0;
      for (int j = 0; j < 5; ++j)
        num += kShape[j] * std::polar(1.0, -w * j);
      const std::complex<double> den = 1.0 - pole * std::polar(1.0, -w);
      peak = std::max(peak, std::abs(num / den));
    }
    for (int j = 0; j < 5; ++j) numerator_[j] = kShape[j] / peak;
  }

  const std::array<double, 5>& numerator() const { return numerator_; }
  double pole() const { return pole_; }

  // Filters one band trajectory. Input history before the first frame
  // replicates x[0] and the output history is zero, so a constant trajectory
  // maps to exactly zero.
  std::vector<double> Apply(const std::vector<double>& x) const {
    std::vector<double> y(x.size(), 0.0);
    double prev = 0.0;
    for (size_t t = 0; t < x.size(); ++t) {
      double acc = 0.0;
      for (int j = 0; j < 5; ++j) {
        const double xv = t >= static_cast<size_t>(j) ? x[t - j] : x[0];
        acc += numerator_[j] * xv;
      }
      y[t] = acc + pole_ * prev;
      prev = y[t];
    }
    return y;
  }

 private:
  double pole_;
  std::array<double, 5> numerator_{};
};

// ---------------------------------------------------------------------------
// Front-end

// Holds the precomputed filter banks for one (config, sample rate) pair.
// Const methods are safe to call concurrently.
class FrontEnd {
 public:
  explicit FrontEnd(const FrontEndConfig& cfg = {}, int sample_rate = 16000)
      : cfg_(cfg), sample_rate_(sample_rate), rasta_(cfg.rasta_pole) {
    cfg_.Validate();
    if (sample_rate <= 0)
      Fail(ErrorCode::kInvalidArgument, "sample rate must be positive");
    frame_len_ = MsToSamples(cfg_.frame_ms, sample_rate_);
    hop_ = MsToSamples(cfg_.hop_ms, sample_rate_);
    if (cfg_.nfft < frame_len_)
      Fail(ErrorCode::kBadFftSize,
           "nfft " + std::to_string(cfg_.nfft) + " < frame length " +
               std::to_string(frame_len_));
    mel_fb_ = MelFilterbank(cfg_.num_mel, cfg_.nfft, sample_rate_);
    dct_ = DctMatrix(cfg_.num_cepstra, cfg_.num_mel);
    BuildBarkBank();
  }

  const FrontEndConfig& config() const { return cfg_; }
  int sample_rate() const { return sample_rate_; }
  int frame_len() const { return frame_len_; }
  int hop() const { return hop_; }
  const RowMatrix& mel_filterbank() const { return mel_fb_; }
  const RowMatrix& bark_filterbank() const { return bark_fb_; }
  const std::vector<double>& equal_loudness() const { return equal_loudness_; }
  const RastaFilter& rasta() const { return rasta_; }

  int NumFrames(size_t num_samples) const {
    return kwsdc::NumFrames(num_samples, frame_len_, hop_);
  }

  SpectrumMatrix Spectrum(const Waveform& wave) const {
    CheckRate(wave);
    const Waveform emphasized = PreEmphasize(wave, cfg_.pre_emphasis);
    return PowerSpectrum(ApplyHamming(FrameSignal(emphasized, frame_len_, hop_)),
                         cfg_.nfft);
  }

  // log(max(filterbank . power, log_floor)), T x num_mel.
  RowMatrix LogMel(const Waveform& wave) const {
    const SpectrumMatrix spec = Spectrum(wave);
    RowMatrix energies = spec.power * mel_fb_.transpose();
    return energies.unaryExpr(
        [floor = cfg_.log_floor](double e) { return std::log(std::max(e, floor)); });
  }

  FeatureMatrix MelSpectrogram(const Waveform& wave) const {
    return {LogMel(wave), FeatureKind::kMelSpec,
            FeatureFingerprint(FeatureKind::kMelSpec, cfg_)};
  }

  FeatureMatrix Mfcc(const Waveform& wave, bool with_deltas) const {
    RowMatrix ceps = LogMel(wave) * dct_.transpose();
    if (!with_deltas)
      return {std::move(ceps), FeatureKind::kMfcc,
              FeatureFingerprint(FeatureKind::kMfcc, cfg_)};
    const RowMatrix d1 = Delta(ceps, cfg_.delta_window, 1);
    const RowMatrix d2 = Delta(ceps, cfg_.delta_window, 2);
    RowMatrix all(ceps.rows(), 3 * ceps.cols());
    all << ceps, d1, d2;
    return {std::move(all), FeatureKind::kMfccDeltas,
            FeatureFingerprint(FeatureKind::kMfccDeltas, cfg_)};
  }

  // Critical-band energies (floored at log_floor), T x num_bark_bands.
  RowMatrix BarkEnergies(const Waveform& wave) const {
    const SpectrumMatrix spec = Spectrum(wave);
    RowMatrix bands = spec.power * bark_fb_.transpose();
    return bands.cwiseMax(cfg_.log_floor);
  }

  // Equal-loudness weighted, cube-root compressed band values before the
  // edge-band replication and AR modelling, T x num_bark_bands.
  RowMatrix CompressBands(const RowMatrix& bands) const {
    RowMatrix out(bands.rows(), bands.cols());
    for (Eigen::Index t = 0; t < bands.rows(); ++t)
      for (Eigen::Index b = 0; b < bands.cols(); ++b)
        out(t, b) = std::cbrt(equal_loudness_[b] * bands(t, b));
    return out;
  }

  RowMatrix PlpCompressedBands(const Waveform& wave) const {
    return CompressBands(BarkEnergies(wave));
  }

  FeatureMatrix Plp(const Waveform& wave) const {
    return {BandsToCepstra(PlpCompressedBands(wave)), FeatureKind::kPlp,
            FeatureFingerprint(FeatureKind::kPlp, cfg_)};
  }

  FeatureMatrix RastaPlp(const Waveform& wave) const {
    RowMatrix bands = BarkEnergies(wave);
    const Eigen::Index num_frames = bands.rows();
    std::vector<double> trajectory(num_frames);
    for (Eigen::Index b = 0; b < bands.cols(); ++b) {
      for (Eigen::Index t = 0; t < num_frames; ++t)
        trajectory[t] = std::log(bands(t, b));
      const std::vector<double> filtered = rasta_.Apply(trajectory);
      for (Eigen::Index t = 0; t < num_frames; ++t)
        bands(t, b) = std::exp(filtered[t]);
    }
    return {BandsToCepstra(CompressBands(bands)), FeatureKind::kRastaPlp,
            FeatureFingerprint(FeatureKind::kRastaPlp, cfg_)};
  }

  FeatureMatrix Sdc(const Waveform& wave, const SdcConfig& sdc) const {
    return StackSdc(MelSpectrogram(wave), sdc);
  }

  // SDC from an existing log-mel matrix; other bases are rejected.
  FeatureMatrix StackSdc(const FeatureMatrix& base, const SdcConfig& sdc) const {
    if (base.kind != FeatureKind::kMelSpec)
      Fail(ErrorCode::kConfigMismatch,
           "SDC requires a mel-spectrogram base, got " +
               std::string(FeatureKindName(base.kind)));
    return {SdcStack(base.data, sdc), FeatureKind::kSdc,
            FeatureFingerprint(FeatureKind::kSdc, cfg_, &sdc)};
  }

  FeatureMatrix Extract(FeatureKind kind, const Waveform& wave,
                        const SdcConfig& sdc = {}) const {
    switch (kind) {
      case FeatureKind::kMelSpec: return MelSpectrogram(wave);
      case FeatureKind::kMfcc: return Mfcc(wave, false);
      case FeatureKind::kMfccDeltas: return Mfcc(wave, true);
      case FeatureKind::kPlp: return Plp(wave);
      case FeatureKind::kRastaPlp: return RastaPlp(wave);
      case FeatureKind::kSdc: return Sdc(wave, sdc);
    }
    Fail(ErrorCode::kInvalidArgument, "unknown feature kind");
  }

  int OutputDim(FeatureKind kind, const SdcConfig& sdc = {}) const {
    switch (kind) {
      case FeatureKind::kMelSpec: return cfg_.num_mel;
      case FeatureKind::kMfcc: return cfg_.num_cepstra;
      case FeatureKind::kMfccDeltas: return 3 * cfg_.num_cepstra;
      case FeatureKind::kPlp:
      case FeatureKind::kRastaPlp: return cfg_.lpc_order + 1;
      case FeatureKind::kSdc: return sdc.OutputDim();
    }
    return 0;
  }

 private:
  void CheckRate(const Waveform& wave) const {
    if (wave.sample_rate != sample_rate_)
      Fail(ErrorCode::kConfigMismatch,
           "waveform at " + std::to_string(wave.sample_rate) +
               " Hz, front-end configured for " + std::to_string(sample_rate_));
  }

  // Trapezoidal critical-band filters centred at 1-bark spacing from 0 to the
  // Nyquist bark value: flat for +-0.5 bark, rising 10 dB/bark below and
  // falling 25 dB/bark above.
  void BuildBarkBank() {
    const int num_bins = cfg_.nfft / 2 + 1;
    const double nyquist_bark = HzToBark(sample_rate_ / 2.0);
    const int num_bands = static_cast<int>(std::ceil(nyquist_bark)) + 1;
    const double step = nyquist_bark / (num_bands - 1);
    bark_fb_ = RowMatrix::Zero(num_bands, num_bins);
    equal_loudness_.assign(num_bands, 0.0);
    for (int i = 0; i < num_bands; ++i) {
      const double center = step * i;
      for (int b = 0; b < num_bins; ++b) {
        const double z = HzToBark(static_cast<double>(b) * sample_rate_ / cfg_.nfft);
        const double lo = z - center - 0.5;
        const double hi = z - center + 0.5;
        bark_fb_(i, b) = std::pow(10.0, std::min(0.0, std::min(hi, -2.5 * lo)));
      }
      const double fsq = std::pow(BarkToHz(center), 2);
      equal_loudness_[i] = std::pow(fsq / (fsq + 1.6e5), 2) *
                           ((fsq + 1.44e6) / (fsq + 9.61e6));
    }
  }

  // Compressed bands -> autocorrelation -> Levinson-Durbin -> cepstra.
  RowMatrix BandsToCepstra(const RowMatrix& compressed) const {
    const int num_bands = static_cast<int>(compressed.cols());
    const int num_ceps = cfg_.lpc_order + 1;
    RowMatrix out(compressed.rows(), num_ceps);
    std::vector<double> spectrum(num_bands);
    for (Eigen::Index t = 0; t < compressed.rows(); ++t) {
      for (int b = 0; b < num_bands; ++b) spectrum[b] = compressed(t, b);
      // Edge bands are unreliable (zero loudness weight at DC); replicate.
      spectrum[0] = spectrum[1];
      spectrum[num_bands - 1] = spectrum[num_bands - 2];
      const std::vector<double> r =
          AutocorrelationFromPowerSpectrum(spectrum, cfg_.lpc_order);
      LpcResult lpc = LevinsonDurbin(r, cfg_.lpc_order);
      if (!(lpc.error > 0.0)) lpc.error = cfg_.log_floor;
      const std::vector<double> c = LpcToCepstrum(lpc, num_ceps);
      for (int i = 0; i < num_ceps; ++i) out(t, i) = c[i];
    }
    return out;
  }

  FrontEndConfig cfg_;
  int sample_rate_;
  int frame_len_ = 0;
  int hop_ = 0;
  RowMatrix mel_fb_;
  RowMatrix dct_;
  RowMatrix bark_fb_;
  std::vector<double> equal_loudness_;
  RastaFilter rasta_;
};

// Free-function forms with default-constructed front-ends.
inline FeatureMatrix MelSpectrogram(const Waveform& wave,
                                    const FrontEndConfig& cfg = {}) {
  return FrontEnd(cfg, wave.sample_rate).MelSpectrogram(wave);
}
inline FeatureMatrix Mfcc(const Waveform& wave, const FrontEndConfig& cfg = {},
                          bool with_deltas = false) {
  return FrontEnd(cfg, wave.sample_rate).Mfcc(wave, with_deltas);
}
inline FeatureMatrix Plp(const Waveform& wave, const FrontEndConfig& cfg = {}) {
  return FrontEnd(cfg, wave.sample_rate).Plp(wave);
}
inline FeatureMatrix RastaPlp(const Waveform& wave,
                              const FrontEndConfig& cfg = {}) {
  return FrontEnd(cfg, wave.sample_rate).RastaPlp(wave);
}
inline FeatureMatrix Sdc(const FeatureMatrix& base, const SdcConfig& cfg) {
  if (base.kind != FeatureKind::kMelSpec)
    Fail(ErrorCode::kConfigMismatch, "SDC requires a mel-spectrogram base");
  return {SdcStack(base.data, cfg), FeatureKind::kSdc,
          Fnv1a64(std::to_string(base.config_fingerprint) + ";sdc=" +
                  cfg.ToString())};
}

}  // namespace kwsdc

#endif  // KWSDC_FEATURES_H_
