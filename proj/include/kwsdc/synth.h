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

// Deterministic synthetic keyword corpus.
//
// Each character of a keyword becomes a 60 ms segment holding two tones from
// a fixed per-character table (see CharTones and share/char_tones.txt). An
// utterance is 30 ms of silence, the character segments, and 30 ms of
// silence, with the segment length scaled by a per-utterance tempo factor in
// [0.9, 1.1] and white Gaussian noise added at 20 dB SNR. Positive pairs use
// the spoken keyword as text; negatives use a different keyword.

#ifndef KWSDC_SYNTH_H_
#define KWSDC_SYNTH_H_

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <set>
#include <string>
#include <vector>

#include "kwsdc/binary_io.h"
#include "kwsdc/data.h"
#include "kwsdc/random.h"
#include "kwsdc/wav.h"

namespace kwsdc {

struct TonePair {
  double low_hz;
  double high_hz;
};

// Token index i maps to (300 + 110 * (i % 7), 1500 + 600 * (i / 7)) Hz.
inline TonePair CharTones(int token) {
  if (token < 0 || token >= kAlphabetSize)
    Fail(ErrorCode::kTokenizeError, "token index " + std::to_string(token));
  return {300.0 + 110.0 * (token % 7), 1500.0 + 600.0 * (token / 7)};
}

// Text rendering of the tone table, as shipped in share/char_tones.txt.
inline std::string CharToneTable() {
  std::string out =
      "# Synthetic keyword tone table: one line per symbol.\n"
      "# index symbol low_hz high_hz\n";
  for (int i = 0; i < kAlphabetSize; ++i) {
    const TonePair t = CharTones(i);
    const char c = TokenChar(i);
    const std::string symbol = c == ' ' ? "<space>" : std::string(1, c);
    out += std::to_string(i) + " " + symbol + " " +
           std::to_string(static_cast<int>(t.low_hz)) + " " +
           std::to_string(static_cast<int>(t.high_hz)) + "\n";
  }
  return out;
}

struct SynthParams {
  double segment_ms = 60.0;
  double silence_ms = 30.0;
  double fade_ms = 5.0;
  double tone_amplitude = 0.25;
  double tempo_jitter = 0.10;
  double snr_db = 20.0;
};

inline Waveform SynthesizeKeyword(std::string_view text, std::uint64_t seed,
                                  bool add_noise = true,
                                  const SynthParams& params = {}) {
  const std::vector<int> tokens = Tokenize(text);
  Rng rng(seed);
  const double tempo = rng.Uniform(1.0 - params.tempo_jitter, 1.0 + params.tempo_jitter);
  const double sr = kWavSampleRate;
  const int segment = static_cast<int>(std::lround(params.segment_ms * tempo * sr / 1000));
  const int silence = static_cast<int>(std::lround(params.silence_ms * sr / 1000));
  const int fade = static_cast<int>(std::lround(params.fade_ms * sr / 1000));
  Waveform wave;
  wave.sample_rate = kWavSampleRate;
  wave.samples.assign(2 * silence + segment * tokens.size(), 0.0);
  for (size_t c = 0; c < tokens.size(); ++c) {
    const TonePair tones = CharTones(tokens[c]);
    const double phase_low = rng.Uniform(0.0, 2 * std::numbers::pi);
    const double phase_high = rng.Uniform(0.0, 2 * std::numbers::pi);
    const size_t start = silence + c * segment;
    for (int i = 0; i < segment; ++i) {
      double gain = 1.0;
      const int edge = std::min(i, segment - 1 - i);
      if (edge < fade) gain = 0.5 - 0.5 * std::cos(std::numbers::pi * (edge + 0.5) / fade);
      const double t = i / sr;
      wave.samples[start + i] =
          params.tone_amplitude * gain *
          (std::sin(2 * std::numbers::pi * tones.low_hz * t + phase_low) +
           std::sin(2 * std::numbers::pi * tones.high_hz * t + phase_high));
    }
  }
  if (add_noise) {
    double power = 0;
    for (double s : wave.samples) power += s * s;
    power /= static_cast<double>(wave.samples.size());
    const double sigma = std::sqrt(power / std::pow(10.0, params.snr_db / 10.0));
    for (double& s : wave.samples) s += sigma * rng.Normal();
  }
  return wave;
}

struct SynthOptions {
  std::vector<std::string> keywords;
  int per_keyword = 25;         // positives per keyword
  double negative_ratio = 1.0;  // negatives per positive
  std::uint64_t seed = 0;
};

// Writes out_dir/wav/NNNNN.wav and out_dir/manifest.jsonl. Positives come
// first, cycling through the keywords; negative j speaks keyword j mod K
// with the text of another keyword chosen by the utterance seed.
inline Manifest SynthDataset(const SynthOptions& opt, const std::filesystem::path& out_dir) {
  const std::set<std::string> distinct(opt.keywords.begin(), opt.keywords.end());
  if (distinct.size() < 2 || distinct.size() != opt.keywords.size())
    Fail(ErrorCode::kInvalidArgument, "need at least two distinct keywords");
  for (const std::string& kw : opt.keywords) Tokenize(kw);
  if (opt.per_keyword < 1) Fail(ErrorCode::kInvalidArgument, "per_keyword must be >= 1");
  if (!(opt.negative_ratio >= 0))
    Fail(ErrorCode::kInvalidArgument, "negative_ratio must be >= 0");

  std::error_code ec;
  std::filesystem::create_directories(out_dir / "wav", ec);
  if (ec || !std::filesystem::is_directory(out_dir / "wav"))
    Fail(ErrorCode::kIoError, "cannot create " + (out_dir / "wav").string());

  const size_t num_kw = opt.keywords.size();
  const size_t num_pos = num_kw * static_cast<size_t>(opt.per_keyword);
  const auto num_neg = static_cast<size_t>(std::llround(opt.negative_ratio * num_pos));
  Manifest manifest;
  for (size_t i = 0; i < num_pos + num_neg; ++i) {
    const std::uint64_t utt_seed = DeriveSeed(opt.seed, i);
    const bool positive = i < num_pos;
    const size_t spoken = positive ? i % num_kw : (i - num_pos) % num_kw;
    size_t text = spoken;
    if (!positive) {
      Rng pick(DeriveSeed(utt_seed, 1));
      text = (spoken + 1 + pick.Below(num_kw - 1)) % num_kw;
    }
    char name[32];
    std::snprintf(name, sizeof name, "%05zu.wav", i);
    Example ex;
    ex.audio = out_dir / "wav" / name;
    ex.text = opt.keywords[text];
    ex.label = positive ? 1 : 0;
    WriteWav(ex.audio, SynthesizeKeyword(opt.keywords[spoken], utt_seed));
    manifest.push_back(std::move(ex));
  }
  WriteFileAtomic(out_dir / "manifest.jsonl", FormatManifest(manifest, out_dir));
  return manifest;
}

}  // namespace kwsdc

#endif  // KWSDC_SYNTH_H_
