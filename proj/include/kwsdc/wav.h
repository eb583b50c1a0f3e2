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

// RIFF/WAVE reading and writing, restricted to 16-bit PCM mono at the
// pipeline sample rate.

#ifndef KWSDC_WAV_H_
#define KWSDC_WAV_H_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>

#include "kwsdc/binary_io.h"
#include "kwsdc/dsp.h"
#include "kwsdc/error.h"

namespace kwsdc {

inline constexpr int kWavSampleRate = 16000;

inline Waveform DecodeWav(const Bytes& bytes, const std::string& name = "wav") {
  ByteReader in(bytes, name);
  if (in.String(4) != "RIFF")
    Fail(ErrorCode::kFormatError, name + ": missing RIFF header");
  in.Le<std::uint32_t>();
  if (in.String(4) != "WAVE")
    Fail(ErrorCode::kFormatError, name + ": RIFF type is not WAVE");
  bool have_fmt = false;
  while (in.remaining() >= 8) {
    const std::string id = in.String(4);
    const std::uint32_t size = in.Le<std::uint32_t>();
    if (size > in.remaining())
      Fail(ErrorCode::kFormatError, name + ": chunk '" + id + "' overruns the file");
    if (id == "fmt ") {
      if (size < 16) Fail(ErrorCode::kFormatError, name + ": fmt chunk too short");
      const auto format = in.Le<std::uint16_t>();
      const auto channels = in.Le<std::uint16_t>();
      const auto rate = in.Le<std::uint32_t>();
      in.Le<std::uint32_t>();  // byte rate
      in.Le<std::uint16_t>();  // block align
      const auto bits = in.Le<std::uint16_t>();
      in.String(size - 16 + (size & 1));
      if (format != 1)
        Fail(ErrorCode::kUnsupportedFormat,
             name + ": audio_format=" + std::to_string(format) + " (need PCM=1)");
      if (channels != 1)
        Fail(ErrorCode::kUnsupportedFormat,
             name + ": channels=" + std::to_string(channels) + " (need mono)");
      if (rate != kWavSampleRate)
        Fail(ErrorCode::kUnsupportedFormat, name + ": sample_rate=" +
                                                std::to_string(rate) + " (need 16000)");
      if (bits != 16)
        Fail(ErrorCode::kUnsupportedFormat,
             name + ": bits_per_sample=" + std::to_string(bits) + " (need 16)");
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) Fail(ErrorCode::kFormatError, name + ": data chunk before fmt");
      if (size % 2 != 0) Fail(ErrorCode::kFormatError, name + ": odd data size");
      Waveform wave;
      wave.sample_rate = kWavSampleRate;
      wave.samples.resize(size / 2);
      for (double& s : wave.samples)
        s = static_cast<std::int16_t>(in.Le<std::uint16_t>()) / 32768.0;
      return wave;
    } else {
      in.String(size + ((size & 1) && in.remaining() > size ? 1 : 0));
    }
  }
  Fail(ErrorCode::kFormatError, name + ": no data chunk");
}

inline Waveform ReadWav(const std::filesystem::path& path) {
  return DecodeWav(ReadFileBytes(path), path.string());
}

// Samples are scaled by 32768, rounded to nearest and clipped to int16.
inline Bytes EncodeWav(const Waveform& wave) {
  if (wave.sample_rate != kWavSampleRate)
    Fail(ErrorCode::kUnsupportedFormat,
         "sample_rate=" + std::to_string(wave.sample_rate) + " (need 16000)");
  const auto data_size = static_cast<std::uint32_t>(2 * wave.samples.size());
  Bytes out;
  out.reserve(44 + data_size);
  PutString(out, "RIFF");
  PutLe<std::uint32_t>(out, 36 + data_size);
  PutString(out, "WAVEfmt ");
  PutLe<std::uint32_t>(out, 16);
  PutLe<std::uint16_t>(out, 1);
  PutLe<std::uint16_t>(out, 1);
  PutLe<std::uint32_t>(out, kWavSampleRate);
  PutLe<std::uint32_t>(out, 2 * kWavSampleRate);
  PutLe<std::uint16_t>(out, 2);
  PutLe<std::uint16_t>(out, 16);
  PutString(out, "data");
  PutLe<std::uint32_t>(out, data_size);
  for (double s : wave.samples) {
    const double scaled = std::clamp(std::round(s * 32768.0), -32768.0, 32767.0);
    PutLe(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(scaled)));
  }
  return out;
}

inline void WriteWav(const std::filesystem::path& path, const Waveform& wave) {
  WriteFileAtomic(path, EncodeWav(wave));
}

}  // namespace kwsdc

#endif  // KWSDC_WAV_H_
