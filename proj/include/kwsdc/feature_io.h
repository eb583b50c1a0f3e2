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

// KWSF feature files:
//
//   offset  size  field
//   0       4     magic "KWSF"
//   4       2     version (u16, currently 1)
//   6       2     feature kind (u16, FeatureKind value)
//   8       4     rows (u32)
//   12      4     cols (u32)
//   16      4*r*c row-major float32 values
//
// All integers and floats are little-endian.

#ifndef KWSDC_FEATURE_IO_H_
#define KWSDC_FEATURE_IO_H_

#include <cmath>
#include <filesystem>
#include <string>

#include "kwsdc/binary_io.h"
#include "kwsdc/features.h"

namespace kwsdc {

inline constexpr std::uint16_t kKwsfVersion = 1;

inline Bytes EncodeFeatures(const FeatureMatrix& feat) {
  Bytes out;
  out.reserve(16 + 4 * static_cast<size_t>(feat.data.size()));
  PutString(out, "KWSF");
  PutLe<std::uint16_t>(out, kKwsfVersion);
  PutLe<std::uint16_t>(out, static_cast<std::uint16_t>(feat.kind));
  PutLe<std::uint32_t>(out, static_cast<std::uint32_t>(feat.data.rows()));
  PutLe<std::uint32_t>(out, static_cast<std::uint32_t>(feat.data.cols()));
  for (Eigen::Index r = 0; r < feat.data.rows(); ++r)
    for (Eigen::Index c = 0; c < feat.data.cols(); ++c)
      PutF32(out, static_cast<float>(feat.data(r, c)));
  return out;
}

inline FeatureMatrix DecodeFeatures(const Bytes& bytes,
                                    const std::string& context = "KWSF") {
  ByteReader in(bytes, context);
  if (in.String(4) != "KWSF")
    Fail(ErrorCode::kFormatError, context + ": bad magic");
  const auto version = in.Le<std::uint16_t>();
  if (version != kKwsfVersion)
    Fail(ErrorCode::kFormatError,
         context + ": unsupported version " + std::to_string(version));
  const auto kind = in.Le<std::uint16_t>();
  if (kind > static_cast<std::uint16_t>(FeatureKind::kSdc))
    Fail(ErrorCode::kFormatError, context + ": unknown feature kind " +
                                      std::to_string(kind));
  const auto rows = in.Le<std::uint32_t>();
  const auto cols = in.Le<std::uint32_t>();
  if (in.remaining() != 4ull * rows * cols)
    Fail(ErrorCode::kFormatError, context + ": payload size does not match " +
                                      std::to_string(rows) + "x" +
                                      std::to_string(cols));
  FeatureMatrix feat;
  feat.kind = static_cast<FeatureKind>(kind);
  feat.data.resize(rows, cols);
  for (std::uint32_t r = 0; r < rows; ++r)
    for (std::uint32_t c = 0; c < cols; ++c) feat.data(r, c) = in.F32();
  return feat;
}

inline void WriteFeatures(const std::filesystem::path& path,
                          const FeatureMatrix& feat) {
  WriteFileAtomic(path, EncodeFeatures(feat));
}

inline FeatureMatrix ReadFeatures(const std::filesystem::path& path) {
  return DecodeFeatures(ReadFileBytes(path), path.string());
}

}  // namespace kwsdc

#endif  // KWSDC_FEATURE_IO_H_
