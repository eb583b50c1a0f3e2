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

// Little-endian byte packing and atomic file replacement shared by the KWSF
// feature format, the KWSM checkpoint format and WAV I/O.

#ifndef KWSDC_BINARY_IO_H_
#define KWSDC_BINARY_IO_H_

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "kwsdc/error.h"

namespace kwsdc {

using Bytes = std::vector<std::uint8_t>;

template <typename UInt>
void PutLe(Bytes& out, UInt value) {
  for (size_t i = 0; i < sizeof(UInt); ++i)
    out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
}

inline void PutF32(Bytes& out, float value) {
  PutLe(out, std::bit_cast<std::uint32_t>(value));
}

inline void PutString(Bytes& out, std::string_view text) {
  out.insert(out.end(), text.begin(), text.end());
}

// Bounds-checked little-endian reader; any overrun is a FormatError.
class ByteReader {
 public:
  ByteReader(const Bytes& data, std::string context)
      : data_(data), context_(std::move(context)) {}

  template <typename UInt>
  UInt Le() {
    Need(sizeof(UInt));
    UInt value = 0;
    for (size_t i = 0; i < sizeof(UInt); ++i)
      value |= static_cast<UInt>(static_cast<UInt>(data_[pos_ + i]) << (8 * i));
    pos_ += sizeof(UInt);
    return value;
  }

  float F32() { return std::bit_cast<float>(Le<std::uint32_t>()); }

  std::string String(size_t length) {
    Need(length);
    std::string out(reinterpret_cast<const char*>(data_.data() + pos_), length);
    pos_ += length;
    return out;
  }

  size_t position() const { return pos_; }
  size_t remaining() const { return data_.size() - pos_; }

 private:
  void Need(size_t n) const {
    if (data_.size() - pos_ < n)
      Fail(ErrorCode::kFormatError, context_ + ": truncated at byte " +
                                        std::to_string(pos_));
  }

  const Bytes& data_;
  std::string context_;
  size_t pos_ = 0;
};

inline Bytes ReadFileBytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) Fail(ErrorCode::kIoError, "cannot open " + path.string());
  return Bytes(std::istreambuf_iterator<char>(in), {});
}

// Writes to a sibling temporary file, then renames over the destination.
inline void WriteFileAtomic(const std::filesystem::path& path,
                            const void* data, size_t size) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) Fail(ErrorCode::kIoError, "cannot write " + tmp.string());
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
    if (!out) Fail(ErrorCode::kIoError, "write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    Fail(ErrorCode::kIoError, "cannot rename onto " + path.string());
  }
}

inline void WriteFileAtomic(const std::filesystem::path& path,
                            const Bytes& bytes) {
  WriteFileAtomic(path, bytes.data(), bytes.size());
}

inline void WriteFileAtomic(const std::filesystem::path& path,
                            std::string_view text) {
  WriteFileAtomic(path, text.data(), text.size());
}

}  // namespace kwsdc

#endif  // KWSDC_BINARY_IO_H_
