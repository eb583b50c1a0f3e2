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

#ifndef KWSDC_ERROR_H_
#define KWSDC_ERROR_H_

#include <stdexcept>
#include <string>
#include <string_view>

namespace kwsdc {

enum class ErrorCode {
  kEmptySignal,
  kInsufficientSamples,
  kBadFftSize,
  kBadFrequency,
  kDegenerateFilter,
  kConfigMismatch,
  kShapeError,
  kTokenizeError,
  kUnsupportedFormat,
  kFormatError,
  kManifestError,
  kEmptyDataset,
  kDegenerateDataset,
  kDegenerateLabels,
  kIoError,
  kInvalidArgument,
};

inline std::string_view ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kEmptySignal: return "EmptySignal";
    case ErrorCode::kInsufficientSamples: return "InsufficientSamples";
    case ErrorCode::kBadFftSize: return "BadFftSize";
    case ErrorCode::kBadFrequency: return "BadFrequency";
    case ErrorCode::kDegenerateFilter: return "DegenerateFilter";
    case ErrorCode::kConfigMismatch: return "ConfigMismatch";
    case ErrorCode::kShapeError: return "ShapeError";
    case ErrorCode::kTokenizeError: return "TokenizeError";
    case ErrorCode::kUnsupportedFormat: return "UnsupportedFormat";
    case ErrorCode::kFormatError: return "FormatError";
    case ErrorCode::kManifestError: return "ManifestError";
    case ErrorCode::kEmptyDataset: return "EmptyDataset";
    case ErrorCode::kDegenerateDataset: return "DegenerateDataset";
    case ErrorCode::kDegenerateLabels: return "DegenerateLabels";
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

// Every failure raised by the library carries one of the codes above; the
// message is prefixed with the code name.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(ErrorCodeName(code)) + ": " + what),
        code_(code),
        message_(what) {}

  ErrorCode code() const { return code_; }
  // The message without the code prefix.
  const std::string& message() const { return message_; }

 private:
  ErrorCode code_;
  std::string message_;
};

[[noreturn]] inline void Fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

inline void Require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) Fail(code, what);
}

}  // namespace kwsdc

#endif  // KWSDC_ERROR_H_
