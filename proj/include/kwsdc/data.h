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

// Pair manifests, character tokenization and zero-padded batching.

#ifndef KWSDC_DATA_H_
#define KWSDC_DATA_H_

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "kwsdc/binary_io.h"
#include "kwsdc/error.h"
#include "kwsdc/feature_io.h"
#include "kwsdc/features.h"
#include "kwsdc/random.h"
#include "kwsdc/wav.h"

namespace kwsdc {

// ---------------------------------------------------------------------------
// Tokenizer: a..z -> 0..25, space -> 26, apostrophe -> 27.

inline constexpr int kAlphabetSize = 28;

inline std::vector<int> Tokenize(std::string_view text) {
  if (text.empty()) Fail(ErrorCode::kTokenizeError, "empty text");
  std::vector<int> out;
  out.reserve(text.size());
  for (char raw : text) {
    const char c = static_cast<char>(std::tolower(static_cast<unsigned char>(raw)));
    if (c >= 'a' && c <= 'z')
      out.push_back(c - 'a');
    else if (c == ' ')
      out.push_back(26);
    else if (c == '\'')
      out.push_back(27);
    else
      Fail(ErrorCode::kTokenizeError,
           "character '" + std::string(1, raw) + "' is outside the alphabet");
  }
  return out;
}

inline char TokenChar(int index) {
  if (index < 0 || index >= kAlphabetSize)
    Fail(ErrorCode::kTokenizeError, "token index " + std::to_string(index));
  if (index < 26) return static_cast<char>('a' + index);
  return index == 26 ? ' ' : '\'';
}

// ---------------------------------------------------------------------------
// Manifests

struct Example {
  std::filesystem::path audio;
  std::string text;
  int label = 0;
  // Optional KWSF file with one 512-wide row per character, used instead of
  // the learned character embedding.
  std::filesystem::path text_features;
};

using Manifest = std::vector<Example>;

// One JSON object per line: {"audio": ..., "text": ..., "label": 0|1} plus an
// optional "text_features". Relative paths resolve against the manifest's
// directory.
inline Manifest ParseManifest(std::string_view content,
                              const std::filesystem::path& base_dir,
                              bool check_files = true) {
  Manifest out;
  size_t pos = 0;
  int line_no = 0;
  while (pos < content.size()) {
    size_t end = content.find('\n', pos);
    if (end == std::string_view::npos) end = content.size();
    std::string line(content.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const std::string where = "manifest line " + std::to_string(line_no) + ": ";
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      Fail(ErrorCode::kManifestError, where + "invalid JSON");
    }
    if (!j.is_object()) Fail(ErrorCode::kManifestError, where + "expected an object");
    for (const char* field : {"audio", "text", "label"})
      if (!j.contains(field))
        Fail(ErrorCode::kManifestError, where + "missing field '" + field + "'");
    if (!j["audio"].is_string() || !j["text"].is_string())
      Fail(ErrorCode::kManifestError, where + "audio and text must be strings");
    if (!j["label"].is_number_integer() ||
        (j["label"].get<int>() != 0 && j["label"].get<int>() != 1))
      Fail(ErrorCode::kManifestError, where + "label must be 0 or 1, got " +
                                          j["label"].dump());
    Example ex;
    ex.audio = base_dir / j["audio"].get<std::string>();
    ex.text = j["text"].get<std::string>();
    ex.label = j["label"].get<int>();
    if (ex.text.empty()) Fail(ErrorCode::kManifestError, where + "empty text");
    if (j.contains("text_features")) {
      if (!j["text_features"].is_string())
        Fail(ErrorCode::kManifestError, where + "text_features must be a string");
      ex.text_features = base_dir / j["text_features"].get<std::string>();
    }
    if (check_files) {
      if (!std::filesystem::is_regular_file(ex.audio))
        Fail(ErrorCode::kManifestError,
             where + "audio file not found: " + ex.audio.string());
      if (!ex.text_features.empty() && !std::filesystem::is_regular_file(ex.text_features))
        Fail(ErrorCode::kManifestError,
             where + "text feature file not found: " + ex.text_features.string());
    }
    out.push_back(std::move(ex));
  }
  if (out.empty()) Fail(ErrorCode::kEmptyDataset, "manifest has no examples");
  return out;
}

inline Manifest LoadManifest(const std::filesystem::path& path) {
  const Bytes bytes = ReadFileBytes(path);
  return ParseManifest(std::string_view(reinterpret_cast<const char*>(bytes.data()),
                                        bytes.size()),
                       path.parent_path());
}

// Paths are written relative to `base_dir` when they live below it.
inline std::string FormatManifest(const Manifest& manifest,
                                  const std::filesystem::path& base_dir) {
  auto rel = [&](const std::filesystem::path& p) {
    const auto r = p.lexically_relative(base_dir);
    return (r.empty() || *r.begin() == "..") ? p.generic_string() : r.generic_string();
  };
  std::string out;
  for (const Example& ex : manifest) {
    nlohmann::ordered_json j;
    j["audio"] = rel(ex.audio);
    j["text"] = ex.text;
    j["label"] = ex.label;
    if (!ex.text_features.empty()) j["text_features"] = rel(ex.text_features);
    out += j.dump() + "\n";
  }
  return out;
}

inline void CheckBothLabels(const std::vector<int>& labels) {
  if (labels.empty()) Fail(ErrorCode::kEmptyDataset, "no examples");
  const bool pos = std::find(labels.begin(), labels.end(), 1) != labels.end();
  const bool neg = std::find(labels.begin(), labels.end(), 0) != labels.end();
  if (!pos || !neg)
    Fail(ErrorCode::kDegenerateDataset,
         "dataset needs both positive and negative pairs");
}

// ---------------------------------------------------------------------------
// Feature-ready examples and batches

struct PreparedExample {
  RowMatrix features;                  // T x D
  std::vector<int> tokens;             // character indices
  std::optional<RowMatrix> text_rows;  // external n x 512 text features
  int label = 0;
};

// Reads every example's audio, extracts `kind` features and tokenizes the
// text. SDC stacks the log-mel spectrum with `sdc`.
inline std::vector<PreparedExample> PrepareExamples(const Manifest& manifest,
                                                    const FrontEnd& front_end,
                                                    FeatureKind kind,
                                                    const SdcConfig& sdc) {
  std::vector<PreparedExample> out;
  out.reserve(manifest.size());
  for (const Example& ex : manifest) {
    PreparedExample p;
    p.features = front_end.Extract(kind, ReadWav(ex.audio), sdc).data;
    p.tokens = Tokenize(ex.text);
    if (!ex.text_features.empty()) p.text_rows = ReadFeatures(ex.text_features).data;
    p.label = ex.label;
    out.push_back(std::move(p));
  }
  return out;
}

struct Batch {
  int max_frames = 0;
  int dim = 0;
  std::vector<float> features;  // size() x max_frames x dim, zero padded
  std::vector<int> lengths;     // true frame counts
  std::vector<std::vector<int>> tokens;
  std::vector<const RowMatrix*> text_rows;  // nullptr when tokens are used
  std::vector<int> labels;
  std::vector<size_t> indices;  // positions in the source example list

  int size() const { return static_cast<int>(labels.size()); }
};

inline Batch AssembleBatch(const std::vector<PreparedExample>& examples,
                           const std::vector<size_t>& indices) {
  if (indices.empty()) Fail(ErrorCode::kEmptyDataset, "empty batch");
  Batch batch;
  batch.dim = static_cast<int>(examples.at(indices[0]).features.cols());
  for (size_t i : indices) {
    const PreparedExample& ex = examples.at(i);
    if (ex.features.cols() != batch.dim)
      Fail(ErrorCode::kShapeError, "examples have different feature widths");
    batch.max_frames = std::max(batch.max_frames, static_cast<int>(ex.features.rows()));
  }
  const size_t stride = static_cast<size_t>(batch.max_frames) * batch.dim;
  batch.features.assign(indices.size() * stride, 0.0f);
  for (size_t b = 0; b < indices.size(); ++b) {
    const PreparedExample& ex = examples[indices[b]];
    const RowMatrix& f = ex.features;
    float* dst = batch.features.data() + b * stride;
    for (Eigen::Index t = 0; t < f.rows(); ++t)
      for (Eigen::Index c = 0; c < f.cols(); ++c)
        dst[t * batch.dim + c] = static_cast<float>(f(t, c));
    batch.lengths.push_back(static_cast<int>(f.rows()));
    batch.tokens.push_back(ex.tokens);
    batch.text_rows.push_back(ex.text_rows ? &*ex.text_rows : nullptr);
    batch.labels.push_back(ex.label);
    batch.indices.push_back(indices[b]);
  }
  return batch;
}

// Splits `subset` (default: all examples) into batches of at most
// batch_size. With shuffle, the order is a permutation drawn from `seed`.
inline std::vector<Batch> MakeBatches(const std::vector<PreparedExample>& examples,
                                      int batch_size, bool shuffle, std::uint64_t seed,
                                      std::vector<size_t> subset = {}) {
  if (batch_size < 1) Fail(ErrorCode::kInvalidArgument, "batch_size must be >= 1");
  if (subset.empty()) {
    subset.resize(examples.size());
    std::iota(subset.begin(), subset.end(), size_t{0});
  }
  if (subset.empty()) Fail(ErrorCode::kEmptyDataset, "no examples to batch");
  if (shuffle) {
    Rng rng(seed);
    rng.Shuffle(subset);
  }
  std::vector<Batch> out;
  for (size_t start = 0; start < subset.size(); start += batch_size) {
    const size_t end = std::min(subset.size(), start + static_cast<size_t>(batch_size));
    out.push_back(AssembleBatch(
        examples, std::vector<size_t>(subset.begin() + start, subset.begin() + end)));
  }
  return out;
}

// Seeded split keeping round(fraction * count) examples of each label for
// validation (at least one per label when fraction > 0 and the label has two
// or more examples). Both lists are returned in ascending order.
struct Split {
  std::vector<size_t> train;
  std::vector<size_t> validation;
};

inline Split StratifiedSplit(const std::vector<int>& labels, double fraction,
                             std::uint64_t seed) {
  Split split;
  Rng rng(seed);
  for (int label : {0, 1}) {
    std::vector<size_t> members;
    for (size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == label) members.push_back(i);
    rng.Shuffle(members);
    size_t n_val = static_cast<size_t>(std::lround(fraction * members.size()));
    if (fraction > 0 && n_val == 0 && members.size() >= 2) n_val = 1;
    split.validation.insert(split.validation.end(), members.begin(),
                            members.begin() + n_val);
    split.train.insert(split.train.end(), members.begin() + n_val, members.end());
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.validation.begin(), split.validation.end());
  return split;
}

}  // namespace kwsdc

#endif  // KWSDC_DATA_H_
