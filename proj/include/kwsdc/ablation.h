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

// One-parameter SDC sweeps: train and evaluate a model per (d, k) cell with
// the remaining SDC parameters held at their configured values.

#ifndef KWSDC_ABLATION_H_
#define KWSDC_ABLATION_H_

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "kwsdc/data.h"
#include "kwsdc/feature_io.h"
#include "kwsdc/features.h"
#include "kwsdc/metrics.h"
#include "kwsdc/model.h"
#include "kwsdc/random.h"
#include "kwsdc/wav.h"

namespace kwsdc {

struct Sweep {
  char parameter = 'd';  // 'd' or 'k'
  std::vector<int> values;
};

// Accepts "d=1..4", "k=5..10" or an explicit list such as "k=6,8".
inline Sweep ParseSweep(std::string_view text) {
  auto bad = [&](const std::string& why) {
    Fail(ErrorCode::kInvalidArgument,
         "sweep '" + std::string(text) + "': " + why);
  };
  auto to_int = [&](std::string_view s) {
    int v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size())
      bad("'" + std::string(s) + "' is not an integer");
    if (v < 1) bad("values must be >= 1");
    return v;
  };
  if (text.size() < 3 || text[1] != '=') bad("expected d=LO..HI or k=LO..HI");
  Sweep sweep;
  sweep.parameter = text[0];
  if (sweep.parameter != 'd' && sweep.parameter != 'k')
    bad("only d and k can be swept");
  const std::string_view body = text.substr(2);
  if (const size_t dots = body.find(".."); dots != std::string_view::npos) {
    const int lo = to_int(body.substr(0, dots));
    const int hi = to_int(body.substr(dots + 2));
    if (hi < lo) bad("empty range");
    for (int v = lo; v <= hi; ++v) sweep.values.push_back(v);
  } else {
    size_t pos = 0;
    while (pos <= body.size()) {
      const size_t comma = std::min(body.find(',', pos), body.size());
      sweep.values.push_back(to_int(body.substr(pos, comma - pos)));
      pos = comma + 1;
    }
  }
  return sweep;
}

struct AblationRow {
  int d = 0;
  int k = 0;
  double auc = 0;
  double eer = 0;
};

struct AblationOptions {
  int epochs = 50;
  // Called after each cell finishes.
  std::function<void(const AblationRow&)> on_cell;
};

namespace ablation_internal {

struct MelExample {
  RowMatrix log_mel;
  std::vector<int> tokens;
  std::optional<RowMatrix> text_rows;
  int label = 0;
};

inline std::vector<MelExample> LoadMel(const Manifest& manifest, const FrontEnd& fe) {
  std::vector<MelExample> out;
  out.reserve(manifest.size());
  for (const Example& ex : manifest) {
    MelExample m;
    m.log_mel = fe.LogMel(ReadWav(ex.audio));
    m.tokens = Tokenize(ex.text);
    if (!ex.text_features.empty()) m.text_rows = ReadFeatures(ex.text_features).data;
    m.label = ex.label;
    out.push_back(std::move(m));
  }
  return out;
}

inline std::vector<PreparedExample> Stack(const std::vector<MelExample>& mel,
                                          const SdcConfig& sdc) {
  std::vector<PreparedExample> out;
  out.reserve(mel.size());
  for (const MelExample& m : mel)
    out.push_back({SdcStack(m.log_mel, sdc), m.tokens, m.text_rows, m.label});
  return out;
}

}  // namespace ablation_internal

// Log-mel spectra are computed once per utterance and restacked for each
// cell. Cell (d, k) trains with seed DeriveSeed(base.seed, d * 1000 + k).
inline std::vector<AblationRow> AblationGrid(const Manifest& train, const Manifest& eval,
                                             const std::vector<Sweep>& sweeps,
                                             const ModelConfig& base,
                                             const AblationOptions& options = {}) {
  if (base.feature != FeatureKind::kSdc)
    Fail(ErrorCode::kConfigMismatch, "ablation requires model.feature=sdc");
  base.Validate();
  const FrontEnd fe(base.frontend);
  const auto train_mel = ablation_internal::LoadMel(train, fe);
  const auto eval_mel = ablation_internal::LoadMel(eval, fe);
  std::vector<AblationRow> rows;
  for (const Sweep& sweep : sweeps) {
    for (int v : sweep.values) {
      ModelConfig cfg = base;
      (sweep.parameter == 'd' ? cfg.sdc.d : cfg.sdc.k) = v;
      cfg.seed = DeriveSeed(base.seed, static_cast<std::uint64_t>(cfg.sdc.d) * 1000 + cfg.sdc.k);
      KwsModel model(cfg);
      TrainOptions train_options;
      train_options.epochs = options.epochs;
      Train(model, ablation_internal::Stack(train_mel, cfg.sdc), train_options);
      const ScoredSet scored = ScoreExamples(model, ablation_internal::Stack(eval_mel, cfg.sdc));
      AblationRow row{cfg.sdc.d, cfg.sdc.k, Auc(scored), Eer(scored)};
      rows.push_back(row);
      if (options.on_cell) options.on_cell(row);
    }
  }
  return rows;
}

inline std::string FormatAblation(const std::vector<AblationRow>& rows) {
  std::string out = "d,k,auc,eer\n";
  char line[96];
  for (const AblationRow& r : rows) {
    std::snprintf(line, sizeof line, "%d,%d,%.9g,%.9g\n", r.d, r.k, r.auc, r.eer);
    out += line;
  }
  return out;
}

}  // namespace kwsdc

#endif  // KWSDC_ABLATION_H_
