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

// Model configuration and its text forms.
//
// Every setting has a section and a key. Checkpoints store the flattened
// "section.key=value" lines; configuration files use INI-style
// "[section]" headers followed by "key=value" lines. Blank lines and lines
// starting with '#' or ';' are ignored. Unknown keys are rejected.

#ifndef KWSDC_CONFIG_H_
#define KWSDC_CONFIG_H_

#include <charconv>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "kwsdc/error.h"
#include "kwsdc/features.h"

namespace kwsdc {

struct ModelConfig {
  FrontEndConfig frontend;
  FeatureKind feature = FeatureKind::kSdc;
  SdcConfig sdc;
  int conv_filters = 32;
  int kernel = 3;
  int stride_t = 2;
  int gru_hidden = 64;
  int embed_dim = 128;
  int char_embed_dim = 512;
  int discriminator_hidden = 128;
  double dropout = 0.2;
  double lr = 1e-4;
  int batch_size = 128;
  std::uint64_t seed = 0;
  double val_fraction = 0.1;

  void Validate() const {
    frontend.Validate();
    sdc.Validate();
    if (conv_filters < 1 || kernel < 1 || stride_t < 1 || gru_hidden < 1 ||
        embed_dim < 1 || char_embed_dim < 1 || discriminator_hidden < 1 ||
        batch_size < 1)
      Fail(ErrorCode::kInvalidArgument, "model dimensions must be positive");
    if (kernel % 2 == 0)
      Fail(ErrorCode::kInvalidArgument, "model.kernel must be odd");
    if (!(dropout >= 0 && dropout < 1))
      Fail(ErrorCode::kInvalidArgument, "model.dropout must be in [0, 1)");
    if (!(lr > 0)) Fail(ErrorCode::kInvalidArgument, "model.lr must be positive");
    if (!(val_fraction >= 0 && val_fraction < 1))
      Fail(ErrorCode::kInvalidArgument, "model.val_fraction must be in [0, 1)");
    if (feature == FeatureKind::kSdc && sdc.n != frontend.num_mel)
      Fail(ErrorCode::kConfigMismatch,
           "sdc.n=" + std::to_string(sdc.n) + " must equal frontend.num_mel=" +
               std::to_string(frontend.num_mel) + " (SDC stacks the log-mel spectrum)");
  }

  bool operator==(const ModelConfig& o) const { return Serialize() == o.Serialize(); }

  std::string Serialize() const;
};

namespace config_internal {

inline std::string FormatNumber(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

template <typename Num>
Num ParseNumber(std::string_view key, std::string_view text) {
  Num value{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty())
    Fail(ErrorCode::kInvalidArgument,
         "bad value '" + std::string(text) + "' for " + std::string(key));
  return value;
}

struct Field {
  const char* section;
  const char* key;
  std::function<std::string(const ModelConfig&)> get;
  std::function<void(ModelConfig&, std::string_view)> set;
};

template <typename Num, typename Member>
Field NumberField(const char* section, const char* key, Member member) {
  return {section, key,
          [member](const ModelConfig& c) {
            if constexpr (std::is_floating_point_v<Num>)
              return FormatNumber(member(const_cast<ModelConfig&>(c)));
            else
              return std::to_string(member(const_cast<ModelConfig&>(c)));
          },
          [member, section, key](ModelConfig& c, std::string_view v) {
            member(c) = ParseNumber<Num>(std::string(section) + "." + key, v);
          }};
}

#define KWSDC_FIELD(type, section, key, expr) \
  NumberField<type>(section, key, [](ModelConfig& c) -> type& { return expr; })

inline const std::vector<Field>& Fields() {
  static const std::vector<Field> fields = [] {
    std::vector<Field> f = {
        KWSDC_FIELD(double, "frontend", "frame_ms", c.frontend.frame_ms),
        KWSDC_FIELD(double, "frontend", "hop_ms", c.frontend.hop_ms),
        KWSDC_FIELD(double, "frontend", "pre_emphasis", c.frontend.pre_emphasis),
        KWSDC_FIELD(int, "frontend", "nfft", c.frontend.nfft),
        KWSDC_FIELD(int, "frontend", "num_mel", c.frontend.num_mel),
        KWSDC_FIELD(int, "frontend", "num_cepstra", c.frontend.num_cepstra),
        KWSDC_FIELD(double, "frontend", "log_floor", c.frontend.log_floor),
        KWSDC_FIELD(int, "frontend", "delta_window", c.frontend.delta_window),
        KWSDC_FIELD(int, "frontend", "lpc_order", c.frontend.lpc_order),
        KWSDC_FIELD(double, "frontend", "rasta_pole", c.frontend.rasta_pole),
        KWSDC_FIELD(int, "sdc", "n", c.sdc.n),
        KWSDC_FIELD(int, "sdc", "d", c.sdc.d),
        KWSDC_FIELD(int, "sdc", "p", c.sdc.p),
        KWSDC_FIELD(int, "sdc", "k", c.sdc.k),
    };
    f.push_back({"model", "feature",
                 [](const ModelConfig& c) { return std::string(FeatureKindName(c.feature)); },
                 [](ModelConfig& c, std::string_view v) {
                   auto kind = ParseFeatureKind(v);
                   if (!kind)
                     Fail(ErrorCode::kInvalidArgument,
                          "unknown feature '" + std::string(v) +
                              "' (mel, mfcc, mfcc-dd, plp, rasta-plp, sdc)");
                   c.feature = *kind;
                 }});
    for (Field extra : {
             KWSDC_FIELD(int, "model", "conv_filters", c.conv_filters),
             KWSDC_FIELD(int, "model", "kernel", c.kernel),
             KWSDC_FIELD(int, "model", "stride_t", c.stride_t),
             KWSDC_FIELD(int, "model", "gru_hidden", c.gru_hidden),
             KWSDC_FIELD(int, "model", "embed_dim", c.embed_dim),
             KWSDC_FIELD(int, "model", "char_embed_dim", c.char_embed_dim),
             KWSDC_FIELD(int, "model", "discriminator_hidden", c.discriminator_hidden),
             KWSDC_FIELD(double, "model", "dropout", c.dropout),
             KWSDC_FIELD(double, "model", "lr", c.lr),
             KWSDC_FIELD(int, "model", "batch_size", c.batch_size),
             KWSDC_FIELD(std::uint64_t, "model", "seed", c.seed),
             KWSDC_FIELD(double, "model", "val_fraction", c.val_fraction),
         })
      f.push_back(std::move(extra));
    return f;
  }();
  return fields;
}

#undef KWSDC_FIELD

inline std::string Trim(std::string_view s) {
  const size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return "";
  const size_t e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace config_internal

// Sets "section.key" from its text value.
inline void SetConfigValue(ModelConfig& cfg, std::string_view qualified_key,
                           std::string_view value) {
  for (const auto& field : config_internal::Fields()) {
    if (qualified_key == std::string(field.section) + "." + field.key) {
      field.set(cfg, value);
      return;
    }
  }
  Fail(ErrorCode::kInvalidArgument, "unknown configuration key '" +
                                        std::string(qualified_key) + "'");
}

// All settings as ordered (section.key, value) pairs.
inline std::vector<std::pair<std::string, std::string>> ConfigEntries(
    const ModelConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& field : config_internal::Fields())
    out.emplace_back(std::string(field.section) + "." + field.key, field.get(cfg));
  return out;
}

inline std::string ModelConfig::Serialize() const {
  std::string out;
  for (const auto& [key, value] : ConfigEntries(*this)) out += key + "=" + value + "\n";
  return out;
}

// Parses the flattened block written by Serialize(). Missing keys keep their
// defaults.
inline ModelConfig ParseConfigBlock(std::string_view text) {
  ModelConfig cfg;
  size_t pos = 0;
  while (pos < text.size()) {
    size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string line = config_internal::Trim(text.substr(pos, end - pos));
    pos = end + 1;
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      Fail(ErrorCode::kFormatError, "config line without '=': " + line);
    SetConfigValue(cfg, config_internal::Trim(line.substr(0, eq)),
                   config_internal::Trim(line.substr(eq + 1)));
  }
  return cfg;
}

// Applies an INI-style file on top of `cfg`.
inline void ApplyIniConfig(ModelConfig& cfg, std::string_view text) {
  std::string section;
  size_t pos = 0;
  int line_no = 0;
  while (pos < text.size()) {
    size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string line = config_internal::Trim(text.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    const std::string where = "config line " + std::to_string(line_no) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']')
        Fail(ErrorCode::kInvalidArgument, where + "unterminated section header");
      section = config_internal::Trim(line.substr(1, line.size() - 2));
      continue;
    }
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      Fail(ErrorCode::kInvalidArgument, where + "expected key=value");
    if (section.empty())
      Fail(ErrorCode::kInvalidArgument, where + "key outside of a [section]");
    try {
      SetConfigValue(cfg, section + "." + config_internal::Trim(line.substr(0, eq)),
                     config_internal::Trim(line.substr(eq + 1)));
    } catch (const Error& e) {
      Fail(e.code(), where + e.message());
    }
  }
}

// Renders `cfg` as an INI file accepted by ApplyIniConfig.
inline std::string ToIni(const ModelConfig& cfg) {
  std::string out, section;
  for (const auto& field : config_internal::Fields()) {
    if (section != field.section) {
      section = field.section;
      out += (out.empty() ? "[" : "\n[") + section + "]\n";
    }
    out += std::string(field.key) + "=" + field.get(cfg) + "\n";
  }
  return out;
}

}  // namespace kwsdc

#endif  // KWSDC_CONFIG_H_
