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

// Audio-text keyword matcher.
//
//   audio features [T, F]
//     -> Conv2d(filters, k, stride (s, 1)) -> BN -> ReLU -> dropout
//     -> Conv2d(filters, k)               -> BN -> ReLU -> dropout
//     -> per-frame flatten [ceil(T/s), filters * F]
//     -> BiGRU -> dropout -> BiGRU -> dropout -> Dense(D)           = E_a
//   text characters -> 512-wide embedding (or external rows)
//     -> BiGRU -> dropout -> Dense(D)                              = E_t
//   cross attention (query E_t, key = value E_a) -> [n, D]
//     -> BiGRU(discriminator_hidden) -> last forward/backward states
//     -> Dense(1) -> sigmoid
//
// Batches are zero-padded in time. Batch normalization ignores padded frames
// and zeroes them; the recurrent and attention stages run per item on the
// true length, so padded frames never reach the attention keys.

#ifndef KWSDC_MODEL_H_
#define KWSDC_MODEL_H_

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "kwsdc/binary_io.h"
#include "kwsdc/config.h"
#include "kwsdc/data.h"
#include "kwsdc/features.h"
#include "kwsdc/metrics.h"
#include "kwsdc/nn/adam.h"
#include "kwsdc/nn/layers.h"
#include "kwsdc/nn/ops.h"
#include "kwsdc/random.h"

namespace kwsdc {

using TensorF = nn::Tensor<float>;

inline int ModelFeatureDim(const ModelConfig& cfg) {
  return FrontEnd(cfg.frontend).OutputDim(cfg.feature, cfg.sdc);
}

class KwsModel {
 public:
  explicit KwsModel(const ModelConfig& cfg) : cfg_(cfg) {
    cfg_.Validate();
    feature_dim_ = ModelFeatureDim(cfg_);
    Rng rng(cfg_.seed);
    const int h = cfg_.gru_hidden, d = cfg_.embed_dim;
    conv1_ = {1, cfg_.conv_filters, cfg_.kernel, cfg_.stride_t, rng};
    bn1_ = nn::BatchNormLayer<float>(cfg_.conv_filters);
    conv2_ = {cfg_.conv_filters, cfg_.conv_filters, cfg_.kernel, 1, rng};
    bn2_ = nn::BatchNormLayer<float>(cfg_.conv_filters);
    audio_gru1_ = {cfg_.conv_filters * feature_dim_, h, rng};
    audio_gru2_ = {2 * h, h, rng};
    audio_dense_ = {2 * h, d, rng};
    embedding_ = {kAlphabetSize, cfg_.char_embed_dim, rng};
    text_gru_ = {cfg_.char_embed_dim, h, rng};
    text_dense_ = {2 * h, d, rng};
    attention_ = {d, d, rng};
    disc_gru_ = {d, cfg_.discriminator_hidden, rng};
    disc_dense_ = {2 * cfg_.discriminator_hidden, 1, rng};
    dropout_rng_ = Rng(DeriveSeed(cfg_.seed, 0x64726f70));
  }

  const ModelConfig& config() const { return cfg_; }
  int feature_dim() const { return feature_dim_; }

  int EncodedLength(int frames) const {
    return (frames + cfg_.stride_t - 1) / cfg_.stride_t;
  }

  // One [ceil(len/s), D] embedding per batch item.
  std::vector<TensorF> AudioEncode(const Batch& batch, bool training) {
    if (batch.dim != feature_dim_)
      Fail(ErrorCode::kConfigMismatch,
           "features are " + std::to_string(batch.dim) + " wide, model expects " +
               std::to_string(feature_dim_) + " (" +
               std::string(FeatureKindName(cfg_.feature)) + ")");
    const int n = batch.size();
    TensorF x = TensorF::FromValues({n, 1, batch.max_frames, batch.dim}, batch.features);
    std::vector<int> lengths(n);
    for (int b = 0; b < n; ++b) lengths[b] = EncodedLength(batch.lengths[b]);
    TensorF h = conv1_.Forward(x);
    h = Drop(nn::Relu(bn1_.Forward(h, training, lengths)), training);
    h = conv2_.Forward(h);
    h = Drop(nn::Relu(bn2_.Forward(h, training, lengths)), training);
    TensorF seq = nn::FrameFlattenPacked(h, lengths);
    seq = Drop(audio_gru1_.Forward(seq, lengths), training);
    seq = Drop(audio_gru2_.Forward(seq, lengths), training);
    seq = audio_dense_.Forward(seq);
    std::vector<TensorF> out;
    out.reserve(n);
    int offset = 0;
    for (int b = 0; b < n; ++b) {
      out.push_back(n == 1 ? seq : nn::RowSlice(seq, offset, lengths[b]));
      offset += lengths[b];
    }
    return out;
  }

  // [n, D] for n characters, from tokens or from external [n, 512] rows.
  TensorF TextEncode(const std::vector<int>& tokens, const RowMatrix* rows,
                     bool training) {
    TensorF chars;
    if (rows != nullptr) {
      if (rows->cols() != cfg_.char_embed_dim)
        Fail(ErrorCode::kConfigMismatch,
             "external text features are " + std::to_string(rows->cols()) +
                 " wide, expected " + std::to_string(cfg_.char_embed_dim));
      if (rows->rows() < 1) Fail(ErrorCode::kShapeError, "empty text feature matrix");
      std::vector<float> values(rows->size());
      for (Eigen::Index i = 0; i < rows->size(); ++i)
        values[i] = static_cast<float>(rows->data()[i]);
      chars = TensorF::FromValues({static_cast<int>(rows->rows()), cfg_.char_embed_dim},
                                  std::move(values));
    } else {
      if (tokens.empty()) Fail(ErrorCode::kTokenizeError, "empty token sequence");
      chars = embedding_.Forward(tokens);
    }
    return text_dense_.Forward(Drop(text_gru_.Forward(chars), training));
  }

  TensorF TextEncode(std::string_view text, bool training) {
    return TextEncode(Tokenize(text), nullptr, training);
  }

  // Pre-sigmoid score [1, 1].
  TensorF MatchLogit(const TensorF& audio, const TensorF& text, bool training) {
    if (audio.rank() != 2 || text.rank() != 2 || audio.dim(1) != cfg_.embed_dim ||
        text.dim(1) != cfg_.embed_dim)
      Fail(ErrorCode::kShapeError, "match: audio " + nn::ShapeString(audio.shape()) +
                                       " text " + nn::ShapeString(text.shape()));
    TensorF context = attention_.Forward(text, audio, audio).context;
    TensorF states = nn::GruFinalStates(disc_gru_.Forward(Drop(context, training)));
    return disc_dense_.Forward(states);
  }

  float MatchScore(const TensorF& audio, const TensorF& text) {
    nn::NoGradGuard guard;
    return nn::internal::StableSigmoid(MatchLogit(audio, text, false).item());
  }

  // Logits [B, 1].
  TensorF Forward(const Batch& batch, bool training) {
    std::vector<TensorF> audio = AudioEncode(batch, training);
    std::vector<TensorF> logits;
    logits.reserve(batch.size());
    for (int b = 0; b < batch.size(); ++b)
      logits.push_back(MatchLogit(
          audio[b], TextEncode(batch.tokens[b], batch.text_rows[b], training), training));
    return nn::ConcatRows(logits);
  }

  std::vector<float> Logits(const Batch& batch) {
    nn::NoGradGuard guard;
    return Forward(batch, false).values();
  }

  // Every parameter and buffer in a fixed order.
  template <typename Fn>
  void Visit(Fn&& fn) {
    conv1_.Visit("audio.conv1", fn);
    bn1_.Visit("audio.bn1", fn);
    conv2_.Visit("audio.conv2", fn);
    bn2_.Visit("audio.bn2", fn);
    audio_gru1_.Visit("audio.gru1", fn);
    audio_gru2_.Visit("audio.gru2", fn);
    audio_dense_.Visit("audio.dense", fn);
    embedding_.Visit("text.embedding", fn);
    text_gru_.Visit("text.gru", fn);
    text_dense_.Visit("text.dense", fn);
    attention_.Visit("match.attention", fn);
    disc_gru_.Visit("match.gru", fn);
    disc_dense_.Visit("match.dense", fn);
  }

  std::vector<TensorF> TrainableParameters() {
    std::vector<TensorF> out;
    Visit([&](const std::string&, TensorF& t, bool trainable) {
      if (trainable) out.push_back(t);
    });
    return out;
  }

  // Copies of all parameter and buffer values, in Visit order.
  std::vector<std::vector<float>> Snapshot() {
    std::vector<std::vector<float>> out;
    Visit([&](const std::string&, TensorF& t, bool) { out.push_back(t.values()); });
    return out;
  }

  void Restore(const std::vector<std::vector<float>>& values) {
    size_t i = 0;
    Visit([&](const std::string& name, TensorF& t, bool) {
      if (i >= values.size() || values[i].size() != t.size())
        Fail(ErrorCode::kConfigMismatch, "state does not match parameter " + name);
      t.values() = values[i++];
    });
    if (i != values.size())
      Fail(ErrorCode::kConfigMismatch, "state has extra tensors");
  }

 private:
  TensorF Drop(const TensorF& x, bool training) {
    return nn::Dropout(x, cfg_.dropout, training, dropout_rng_);
  }

  ModelConfig cfg_;
  int feature_dim_ = 0;
  nn::Conv2dLayer<float> conv1_, conv2_;
  nn::BatchNormLayer<float> bn1_, bn2_;
  nn::BiGruLayer<float> audio_gru1_, audio_gru2_, text_gru_, disc_gru_;
  nn::Dense<float> audio_dense_, text_dense_, disc_dense_;
  nn::EmbeddingLayer<float> embedding_;
  nn::CrossAttention<float> attention_;
  Rng dropout_rng_{0};
};

// ---------------------------------------------------------------------------
// Checkpoints
//
// "KWSM", u16 version, u16 reserved, u64 training step,
// u32 config length + config block ("section.key=value" lines),
// u32 tensor count, per tensor: u16 name length + name, u8 rank, u32 dims,
// then every tensor's values as little-endian float32 in index order.

inline constexpr std::uint16_t kKwsmVersion = 1;

struct Checkpoint {
  ModelConfig config;
  std::int64_t step = 0;
  std::vector<std::string> names;
  std::vector<nn::Shape> shapes;
  std::vector<std::vector<float>> values;
};

inline Checkpoint MakeCheckpoint(KwsModel& model, std::int64_t step) {
  Checkpoint ckpt;
  ckpt.config = model.config();
  ckpt.step = step;
  model.Visit([&](const std::string& name, TensorF& t, bool) {
    ckpt.names.push_back(name);
    ckpt.shapes.push_back(t.shape());
    ckpt.values.push_back(t.values());
  });
  return ckpt;
}

inline Bytes EncodeCheckpoint(const Checkpoint& ckpt) {
  Bytes out;
  PutString(out, "KWSM");
  PutLe<std::uint16_t>(out, kKwsmVersion);
  PutLe<std::uint16_t>(out, 0);
  PutLe<std::uint64_t>(out, static_cast<std::uint64_t>(ckpt.step));
  const std::string block = ckpt.config.Serialize();
  PutLe<std::uint32_t>(out, static_cast<std::uint32_t>(block.size()));
  PutString(out, block);
  PutLe<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.names.size()));
  for (size_t i = 0; i < ckpt.names.size(); ++i) {
    PutLe<std::uint16_t>(out, static_cast<std::uint16_t>(ckpt.names[i].size()));
    PutString(out, ckpt.names[i]);
    PutLe<std::uint8_t>(out, static_cast<std::uint8_t>(ckpt.shapes[i].size()));
    for (int d : ckpt.shapes[i]) PutLe<std::uint32_t>(out, static_cast<std::uint32_t>(d));
  }
  for (const auto& values : ckpt.values)
    for (float v : values) PutF32(out, v);
  return out;
}

inline Checkpoint DecodeCheckpoint(const Bytes& bytes, const std::string& name = "checkpoint") {
  ByteReader in(bytes, name);
  if (in.String(4) != "KWSM") Fail(ErrorCode::kFormatError, name + ": bad magic");
  const auto version = in.Le<std::uint16_t>();
  if (version != kKwsmVersion)
    Fail(ErrorCode::kFormatError, name + ": unsupported version " + std::to_string(version));
  in.Le<std::uint16_t>();
  Checkpoint ckpt;
  ckpt.step = static_cast<std::int64_t>(in.Le<std::uint64_t>());
  const auto block_len = in.Le<std::uint32_t>();
  try {
    ckpt.config = ParseConfigBlock(in.String(block_len));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kFormatError) throw;
    Fail(ErrorCode::kFormatError, name + ": bad config block: " + e.message());
  }
  const auto count = in.Le<std::uint32_t>();
  if (count > in.remaining()) Fail(ErrorCode::kFormatError, name + ": bad tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    ckpt.names.push_back(in.String(in.Le<std::uint16_t>()));
    const auto rank = in.Le<std::uint8_t>();
    nn::Shape shape(rank);
    for (int& d : shape) d = static_cast<int>(in.Le<std::uint32_t>());
    ckpt.shapes.push_back(shape);
  }
  for (const auto& shape : ckpt.shapes) {
    const size_t n = nn::NumElements(shape);
    if (n > in.remaining() / 4) Fail(ErrorCode::kFormatError, name + ": truncated tensor data");
    std::vector<float> values(n);
    for (float& v : values) v = in.F32();
    ckpt.values.push_back(std::move(values));
  }
  if (in.remaining() != 0)
    Fail(ErrorCode::kFormatError, name + ": " + std::to_string(in.remaining()) +
                                      " trailing bytes");
  return ckpt;
}

// Copies checkpoint tensors into `model`; names, shapes and config must agree.
inline void LoadCheckpointInto(KwsModel& model, const Checkpoint& ckpt) {
  if (!(ckpt.config == model.config()))
    Fail(ErrorCode::kConfigMismatch, "checkpoint config differs from the model config");
  size_t i = 0;
  model.Visit([&](const std::string& name, TensorF& t, bool) {
    if (i >= ckpt.names.size() || ckpt.names[i] != name || ckpt.shapes[i] != t.shape())
      Fail(ErrorCode::kConfigMismatch,
           "checkpoint tensor " + std::to_string(i) + " does not match " + name + " " +
               nn::ShapeString(t.shape()));
    t.values() = ckpt.values[i];
    ++i;
  });
  if (i != ckpt.names.size())
    Fail(ErrorCode::kConfigMismatch, "checkpoint has extra tensors");
}

inline void SaveCheckpoint(const std::filesystem::path& path, KwsModel& model,
                           std::int64_t step) {
  WriteFileAtomic(path, EncodeCheckpoint(MakeCheckpoint(model, step)));
}

inline Checkpoint ReadCheckpoint(const std::filesystem::path& path) {
  return DecodeCheckpoint(ReadFileBytes(path), path.string());
}

inline KwsModel ModelFromCheckpoint(const Checkpoint& ckpt) {
  KwsModel model(ckpt.config);
  LoadCheckpointInto(model, ckpt);
  return model;
}

// ---------------------------------------------------------------------------
// Training

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0;
  double val_loss = 0;
  double val_auc = 0;
  double val_eer = 0;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  int best_epoch = 0;  // 0: initial weights kept
  std::int64_t step = 0;
};

struct TrainOptions {
  int epochs = 50;
  std::function<void(const EpochRecord&)> on_epoch;
};

// Logits for `subset` of `data` in eval mode.
inline std::vector<float> PredictLogits(KwsModel& model,
                                        const std::vector<PreparedExample>& data,
                                        const std::vector<size_t>& subset = {}) {
  std::vector<float> out;
  for (const Batch& batch : MakeBatches(data, model.config().batch_size, false, 0, subset)) {
    const std::vector<float> logits = model.Logits(batch);
    out.insert(out.end(), logits.begin(), logits.end());
  }
  return out;
}

inline double SigmoidOf(double logit) { return nn::internal::StableSigmoid(logit); }

inline double MeanBce(const std::vector<float>& logits, const std::vector<int>& labels) {
  double total = 0;
  for (size_t i = 0; i < logits.size(); ++i) {
    const double x = logits[i];
    total += std::max(x, 0.0) - x * labels[i] + std::log1p(std::exp(-std::abs(x)));
  }
  return total / static_cast<double>(logits.size());
}

// Mini-batch BCE training with Adam. A stratified, seeded
// val_fraction of the data is held out; the parameters with the lowest
// validation loss are restored at the end (the last epoch's when there is no
// validation split).
inline TrainResult Train(KwsModel& model, const std::vector<PreparedExample>& data,
                         const TrainOptions& options) {
  if (data.empty()) Fail(ErrorCode::kEmptyDataset, "no training examples");
  if (options.epochs < 0) Fail(ErrorCode::kInvalidArgument, "epochs must be >= 0");
  std::vector<int> labels;
  for (const auto& ex : data) labels.push_back(ex.label);
  CheckBothLabels(labels);
  const ModelConfig& cfg = model.config();
  const Split split = StratifiedSplit(labels, cfg.val_fraction, DeriveSeed(cfg.seed, 0x73706c));
  std::vector<int> val_labels;
  for (size_t i : split.validation) val_labels.push_back(labels[i]);
  const bool have_val = !split.validation.empty();
  const bool val_both = have_val && std::count(val_labels.begin(), val_labels.end(), 1) > 0 &&
                        std::count(val_labels.begin(), val_labels.end(), 0) > 0;

  nn::Adam<float> adam(model.TrainableParameters(), {.lr = cfg.lr});
  TrainResult result;
  double best_loss = std::numeric_limits<double>::infinity();
  std::vector<std::vector<float>> best_state;
  for (int epoch = 1; epoch <= options.epochs; ++epoch) {
    double loss_sum = 0;
    for (const Batch& batch :
         MakeBatches(data, cfg.batch_size, true, DeriveSeed(cfg.seed, 1000 + epoch),
                     split.train)) {
      adam.ZeroGrad();
      TensorF loss = nn::SigmoidBce(model.Forward(batch, true), batch.labels);
      loss.Backward();
      adam.Step();
      loss_sum += loss.item() * batch.size();
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(split.train.size());
    rec.val_loss = rec.val_auc = rec.val_eer = std::numeric_limits<double>::quiet_NaN();
    if (have_val) {
      const std::vector<float> logits = PredictLogits(model, data, split.validation);
      rec.val_loss = MeanBce(logits, val_labels);
      if (val_both) {
        ScoredSet set;
        for (size_t i = 0; i < logits.size(); ++i) set.Add(SigmoidOf(logits[i]), val_labels[i]);
        rec.val_auc = Auc(set);
        rec.val_eer = Eer(set);
      }
    }
    result.history.push_back(rec);
    if (!have_val || rec.val_loss < best_loss) {
      best_loss = rec.val_loss;
      best_state = model.Snapshot();
      result.best_epoch = epoch;
      result.step = adam.step();
    }
    if (options.on_epoch) options.on_epoch(rec);
  }
  if (!best_state.empty()) model.Restore(best_state);
  return result;
}

inline std::string FormatHistory(const std::vector<EpochRecord>& history) {
  std::string out = "epoch,train_loss,val_loss,val_auc,val_eer\n";
  char line[160];
  for (const EpochRecord& r : history) {
    std::snprintf(line, sizeof line, "%d,%.9g,%.9g,%.9g,%.9g\n", r.epoch, r.train_loss,
                  r.val_loss, r.val_auc, r.val_eer);
    out += line;
  }
  return out;
}

// Probabilities and labels for every example, in order.
inline ScoredSet ScoreExamples(KwsModel& model, const std::vector<PreparedExample>& data) {
  const std::vector<float> logits = PredictLogits(model, data);
  ScoredSet set;
  for (size_t i = 0; i < data.size(); ++i) set.Add(SigmoidOf(logits[i]), data[i].label);
  return set;
}

}  // namespace kwsdc

#endif  // KWSDC_MODEL_H_
