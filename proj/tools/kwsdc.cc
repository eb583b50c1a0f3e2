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

// kwsdc command-line tool. Exit status: 0 on success, 1 when a command fails
// at run time, 2 on a usage error.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <memory>
#include <functional>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "kwsdc/ablation.h"
#include "kwsdc/binary_io.h"
#include "kwsdc/config.h"
#include "kwsdc/data.h"
#include "kwsdc/error.h"
#include "kwsdc/feature_io.h"
#include "kwsdc/features.h"
#include "kwsdc/metrics.h"
#include "kwsdc/model.h"
#include "kwsdc/synth.h"
#include "kwsdc/wav.h"

namespace fs = std::filesystem;

namespace kwsdc::cli {
namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void SetUpLogging() {
  auto logger = spdlog::stderr_color_mt("kwsdc");
  logger->set_pattern("[%H:%M:%S.%e] [%^%l%$] %v");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::info);
  if (const char* env = std::getenv("KWSDC_LOG_LEVEL")) {
    const auto level = spdlog::level::from_str(env);
    if (level == spdlog::level::off && std::string(env) != "off")
      spdlog::warn("ignoring KWSDC_LOG_LEVEL={}", env);
    else
      spdlog::set_level(level);
  }
}

std::string ReadText(const fs::path& path) {
  const Bytes bytes = ReadFileBytes(path);
  return std::string(reinterpret_cast<const char*>(bytes.data()), bytes.size());
}

// Configuration shared by every command that builds features or models:
// defaults, then --config, then --set, then the dedicated flags.
struct ConfigFlags {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::string> feature;
  std::optional<std::string> sdc;
  std::optional<double> lr;
  std::optional<int> batch_size;
  std::optional<std::uint64_t> seed;

  void AddTo(CLI::App* app, bool model_flags) {
    app->add_option("--config", config_path, "INI configuration file")
        ->check(CLI::ExistingFile);
    app->add_option("--set", overrides, "Override one key, e.g. model.dropout=0.1")
        ->type_name("SECTION.KEY=VALUE");
    std::vector<std::string> names;
    for (FeatureKind k : kAllFeatureKinds) names.emplace_back(FeatureKindName(k));
    app->add_option("--feature", feature, "Feature kind")->check(CLI::IsMember(names));
    app->add_option("--sdc", sdc, "SDC parameters N-d-p-k")->type_name("N-d-p-k");
    if (model_flags) {
      app->add_option("--lr", lr, "Adam learning rate");
      app->add_option("--batch-size", batch_size, "Mini-batch size");
      app->add_option("--seed", seed, "Random seed");
    }
  }

  ModelConfig Resolve() const {
    ModelConfig cfg;
    try {
      if (!config_path.empty()) ApplyIniConfig(cfg, ReadText(config_path));
      for (const std::string& kv : overrides) {
        const size_t eq = kv.find('=');
        if (eq == std::string::npos)
          throw UsageError("--set expects SECTION.KEY=VALUE, got '" + kv + "'");
        SetConfigValue(cfg, kv.substr(0, eq), kv.substr(eq + 1));
      }
      if (feature) SetConfigValue(cfg, "model.feature", *feature);
      if (sdc) {
        const SdcConfig parsed = ParseSdcConfig(*sdc);
        cfg.sdc = parsed;
      }
      if (lr) cfg.lr = *lr;
      if (batch_size) cfg.batch_size = *batch_size;
      if (seed) cfg.seed = *seed;
      cfg.Validate();
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kIoError) throw;
      throw UsageError(e.what());
    }
    return cfg;
  }
};

void LogConfig(const ModelConfig& cfg) {
  std::string flat;
  for (const auto& [key, value] : ConfigEntries(cfg)) flat += " " + key + "=" + value;
  spdlog::info("config{}", flat);
}

// ---------------------------------------------------------------------------

struct ExtractArgs {
  std::string input;
  std::string output;
  ConfigFlags config;
};

fs::path FeaturePathFor(const fs::path& wav, const fs::path& out_dir) {
  return out_dir / wav.filename().replace_extension(".kwsf");
}

int RunExtract(const ExtractArgs& args) {
  const ModelConfig cfg = args.config.Resolve();
  LogConfig(cfg);
  std::vector<std::pair<fs::path, fs::path>> jobs;
  if (fs::is_directory(args.input)) {
    std::vector<fs::path> wavs;
    for (const auto& entry : fs::directory_iterator(args.input))
      if (entry.is_regular_file() && entry.path().extension() == ".wav")
        wavs.push_back(entry.path());
    std::sort(wavs.begin(), wavs.end());
    if (wavs.empty()) Fail(ErrorCode::kIoError, "no .wav files in " + args.input);
    std::error_code ec;
    fs::create_directories(args.output, ec);
    if (!fs::is_directory(args.output))
      Fail(ErrorCode::kIoError, "cannot create directory " + args.output);
    for (const fs::path& wav : wavs) jobs.emplace_back(wav, FeaturePathFor(wav, args.output));
  } else {
    const fs::path out = fs::is_directory(args.output)
                             ? FeaturePathFor(args.input, args.output)
                             : fs::path(args.output);
    jobs.emplace_back(args.input, out);
  }
  std::optional<FrontEnd> front_end;
  for (const auto& [wav_path, out_path] : jobs) {
    const Waveform wave = ReadWav(wav_path);
    if (!front_end || front_end->sample_rate() != wave.sample_rate)
      front_end.emplace(cfg.frontend, wave.sample_rate);
    const FeatureMatrix feat = front_end->Extract(cfg.feature, wave, cfg.sdc);
    WriteFeatures(out_path, feat);
    spdlog::info("{} -> {} ({} x {})", wav_path.string(), out_path.string(),
                 feat.data.rows(), feat.data.cols());
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::vector<std::string> keywords;
  int per_keyword = 25;
  double negative_ratio = 1.0;
  std::uint64_t seed = 0;
  std::string output;
};

int RunSynth(const SynthArgs& args) {
  const std::set<std::string> distinct(args.keywords.begin(), args.keywords.end());
  if (distinct.size() < 2 || distinct.size() != args.keywords.size())
    throw UsageError("--keywords needs at least two distinct keywords");
  if (args.per_keyword < 1) throw UsageError("--per-keyword must be >= 1");
  SynthOptions opt{args.keywords, args.per_keyword, args.negative_ratio, args.seed};
  spdlog::info("synth keywords={} per_keyword={} negative_ratio={} seed={}",
               fmt::join(args.keywords, ","), args.per_keyword, args.negative_ratio,
               args.seed);
  const Manifest manifest = SynthDataset(opt, args.output);
  const fs::path path = fs::path(args.output) / "manifest.jsonl";
  spdlog::info("wrote {} examples", manifest.size());
  std::cout << path.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string manifest;
  std::string output;
  std::string history;
  int epochs = 50;
  ConfigFlags config;
};

std::vector<PreparedExample> Prepare(const Manifest& manifest, const ModelConfig& cfg) {
  const FrontEnd front_end(cfg.frontend);
  return PrepareExamples(manifest, front_end, cfg.feature, cfg.sdc);
}

std::string Fixed(double v) {
  return std::isnan(v) ? std::string("n/a") : fmt::format("{:.4f}", v);
}

int RunTrain(const TrainArgs& args) {
  if (args.epochs < 0) throw UsageError("--epochs must be >= 0");
  const ModelConfig cfg = args.config.Resolve();
  LogConfig(cfg);
  spdlog::info("config train.epochs={}", args.epochs);
  const Manifest manifest = LoadManifest(args.manifest);
  const auto data = Prepare(manifest, cfg);
  spdlog::info("{} training examples from {}", data.size(), args.manifest);
  KwsModel model(cfg);
  TrainOptions options;
  options.epochs = args.epochs;
  options.on_epoch = [](const EpochRecord& r) {
    spdlog::info("epoch {} train_loss={:.5f} val_loss={:.5f} val_auc={} val_eer={}",
                 r.epoch, r.train_loss, r.val_loss, Fixed(r.val_auc), Fixed(r.val_eer));
  };
  const TrainResult result = Train(model, data, options);
  SaveCheckpoint(args.output, model, result.step);
  const fs::path history =
      args.history.empty() ? fs::path(args.output + ".history.csv") : fs::path(args.history);
  WriteFileAtomic(history, FormatHistory(result.history));
  spdlog::info("checkpoint {} (epoch {}), history {}", args.output, result.best_epoch,
               history.string());
  if (result.best_epoch > 0) {
    std::cout << "best validation AUC: " << Fixed(result.history[result.best_epoch - 1].val_auc)
              << " (epoch " << result.best_epoch << ")\n";
  } else {
    std::cout << "best validation AUC: n/a (no training epochs)\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string manifest;
  std::string checkpoint;
  std::string output;
};

void PrintMetrics(const ScoredSet& set) {
  std::cout << fmt::format("AUC {:.6f}\nEER {:.6f}\nF1@0.5 {:.6f}\n", Auc(set), Eer(set),
                           F1At(set, 0.5));
}

int RunEval(const EvalArgs& args) {
  const Checkpoint ckpt = ReadCheckpoint(args.checkpoint);
  KwsModel model = ModelFromCheckpoint(ckpt);
  LogConfig(model.config());
  const Manifest manifest = LoadManifest(args.manifest);
  const ScoredSet scored = ScoreExamples(model, Prepare(manifest, model.config()));
  if (!args.output.empty()) {
    WriteFileAtomic(args.output, FormatScores(scored));
    spdlog::info("wrote {} scores to {}", scored.size(), args.output);
  }
  PrintMetrics(scored);
  return 0;
}

int RunMetrics(const std::string& scores_path) {
  PrintMetrics(ParseScores(ReadText(scores_path)));
  return 0;
}

// ---------------------------------------------------------------------------

struct AblateArgs {
  std::vector<std::string> manifests;
  std::vector<std::string> sweeps;
  std::string output;
  int epochs = 50;
  ConfigFlags config;
};

int RunAblate(const AblateArgs& args) {
  std::vector<Sweep> sweeps;
  try {
    for (const std::string& s : args.sweeps) sweeps.push_back(ParseSweep(s));
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  if (args.epochs < 0) throw UsageError("--epochs must be >= 0");
  ModelConfig cfg = args.config.Resolve();
  if (cfg.feature != FeatureKind::kSdc) throw UsageError("ablate requires model.feature=sdc");
  LogConfig(cfg);
  spdlog::info("config ablate.epochs={}", args.epochs);
  const Manifest train = LoadManifest(args.manifests.at(0));
  const Manifest eval = LoadManifest(args.manifests.at(1));
  AblationOptions options;
  options.epochs = args.epochs;
  options.on_cell = [](const AblationRow& r) {
    spdlog::info("d={} k={} auc={:.4f} eer={:.4f}", r.d, r.k, r.auc, r.eer);
  };
  const auto rows = AblationGrid(train, eval, sweeps, cfg, options);
  const std::string csv = FormatAblation(rows);
  if (args.output.empty()) {
    std::cout << csv;
  } else {
    WriteFileAtomic(args.output, csv);
    spdlog::info("wrote {} rows to {}", rows.size(), args.output);
  }
  return 0;
}

int RunConfig(const ConfigFlags& flags) {
  std::cout << ToIni(flags.Resolve());
  return 0;
}

// ---------------------------------------------------------------------------

int Main(int argc, char** argv) {
  CLI::App app{"Keyword spotting with shifted delta coefficient features"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "kwsdc 0.1.0");
  std::function<int()> run;

  ExtractArgs extract;
  auto* cmd = app.add_subcommand("extract", "Extract features from a wav file or directory");
  cmd->add_option("input", extract.input, "Input .wav file or directory")->required();
  cmd->add_option("-o,--output", extract.output, "Output .kwsf file or directory")
      ->required();
  extract.config.AddTo(cmd, false);
  cmd->callback([&] { run = [&] { return RunExtract(extract); }; });

  SynthArgs synth;
  cmd = app.add_subcommand("synth", "Generate a synthetic keyword dataset");
  cmd->add_option("--keywords", synth.keywords, "Keywords")
      ->required()
      ->delimiter(',');
  cmd->add_option("--per-keyword", synth.per_keyword, "Positive pairs per keyword");
  cmd->add_option("--negative-ratio", synth.negative_ratio, "Negative pairs per positive");
  cmd->add_option("--seed", synth.seed, "Random seed");
  cmd->add_option("-o,--output", synth.output, "Output directory")->required();
  cmd->callback([&] { run = [&] { return RunSynth(synth); }; });

  TrainArgs train;
  cmd = app.add_subcommand("train", "Train a model");
  cmd->add_option("--manifest", train.manifest, "Training manifest")->required();
  cmd->add_option("--epochs", train.epochs, "Training epochs");
  cmd->add_option("-o,--output", train.output, "Checkpoint path")->required();
  cmd->add_option("--history", train.history, "History CSV (default <output>.history.csv)");
  train.config.AddTo(cmd, true);
  cmd->callback([&] { run = [&] { return RunTrain(train); }; });

  EvalArgs eval;
  cmd = app.add_subcommand("eval", "Score a manifest with a checkpoint");
  cmd->add_option("--manifest", eval.manifest, "Evaluation manifest")->required();
  cmd->add_option("--ckpt", eval.checkpoint, "Checkpoint")->required();
  cmd->add_option("-o,--output", eval.output, "Scores CSV (score,label)");
  cmd->callback([&] { run = [&] { return RunEval(eval); }; });

  std::string scores_path;
  cmd = app.add_subcommand("metrics", "AUC, EER and F1@0.5 of a scores CSV");
  cmd->add_option("scores", scores_path, "Scores CSV (score,label)")->required();
  cmd->callback([&] { run = [&] { return RunMetrics(scores_path); }; });

  AblateArgs ablate;
  cmd = app.add_subcommand("ablate", "Sweep SDC d or k and report eval AUC/EER");
  cmd->add_option("--manifests", ablate.manifests, "Training and evaluation manifests")
      ->required()
      ->expected(2);
  cmd->add_option("--sweep", ablate.sweeps, "d=LO..HI or k=LO..HI (repeatable)")
      ->required();
  cmd->add_option("--epochs", ablate.epochs, "Training epochs per cell");
  cmd->add_option("-o,--output", ablate.output, "Output CSV (default: stdout)");
  ablate.config.AddTo(cmd, true);
  cmd->callback([&] { run = [&] { return RunAblate(ablate); }; });

  ConfigFlags show;
  cmd = app.add_subcommand("config", "Print the resolved configuration as INI");
  show.AddTo(cmd, true);
  cmd->callback([&] { run = [&] { return RunConfig(show); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  SetUpLogging();
  try {
    return run();
  } catch (const UsageError& e) {
    spdlog::error("{}", e.what());
    return kExitUsage;
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return kExitRuntime;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitRuntime;
  }
}

}  // namespace
}  // namespace kwsdc::cli

int main(int argc, char** argv) { return kwsdc::cli::Main(argc, argv); }
