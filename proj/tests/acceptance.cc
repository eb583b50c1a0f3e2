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

// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails. Criterion numbers given on the command
// line restrict the run to those criteria.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <limits>
#include <numbers>
#include <set>
#include <string>
#include <vector>

#include "kwsdc/features.h"
#include "kwsdc/metrics.h"
#include "kwsdc/model.h"
#include "kwsdc/nn/layers.h"
#include "kwsdc/nn/ops.h"
#include "kwsdc/random.h"
#include "kwsdc/synth.h"
#include "test_util.h"

namespace kwsdc {
namespace {

namespace fs = std::filesystem;
using testing_util::Slurp;
using testing_util::TempDir;

// Pinned tolerances and budgets.
constexpr int kSdcTrials = 1000;
constexpr double kSdcBudgetSeconds = 30;
constexpr double kGradRelTol = 1e-4;
constexpr double kGradBudgetSeconds = 120;
constexpr double kMetricTol = 1e-9;
constexpr int kMetricSets = 100;
constexpr int kOneSecondFrames = 98;
constexpr double kRastaTol = 1e-3;
constexpr double kDctTol = 1e-9;
constexpr int kE2eEpochs = 40;
constexpr double kMinAuc = 0.95;
constexpr double kMaxEer = 0.10;
constexpr double kSdcVsMelMargin = 0.02;
constexpr double kE2eBudgetSeconds = 600;
constexpr int kDeterminismEpochs = 4;

double Seconds(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// ---------------------------------------------------------------------------
// 1: SDC against a triple-loop oracle

RowMatrix SdcOracle(const RowMatrix& c, int d, int p, int k) {
  const int rows = static_cast<int>(c.rows()), n = static_cast<int>(c.cols());
  auto clamp = [rows](int t) { return t < 0 ? 0 : (t >= rows ? rows - 1 : t); };
  RowMatrix out(rows, n * (k + 1));
  for (int t = 0; t < rows; ++t) {
    for (int j = 0; j < n; ++j) out(t, j) = c(t, j);
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < n; ++j)
        out(t, n * (i + 1) + j) = c(clamp(t + i * p + d), j) - c(clamp(t + i * p - d), j);
  }
  return out;
}

bool CriterionSdc(std::string& detail) {
  const auto start = std::chrono::steady_clock::now();
  Rng rng(101);
  int mismatches = 0, checked = 0;
  for (int trial = 0; trial < kSdcTrials; ++trial) {
    for (int d = 1; d <= 4; ++d)
      for (int k = 5; k <= 10; ++k) {
        const int n = trial % 2 == 0 ? 8 : 40;
        const int p = 3;
        const int min_t = k * p + 2 * d + 1;
        const int t = min_t + static_cast<int>(rng.Below(60 - min_t + 1));
        RowMatrix c(t, n);
        for (int r = 0; r < t; ++r)
          for (int j = 0; j < n; ++j) c(r, j) = rng.Uniform(-5.0, 5.0);
        const SdcConfig cfg{n, d, p, k};
        if (SdcStack(c, cfg) != SdcOracle(c, d, p, k)) ++mismatches;
        ++checked;
      }
  }
  const double elapsed = Seconds(start);
  char buf[160];
  std::snprintf(buf, sizeof buf, "%d/%d configurations exact, %.1f s (budget %.0f s)",
                checked - mismatches, checked, elapsed, kSdcBudgetSeconds);
  detail = buf;
  return mismatches == 0 && elapsed < kSdcBudgetSeconds;
}

// ---------------------------------------------------------------------------
// 2: analytic gradients against central differences

using T64 = nn::Tensor<double>;

T64 RandomTensor(const nn::Shape& shape, Rng& rng, double scale = 1.0) {
  std::vector<double> v(nn::NumElements(shape));
  for (double& x : v) x = scale * rng.Uniform(-1.0, 1.0);
  return T64::FromValues(shape, std::move(v), true);
}

// Largest relative error over the inputs of <f(), random seed>.
double MaxGradError(const std::function<T64()>& f, std::vector<T64> inputs,
                    std::uint64_t seed_value) {
  Rng rng(seed_value);
  const T64 probe = f();
  std::vector<double> seed(probe.size());
  for (double& s : seed) s = rng.Uniform(-1.0, 1.0);
  for (auto& in : inputs) in.ZeroGrad();
  f().Backward(seed);
  auto objective = [&] {
    const T64 out = f();
    double acc = 0;
    for (size_t i = 0; i < out.size(); ++i) acc += out.at(i) * seed[i];
    return acc;
  };
  const double h = 1e-5;
  double worst = 0;
  for (auto& in : inputs) {
    std::vector<double> analytic(in.grad().begin(), in.grad().end());
    if (analytic.empty()) analytic.assign(in.size(), 0.0);
    double diff2 = 0, a2 = 0, n2 = 0;
    for (size_t i = 0; i < in.size(); ++i) {
      const double saved = in.at(i);
      in.at(i) = saved + h;
      const double up = objective();
      in.at(i) = saved - h;
      const double down = objective();
      in.at(i) = saved;
      const double numeric = (up - down) / (2 * h);
      diff2 += (numeric - analytic[i]) * (numeric - analytic[i]);
      a2 += analytic[i] * analytic[i];
      n2 += numeric * numeric;
    }
    // An identically zero gradient (a key bias under softmax) is judged on
    // the absolute difference.
    const double norm = std::sqrt(a2) + std::sqrt(n2);
    worst = std::max(worst, norm < 1e-6 ? std::sqrt(diff2) : std::sqrt(diff2) / norm);
  }
  return worst;
}

template <typename Layer>
std::vector<T64> Params(Layer& layer) {
  std::vector<T64> out;
  layer.Visit("p", [&](const std::string&, T64& t, bool trainable) {
    if (trainable) out.push_back(t);
  });
  return out;
}

template <typename Layer>
void RandomizeParams(Layer& layer, Rng& rng) {
  layer.Visit("p", [&](const std::string&, T64& t, bool trainable) {
    if (!trainable) return;
    for (size_t i = 0; i < t.size(); ++i) t.at(i) = rng.Uniform(-0.8, 0.8);
  });
}

bool CriterionGradients(std::string& detail) {
  const auto start = std::chrono::steady_clock::now();
  std::vector<std::pair<std::string, double>> worst;
  auto record = [&](const std::string& op, double err) {
    for (auto& [name, w] : worst)
      if (name == op) {
        w = std::max(w, err);
        return;
      }
    worst.emplace_back(op, err);
  };
  Rng rng(202);

  for (auto [n, in, out] : {std::tuple{1, 3, 2}, {4, 5, 3}, {7, 2, 6}}) {
    nn::Dense<double> layer(in, out, rng);
    RandomizeParams(layer, rng);
    T64 x = RandomTensor({n, in}, rng);
    std::vector<T64> inputs = Params(layer);
    inputs.insert(inputs.begin(), x);
    record("dense", MaxGradError([&] { return layer.Forward(x); }, inputs, n * 100 + in));
  }

  for (auto [b, cin, cout, t, f, k, s] :
       {std::tuple{1, 1, 2, 5, 4, 3, 1}, {2, 2, 3, 6, 3, 3, 2}, {1, 3, 2, 7, 5, 5, 3}}) {
    nn::Conv2dLayer<double> conv(cin, cout, k, s, rng);
    RandomizeParams(conv, rng);
    T64 x = RandomTensor({b, cin, t, f}, rng);
    record("conv2d", MaxGradError([&] { return conv.Forward(x); }, {x, conv.weight, conv.bias},
                                  b * 10 + t));
  }

  struct BnCase {
    nn::Shape shape;
    std::vector<int> lengths;
  };
  for (const BnCase& c : {BnCase{{2, 2, 3, 2}, {}}, BnCase{{3, 1, 4, 3}, {4, 2, 3}},
                          BnCase{{1, 3, 5, 2}, {}}}) {
    nn::BatchNormLayer<double> bn(c.shape[1]);
    RandomizeParams(bn, rng);
    T64 x = RandomTensor(c.shape, rng);
    record("batch_norm", MaxGradError([&] { return bn.Forward(x, true, c.lengths); },
                                      {x, bn.gamma, bn.beta}, c.shape[0] * 7 + c.shape[2]));
  }

  struct GruCase {
    int in, hidden;
    std::vector<int> segments;
  };
  for (const GruCase& c : {GruCase{2, 3, {4}}, GruCase{3, 2, {3, 1, 3}}, GruCase{4, 4, {2, 5}}}) {
    nn::BiGruLayer<double> gru(c.in, c.hidden, rng);
    RandomizeParams(gru, rng);
    int rows = 0;
    for (int s : c.segments) rows += s;
    T64 x = RandomTensor({rows, c.in}, rng);
    std::vector<T64> inputs = Params(gru);
    inputs.insert(inputs.begin(), x);
    record("bigru", MaxGradError([&] { return gru.Forward(x, c.segments); }, inputs,
                                 rows * 3 + c.hidden));
  }

  for (auto [n, m, dim, adim, key_len] :
       {std::tuple{1, 3, 4, 2, -1}, {3, 5, 4, 3, 3}, {4, 2, 6, 5, -1}}) {
    nn::CrossAttention<double> att(dim, adim, rng);
    RandomizeParams(att, rng);
    T64 q = RandomTensor({n, dim}, rng);
    T64 kv = RandomTensor({m, dim}, rng);
    std::vector<T64> inputs = Params(att);
    inputs.insert(inputs.begin(), {q, kv});
    record("cross_attention",
           MaxGradError([&] { return att.Forward(q, kv, kv, key_len).context; }, inputs,
                        n * 13 + m));
  }

  for (int n : {1, 4, 9}) {
    T64 x = RandomTensor({n, 1}, rng, 4.0);
    std::vector<int> targets(n);
    for (int i = 0; i < n; ++i) targets[i] = (i * 7 + n) % 3 == 0 ? 1 : 0;
    record("sigmoid_bce", MaxGradError([&] { return nn::SigmoidBce(x, targets); }, {x}, n));
  }

  const double elapsed = Seconds(start);
  bool ok = elapsed < kGradBudgetSeconds;
  char buf[96];
  for (const auto& [name, err] : worst) {
    ok = ok && err < kGradRelTol;
    std::snprintf(buf, sizeof buf, "%s %.1e, ", name.c_str(), err);
    detail += buf;
  }
  std::snprintf(buf, sizeof buf, "tol %.0e, %.1f s (budget %.0f s)", kGradRelTol, elapsed,
                kGradBudgetSeconds);
  detail += buf;
  return ok;
}

// ---------------------------------------------------------------------------
// 3: AUC and EER against brute-force definitions

double PairwiseAuc(const ScoredSet& s) {
  double wins = 0, pairs = 0;
  for (size_t i = 0; i < s.size(); ++i)
    for (size_t j = 0; j < s.size(); ++j) {
      if (s.labels[i] != 1 || s.labels[j] != 0) continue;
      pairs += 1;
      if (s.scores[i] > s.scores[j]) wins += 1;
      if (s.scores[i] == s.scores[j]) wins += 0.5;
    }
  return wins / pairs;
}

// FAR/FRR at every distinct threshold from the strict end, with linear
// interpolation where FAR - FRR changes sign.
double BruteForceEer(const ScoredSet& s) {
  std::set<double, std::greater<>> thresholds(s.scores.begin(), s.scores.end());
  std::vector<double> cand{std::numeric_limits<double>::infinity()};
  cand.insert(cand.end(), thresholds.begin(), thresholds.end());
  auto rates = [&](double thr) {
    double fa = 0, fr = 0, p = 0, n = 0;
    for (size_t i = 0; i < s.size(); ++i) {
      const bool accept = s.scores[i] >= thr;
      if (s.labels[i] == 1) {
        ++p;
        if (!accept) ++fr;
      } else {
        ++n;
        if (accept) ++fa;
      }
    }
    return std::pair{fa / n, fr / p};
  };
  auto [far0, frr0] = rates(cand[0]);
  for (size_t i = 1; i < cand.size(); ++i) {
    auto [far1, frr1] = rates(cand[i]);
    const double d0 = far0 - frr0, d1 = far1 - frr1;
    if (d1 == 0) return far1;
    if (d0 < 0 && d1 > 0) {
      const double t = -d0 / (d1 - d0);
      return far0 + t * (far1 - far0);
    }
    far0 = far1;
    frr0 = frr1;
  }
  return std::numeric_limits<double>::quiet_NaN();
}

bool CriterionMetrics(std::string& detail) {
  Rng rng(303);
  double worst_auc = 0, worst_eer = 0;
  for (int i = 0; i < kMetricSets; ++i) {
    const int n = 2 + static_cast<int>(rng.Below(199));
    // Every third set draws from a coarse grid so ties are common.
    const bool coarse = i % 3 == 0;
    ScoredSet s;
    for (int j = 0; j < n; ++j) {
      const int label = j < 2 ? j : static_cast<int>(rng.Below(2));
      double score = rng.Uniform(0.0, 1.0) + 0.3 * label;
      if (coarse) score = std::round(score * 5) / 5;
      s.Add(score, label);
    }
    worst_auc = std::max(worst_auc, std::abs(Auc(s) - PairwiseAuc(s)));
    const double eer = BruteForceEer(s);
    worst_eer = std::isnan(eer) ? std::numeric_limits<double>::infinity()
                                : std::max(worst_eer, std::abs(Eer(s) - eer));
  }
  ScoredSet separated, ties;
  for (int j = 0; j < 20; ++j) {
    separated.Add(j < 10 ? 0.9 + j * 0.001 : 0.1 - j * 0.001, j < 10 ? 1 : 0);
    ties.Add(0.5, j % 2);
  }
  const bool sep_ok = Auc(separated) == 1.0 && Eer(separated) == 0.0;
  const bool ties_ok = Auc(ties) == 0.5;
  char buf[200];
  std::snprintf(buf, sizeof buf,
                "%d sets, max |dAUC| %.1e, max |dEER| %.1e (tol %.0e); separated %s; ties %s",
                kMetricSets, worst_auc, worst_eer, kMetricTol, sep_ok ? "1/0" : "wrong",
                ties_ok ? "0.5" : "wrong");
  detail = buf;
  return worst_auc <= kMetricTol && worst_eer <= kMetricTol && sep_ok && ties_ok;
}

// ---------------------------------------------------------------------------
// 4: front-end framing, dimensions, RASTA and DCT

Waveform TestSignal(double seconds, std::uint64_t seed) {
  Rng rng(seed);
  const int n = static_cast<int>(seconds * 16000);
  Waveform w{std::vector<double>(n), 16000};
  for (int i = 0; i < n; ++i) {
    const double t = i / 16000.0;
    const double f = (i / 1600) % 2 == 0 ? 440.0 : 1250.0;
    w.samples[i] = 0.4 * std::sin(2 * std::numbers::pi * f * t) + 0.02 * rng.Normal();
  }
  return w;
}

bool CriterionFrontEnd(std::string& detail) {
  FrontEnd fe;
  const Waveform one_second = TestSignal(1.0, 404);
  bool ok = true;
  char buf[200];

  const int frames = static_cast<int>(fe.LogMel(one_second).rows());
  ok = ok && frames == kOneSecondFrames;
  std::snprintf(buf, sizeof buf, "1 s -> %d frames; dims", frames);
  detail = buf;

  const std::vector<std::pair<FeatureKind, int>> dims = {
      {FeatureKind::kMelSpec, 40}, {FeatureKind::kMfcc, 13},     {FeatureKind::kMfccDeltas, 39},
      {FeatureKind::kPlp, 13},     {FeatureKind::kRastaPlp, 13}, {FeatureKind::kSdc, 360}};
  for (auto [kind, want] : dims) {
    const FeatureMatrix m = fe.Extract(kind, one_second, SdcConfig{});
    const bool match = m.dim() == want && fe.OutputDim(kind) == want && m.frames() == frames;
    ok = ok && match;
    std::snprintf(buf, sizeof buf, " %s=%d%s", std::string(FeatureKindName(kind)).c_str(),
                  static_cast<int>(m.dim()), match ? "" : "(!)");
    detail += buf;
  }

  // Constant trajectories, and a step whose transient must have died out.
  const RastaFilter rasta(0.94);
  double rasta_worst = 0;
  for (double level : {-20.0, -3.0, 0.5, 12.0}) {
    const std::vector<double> y = rasta.Apply(std::vector<double>(120, level));
    for (size_t t = 50; t < y.size(); ++t) rasta_worst = std::max(rasta_worst, std::abs(y[t]));
  }
  std::vector<double> step(300, 0.0);
  std::fill(step.begin() + 10, step.end(), 1.0);
  const std::vector<double> ys = rasta.Apply(step);
  for (size_t t = 160; t < ys.size(); ++t) rasta_worst = std::max(rasta_worst, std::abs(ys[t]));
  ok = ok && rasta_worst < kRastaTol;

  const RowMatrix logmel = fe.LogMel(one_second);
  const FeatureMatrix mfcc = fe.Mfcc(one_second, false);
  double dct_worst = 0;
  for (Eigen::Index t = 0; t < logmel.rows(); ++t)
    for (int k = 0; k < 13; ++k) {
      double acc = 0;
      for (int n = 0; n < 40; ++n)
        acc += logmel(t, n) * std::cos(std::numbers::pi * k * (2 * n + 1) / 80.0);
      acc *= k == 0 ? std::sqrt(1.0 / 40) : std::sqrt(2.0 / 40);
      dct_worst = std::max(dct_worst, std::abs(mfcc.data(t, k) - acc));
    }
  ok = ok && dct_worst < kDctTol;
  std::snprintf(buf, sizeof buf, "; RASTA steady-state max %.1e (tol %.0e); DCT max err %.1e",
                rasta_worst, kRastaTol, dct_worst);
  detail += buf;
  return ok;
}

// ---------------------------------------------------------------------------
// 5 and 6: training on synthetic keyword data

struct E2eData {
  E2eData() {
    SynthOptions opt{{"hey", "go", "stop", "left"}, 25, 1.0, 7};
    train = SynthDataset(opt, dir / "train");
    opt.per_keyword = 13;
    opt.seed = 8;
    const Manifest full = SynthDataset(opt, dir / "eval");
    for (size_t i = 0; i < 50; ++i) eval.push_back(full[i]);
    for (size_t i = 52; i < 102; ++i) eval.push_back(full[i]);
  }

  TempDir dir;
  Manifest train;
  Manifest eval;  // 50 positives, 50 negatives
};

const E2eData& SharedData() {
  static const E2eData data;
  return data;
}

ModelConfig DeskConfig(FeatureKind kind) {
  ModelConfig cfg;
  cfg.feature = kind;
  cfg.lr = 1e-3;
  cfg.batch_size = 16;
  cfg.seed = 1;
  return cfg;
}

struct RunOutcome {
  double auc = 0, eer = 1, seconds = 0;
  int best_epoch = 0;
};

RunOutcome TrainAndScore(FeatureKind kind, int epochs) {
  const auto start = std::chrono::steady_clock::now();
  const ModelConfig cfg = DeskConfig(kind);
  const FrontEnd fe(cfg.frontend);
  const E2eData& data = SharedData();
  KwsModel model(cfg);
  TrainOptions opt;
  opt.epochs = epochs;
  const TrainResult r = Train(model, PrepareExamples(data.train, fe, kind, cfg.sdc), opt);
  const ScoredSet s = ScoreExamples(model, PrepareExamples(data.eval, fe, kind, cfg.sdc));
  return {Auc(s), Eer(s), Seconds(start), r.best_epoch};
}

bool CriterionEndToEnd(std::string& detail) {
  const RunOutcome sdc = TrainAndScore(FeatureKind::kSdc, kE2eEpochs);
  const RunOutcome mel = TrainAndScore(FeatureKind::kMelSpec, kE2eEpochs);
  char buf[320];
  std::snprintf(buf, sizeof buf,
                "%d epochs: sdc AUC %.4f EER %.4f (best epoch %d, %.0f s); mel AUC %.4f EER "
                "%.4f (%.0f s); bars AUC>=%.2f EER<=%.2f sdc>=mel-%.2f time<%.0f s",
                kE2eEpochs, sdc.auc, sdc.eer, sdc.best_epoch, sdc.seconds, mel.auc, mel.eer,
                mel.seconds, kMinAuc, kMaxEer, kSdcVsMelMargin, kE2eBudgetSeconds);
  detail = buf;
  return sdc.auc >= kMinAuc && sdc.eer <= kMaxEer && sdc.auc >= mel.auc - kSdcVsMelMargin &&
         sdc.seconds < kE2eBudgetSeconds;
}

bool CriterionDeterminism(std::string& detail) {
  const ModelConfig cfg = DeskConfig(FeatureKind::kSdc);
  const FrontEnd fe(cfg.frontend);
  const std::vector<PreparedExample> train =
      PrepareExamples(SharedData().train, fe, cfg.feature, cfg.sdc);
  std::string history[2];
  Bytes weights[2];
  TrainOptions opt;
  opt.epochs = kDeterminismEpochs;
  for (int run = 0; run < 2; ++run) {
    KwsModel model(cfg);
    const TrainResult r = Train(model, train, opt);
    history[run] = FormatHistory(r.history);
    weights[run] = EncodeCheckpoint(MakeCheckpoint(model, r.step));
  }
  const bool same_history = history[0] == history[1];
  const bool same_weights = weights[0] == weights[1];

  const Checkpoint decoded = DecodeCheckpoint(weights[0]);
  KwsModel restored(cfg);
  LoadCheckpointInto(restored, decoded);
  const bool round_trip = EncodeCheckpoint(MakeCheckpoint(restored, decoded.step)) == weights[0];

  KwsModel fresh = ModelFromCheckpoint(decoded);
  KwsModel again = ModelFromCheckpoint(decoded);
  const std::vector<PreparedExample> probe(train.begin(), train.begin() + 8);
  const bool same_logits = PredictLogits(fresh, probe) == PredictLogits(again, probe);

  char buf[240];
  std::snprintf(buf, sizeof buf,
                "two %d-epoch runs: history %s, weights %s; checkpoint round trip %s; "
                "restored logits %s",
                kDeterminismEpochs, same_history ? "byte-identical" : "DIFFER",
                same_weights ? "bit-identical" : "DIFFER", round_trip ? "bit-exact" : "DIFFERS",
                same_logits ? "bit-identical" : "DIFFER");
  detail = buf;
  return same_history && same_weights && round_trip && same_logits;
}

// ---------------------------------------------------------------------------
// 7: ablation through the command-line tool

int RunCli(const std::string& args, const fs::path& out) {
  const std::string cmd = "'" + std::string(KWSDC_CLI_PATH) + "' " + args + " >'" +
                          out.string() + "' 2>/dev/null";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

bool CriterionAblation(std::string& detail) {
  TempDir dir;
  const fs::path log = dir / "log.txt";
  const auto synth = [&](const std::string& name, int seed) {
    return RunCli("synth --keywords hey,go,stop --per-keyword 2 --seed " +
                      std::to_string(seed) + " -o '" + (dir / name).string() + "'",
                  log) == 0;
  };
  if (!synth("train", 11) || !synth("eval", 12)) {
    detail = "synth subcommand failed";
    return false;
  }
  const std::string base = "ablate --manifests '" + (dir / "train/manifest.jsonl").string() +
                           "' '" + (dir / "eval/manifest.jsonl").string() + "' --epochs 1 ";
  bool ok = true;
  for (const auto& [sweep, param, lo, hi] :
       {std::tuple{"d=1..4", 'd', 1, 4}, std::tuple{"k=5..10", 'k', 5, 10}}) {
    const fs::path csv = dir / (std::string(1, param) + ".csv");
    const int code = RunCli(base + "--sweep " + sweep + " -o '" + csv.string() + "'", log);
    const std::string text = Slurp(csv);
    std::vector<std::string> lines;
    size_t pos = 0;
    while (pos < text.size()) {
      const size_t nl = text.find('\n', pos);
      lines.push_back(text.substr(pos, nl - pos));
      pos = nl == std::string::npos ? text.size() : nl + 1;
    }
    bool shape = code == 0 && !lines.empty() && lines[0] == "d,k,auc,eer" &&
                 static_cast<int>(lines.size()) == hi - lo + 2;
    for (int v = lo; shape && v <= hi; ++v) {
      const int d = param == 'd' ? v : 1, k = param == 'k' ? v : 8;
      const std::string prefix = std::to_string(d) + "," + std::to_string(k) + ",";
      shape = lines[v - lo + 1].rfind(prefix, 0) == 0;
    }
    ok = ok && shape;
    detail += std::string(detail.empty() ? "" : "; ") + sweep + " -> " +
              std::to_string(lines.empty() ? 0 : lines.size() - 1) + " rows" +
              (shape ? "" : " (bad shape)");
    for (size_t i = 1; i < lines.size(); ++i) std::printf("    ablation %s\n", lines[i].c_str());
  }
  return ok;
}

struct Criterion {
  int id;
  const char* name;
  bool (*run)(std::string&);
};

}  // namespace
}  // namespace kwsdc

int main(int argc, char** argv) {
  using kwsdc::Criterion;
  const Criterion criteria[] = {
      {1, "SDC matches clamped oracle", kwsdc::CriterionSdc},
      {2, "autodiff gradients", kwsdc::CriterionGradients},
      {3, "AUC/EER oracles", kwsdc::CriterionMetrics},
      {4, "front-end shapes, RASTA, DCT", kwsdc::CriterionFrontEnd},
      {5, "end-to-end keyword detection", kwsdc::CriterionEndToEnd},
      {6, "determinism and checkpoints", kwsdc::CriterionDeterminism},
      {7, "ablation via CLI", kwsdc::CriterionAblation},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  int failures = 0;
  for (const Criterion& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    std::string detail;
    bool pass = false;
    try {
      pass = c.run(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    if (!pass) ++failures;
    std::printf("%s criterion %d (%s): %s\n", pass ? "PASS" : "FAIL", c.id, c.name,
                detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
