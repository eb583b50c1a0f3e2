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

// Verification metrics over (score, label) sets: rank-based AUC, EER with
// linear interpolation between ROC operating points, and F1 at a threshold.
//
// Convention: a trial is accepted when score >= threshold.

#ifndef KWSDC_METRICS_H_
#define KWSDC_METRICS_H_

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "kwsdc/error.h"

namespace kwsdc {

struct ScoredSet {
  std::vector<double> scores;
  std::vector<int> labels;  // 0 or 1, parallel to scores

  size_t size() const { return scores.size(); }

  void Add(double score, int label) {
    scores.push_back(score);
    labels.push_back(label);
  }

  size_t NumPositive() const {
    return static_cast<size_t>(std::count(labels.begin(), labels.end(), 1));
  }
  size_t NumNegative() const { return size() - NumPositive(); }

  void Validate(bool need_both_classes) const {
    if (scores.size() != labels.size())
      Fail(ErrorCode::kInvalidArgument, "scores and labels differ in length");
    for (int label : labels)
      if (label != 0 && label != 1)
        Fail(ErrorCode::kInvalidArgument,
             "label " + std::to_string(label) + " is not 0 or 1");
    if (need_both_classes && (NumPositive() == 0 || NumNegative() == 0))
      Fail(ErrorCode::kDegenerateLabels,
           "both positive and negative trials are required");
  }
};

struct RocPoint {
  double fpr;
  double tpr;
  double threshold;
};

// Operating points from the strictest threshold (+inf: nothing accepted) to
// the most lenient (min score: everything accepted). One point per distinct
// score.
inline std::vector<RocPoint> RocCurve(const ScoredSet& set) {
  set.Validate(true);
  std::vector<size_t> order(set.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return set.scores[a] > set.scores[b];
  });
  const double num_pos = static_cast<double>(set.NumPositive());
  const double num_neg = static_cast<double>(set.NumNegative());
  std::vector<RocPoint> roc;
  roc.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  size_t tp = 0, fp = 0;
  for (size_t i = 0; i < order.size();) {
    const double threshold = set.scores[order[i]];
    while (i < order.size() && set.scores[order[i]] == threshold) {
      if (set.labels[order[i]] == 1)
        ++tp;
      else
        ++fp;
      ++i;
    }
    roc.push_back({fp / num_neg, tp / num_pos, threshold});
  }
  return roc;
}

// Mann-Whitney statistic with ties counted as one half, via average ranks.
inline double Auc(const ScoredSet& set) {
  set.Validate(true);
  const size_t n = set.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return set.scores[a] < set.scores[b];
  });
  double positive_rank_sum = 0.0;
  for (size_t i = 0; i < n;) {
    size_t j = i;
    while (j < n && set.scores[order[j]] == set.scores[order[i]]) ++j;
    const double average_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (size_t m = i; m < j; ++m)
      if (set.labels[order[m]] == 1) positive_rank_sum += average_rank;
    i = j;
  }
  const double num_pos = static_cast<double>(set.NumPositive());
  const double num_neg = static_cast<double>(set.NumNegative());
  return (positive_rank_sum - num_pos * (num_pos + 1.0) / 2.0) /
         (num_pos * num_neg);
}

// Equal error rate. False-accept rate FAR = FPR and false-reject rate
// FRR = 1 - TPR are evaluated at every operating point; at the first pair of
// adjacent points where FAR - FRR changes sign the crossing is linearly
// interpolated.
inline double Eer(const ScoredSet& set) {
  const std::vector<RocPoint> roc = RocCurve(set);
  // Walk from the most lenient point (FAR=1, FRR=0) towards +inf.
  double prev_far = roc.back().fpr, prev_frr = 1.0 - roc.back().tpr;
  if (prev_far - prev_frr <= 0.0) return prev_far;
  for (size_t i = roc.size() - 1; i-- > 0;) {
    const double far = roc[i].fpr, frr = 1.0 - roc[i].tpr;
    const double diff = far - frr;
    if (diff <= 0.0) {
      const double prev_diff = prev_far - prev_frr;
      const double alpha = prev_diff / (prev_diff - diff);
      return prev_far + alpha * (far - prev_far);
    }
    prev_far = far;
    prev_frr = frr;
  }
  return prev_far;  // unreachable: the +inf point has FAR - FRR = -1
}

inline double F1At(const ScoredSet& set, double threshold) {
  set.Validate(false);
  if (set.size() == 0)
    Fail(ErrorCode::kInvalidArgument, "F1 of an empty set");
  double tp = 0, fp = 0, fn = 0;
  for (size_t i = 0; i < set.size(); ++i) {
    const bool accept = set.scores[i] >= threshold;
    if (accept && set.labels[i] == 1) ++tp;
    if (accept && set.labels[i] == 0) ++fp;
    if (!accept && set.labels[i] == 1) ++fn;
  }
  const double precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
  const double recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

// "score,label" per line, no header.
inline std::string FormatScores(const ScoredSet& set) {
  std::ostringstream os;
  os.precision(9);
  for (size_t i = 0; i < set.size(); ++i)
    os << set.scores[i] << ',' << set.labels[i] << '\n';
  return os.str();
}

inline ScoredSet ParseScores(const std::string& text) {
  ScoredSet set;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const size_t comma = line.find(',');
    try {
      if (comma == std::string::npos) throw std::invalid_argument("comma");
      size_t used = 0;
      const double score = std::stod(line.substr(0, comma), &used);
      const std::string label_text = line.substr(comma + 1);
      if (label_text != "0" && label_text != "1")
        throw std::invalid_argument("label");
      set.Add(score, label_text == "1" ? 1 : 0);
    } catch (const std::exception&) {
      Fail(ErrorCode::kFormatError,
           "scores line " + std::to_string(line_no) + ": expected score,label");
    }
  }
  return set;
}

}  // namespace kwsdc

#endif  // KWSDC_METRICS_H_
