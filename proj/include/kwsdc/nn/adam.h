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

#ifndef KWSDC_NN_ADAM_H_
#define KWSDC_NN_ADAM_H_

#include <cmath>
#include <cstdint>
#include <vector>

#include "kwsdc/nn/tensor.h"

namespace kwsdc::nn {

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam over a fixed, ordered parameter list. Moments are kept
// in double regardless of the parameter precision.
template <typename T>
class Adam {
 public:
  Adam(std::vector<Tensor<T>> params, AdamOptions options)
      : params_(std::move(params)), options_(options) {
    if (!(options_.lr > 0))
      Fail(ErrorCode::kInvalidArgument, "Adam learning rate must be positive");
    for (const auto& p : params_) {
      first_.emplace_back(p.size(), 0.0);
      second_.emplace_back(p.size(), 0.0);
    }
  }

  void ZeroGrad() {
    for (auto& p : params_) p.mutable_grad().assign(p.size(), T(0));
  }

  // Applies one update from the gradients currently stored on the
  // parameters. Parameters that never received a gradient see g = 0.
  void Step() {
    ++step_;
    const double c1 = 1.0 - std::pow(options_.beta1, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(options_.beta2, static_cast<double>(step_));
    for (size_t i = 0; i < params_.size(); ++i) {
      auto& values = params_[i].values();
      const auto grad = params_[i].grad();
      if (!grad.empty() && grad.size() != values.size())
        Fail(ErrorCode::kShapeError, "Adam: gradient size mismatch");
      for (size_t j = 0; j < values.size(); ++j) {
        const double g = grad.empty() ? 0.0 : static_cast<double>(grad[j]);
        double& m = first_[i][j];
        double& v = second_[i][j];
        m = options_.beta1 * m + (1.0 - options_.beta1) * g;
        v = options_.beta2 * v + (1.0 - options_.beta2) * g * g;
        const double update =
            options_.lr * (m / c1) / (std::sqrt(v / c2) + options_.eps);
        values[j] = static_cast<T>(values[j] - update);
      }
    }
  }

  std::int64_t step() const { return step_; }
  const std::vector<std::vector<double>>& first_moments() const { return first_; }
  const std::vector<std::vector<double>>& second_moments() const { return second_; }

 private:
  std::vector<Tensor<T>> params_;
  AdamOptions options_;
  std::vector<std::vector<double>> first_;
  std::vector<std::vector<double>> second_;
  std::int64_t step_ = 0;
};

}  // namespace kwsdc::nn

#endif  // KWSDC_NN_ADAM_H_
