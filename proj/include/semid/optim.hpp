// Copyright 2026 The SemID Lab Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <vector>

#include "semid/tensor.hpp"

namespace semid::tensor {

enum class OptimizerKind { Sgd, Adam };

struct OptimizerOptions {
  OptimizerKind kind = OptimizerKind::Adam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Applies one update from the accumulated gradients and zeroes them.
// Row-sparse parameters are updated lazily: only rows touched since the last
// step move, and only their Adam moments advance.
class Optimizer {
 public:
  Optimizer(std::vector<Parameter*> params, OptimizerOptions options);

  void step();
  void zero_grad();
  const OptimizerOptions& options() const { return options_; }
  long steps() const { return steps_; }

 private:
  struct Moments {
    Tensor m;
    Tensor v;
  };
  void update_span(std::span<double> value, std::span<const double> grad, std::span<double> m,
                   std::span<double> v, double bias1, double bias2) const;

  std::vector<Parameter*> params_;
  std::vector<Moments> moments_;
  OptimizerOptions options_;
  long steps_ = 0;
};

}  // namespace semid::tensor
