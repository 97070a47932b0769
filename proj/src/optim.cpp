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

#include "semid/optim.hpp"

#include <cmath>

namespace semid::tensor {

Optimizer::Optimizer(std::vector<Parameter*> params, OptimizerOptions options)
    : params_(std::move(params)), options_(options) {
  if (options_.kind == OptimizerKind::Adam) {
    for (auto* p : params_) {
      moments_.push_back({Tensor(p->value.shape(), 0.0), Tensor(p->value.shape(), 0.0)});
    }
  }
}

void Optimizer::update_span(std::span<double> value, std::span<const double> grad,
                            std::span<double> m, std::span<double> v, double bias1,
                            double bias2) const {
  const double lr = options_.learning_rate;
  if (options_.kind == OptimizerKind::Sgd) {
    for (std::size_t i = 0; i < value.size(); ++i) value[i] -= lr * grad[i];
    return;
  }
  const double b1 = options_.beta1, b2 = options_.beta2;
  for (std::size_t i = 0; i < value.size(); ++i) {
    m[i] = b1 * m[i] + (1.0 - b1) * grad[i];
    v[i] = b2 * v[i] + (1.0 - b2) * grad[i] * grad[i];
    const double mh = m[i] / bias1;
    const double vh = v[i] / bias2;
    value[i] -= lr * mh / (std::sqrt(vh) + options_.epsilon);
  }
}

void Optimizer::step() {
  ++steps_;
  const bool adam = options_.kind == OptimizerKind::Adam;
  const double bias1 = adam ? 1.0 - std::pow(options_.beta1, static_cast<double>(steps_)) : 1.0;
  const double bias2 = adam ? 1.0 - std::pow(options_.beta2, static_cast<double>(steps_)) : 1.0;
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Parameter& p = *params_[k];
    std::span<double> m, v;
    if (p.sparse) {
      for (auto r : p.touched_rows) {
        if (adam) {
          m = moments_[k].m.row(r);
          v = moments_[k].v.row(r);
        }
        update_span(p.value.row(r), p.grad.row(r), m, v, bias1, bias2);
      }
    } else {
      if (adam) {
        m = moments_[k].m.data();
        v = moments_[k].v.data();
      }
      update_span(p.value.data(), p.grad.data(), m, v, bias1, bias2);
    }
    p.zero_grad();
  }
}

void Optimizer::zero_grad() {
  for (auto* p : params_) p->zero_grad();
}

}  // namespace semid::tensor
