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

// Central finite-difference oracle for tape gradients. Test-only.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "semid/tensor.hpp"


namespace semid::testing {

using tensor::Tape;
using tensor::Tensor;
using tensor::Var;

using ScalarFn = std::function<Var(Tape&, const std::vector<Var>&)>;

struct GradCheckResult {
  double worst_excess = 0.0;  // max(|ad - fd| - allowed), <= 0 means pass
  double worst_abs = 0.0;
  bool pass() const { return worst_excess <= 0.0; }
};

inline double evaluate(const ScalarFn& fn, const std::vector<Tensor>& inputs) {
  Tape tape;
  std::vector<Var> vars;
  for (const auto& t : inputs) vars.push_back(tape.constant(t));
  return fn(tape, vars).value().item();
}

// Compares reverse-mode gradients of every input against central differences.
// An entry passes when |ad - fd| <= max(rel * max(|ad|, |fd|), floor).
inline GradCheckResult check_gradients(const ScalarFn& fn, const std::vector<Tensor>& inputs,
                                       double h = 1e-5, double rel = 1e-4,
                                       double floor = 1e-7) {
  Tape tape;
  std::vector<Var> vars;
  for (const auto& t : inputs) vars.push_back(tape.leaf(t));
  tape.backward(fn(tape, vars));

  GradCheckResult res;
  res.worst_excess = -1.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Tensor ad(inputs[k].shape(), 0.0);
    if (tape.requires_grad(vars[k])) {
      try {
        ad = tape.grad(vars[k]);
      } catch (...) {
      }
    }
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      auto plus = inputs, minus = inputs;
      plus[k][i] += h;
      minus[k][i] -= h;
      const double fd = (evaluate(fn, plus) - evaluate(fn, minus)) / (2.0 * h);
      const double diff = std::abs(ad[i] - fd);
      const double allowed = std::max(rel * std::max(std::abs(ad[i]), std::abs(fd)), floor);
      res.worst_excess = std::max(res.worst_excess, diff - allowed);
      res.worst_abs = std::max(res.worst_abs, diff);
    }
  }
  return res;
}

// Same check over every entry of every parameter in `params`; `loss` builds
// the scalar on a fresh tape.
inline GradCheckResult check_parameter_gradients(const std::function<Var(Tape&)>& loss,
                                                 tensor::ParameterSet& params, double h = 1e-5,
                                                 double rel = 1e-4, double floor = 1e-7) {
  params.zero_grad();
  {
    Tape tape;
    tape.backward(loss(tape));
  }
  std::vector<Tensor> ad;
  for (auto* p : params.all()) ad.push_back(p->grad);
  params.zero_grad();
  auto value = [&] {
    Tape tape;
    return loss(tape).value().item();
  };
  GradCheckResult res;
  res.worst_excess = -1.0;
  auto all = params.all();
  for (std::size_t k = 0; k < all.size(); ++k) {
    auto& v = all[k]->value;
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double orig = v[i];
      v[i] = orig + h;
      const double up = value();
      v[i] = orig - h;
      const double down = value();
      v[i] = orig;
      const double fd = (up - down) / (2.0 * h);
      const double diff = std::abs(ad[k][i] - fd);
      const double allowed = std::max(rel * std::max(std::abs(ad[k][i]), std::abs(fd)), floor);
      res.worst_excess = std::max(res.worst_excess, diff - allowed);
      res.worst_abs = std::max(res.worst_abs, diff);
    }
  }
  return res;
}

}  // namespace semid::testing
