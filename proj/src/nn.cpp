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

#include "semid/nn.hpp"

#include <cmath>

#include "semid/errors.hpp"

namespace semid::tensor {

Mlp::Mlp(ParameterSet& params, const std::string& prefix, std::vector<std::size_t> widths,
         Rng& rng)
    : widths_(std::move(widths)) {
  if (widths_.size() < 2) throw ConfigError("mlp: need at least input and output widths");
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    const std::size_t in = widths_[l], out = widths_[l + 1];
    Tensor w({in, out}, 0.0);
    fill_uniform(rng, w.data(), std::sqrt(6.0 / static_cast<double>(in + out)));
    weights_.push_back(&params.add(prefix + ".w" + std::to_string(l), std::move(w)));
    biases_.push_back(&params.add(prefix + ".b" + std::to_string(l), Tensor({out}, 0.0)));
  }
}

Var Mlp::forward(Tape& tape, Var x) const {
  Var h = x;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    h = add_row(matmul(h, tape.param(*weights_[l])), tape.param(*biases_[l]));
    if (l + 1 < weights_.size()) h = relu(h);
  }
  return h;
}

std::vector<Parameter*> Mlp::parameters() const {
  std::vector<Parameter*> out;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    out.push_back(weights_[l]);
    out.push_back(biases_[l]);
  }
  return out;
}

}  // namespace semid::tensor
