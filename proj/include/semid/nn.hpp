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

#include <string>
#include <vector>

#include "semid/random.hpp"
#include "semid/tensor.hpp"

namespace semid::tensor {

// Fully connected stack; relu between layers, identity after the last one.
// widths = {in, hidden..., out}.
class Mlp {
 public:
  Mlp() = default;
  Mlp(ParameterSet& params, const std::string& prefix, std::vector<std::size_t> widths, Rng& rng);

  Var forward(Tape& tape, Var x) const;
  std::size_t input_dim() const { return widths_.front(); }
  std::size_t output_dim() const { return widths_.back(); }
  const std::vector<std::size_t>& widths() const { return widths_; }
  std::vector<Parameter*> parameters() const;

 private:
  std::vector<std::size_t> widths_;
  std::vector<Parameter*> weights_;
  std::vector<Parameter*> biases_;
};

}  // namespace semid::tensor
