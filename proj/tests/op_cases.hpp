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

// Random-input gradient cases, one per differentiable op. Test-only.

#include <functional>
#include <vector>

#include "grad_check.hpp"
#include "semid/random.hpp"
#include "semid/tensor.hpp"

namespace semid::testing {

using namespace semid::tensor;

inline Tensor random_matrix(Rng& rng, std::size_t m, std::size_t n, double sd = 1.0) {
  Tensor t({m, n}, 0.0);
  fill_normal(rng, t.data(), sd);
  return t;
}

// Projects a tensor-valued op onto a scalar with fixed random weights so
// every output entry contributes to the checked gradient.
inline Var project(Tape& tape, Var out, std::uint64_t seed) {
  Rng rng(seed);
  Tensor w(out.value().shape(), 0.0);
  fill_normal(rng, w.data(), 1.0);
  return sum(mul(out, tape.constant(std::move(w))));
}


// Every registered op against central differences on random 3x4 inputs.
struct OpCase {
  const char* name;
  std::function<std::vector<Tensor>(Rng&)> inputs;
  semid::testing::ScalarFn fn;
};

inline std::vector<OpCase> op_cases() {
  auto m34 = [](Rng& r) { return random_matrix(r, 3, 4); };
  return {
      {"matmul", [=](Rng& r) { return std::vector{m34(r), random_matrix(r, 4, 3)}; },
       [](Tape& t, const std::vector<Var>& v) { return project(t, matmul(v[0], v[1]), 1); }},
      {"bmm", [=](Rng& r) { return std::vector{random_matrix(r, 6, 4), random_matrix(r, 8, 3)}; },
       [](Tape& t, const std::vector<Var>& v) { return project(t, bmm(v[0], v[1], 2), 2); }},
      {"bmm_nt",
       [=](Rng& r) { return std::vector{random_matrix(r, 6, 4), random_matrix(r, 4, 4)}; },
       [](Tape& t, const std::vector<Var>& v) { return project(t, bmm_nt(v[0], v[1], 2), 3); }},
      {"transpose", [=](Rng& r) { return std::vector{m34(r)}; },
       [](Tape& t, const std::vector<Var>& v) { return project(t, transpose(v[0]), 4); }},
      {"add", [=](Rng& r) { return std::vector{m34(r), m34(r)}; },
       [](Tape& t, const std::vector<Var>& v) { return project(t, add(v[0], v[1]), 5); }},
      {"sub", [=](Rng& r) { return std::vector{m34(r), m34(r)}; },
       [](Tape& t, const std::vector<Var>& v) { return project(t, sub(v[0], v[1]), 6); }},
      {"mul", [=](Rng& r) { return std::vector{m34(r), m34(r)}; },
       [](Tape& t, const std::vector<Var>& v) { return project(t, mul(v[0], v[1]), 7); }},
      {"scale", [=](Rng& r) { return std::vector{m34(r)}; },
       [](Tape& t, const std::vector<Var>& v) { return project(t, scale(v[0], -1.7), 8); }},
      {"add_row", [=](Rng& r) { return std::vector{m34(r), random_matrix(r, 1, 4)}; },
       [](Tape& t, const std::vector<Var>& v) { return project(t, add_row(v[0], v[1]), 9); }},
      {"tile_rows", [=](Rng& r) { return std::vector{m34(r)}; },
       [](Tape& t, const std::vector<Var>& v) { return project(t, tile_rows(v[0], 3), 10); }},
      {"relu", [=](Rng& r) { return std::vector{m34(r)}; },
       [](Tape& t, const std::vector<Var>& v) { return project(t, relu(v[0]), 11); }},
      {"sigmoid", [=](Rng& r) { return std::vector{m34(r)}; },
       [](Tape& t, const std::vector<Var>& v) { return project(t, sigmoid(v[0]), 12); }},
      {"softmax_rows", [=](Rng& r) { return std::vector{m34(r)}; },
       [](Tape& t, const std::vector<Var>& v) { return project(t, softmax_rows(v[0]), 13); }},
      {"layernorm",
       [=](Rng& r) { return std::vector{m34(r), random_matrix(r, 1, 4), random_matrix(r, 1, 4)}; },
       [](Tape& t, const std::vector<Var>& v) {
         return project(t, layernorm(v[0], v[1], v[2]), 14);
       }},
      {"gather_sum", [=](Rng& r) { return std::vector{m34(r)}; },
       [](Tape& t, const std::vector<Var>& v) {
         std::vector<std::size_t> rows{0, 2, 2};
         return project(t, gather_sum(v[0], rows), 15);
       }},
      {"embedding_bag", [=](Rng& r) { return std::vector{m34(r)}; },
       [](Tape& t, const std::vector<Var>& v) {
         Bags bags;
         std::vector<std::size_t> b0{1, 2}, b1{}, b2{0, 0, 1};
         bags.add(b0);
         bags.add(b1);
         bags.add(b2);
         return project(t, embedding_bag(v[0], bags), 16);
       }},
      {"concat_rows", [=](Rng& r) { return std::vector{m34(r), random_matrix(r, 2, 4)}; },
       [](Tape& t, const std::vector<Var>& v) {
         std::vector<Var> parts{v[0], v[1]};
         return project(t, concat_rows(parts), 17);
       }},
      {"concat_cols", [=](Rng& r) { return std::vector{m34(r), random_matrix(r, 3, 2)}; },
       [](Tape& t, const std::vector<Var>& v) {
         std::vector<Var> parts{v[0], v[1]};
         return project(t, concat_cols(parts), 18);
       }},
      {"concat_blocks", [=](Rng& r) { return std::vector{random_matrix(r, 2, 4), m34(r)}; },
       [](Tape& t, const std::vector<Var>& v) {
         std::vector<Var> parts{v[0], v[1]};
         return project(t, concat_blocks(parts, 1), 22);
       }},
      {"concat_blocks_batched",
       [=](Rng& r) { return std::vector{random_matrix(r, 2, 3), random_matrix(r, 4, 3)}; },
       [](Tape& t, const std::vector<Var>& v) {
         std::vector<Var> parts{v[0], v[1]};
         return project(t, concat_blocks(parts, 2), 23);
       }},
      {"reshape", [=](Rng& r) { return std::vector{m34(r)}; },
       [](Tape& t, const std::vector<Var>& v) { return project(t, reshape(v[0], {2, 6}), 19); }},
      {"slice_rows", [=](Rng& r) { return std::vector{m34(r)}; },
       [](Tape& t, const std::vector<Var>& v) { return project(t, slice_rows(v[0], 1, 2), 20); }},
      {"mean", [=](Rng& r) { return std::vector{m34(r)}; },
       [](Tape&, const std::vector<Var>& v) { return mean(mul(v[0], v[0])); }},
      {"pairwise_dots", [=](Rng& r) { return std::vector{random_matrix(r, 6, 4)}; },
       [](Tape& t, const std::vector<Var>& v) { return project(t, pairwise_dots(v[0], 3), 21); }},
      {"bce_with_logits", [=](Rng& r) { return std::vector{m34(r)}; },
       [](Tape&, const std::vector<Var>& v) {
         std::vector<double> y{1, 0, 0, 1, 1, 1, 0, 0, 1, 0, 1, 0};
         return bce_with_logits(v[0], y);
       }},
  };
}

}  // namespace semid::testing
