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

// Versioned binary container for named tensors.
//
// Layout (all integers little-endian):
//   magic     8 bytes  "SIDCKPT\0"
//   version   u32      currently 1
//   n_meta    u32
//   n_meta x { u32 key_len, key bytes, u32 value_len, value bytes }
//   n_tensor  u32
//   n_tensor x { u32 name_len, name bytes, u32 rank, rank x u64 dim,
//                prod(dim) x f64 (IEEE-754 binary64, little-endian) }

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "semid/tensor.hpp"

namespace semid::tensor {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::map<std::string, std::string> metadata;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

Checkpoint snapshot(const ParameterSet& params, std::map<std::string, std::string> metadata = {});
// Copies values into existing parameters; names and shapes must match.
void restore(ParameterSet& params, const Checkpoint& ckpt);

}  // namespace semid::tensor
