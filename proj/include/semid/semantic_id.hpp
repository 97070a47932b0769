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

#include <compare>
#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "semid/io.hpp"

namespace semid {

// Coarse-to-fine codes (c1..cL), each in [0, K).
struct SemanticId {
  std::vector<std::uint32_t> codes;

  std::size_t levels() const { return codes.size(); }
  std::string to_string() const;
  static SemanticId parse(std::string_view text);
  // True when the first `depth` codes agree.
  bool shares_prefix(const SemanticId& other, std::size_t depth) const;

  friend auto operator<=>(const SemanticId&, const SemanticId&) = default;
};

// Raw item ID -> Semantic ID. Persisted as text:
//   # semid-lab semid-table v1 config_hash=... seed=...
//   # levels=<L> codebook_size=<K>
//   <raw id>\t<c1>,<c2>,...,<cL>        (rows sorted by raw id)
class SemanticIdTable {
 public:
  SemanticIdTable() = default;
  SemanticIdTable(std::size_t levels, std::uint32_t codebook_size);

  void set(std::uint64_t raw_id, SemanticId id);
  const SemanticId* find(std::uint64_t raw_id) const;
  std::size_t size() const { return entries_.size(); }
  std::size_t levels() const { return levels_; }
  std::uint32_t codebook_size() const { return codebook_size_; }
  const std::unordered_map<std::uint64_t, SemanticId>& entries() const { return entries_; }

  void save(const std::filesystem::path& path, const io::FileHeader& header) const;
  static SemanticIdTable load(const std::filesystem::path& path, io::FileHeader* header = nullptr);

 private:
  std::size_t levels_ = 0;
  std::uint32_t codebook_size_ = 0;
  std::unordered_map<std::uint64_t, SemanticId> entries_;
};

}  // namespace semid
