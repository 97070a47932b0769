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

// Raw item ID -> embedding-table rows.
//
// Three lookup kinds share one interface: individual embeddings (one row per
// training-vocabulary ID plus a reserved row for unseen IDs), random hashing,
// and Semantic-ID tokens. Semantic-ID tokens come from a parameterization of
// the code sequence followed by a per-position block fit into the table.

#include <atomic>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "semid/semantic_id.hpp"

namespace semid::tokenization {

enum class Variant { Trigram, Fourgram, AllBigrams, PrefixNgram };

std::string variant_name(Variant v);
Variant parse_variant(std::string_view name);

struct Parameterization {
  Variant variant = Variant::PrefixNgram;
  std::size_t n = 3;           // prefix depth, PrefixNgram only
  std::uint32_t codebook_size = 0;
  std::uint64_t table_size = 0;

  // Indices emitted for an id of length `levels`.
  std::size_t output_count(std::size_t levels) const;
  // Throws ConfigError if the variant cannot be applied to `levels` codes.
  void validate(std::size_t levels) const;
  std::string describe() const;
};

// Unfitted token indices, before table fitting.
std::vector<std::uint64_t> parameterize(const SemanticId& id, const Parameterization& p);

// Position g lands in [g*B, (g+1)*B) with B = floor(H/G), via index mod B.
std::vector<std::uint64_t> fit_to_table(std::span<const std::uint64_t> indices, std::uint64_t H,
                                        std::size_t G);

std::uint64_t random_hash(std::uint64_t raw_id, std::uint64_t H, std::uint64_t seed);

// Dense rows for raw IDs seen in training; row size() is reserved for the rest.
class Vocabulary {
 public:
  Vocabulary() = default;
  // Rows are assigned in order of first appearance.
  explicit Vocabulary(std::span<const std::uint64_t> training_ids);

  bool contains(std::uint64_t raw_id) const { return rows_.count(raw_id) != 0; }
  std::size_t row(std::uint64_t raw_id) const;
  std::size_t size() const { return ids_.size(); }
  std::size_t reserved_row() const { return ids_.size(); }
  std::size_t table_size() const { return ids_.size() + 1; }
  const std::vector<std::uint64_t>& ids() const { return ids_; }

 private:
  std::unordered_map<std::uint64_t, std::size_t> rows_;
  std::vector<std::uint64_t> ids_;
};

enum class LookupKind { IndividualEmbedding, RandomHash, SemanticId };

std::string lookup_kind_name(LookupKind k);
LookupKind parse_lookup_kind(std::string_view name);

class LookupFn {
 public:
  static LookupFn individual(std::shared_ptr<const Vocabulary> vocab);
  static LookupFn hashed(std::uint64_t H, std::uint64_t seed);
  static LookupFn semantic(std::shared_ptr<const SemanticIdTable> table, Parameterization p);

  LookupKind kind() const { return kind_; }
  std::uint64_t table_size() const { return table_size_; }
  std::size_t output_count() const { return output_count_; }

  // Appends this ID's output_count() rows to `out`.
  void rows(std::uint64_t raw_id, std::vector<std::size_t>& out) const;
  std::vector<std::size_t> rows(std::uint64_t raw_id) const;

  // SemID lookups that fell back to the all-zeros id.
  std::size_t missing_count() const { return missing_ ? missing_->load() : 0; }

  const Vocabulary* vocabulary() const { return vocab_.get(); }
  const SemanticIdTable* semid_table() const { return semids_.get(); }
  const Parameterization& parameterization() const { return param_; }

 private:
  LookupFn() = default;

  LookupKind kind_ = LookupKind::RandomHash;
  std::uint64_t table_size_ = 0;
  std::size_t output_count_ = 1;
  std::uint64_t hash_seed_ = 0;
  std::shared_ptr<const Vocabulary> vocab_;
  std::shared_ptr<const SemanticIdTable> semids_;
  Parameterization param_;
  std::shared_ptr<std::atomic<std::size_t>> missing_;
};

}  // namespace semid::tokenization
