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

#include "semid/tokenization.hpp"

#include "semid/errors.hpp"
#include "semid/log.hpp"
#include "semid/random.hpp"

namespace semid::tokenization {
namespace {

std::uint64_t checked_mul(std::uint64_t a, std::uint64_t b) {
  std::uint64_t out;
  if (__builtin_mul_overflow(a, b, &out)) throw ConfigError("token index overflows 64 bits");
  return out;
}

std::uint64_t checked_add(std::uint64_t a, std::uint64_t b) {
  std::uint64_t out;
  if (__builtin_add_overflow(a, b, &out)) throw ConfigError("token index overflows 64 bits");
  return out;
}

// Base-K number c[begin] c[begin+1] ... c[begin+len-1], most significant first.
std::uint64_t base_k(const SemanticId& id, std::size_t begin, std::size_t len, std::uint64_t K) {
  std::uint64_t v = 0;
  for (std::size_t t = begin; t < begin + len; ++t) v = checked_add(checked_mul(v, K), id.codes[t]);
  return v;
}

constexpr std::size_t kMissingWarnings = 10;

}  // namespace

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::Trigram: return "trigram";
    case Variant::Fourgram: return "fourgram";
    case Variant::AllBigrams: return "all-bigrams";
    case Variant::PrefixNgram: return "prefix-ngram";
  }
  return "?";
}

Variant parse_variant(std::string_view name) {
  if (name == "trigram") return Variant::Trigram;
  if (name == "fourgram") return Variant::Fourgram;
  if (name == "all-bigrams") return Variant::AllBigrams;
  if (name == "prefix-ngram") return Variant::PrefixNgram;
  throw ConfigError("unknown token parameterization '" + std::string(name) + "'");
}

std::size_t Parameterization::output_count(std::size_t levels) const {
  switch (variant) {
    case Variant::Trigram:
    case Variant::Fourgram: return 1;
    case Variant::AllBigrams: return levels - 1;
    case Variant::PrefixNgram: return n;
  }
  return 0;
}

void Parameterization::validate(std::size_t levels) const {
  if (codebook_size < 2) throw ConfigError("parameterization: K must be >= 2");
  switch (variant) {
    case Variant::Trigram:
      if (levels < 3) throw ConfigError("trigram needs L >= 3");
      break;
    case Variant::Fourgram:
      if (levels < 4) throw ConfigError("fourgram needs L >= 4");
      break;
    case Variant::AllBigrams:
      if (levels < 2) throw ConfigError("all-bigrams needs L >= 2");
      break;
    case Variant::PrefixNgram:
      if (n < 1 || n > levels) {
        throw ConfigError("prefix-ngram depth " + std::to_string(n) + " not in [1, L=" +
                          std::to_string(levels) + "]");
      }
      break;
  }
  if (table_size != 0 && table_size < output_count(levels)) {
    throw ConfigError("table size smaller than token count");
  }
}

std::string Parameterization::describe() const {
  std::string s = variant_name(variant);
  if (variant == Variant::PrefixNgram) s += "(" + std::to_string(n) + ")";
  return s + " K=" + std::to_string(codebook_size) + " H=" + std::to_string(table_size);
}

std::vector<std::uint64_t> parameterize(const SemanticId& id, const Parameterization& p) {
  p.validate(id.levels());
  const std::uint64_t K = p.codebook_size;
  for (auto c : id.codes) {
    if (c >= K) throw IndexError("code " + std::to_string(c) + " out of range for K=" + std::to_string(K));
  }
  std::vector<std::uint64_t> out;
  switch (p.variant) {
    case Variant::Trigram:
      out.push_back(base_k(id, 0, 3, K));
      break;
    case Variant::Fourgram:
      out.push_back(base_k(id, 0, 4, K));
      break;
    case Variant::AllBigrams: {
      const std::uint64_t K2 = checked_mul(K, K);
      for (std::size_t i = 0; i + 1 < id.levels(); ++i) {
        out.push_back(checked_add(checked_mul(K2, i), base_k(id, i, 2, K)));
      }
      break;
    }
    case Variant::PrefixNgram: {
      // Shifted codes (c+1) make every depth a distinct contiguous range.
      std::uint64_t acc = 0;
      for (std::size_t i = 0; i < p.n; ++i) {
        acc = checked_add(checked_mul(acc, K), std::uint64_t{id.codes[i]} + 1);
        out.push_back(acc - 1);
      }
      break;
    }
  }
  return out;
}

std::vector<std::uint64_t> fit_to_table(std::span<const std::uint64_t> indices, std::uint64_t H,
                                        std::size_t G) {
  if (G == 0 || H < G) {
    throw ConfigError("fit_to_table: need 1 <= G <= H (G=" + std::to_string(G) +
                      ", H=" + std::to_string(H) + ")");
  }
  if (indices.size() != G) {
    throw DimensionError("fit_to_table: " + std::to_string(indices.size()) + " indices for G=" +
                         std::to_string(G));
  }
  const std::uint64_t block = H / G;
  std::vector<std::uint64_t> out(G);
  for (std::size_t g = 0; g < G; ++g) out[g] = g * block + indices[g] % block;
  return out;
}

std::uint64_t random_hash(std::uint64_t raw_id, std::uint64_t H, std::uint64_t seed) {
  if (H == 0) throw ConfigError("random_hash: H must be positive");
  return mix64(raw_id ^ mix64(seed)) % H;
}

Vocabulary::Vocabulary(std::span<const std::uint64_t> training_ids) {
  for (auto id : training_ids) {
    if (rows_.emplace(id, ids_.size()).second) ids_.push_back(id);
  }
}

std::size_t Vocabulary::row(std::uint64_t raw_id) const {
  auto it = rows_.find(raw_id);
  return it == rows_.end() ? reserved_row() : it->second;
}

std::string lookup_kind_name(LookupKind k) {
  switch (k) {
    case LookupKind::IndividualEmbedding: return "ie";
    case LookupKind::RandomHash: return "rh";
    case LookupKind::SemanticId: return "semid";
  }
  return "?";
}

LookupKind parse_lookup_kind(std::string_view name) {
  if (name == "ie") return LookupKind::IndividualEmbedding;
  if (name == "rh") return LookupKind::RandomHash;
  if (name == "semid") return LookupKind::SemanticId;
  throw ConfigError("unknown lookup kind '" + std::string(name) + "' (ie|rh|semid)");
}

LookupFn LookupFn::individual(std::shared_ptr<const Vocabulary> vocab) {
  if (!vocab) throw ConfigError("individual lookup needs a vocabulary");
  LookupFn f;
  f.kind_ = LookupKind::IndividualEmbedding;
  f.table_size_ = vocab->table_size();
  f.vocab_ = std::move(vocab);
  return f;
}

LookupFn LookupFn::hashed(std::uint64_t H, std::uint64_t seed) {
  if (H == 0) throw ConfigError("hashed lookup: H must be positive");
  LookupFn f;
  f.kind_ = LookupKind::RandomHash;
  f.table_size_ = H;
  f.hash_seed_ = seed;
  return f;
}

LookupFn LookupFn::semantic(std::shared_ptr<const SemanticIdTable> table, Parameterization p) {
  if (!table) throw ConfigError("semantic lookup needs a Semantic ID table");
  if (p.codebook_size == 0) p.codebook_size = table->codebook_size();
  if (p.codebook_size != table->codebook_size()) {
    throw ConfigError("parameterization K differs from the Semantic ID table");
  }
  if (p.table_size == 0) throw ConfigError("semantic lookup: H must be positive");
  p.validate(table->levels());
  LookupFn f;
  f.kind_ = LookupKind::SemanticId;
  f.table_size_ = p.table_size;
  f.output_count_ = p.output_count(table->levels());
  f.semids_ = std::move(table);
  f.param_ = p;
  f.missing_ = std::make_shared<std::atomic<std::size_t>>(0);
  return f;
}

void LookupFn::rows(std::uint64_t raw_id, std::vector<std::size_t>& out) const {
  switch (kind_) {
    case LookupKind::IndividualEmbedding:
      out.push_back(vocab_->row(raw_id));
      return;
    case LookupKind::RandomHash:
      out.push_back(random_hash(raw_id, table_size_, hash_seed_));
      return;
    case LookupKind::SemanticId: {
      const SemanticId* id = semids_->find(raw_id);
      SemanticId fallback;
      if (!id) {
        const std::size_t seen = missing_->fetch_add(1);
        if (seen < kMissingWarnings) {
          log_warning("no Semantic ID for raw id " + std::to_string(raw_id) +
                      "; using the all-zeros code");
        } else if (seen == kMissingWarnings) {
          log_warning("further missing Semantic IDs are counted, not logged");
        }
        fallback.codes.assign(semids_->levels(), 0);
        id = &fallback;
      }
      const auto raw = parameterize(*id, param_);
      for (auto r : fit_to_table(raw, table_size_, output_count_)) out.push_back(r);
      return;
    }
  }
}

std::vector<std::size_t> LookupFn::rows(std::uint64_t raw_id) const {
  std::vector<std::size_t> out;
  rows(raw_id, out);
  return out;
}

}  // namespace semid::tokenization
