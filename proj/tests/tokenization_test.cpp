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

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <map>
#include <random>
#include <set>

#include "semid/errors.hpp"
#include "semid/log.hpp"

namespace semid::tokenization {
namespace {

Parameterization make(Variant v, std::uint32_t K, std::size_t n = 3, std::uint64_t H = 0) {
  Parameterization p;
  p.variant = v;
  p.codebook_size = K;
  p.n = n;
  p.table_size = H;
  return p;
}

SemanticId sid(std::vector<std::uint32_t> c) { return SemanticId{std::move(c)}; }

// Every code sequence of length L over [0, K).
std::vector<SemanticId> all_ids(std::uint32_t K, std::size_t L) {
  std::vector<SemanticId> out;
  std::vector<std::uint32_t> c(L, 0);
  while (true) {
    out.push_back(sid(c));
    std::size_t i = L;
    while (i > 0 && ++c[i - 1] == K) c[--i] = 0;
    if (i == 0) break;
  }
  return out;
}

TEST(Parameterize, HandValues) {
  EXPECT_EQ(parameterize(sid({1, 2, 3}), make(Variant::Trigram, 4)),
            std::vector<std::uint64_t>({27}));
  EXPECT_EQ(parameterize(sid({1, 2, 3}), make(Variant::PrefixNgram, 4, 3)),
            std::vector<std::uint64_t>({1, 10, 47}));
  EXPECT_EQ(parameterize(sid({0, 0, 0}), make(Variant::PrefixNgram, 4, 3)),
            std::vector<std::uint64_t>({0, 4, 20}));
  EXPECT_EQ(parameterize(sid({1, 2, 3}), make(Variant::AllBigrams, 4)),
            std::vector<std::uint64_t>({6, 27}));
  EXPECT_EQ(parameterize(sid({1, 2, 3, 0}), make(Variant::Fourgram, 4)),
            std::vector<std::uint64_t>({108}));
}

TEST(Parameterize, LengthIncompatibility) {
  EXPECT_THROW(parameterize(sid({1, 2}), make(Variant::Trigram, 4)), ConfigError);
  EXPECT_THROW(parameterize(sid({1, 2, 3}), make(Variant::Fourgram, 4)), ConfigError);
  EXPECT_THROW(parameterize(sid({1}), make(Variant::AllBigrams, 4)), ConfigError);
  EXPECT_THROW(parameterize(sid({1, 2}), make(Variant::PrefixNgram, 4, 3)), ConfigError);
  EXPECT_THROW(parameterize(sid({1, 2}), make(Variant::PrefixNgram, 4, 0)), ConfigError);
  EXPECT_THROW(parameterize(sid({1, 4, 0}), make(Variant::Trigram, 4)), IndexError);
}

TEST(Parameterize, OverflowIsReported) {
  SemanticId big;
  big.codes.assign(12, 1u << 20);
  auto p = make(Variant::PrefixNgram, 1u << 21, 12);
  EXPECT_THROW(parameterize(big, p), ConfigError);
}

class ExhaustiveOracle : public ::testing::TestWithParam<std::uint32_t> {};

TEST_P(ExhaustiveOracle, TrigramAndFourgramAreBijections) {
  const std::uint32_t K = GetParam();
  for (std::size_t L : {3u, 4u}) {
    const Variant v = L == 3 ? Variant::Trigram : Variant::Fourgram;
    const auto ids = all_ids(K, L);
    std::set<std::uint64_t> seen;
    for (const auto& id : ids) {
      auto out = parameterize(id, make(v, K));
      ASSERT_EQ(out.size(), 1u);
      ASSERT_LT(out[0], ids.size());
      seen.insert(out[0]);
    }
    EXPECT_EQ(seen.size(), ids.size()) << "K=" << K << " L=" << L;
  }
}

TEST_P(ExhaustiveOracle, AllBigramsEmitsOnePerAdjacentPair) {
  const std::uint32_t K = GetParam();
  for (std::size_t L = 2; L <= 4; ++L) {
    std::vector<std::set<std::uint64_t>> per_pos(L - 1);
    for (const auto& id : all_ids(K, L)) {
      auto out = parameterize(id, make(Variant::AllBigrams, K));
      ASSERT_EQ(out.size(), L - 1);
      for (std::size_t i = 0; i + 1 < L; ++i) {
        EXPECT_EQ(out[i], std::uint64_t{K} * K * i + std::uint64_t{K} * id.codes[i] + id.codes[i + 1]);
        per_pos[i].insert(out[i]);
      }
    }
    for (const auto& s : per_pos) EXPECT_EQ(s.size(), std::size_t{K} * K);
  }
}

TEST_P(ExhaustiveOracle, PrefixDepthsInjectiveAndContiguous) {
  const std::uint32_t K = GetParam();
  for (std::size_t L = 1; L <= 4; ++L) {
    for (std::size_t n = 1; n <= L; ++n) {
      // depth -> (index -> prefix)
      std::vector<std::map<std::uint64_t, std::vector<std::uint32_t>>> by_depth(n);
      for (const auto& id : all_ids(K, L)) {
        auto out = parameterize(id, make(Variant::PrefixNgram, K, n));
        ASSERT_EQ(out.size(), n);
        for (std::size_t i = 0; i < n; ++i) {
          std::vector<std::uint32_t> prefix(id.codes.begin(), id.codes.begin() + i + 1);
          auto [it, fresh] = by_depth[i].emplace(out[i], prefix);
          if (!fresh) {
            ASSERT_EQ(it->second, prefix) << "collision at depth " << i + 1;
          }
        }
      }
      std::uint64_t next = 0;
      std::uint64_t width = 1;
      for (std::size_t i = 0; i < n; ++i) {
        width *= K;
        ASSERT_EQ(by_depth[i].size(), width);
        EXPECT_EQ(by_depth[i].begin()->first, next);
        EXPECT_EQ(by_depth[i].rbegin()->first, next + width - 1);
        next += width;
      }
    }
  }
}

INSTANTIATE_TEST_SUITE_P(Sizes, ExhaustiveOracle, ::testing::Values(2u, 4u, 8u));

TEST(FitToTable, BlockOffsets) {
  std::vector<std::uint64_t> idx{0, 4, 20};
  EXPECT_EQ(fit_to_table(idx, 300, 3), std::vector<std::uint64_t>({0, 104, 220}));
  std::vector<std::uint64_t> one{17};
  EXPECT_EQ(fit_to_table(one, 100, 1), one);
  EXPECT_THROW(fit_to_table(idx, 2, 3), ConfigError);
  EXPECT_THROW(fit_to_table(idx, 300, 2), DimensionError);
}

TEST(FitToTable, PositionsNeverCollide) {
  const std::uint64_t H = 30;
  std::vector<std::set<std::uint64_t>> rows(3);
  for (const auto& id : all_ids(4, 3)) {
    auto raw = parameterize(id, make(Variant::PrefixNgram, 4, 3));
    auto fit = fit_to_table(raw, H, 3);
    for (std::size_t g = 0; g < 3; ++g) {
      ASSERT_LT(fit[g], H);
      rows[g].insert(fit[g]);
    }
  }
  for (std::size_t a = 0; a < 3; ++a) {
    for (std::size_t b = a + 1; b < 3; ++b) {
      for (auto r : rows[a]) EXPECT_EQ(rows[b].count(r), 0u);
    }
  }
}

TEST(RandomHash, DeterministicAndDegenerate) {
  EXPECT_EQ(random_hash(12345, 1000, 7), random_hash(12345, 1000, 7));
  for (std::uint64_t x = 0; x < 100; ++x) EXPECT_EQ(random_hash(x, 1, 3), 0u);
  EXPECT_THROW(random_hash(1, 0, 0), ConfigError);
}

TEST(RandomHash, OccupancyChiSquare) {
  const std::uint64_t H = 10000;
  const std::size_t N = 100000;
  std::mt19937_64 rng(99);
  std::vector<std::size_t> counts(H, 0);
  for (std::size_t i = 0; i < N; ++i) ++counts[random_hash(rng(), H, 5)];
  const double expected = static_cast<double>(N) / H;
  double chi2 = 0.0;
  for (auto c : counts) chi2 += (c - expected) * (c - expected) / expected;
  // Wilson-Hilferty: chi2/df is approximately normal after a cube root.
  const double df = H - 1.0;
  const double z = (std::cbrt(chi2 / df) - (1.0 - 2.0 / (9.0 * df))) / std::sqrt(2.0 / (9.0 * df));
  EXPECT_LT(z, 3.09) << "chi2=" << chi2;  // upper-tail p > 0.001
}

TEST(Vocabulary, SeenAndUnseen) {
  std::vector<std::uint64_t> ids{50, 7, 50, 9};
  Vocabulary v(ids);
  EXPECT_EQ(v.size(), 3u);
  EXPECT_EQ(v.table_size(), 4u);
  EXPECT_NE(v.row(50), v.row(7));
  EXPECT_EQ(v.row(50), 0u);
  EXPECT_EQ(v.row(123456), v.reserved_row());
  EXPECT_EQ(v.reserved_row(), 3u);
}

std::shared_ptr<SemanticIdTable> small_table() {
  auto t = std::make_shared<SemanticIdTable>(3, 4);
  t->set(100, sid({1, 2, 3}));
  t->set(101, sid({1, 2, 3}));
  t->set(102, sid({1, 0, 0}));
  t->set(103, sid({2, 2, 3}));
  return t;
}

TEST(LookupFn, SemanticComposition) {
  auto p = make(Variant::PrefixNgram, 4, 3, 300);
  auto f = LookupFn::semantic(small_table(), p);
  EXPECT_EQ(f.output_count(), 3u);
  EXPECT_EQ(f.rows(100), (std::vector<std::size_t>{1, 110, 247}));
  EXPECT_EQ(f.rows(100), f.rows(101));
  auto a = f.rows(100);
  auto b = f.rows(102);
  EXPECT_EQ(a[0], b[0]);
  EXPECT_NE(a[1], b[1]);
  EXPECT_NE(a[2], b[2]);
  EXPECT_NE(f.rows(103)[0], a[0]);
}

TEST(LookupFn, MissingSemanticIdFallsBack) {
  set_log_level(LogLevel::Error);
  auto f = LookupFn::semantic(small_table(), make(Variant::PrefixNgram, 4, 3, 300));
  EXPECT_EQ(f.rows(999), (std::vector<std::size_t>{0, 104, 220}));
  for (int i = 0; i < 20; ++i) f.rows(1000 + i);
  EXPECT_EQ(f.missing_count(), 21u);
  set_log_level(LogLevel::Info);
}

TEST(LookupFn, KindsAndSizes) {
  auto vocab = std::make_shared<Vocabulary>(std::vector<std::uint64_t>{5, 6});
  auto ie = LookupFn::individual(vocab);
  EXPECT_EQ(ie.table_size(), 3u);
  EXPECT_EQ(ie.rows(77), std::vector<std::size_t>{2});
  auto rh = LookupFn::hashed(50, 1);
  EXPECT_EQ(rh.rows(77).size(), 1u);
  EXPECT_LT(rh.rows(77)[0], 50u);
  EXPECT_THROW(LookupFn::semantic(small_table(), make(Variant::PrefixNgram, 8, 3, 300)),
               ConfigError);
  EXPECT_EQ(parse_lookup_kind("semid"), LookupKind::SemanticId);
  EXPECT_THROW(parse_variant("bigram"), ConfigError);
}

TEST(SemanticIdTable, RoundTrip) {
  auto t = small_table();
  auto path = std::filesystem::temp_directory_path() / "semid_table_roundtrip.tsv";
  io::FileHeader h{"semid-table", 1, 0xabcdef, 7};
  t->save(path, h);
  io::FileHeader back;
  auto loaded = SemanticIdTable::load(path, &back);
  EXPECT_EQ(back.config_hash, h.config_hash);
  EXPECT_EQ(loaded.size(), t->size());
  EXPECT_EQ(loaded.levels(), 3u);
  for (const auto& [k, v] : t->entries()) EXPECT_EQ(*loaded.find(k), v);
  std::filesystem::remove(path);
  EXPECT_THROW(t->set(1, sid({1, 2})), DimensionError);
}

}  // namespace
}  // namespace semid::tokenization
