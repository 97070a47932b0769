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

#include "semid/analysis.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "semid/errors.hpp"
#include "semid/log.hpp"
#include "semid/tokenization.hpp"

namespace semid::analysis {
namespace {

namespace fs = std::filesystem;

fs::path temp_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("semid_analysis_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

corpus::Event event(std::uint64_t id, std::int64_t time, std::uint64_t item, int label = 0) {
  corpus::Event e;
  e.id = id;
  e.time = time;
  e.item = item;
  e.label = static_cast<std::uint8_t>(label);
  return e;
}

TEST(Report, UnavailableAndRoundTrip) {
  MetricsReport r("segments", 0xabc, 7);
  r.set("ne.overall", 0.93);
  r.set("bad", std::nan(""));
  r.unavailable("ne.new", "single-class segment");
  EXPECT_EQ(r.get("ne.overall"), 0.93);
  EXPECT_FALSE(r.get("bad").has_value());
  EXPECT_THROW(r.get("missing"), IndexError);

  auto back = MetricsReport::from_json(nlohmann::json::parse(r.to_json().dump()));
  EXPECT_EQ(back.to_json(), r.to_json());
  EXPECT_EQ(back.config_hash(), 0xabcu);
  const auto table = r.to_table();
  EXPECT_NE(table.find("n/a (single-class segment)"), std::string::npos);
  EXPECT_NE(table.find("0.93"), std::string::npos);
}

TEST(Predictions, DumpRoundTripIsExact) {
  std::vector<PredictionRecord> recs{{1, 10, 5, 1.0, 0.1234567890123, "head"},
                                     {2, 11, 6, 0.0, 1.0 / 3.0, ""}};
  auto dir = temp_dir("dump");
  io::FileHeader h{"predictions", 1, 0x55, 3};
  save_predictions(dir / "p.tsv", h, recs);
  io::FileHeader got;
  auto back = load_predictions(dir / "p.tsv", &got);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(got.config_hash, 0x55u);
  EXPECT_EQ(back[0].prediction, recs[0].prediction);
  EXPECT_EQ(back[1].prediction, recs[1].prediction);
  EXPECT_EQ(back[0].segment, "head");
  EXPECT_EQ(back[1].segment, "");
  EXPECT_THROW(load_aa_pairs(dir / "p.tsv"), FormatError);
}

TEST(Segments, CumulativeCuts) {
  // Impressions: item 1 x5, 2 x3, 3 x1, 4 x1.
  std::vector<corpus::Event> train;
  std::uint64_t id = 0;
  for (auto [item, n] : std::vector<std::pair<int, int>>{{1, 5}, {2, 3}, {3, 1}, {4, 1}}) {
    for (int k = 0; k < n; ++k) train.push_back(event(id++, 0, item));
  }
  auto seg = build_segments(train);
  EXPECT_EQ(seg.segment(1), "head");
  EXPECT_EQ(seg.segment(2), "torso");
  EXPECT_EQ(seg.segment(3), "tail");
  EXPECT_EQ(seg.segment(4), "tail");
  EXPECT_EQ(seg.segment(99), "new");
  EXPECT_EQ(seg.head_items + seg.torso_items + seg.tail_items, 4u);
}

TEST(Segments, BaseRatePredictionGivesOneEverywhere) {
  std::vector<corpus::Event> train;
  for (std::uint64_t i = 0; i < 40; ++i) train.push_back(event(i, 0, i % 8 == 0 ? 1 : 2 + i % 5));
  auto seg = build_segments(train);

  std::vector<PredictionRecord> recs;
  // Per segment: labels with a known base rate; prediction = that rate.
  const std::map<std::uint64_t, std::vector<int>> labels{
      {1, {1, 0, 0, 0}}, {2, {1, 1, 0}}, {5, {0, 1, 0, 0, 0}}, {42, {1, 0}}};
  std::map<std::string, std::pair<double, double>> rate;
  for (const auto& [item, ys] : labels) {
    for (int y : ys) {
      rate[seg.segment(item)].first += y;
      rate[seg.segment(item)].second += 1;
    }
  }
  std::uint64_t id = 0;
  for (const auto& [item, ys] : labels) {
    const auto& r = rate[seg.segment(item)];
    for (int y : ys) recs.push_back({id++, 0, item, double(y), r.first / r.second, ""});
  }
  tag_segments(recs, seg);
  auto rep = segment_ne(recs, MetricsReport("segments", 0, 0));
  for (const char* s : {"head", "torso", "tail", "new"}) {
    ASSERT_TRUE(rep.get(std::string("ne.") + s).has_value()) << s;
    EXPECT_NEAR(*rep.get(std::string("ne.") + s), 1.0, 1e-12) << s;
  }
  double counted = 0.0;
  for (const char* s : {"head", "torso", "tail", "new"}) counted += *rep.get(std::string("count.") + s);
  EXPECT_EQ(counted, static_cast<double>(recs.size()));
  EXPECT_EQ(*rep.get("count.seen") + *rep.get("count.new"), *rep.get("count.overall"));
}

TEST(Segments, SingleClassSegmentIsUnavailable) {
  std::vector<PredictionRecord> recs{{0, 0, 1, 1.0, 0.5, "head"}, {1, 0, 2, 0.0, 0.5, "tail"},
                                     {2, 0, 2, 1.0, 0.5, "tail"}};
  auto rep = segment_ne(recs, {});
  EXPECT_FALSE(rep.get("ne.head").has_value());
  EXPECT_FALSE(rep.get("ne.new").has_value());
  EXPECT_TRUE(rep.get("ne.tail").has_value());
  std::vector<PredictionRecord> untagged{{0, 0, 1, 1.0, 0.5, ""}};
  EXPECT_THROW(segment_ne(untagged, {}), ContractError);
}

TEST(Drift, DefaultWindowsScaleWithHorizon) {
  const std::int64_t day = corpus::kSecondsPerDay;
  auto w = default_drift_windows(4 * day);
  EXPECT_EQ(w.early.begin, 2 * day);
  EXPECT_EQ(w.early.end, 2 * day + 6 * 3600);
  EXPECT_EQ(w.late.begin, 4 * day - 6 * 3600);
  EXPECT_EQ(w.late.end, 4 * day);
  auto one = default_drift_windows(day);
  EXPECT_EQ(one.early.begin, day / 2);
  EXPECT_EQ(one.late.begin, day - 6 * 3600 / 4);
}

TEST(Drift, GapCases) {
  DriftWindows w{{0, 10}, {20, 30}};
  std::vector<PredictionRecord> recs;
  for (int i = 0; i < 4; ++i) {
    recs.push_back({0, 1 + i, 1, double(i == 0), 0.3, ""});
    recs.push_back({0, 21 + i, 1, double(i == 3), 0.3, ""});
  }
  auto g = drifting_gap(recs, w);
  EXPECT_EQ(g.gap, 0.0);
  EXPECT_EQ(g.early_count, 4u);

  DriftWindows same{{0, 10}, {0, 10}};
  recs[0].prediction = 0.9;
  EXPECT_EQ(drifting_gap(recs, same).gap, 0.0);

  DriftWindows empty{{0, 10}, {100, 110}};
  EXPECT_THROW(drifting_gap(recs, empty), MetricError);

  std::vector<corpus::Event> train{event(0, 5, 1), event(1, 15, 1), event(2, 25, 1)};
  EXPECT_EQ(drift_events(train, w).size(), 2u);
}

TEST(Geometry, HandCase) {
  std::unordered_map<std::uint64_t, std::vector<double>> emb{
      {1, {0, 0}}, {2, {2, 0}}, {3, {10, 0}}, {4, {10, 2}}, {5, {7, 7}}};
  std::unordered_map<std::uint64_t, std::uint64_t> part{{1, 100}, {2, 100}, {3, 200}, {4, 200}, {9, 300}};
  auto g = cluster_geometry(emb, part);
  EXPECT_EQ(g.top.clusters, 2u);
  EXPECT_DOUBLE_EQ(*g.top.variance_mean, 0.5);
  EXPECT_DOUBLE_EQ(*g.top.variance_std, 0.0);
  EXPECT_DOUBLE_EQ(*g.top.distance_mean, std::sqrt(82.0));
  EXPECT_EQ(g.small.clusters, 0u);
  EXPECT_FALSE(g.small.variance_mean.has_value());
}

TEST(Geometry, SingletonsAndOneCluster) {
  std::unordered_map<std::uint64_t, std::vector<double>> emb;
  std::unordered_map<std::uint64_t, std::uint64_t> singles, one;
  for (std::uint64_t i = 0; i < 6; ++i) {
    emb[i] = {double(i), double(i * i)};
    singles[i] = i;
    one[i] = 0;
  }
  // Singleton clusters have zero spread and are left out of the variance mean.
  auto s = cluster_geometry(emb, singles);
  EXPECT_FALSE(s.top.variance_mean.has_value());
  EXPECT_TRUE(s.top.distance_mean.has_value());

  auto o = cluster_geometry(emb, one);
  EXPECT_EQ(o.small.clusters, 1u);
  EXPECT_TRUE(o.small.variance_mean.has_value());
  EXPECT_FALSE(o.small.distance_mean.has_value());
  MetricsReport r;
  add_geometry(r, "semid", o);
  EXPECT_FALSE(r.get("semid.top.distance_mean").has_value());
}

TEST(Geometry, PairSubsampleIsCapped) {
  std::unordered_map<std::uint64_t, std::vector<double>> emb;
  std::unordered_map<std::uint64_t, std::uint64_t> part;
  for (std::uint64_t i = 0; i < 200; ++i) {
    emb[i] = {double(i)};
    part[i] = i;
  }
  auto g = cluster_geometry(emb, part, 1, 500);
  EXPECT_EQ(g.top.pairs, 500u);
  auto again = cluster_geometry(emb, part, 1, 500);
  EXPECT_EQ(*g.top.distance_mean, *again.top.distance_mean);
}

TEST(Geometry, CodePartitionIsTighterThanHashPartition) {
  set_log_level(LogLevel::Error);
  corpus::CorpusConfig c;
  c.items = 4000;
  c.dim = 8;
  c.branching = {4, 4, 4};
  c.users = 10;
  c.train_events = 10;
  c.eval_events = 10;
  c.seed = 3;
  auto corp = corpus::generate_items(c);
  std::unordered_map<std::uint64_t, std::vector<double>> emb;
  std::unordered_map<std::uint64_t, std::uint64_t> by_code, by_hash;
  for (const auto& it : corp.items) {
    emb[it.raw_id] = it.embedding;
    by_code[it.raw_id] = (it.path[0] * 4 + it.path[1]) * 4 + it.path[2];
    by_hash[it.raw_id] = tokenization::random_hash(it.raw_id, 64, 0);
  }
  auto code = cluster_geometry(emb, by_code);
  auto hash = cluster_geometry(emb, by_hash);
  EXPECT_LT(*code.top.variance_mean, *hash.top.variance_mean);
}

ranker::AttentionTrace square_trace(std::size_t S, const std::vector<double>& row_weights,
                                    std::vector<bool> padding, bool identity = false) {
  ranker::AttentionTrace t;
  t.rows = t.cols = S;
  for (std::size_t i = 0; i < S; ++i) {
    for (std::size_t j = 0; j < S; ++j) {
      t.weights.push_back(identity ? (i == j ? 1.0 : 0.0) : row_weights[j]);
    }
  }
  t.padding.push_back(std::move(padding));
  return t;
}

TEST(Attention, UniformMatrix) {
  const std::size_t S = 8;
  std::vector<bool> pad(S, false);
  pad[6] = pad[7] = true;
  auto t = square_trace(S, std::vector<double>(S, 1.0 / S), pad);
  auto s = attention_metrics(t, true);
  EXPECT_EQ(s.entropy, std::log2(double(S)));
  EXPECT_EQ(s.first, 1.0 / S);
  EXPECT_EQ(s.pad, 2.0 / S);
  EXPECT_EQ(*s.self, 1.0 / S);
}

TEST(Attention, IdentityAndPadOnly) {
  auto id = attention_metrics(square_trace(4, {}, {false, false, false, false}, true), true);
  EXPECT_EQ(*id.self, 1.0);
  EXPECT_EQ(id.entropy, 0.0);
  EXPECT_EQ(id.first, 0.25);

  auto pad = attention_metrics(square_trace(4, {0.0, 0.0, 0.5, 0.5}, {false, false, true, true}), true);
  EXPECT_EQ(pad.pad, 1.0);
  EXPECT_EQ(pad.entropy, 1.0);
}

TEST(Attention, PoolingHasNoSelfMetric) {
  ranker::AttentionTrace t;
  t.rows = 3;
  t.cols = 2;
  t.weights = {0.5, 0.5, 1.0, 0.0, 0.0, 1.0};
  t.padding = {{false, true}};
  auto s = attention_metrics(t, false);
  EXPECT_FALSE(s.self.has_value());
  EXPECT_DOUBLE_EQ(s.first, 0.5);
  EXPECT_DOUBLE_EQ(s.pad, 0.5);
  EXPECT_DOUBLE_EQ(s.entropy, 1.0 / 3.0);
  EXPECT_THROW(attention_metrics(t, true), DimensionError);
}

TEST(Aar, Formula) {
  EXPECT_EQ(aar(0.4, 0.4), 0.0);
  EXPECT_NEAR(aar(0.3, 0.1, 0.0), 1.0, 1e-15);
  for (auto [a, b] : std::vector<std::pair<double, double>>{{0.3, 0.1}, {0.01, 0.9}, {0.5, 0.2}}) {
    EXPECT_EQ(aar(a, b), -aar(b, a));
  }
  std::vector<AarPair> pairs{{1, 2, 0.3, 0.1}, {3, 4, 0.2, 0.2}};
  auto r = aar_report(pairs, {}, 0.0);
  EXPECT_NEAR(*r.get("aar.mean_abs"), 0.5, 1e-15);
  EXPECT_EQ(*r.get("aar.identical_share"), 0.5);
  EXPECT_THROW(aar_report({}, {}), ContractError);
}

TEST(Gini, HandValues) {
  EXPECT_EQ(gini({3.0, 3.0, 3.0}), 0.0);
  EXPECT_DOUBLE_EQ(gini({0.0, 0.0, 0.0, 1.0}), 0.75);
  EXPECT_THROW(gini({0.0, 0.0}), MetricError);
}

class AnalysisStream : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    set_log_level(LogLevel::Error);
    corpus::CorpusConfig c;
    c.items = 3000;
    c.dim = 8;
    c.branching = {4, 4, 4};
    c.users = 300;
    c.train_events = 20000;
    c.eval_events = 3000;
    c.seed = 11;
    corpus_ = new corpus::Corpus(corpus::generate_items(c));
    stream_ = new corpus::Stream(corpus::generate_stream(*corpus_));
    pairs_ = new std::vector<std::pair<std::uint64_t, std::uint64_t>>(corpus::inject_aa_pairs(*corpus_, 50, 2));
    semids_ = std::make_shared<SemanticIdTable>(3, 4);
    for (const auto& it : corpus_->items) {
      semids_->set(it.raw_id, SemanticId{{it.path[0], it.path[1], it.path[2]}});
    }
  }
  static void TearDownTestSuite() {
    delete corpus_;
    delete stream_;
    delete pairs_;
    semids_.reset();
  }

  static ranker::RankerModel trained(tokenization::LookupKind kind,
                                     ranker::Aggregation agg = ranker::Aggregation::Bypass) {
    ranker::RankerConfig c;
    c.embedding_dim = c.attention_dim = 8;
    c.aggregation = agg;
    c.pma_seeds = 4;
    c.top_hidden = {16};
    c.target.kind = c.history.kind = kind;
    c.target.table_size = c.history.table_size = 300;
    ranker::RankerModel m(c, ranker::make_lookups(c, *stream_, semids_));
    ranker::train_one_epoch(m, *stream_, stream_->train());
    m.freeze();
    return m;
  }

  static corpus::Corpus* corpus_;
  static corpus::Stream* stream_;
  static std::vector<std::pair<std::uint64_t, std::uint64_t>>* pairs_;
  static std::shared_ptr<SemanticIdTable> semids_;
};

corpus::Corpus* AnalysisStream::corpus_ = nullptr;
corpus::Stream* AnalysisStream::stream_ = nullptr;
std::vector<std::pair<std::uint64_t, std::uint64_t>>* AnalysisStream::pairs_ = nullptr;
std::shared_ptr<SemanticIdTable> AnalysisStream::semids_;

TEST_F(AnalysisStream, AarZeroForCodesPositiveForHashing) {
  auto semid = trained(tokenization::LookupKind::SemanticId);
  auto rh = trained(tokenization::LookupKind::RandomHash);
  auto a = aar_report(score_aa_pairs(semid, *stream_, *pairs_), {});
  auto b = aar_report(score_aa_pairs(rh, *stream_, *pairs_), {});
  EXPECT_EQ(*a.get("aar.mean_abs"), 0.0);
  EXPECT_GT(*b.get("aar.mean_abs"), 0.0);

  auto dir = temp_dir("aar");
  auto scored = score_aa_pairs(rh, *stream_, *pairs_);
  save_aa_pairs(dir / "aa.tsv", {"aa-pairs", 1, 0, 0}, scored);
  auto back = load_aa_pairs(dir / "aa.tsv");
  EXPECT_EQ(aar_report(back, {}).to_json(), b.to_json());
}

TEST_F(AnalysisStream, AttentionFromModel) {
  auto m = trained(tokenization::LookupKind::RandomHash, ranker::Aggregation::Transformer);
  auto events = stream_->eval().first(1500);
  auto trace = collect_attention(m, *stream_, events);
  EXPECT_EQ(trace.padding.size(), events.size());
  auto s = attention_metrics(trace, true);
  EXPECT_EQ(s.rows, events.size() * 8);
  EXPECT_GT(s.entropy, 0.0);
  EXPECT_LE(s.entropy, 3.0 + 1e-12);
  EXPECT_GE(s.pad, 0.0);
  EXPECT_LE(s.pad, 1.0 + 1e-12);
  auto bypass = trained(tokenization::LookupKind::RandomHash);
  EXPECT_THROW(collect_attention(bypass, *stream_, events), ContractError);
}

TEST_F(AnalysisStream, ClickLossCountsEveryContext) {
  auto m = trained(tokenization::LookupKind::SemanticId);
  ClickLossOptions o;
  o.contexts = 100;
  o.candidates = 40;
  o.set_size = 5;
  auto a = click_loss_analog(m, *corpus_, *stream_, *semids_, o);
  auto b = click_loss_analog(m, *corpus_, *stream_, *semids_, o);
  ASSERT_EQ(a.size(), 3u);
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_EQ(a[k].depth, k + 1);
    EXPECT_EQ(a[k].swaps + a[k].skips, 100u);
    EXPECT_EQ(a[k].rate, b[k].rate);
    EXPECT_TRUE(std::isfinite(a[k].rate));
  }
  // Deeper prefixes leave fewer replacement candidates.
  EXPECT_GE(a[2].skips, a[0].skips);
}

TEST_F(AnalysisStream, DistributionSeries) {
  auto d = distribution_exports(*corpus_, *stream_, *semids_, 200);
  ASSERT_FALSE(d.cumulative_impressions.rows.empty());
  EXPECT_EQ(d.cumulative_impressions.rows.back()[0], 1.0);
  EXPECT_EQ(d.cumulative_impressions.rows.back()[1], 1.0);
  EXPECT_LE(d.cumulative_impressions.rows.size(), 200u);
  ASSERT_FALSE(d.survival.rows.empty());
  EXPECT_EQ(d.survival.rows.front()[1], 1.0);
  for (std::size_t i = 1; i < d.survival.rows.size(); ++i) {
    EXPECT_LE(d.survival.rows[i][1], d.survival.rows[i - 1][1]);
  }
  EXPECT_LT(d.gini_semid, d.gini_raw);

  auto dir = temp_dir("series");
  d.survival.save(dir / "survival.tsv", {"survival", 1, 0, 0});
  EXPECT_TRUE(fs::exists(dir / "survival.tsv"));
}

TEST_F(AnalysisStream, SegmentReportIsPureFunctionOfDump) {
  auto m = trained(tokenization::LookupKind::RandomHash);
  auto ev = ranker::evaluate(m, *stream_, stream_->eval());
  auto recs = make_records(stream_->eval(), ev.predictions);
  tag_segments(recs, build_segments(stream_->train()));
  auto dir = temp_dir("pure");
  save_predictions(dir / "p.tsv", {"predictions", 1, 0, 0}, recs);
  auto a = segment_ne(recs, MetricsReport("segments", 0, 0));
  auto b = segment_ne(load_predictions(dir / "p.tsv"), MetricsReport("segments", 0, 0));
  EXPECT_EQ(a.to_json().dump(), b.to_json().dump());
  EXPECT_EQ(*a.get("ne.overall"), ev.ne);
}

}  // namespace
}  // namespace semid::analysis
