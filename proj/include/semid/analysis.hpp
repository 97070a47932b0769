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

// Diagnostics over prediction dumps, trained tables and generated corpora.
//
// Reports are built only from their inputs (no hidden state, fixed reduction
// order), so re-running an analysis over the same dump is bit-identical.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "semid/corpus.hpp"
#include "semid/io.hpp"
#include "semid/ranker.hpp"
#include "semid/semantic_id.hpp"

namespace semid::analysis {

// ---- reports ----

struct Metric {
  std::string name;
  std::optional<double> value;  // unset: unavailable, see note
  std::string note;
};

class MetricsReport {
 public:
  MetricsReport() = default;
  MetricsReport(std::string kind, std::uint64_t config_hash, std::uint64_t seed)
      : kind_(std::move(kind)), config_hash_(config_hash), seed_(seed) {}

  const std::string& kind() const { return kind_; }
  std::uint64_t config_hash() const { return config_hash_; }
  std::uint64_t seed() const { return seed_; }
  const std::vector<Metric>& metrics() const { return metrics_; }

  // Non-finite values are stored as unavailable.
  void set(const std::string& name, double value, std::string note = "");
  void unavailable(const std::string& name, std::string reason);
  std::optional<double> get(const std::string& name) const;
  bool has(const std::string& name) const;

  nlohmann::json to_json() const;
  static MetricsReport from_json(const nlohmann::json& j);
  // Two aligned columns: name, value (or "n/a (reason)").
  std::string to_table() const;
  // Writes <stem>.json and <stem>.txt.
  void save(const std::filesystem::path& stem) const;

 private:
  Metric* find(const std::string& name);
  std::string kind_;
  std::uint64_t config_hash_ = 0;
  std::uint64_t seed_ = 0;
  std::vector<Metric> metrics_;
};

// ---- prediction dumps ----

struct PredictionRecord {
  std::uint64_t event_id = 0;
  std::int64_t time = 0;
  std::uint64_t item = 0;
  double label = 0.0;
  double prediction = 0.0;
  std::string segment;  // head | torso | tail | new, or empty
};

std::vector<PredictionRecord> make_records(std::span<const corpus::Event> events,
                                           std::span<const double> predictions);

// Tab-separated: event_id time item label prediction segment.
void save_predictions(const std::filesystem::path& path, const io::FileHeader& header,
                      std::span<const PredictionRecord> records);
std::vector<PredictionRecord> load_predictions(const std::filesystem::path& path,
                                               io::FileHeader* header = nullptr);

// NE of a record set; nullopt when the set is empty or single-class.
std::optional<double> records_ne(std::span<const PredictionRecord> records);

// ---- segments ----

struct SegmentSpec {
  // Cumulative impression shares closing head and torso; the tail takes the rest.
  double head_cut = 0.25;
  double torso_cut = 0.75;
};

struct ItemSegments {
  std::unordered_map<std::uint64_t, std::string> of_item;  // train-seen items only
  std::size_t head_items = 0, torso_items = 0, tail_items = 0;
  std::uint64_t impressions = 0;

  // "new" for items without training impressions.
  const std::string& segment(std::uint64_t raw_id) const;
};

// Items sorted by training impressions (desc, ties by raw id). An item joins
// a segment when the cumulative share before it is below that segment's cut.
ItemSegments build_segments(std::span<const corpus::Event> train, const SegmentSpec& spec = {});
void tag_segments(std::span<PredictionRecord> records, const ItemSegments& segments);

// ne.{overall,head,torso,tail,new,seen} and count.* from the records' tags.
MetricsReport segment_ne(std::span<const PredictionRecord> records, MetricsReport report);

// ---- drifting gap ----

struct TimeWindow {
  std::int64_t begin = 0;
  std::int64_t end = 0;  // exclusive
  bool contains(std::int64_t t) const { return begin <= t && t < end; }
};

struct DriftWindows {
  TimeWindow early;
  TimeWindow late;
};

// 42-48h before the end of training vs the last 6h, scaled by horizon / 4 days.
DriftWindows default_drift_windows(std::int64_t horizon_seconds);

struct DriftGap {
  double early_ne = 0.0;
  double late_ne = 0.0;
  double gap = 0.0;
  std::size_t early_count = 0;
  std::size_t late_count = 0;
};

// Records are frozen-model predictions on training events. Throws MetricError
// if a window is empty or single-class.
DriftGap drifting_gap(std::span<const PredictionRecord> records, const DriftWindows& windows);

// Training events inside either window.
std::vector<corpus::Event> drift_events(std::span<const corpus::Event> train,
                                        const DriftWindows& windows);

// ---- cluster geometry ----

struct GeometryStats {
  std::optional<double> variance_mean, variance_std;
  std::optional<double> distance_mean, distance_std;
  std::size_t clusters = 0;
  std::size_t pairs = 0;
};

struct ClusterGeometry {
  GeometryStats small;  // clusters holding 4..10 items
  GeometryStats top;    // the 1000 largest clusters
};

// `embeddings` maps raw id -> vector; `partition` maps raw id -> cluster key.
// Items missing from either map are ignored. Centroid pairs are subsampled
// to at most `max_pairs` with a generator seeded by `seed`.
ClusterGeometry cluster_geometry(const std::unordered_map<std::uint64_t, std::vector<double>>& embeddings,
                                 const std::unordered_map<std::uint64_t, std::uint64_t>& partition,
                                 std::uint64_t seed = 0, std::size_t max_pairs = 1000000);

void add_geometry(MetricsReport& report, const std::string& prefix, const ClusterGeometry& g);

// ---- attention ----

struct AttentionStats {
  double first = 0.0;
  double pad = 0.0;
  double entropy = 0.0;
  std::optional<double> self;  // only for square (Transformer) matrices
  std::size_t rows = 0;
};

// `square` marks self-attention (query i and key i are the same position).
AttentionStats attention_metrics(const ranker::AttentionTrace& trace, bool square);

// Attention traces over events, batched like prediction.
ranker::AttentionTrace collect_attention(const ranker::RankerModel& model, const corpus::Stream& stream,
                                         std::span<const corpus::Event> events);

// ---- A/A ----

inline constexpr double kAarEpsilon = 1e-9;

double aar(double p1, double p2, double eps = kAarEpsilon);

struct AarPair {
  std::uint64_t original = 0;
  std::uint64_t copy = 0;
  double p_original = 0.0;
  double p_copy = 0.0;
};

// Scores each pair's two items in the context (history, time) of one eval
// event; pair i uses eval event i mod |eval|.
std::vector<AarPair> score_aa_pairs(const ranker::RankerModel& model, const corpus::Stream& stream,
                                    std::span<const std::pair<std::uint64_t, std::uint64_t>> pairs);

// aar.mean_abs plus quantiles of |AAR|.
MetricsReport aar_report(std::span<const AarPair> pairs, MetricsReport report,
                         double eps = kAarEpsilon);

void save_aa_pairs(const std::filesystem::path& path, const io::FileHeader& header,
                   std::span<const AarPair> pairs);
std::vector<AarPair> load_aa_pairs(const std::filesystem::path& path, io::FileHeader* header = nullptr);

// ---- click loss ----

struct ClickLossOptions {
  std::size_t contexts = 2000;    // eval events used as (user, time, history)
  std::size_t candidates = 200;   // alive items scored per context
  std::size_t set_size = 10;      // top-scored items kept as the recommendation set
  std::uint64_t seed = 0;
};

struct ClickLossDepth {
  std::size_t depth = 0;
  double rate = 0.0;
  std::size_t swaps = 0;
  std::size_t skips = 0;
};

// Rate per prefix depth 1..L. Every depth reuses the same contexts, sets and
// swapped positions; only the replacement pool differs.
std::vector<ClickLossDepth> click_loss_analog(const ranker::RankerModel& model,
                                              const corpus::Corpus& corpus,
                                              const corpus::Stream& stream,
                                              const SemanticIdTable& semids,
                                              const ClickLossOptions& options);

// ---- distributions ----

double gini(std::vector<double> values);

struct Series {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
  void save(const std::filesystem::path& path, const io::FileHeader& header) const;
};

struct Distributions {
  Series cumulative_impressions;  // item_share, impression_share
  Series survival;                // day, alive_share
  Series raw_clicks;              // rank, clicks (raw-id space, sorted desc)
  Series semid_clicks;            // rank, clicks (full-code space, sorted desc)
  double gini_raw = 0.0;
  double gini_semid = 0.0;
};

Distributions distribution_exports(const corpus::Corpus& corpus, const corpus::Stream& stream,
                                   const SemanticIdTable& semids, std::size_t max_points = 1000);

}  // namespace semid::analysis
