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

// DLRM-style CTR ranker.
//
// Sparse part: the target item and every history item are sum-pooled
// embedding-table rows given by a LookupFn. History rows also get a learned
// age-bucket embedding (pad positions use a dedicated pad row) and, for the
// attention variants, a positional embedding. The aggregated history rows and
// the target vector go through an all-pairs dot-product interaction, are
// concatenated with the flattened vectors, and a top MLP gives the logit.
//
// History order is most recent first; position 0 is the latest click.

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "semid/checkpoint.hpp"
#include "semid/corpus.hpp"
#include "semid/nn.hpp"
#include "semid/optim.hpp"
#include "semid/tokenization.hpp"

namespace semid::ranker {

enum class Aggregation { Bypass, Transformer, Pma };

std::string aggregation_name(Aggregation a);
Aggregation parse_aggregation(std::string_view name);

inline constexpr std::size_t kAgeBuckets = 32;
inline constexpr std::size_t kPadRow = kAgeBuckets;

// floor(log2(age + 1)), capped at kAgeBuckets - 1.
std::size_t age_bucket(std::int64_t age_seconds);

struct FeatureSpec {
  tokenization::LookupKind kind = tokenization::LookupKind::SemanticId;
  // Rows for RH and SemID; IE sizes itself from the training vocabulary.
  std::uint64_t table_size = 66667;
  tokenization::Variant variant = tokenization::Variant::PrefixNgram;
  std::size_t ngram = 3;
  std::uint64_t hash_seed = 0;
};

struct RankerConfig {
  std::size_t embedding_dim = 16;
  std::size_t attention_dim = 16;
  std::size_t pma_seeds = 32;
  std::size_t history_length = 8;
  Aggregation aggregation = Aggregation::Bypass;
  FeatureSpec target;
  FeatureSpec history;
  std::vector<std::size_t> top_hidden{64, 32};
  double learning_rate = 3e-3;
  double embedding_init_std = 0.05;
  std::size_t batch_size = 256;
  std::size_t ne_window = 50000;
  std::uint64_t seed = 1;

  void validate() const;
  // Vectors entering the interaction layer: the target plus aggregated rows.
  std::size_t interaction_vectors() const;
};

void to_json(nlohmann::json& j, const FeatureSpec& f);
void from_json(const nlohmann::json& j, FeatureSpec& f);
void to_json(nlohmann::json& j, const RankerConfig& c);
void from_json(const nlohmann::json& j, RankerConfig& c);

struct Lookups {
  tokenization::LookupFn target;
  tokenization::LookupFn history;
};

// IE vocabularies come from the training events (targets, and history items
// respectively) in order of first appearance.
Lookups make_lookups(const RankerConfig& config, const corpus::Stream& stream,
                     std::shared_ptr<const SemanticIdTable> semids);

// Rows for a set of raw IDs: duplicates collapse, then each ID contributes
// its output_count() rows.
std::vector<std::size_t> feature_rows(const tokenization::LookupFn& lookup,
                                      std::span<const std::uint64_t> raw_ids);

// Sum-pooled embedding of an ID set, [d]; the empty set gives zeros.
tensor::Var sparse_embed(tensor::Var table, const tokenization::LookupFn& lookup,
                         std::span<const std::uint64_t> raw_ids);

// One scoring request.
struct Example {
  std::uint64_t target = 0;
  std::int64_t time = 0;
  std::span<const corpus::HistoryEntry> history;
  double label = 0.0;
};

Example example_of(const corpus::Event& e, const corpus::Stream& stream);

// Attention weights recorded during a forward pass, one matrix per example.
struct AttentionTrace {
  std::size_t rows = 0;  // T for Transformer, d_s for PMA
  std::size_t cols = 0;  // T
  std::vector<double> weights;             // examples x rows x cols
  std::vector<std::vector<bool>> padding;  // per example, per history position
};

class RankerModel {
 public:
  RankerModel(RankerConfig config, Lookups lookups);
  RankerModel(const RankerModel&) = delete;
  RankerModel& operator=(const RankerModel&) = delete;
  RankerModel(RankerModel&&) = default;

  const RankerConfig& config() const { return config_; }
  const Lookups& lookups() const { return lookups_; }
  tensor::ParameterSet& parameters() { return params_; }
  const tensor::ParameterSet& parameters() const { return params_; }

  // Logits [B x 1]. `trace` is filled for the attention variants.
  tensor::Var forward(tensor::Tape& tape, std::span<const Example> batch,
                      AttentionTrace* trace = nullptr) const;
  // History matrix X before aggregation, [B*T x d_m].
  tensor::Var embed_history(tensor::Tape& tape, std::span<const Example> batch) const;
  tensor::Var embed_target(tensor::Tape& tape, std::span<const Example> batch) const;

  // History aggregation of X [B*T x d_m] -> [B*r x d_m], r = T or d_s.
  tensor::Var aggregate(tensor::Tape& tape, tensor::Var x, std::size_t batch,
                        AttentionTrace* trace = nullptr) const;

  std::vector<double> predict(std::span<const Example> batch) const;

  void freeze() { frozen_ = true; }
  bool frozen() const { return frozen_; }

  tensor::Checkpoint to_checkpoint() const;
  static RankerModel from_checkpoint(const tensor::Checkpoint& ckpt, Lookups lookups);

 private:
  RankerConfig config_;
  Lookups lookups_;
  tensor::ParameterSet params_;
  tensor::Parameter* target_table_ = nullptr;
  tensor::Parameter* history_table_ = nullptr;
  tensor::Parameter* age_table_ = nullptr;
  tensor::Parameter* position_table_ = nullptr;
  tensor::Mlp block_mlp_;
  tensor::Mlp top_mlp_;
  bool frozen_ = false;
};

struct NePoint {
  std::size_t events = 0;     // training events consumed at the window's end
  std::int64_t end_time = 0;  // timestamp of the window's last event
  double ne = 0.0;
};

struct TrainResult {
  std::vector<NePoint> curve;
  // NE of every pre-update prediction over the whole pass; NaN if single-class.
  double progressive_ne = 0.0;
  std::size_t steps = 0;
};

// One sequential pass in stream order. Each window of the NE curve scores
// events before the model trains on them.
TrainResult train_one_epoch(RankerModel& model, const corpus::Stream& stream,
                            std::span<const corpus::Event> events);

struct Evaluation {
  double ne = 0.0;
  std::vector<double> predictions;  // aligned with the input events
};

// Frozen-model scoring, optionally sharded across threads.
std::vector<double> predict_events(const RankerModel& model, const corpus::Stream& stream,
                                   std::span<const corpus::Event> events, std::size_t threads = 1);
Evaluation evaluate(const RankerModel& model, const corpus::Stream& stream,
                    std::span<const corpus::Event> events, std::size_t threads = 1);

}  // namespace semid::ranker
