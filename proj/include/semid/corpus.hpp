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

// Synthetic item corpus and impression stream.
//
// Items carry content embeddings from a nested Gaussian hierarchy, geometric
// lifetimes and static Zipf popularity. Events pick a uniform user and an
// alive item proportional to popularity; labels come from a logistic
// ground-truth CTR in the content embedding. Time is integer seconds from 0.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

#include "json.hpp"
#include "semid/random.hpp"

namespace semid::corpus {

inline constexpr std::int64_t kSecondsPerDay = 86400;

struct CorpusConfig {
  std::size_t items = 200000;
  std::size_t dim = 32;
  std::vector<std::size_t> branching{8, 8, 8};
  // Per-dimension std of each hierarchy level's offset, coarse to fine.
  std::vector<double> level_scales{1.0, 0.5, 0.25};
  double item_noise = 0.1;
  // Unset: calibrate so the top head_fraction of items hold head_share of weight.
  std::optional<double> zipf_exponent;
  double head_fraction = 0.001;
  double head_share = 0.25;
  double median_lifetime_days = 6.0;
  double horizon_days = 4.0;
  double eval_hours = 6.0;
  std::size_t users = 20000;
  std::size_t history_length = 8;
  std::size_t train_events = 1000000;
  std::size_t eval_events = 100000;
  // Ground truth: logit = <pref_u, e_i> / temperature + base_logit + bias_i.
  double temperature = 1.0;
  double global_pref_scale = 1.0;
  double user_pref_scale = 0.7;
  double base_logit = -2.2;
  double item_bias_std = 0.3;
  // A/A copies appended after the stream is drawn (inject_aa_pairs); 0 = none.
  std::size_t aa_pairs = 0;
  std::uint64_t seed = 1;

  void validate() const;
  std::int64_t horizon_seconds() const;
  std::int64_t eval_end_seconds() const;
  std::uint64_t hash() const;
};

void to_json(nlohmann::json& j, const CorpusConfig& c);
void from_json(const nlohmann::json& j, CorpusConfig& c);

struct Item {
  std::uint64_t raw_id = 0;
  std::vector<double> embedding;
  // Component index at each hierarchy level (local to the parent).
  std::vector<std::uint32_t> path;
  std::int64_t birth = 0;
  std::int64_t death = 0;  // first second the item is gone
  double weight = 0.0;
  double bias = 0.0;
  std::uint64_t copy_of = 0;  // nonzero for injected A/A copies

  bool alive_at(std::int64_t t) const { return birth <= t && t < death; }
};

struct User {
  std::uint32_t id = 0;
  std::vector<double> preference;
};

struct Corpus {
  CorpusConfig config;
  double zipf_exponent = 0.0;
  std::size_t initial_cohort = 0;  // items [0, initial_cohort) are born at t=0
  std::vector<Item> items;
  std::vector<User> users;

  void reindex();
  const Item& item(std::uint64_t raw_id) const;
  bool contains(std::uint64_t raw_id) const { return index_.count(raw_id) != 0; }
  std::size_t position(std::uint64_t raw_id) const;

 private:
  std::unordered_map<std::uint64_t, std::size_t> index_;
};

struct HistoryEntry {
  std::uint64_t raw_id = 0;
  std::int64_t time = 0;
};

struct Event {
  std::uint64_t id = 0;
  std::int64_t time = 0;
  std::uint32_t user = 0;
  std::uint64_t item = 0;
  std::uint8_t label = 0;
  bool eval = false;
  std::uint32_t history_begin = 0;
  std::uint32_t history_size = 0;
};

// Events in time order, train window first. Histories live in one pool,
// most recent click first.
struct Stream {
  std::vector<Event> events;
  std::vector<HistoryEntry> history_pool;
  std::size_t train_count = 0;

  std::span<const HistoryEntry> history(const Event& e) const {
    return std::span(history_pool).subspan(e.history_begin, e.history_size);
  }
  std::span<const Event> train() const { return std::span(events).first(train_count); }
  std::span<const Event> eval() const { return std::span(events).subspan(train_count); }
};

// Share of total Zipf weight held by the top ceil(fraction * n) ranks.
double head_weight_share(std::size_t n, double exponent, double fraction);

struct SkewCalibration {
  double exponent = 0.0;
  double share = 0.0;
  bool reached = true;
};
SkewCalibration calibrate_skew(const CorpusConfig& config);

// Per-second death probability giving the configured median lifetime.
double death_hazard(double median_days);

Corpus generate_items(const CorpusConfig& config);

double ground_truth_ctr(const User& user, const Item& item, const CorpusConfig& config);

Stream generate_stream(const Corpus& corpus);

// Fills every event's history: clicks by the same user with an earlier
// timestamp, most recent first, at most `length` entries.
void build_histories(Stream& stream, std::size_t length);

// Copies `count` items alive in the eval window under fresh raw IDs and
// appends them to the corpus. Returns (original, copy) pairs.
std::vector<std::pair<std::uint64_t, std::uint64_t>> inject_aa_pairs(Corpus& corpus,
                                                                     std::size_t count,
                                                                     std::uint64_t seed);

// Files. Each starts with the standard header line.
void save_corpus(const std::filesystem::path& dir, const Corpus& corpus);
Corpus load_corpus(const std::filesystem::path& dir);
void save_stream(const std::filesystem::path& path, const Stream& stream, const CorpusConfig& config);
Stream load_stream(const std::filesystem::path& path, const CorpusConfig& config);

}  // namespace semid::corpus
