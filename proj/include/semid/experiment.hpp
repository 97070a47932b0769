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

// File-based experiment stages and the repro pipelines built from them.
//
// Run directory layout:
//   corpus/{config.json,items.tsv,users.tsv,stream.tsv}
//   <quantizer>/{model.ckpt,semids.tsv,report.json}          default "rqvae"
//   ranker/<run>/{model.ckpt,predictions.tsv,drift.tsv,curve.tsv,aa.tsv}
//   reports/<kind>.{json,txt}, series/*.tsv
//
// Each stage hashes its own config together with the hash of the stage it
// reads from, stamps every output with it and refuses inputs stamped with a
// different value.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "semid/analysis.hpp"
#include "semid/corpus.hpp"
#include "semid/ranker.hpp"
#include "semid/rqvae.hpp"
#include "semid/semantic_id.hpp"

namespace semid::experiment {

struct AnalysisOptions {
  std::size_t attention_examples = 1000;
  analysis::ClickLossOptions click_loss{1000, 200, 10, 0};
  double cluster_collision_factor = 5.0;
  // Retention: the long run sees retention_long_days of data, the short run
  // only the final retention_short_days of it.
  double retention_long_days = 5.0;
  double retention_short_days = 1.0;
};

struct ExperimentConfig {
  corpus::CorpusConfig corpus;
  rqvae::RqVaeConfig rqvae;
  // Items used to fit the quantizer (evenly strided); 0 = all.
  std::size_t rqvae_sample = 20000;
  ranker::RankerConfig ranker;
  AnalysisOptions analysis;
  std::string out = "runs";
  std::uint64_t seed = 1;

  // Desk-scale defaults: 2e5 items, K = 64, L = 3, d_m = 16, H = I / 3.
  static ExperimentConfig desk();

  // Propagates `seed` into every stage config.
  void set_seed(std::uint64_t s);
  void validate() const;
  std::uint64_t hash() const;
};

void to_json(nlohmann::json& j, const ExperimentConfig& c);
void from_json(const nlohmann::json& j, ExperimentConfig& c);
ExperimentConfig load_config(const std::filesystem::path& path);

// ---- stage hashes ----

std::uint64_t corpus_hash(const ExperimentConfig& c);
std::uint64_t quantizer_hash(const ExperimentConfig& c, std::size_t levels);

// One ranker training run. `train_from` drops training events before that
// second (used for the short retention run).
struct RankerRun {
  std::string name;
  ranker::RankerConfig config;
  std::size_t quantizer_levels = 0;  // 0: the experiment's rqvae.levels
  std::int64_t train_from = 0;
};

std::uint64_t ranker_hash(const ExperimentConfig& c, const RankerRun& run);

// ---- stages ----

struct Layout {
  std::filesystem::path root;
  std::filesystem::path corpus() const { return root / "corpus"; }
  std::filesystem::path stream() const { return root / "corpus" / "stream.tsv"; }
  std::filesystem::path quantizer(std::size_t levels, std::size_t default_levels) const;
  std::filesystem::path run(const std::string& name) const { return root / "ranker" / name; }
  std::filesystem::path reports() const { return root / "reports"; }
  std::filesystem::path series() const { return root / "series"; }
};

struct Loaded {
  corpus::Corpus corpus;
  corpus::Stream stream;
};

void gen_corpus(const ExperimentConfig& c, const Layout& where);
Loaded load_inputs(const ExperimentConfig& c, const Layout& where);

void train_quantizer(const ExperimentConfig& c, const Layout& where, std::size_t levels = 0);
std::shared_ptr<const SemanticIdTable> load_semids(const ExperimentConfig& c, const Layout& where,
                                                   std::size_t levels = 0);

struct RankerOutputs {
  double eval_ne = 0.0;
  double progressive_ne = 0.0;
};

RankerOutputs train_ranker(const ExperimentConfig& c, const Layout& where, const RankerRun& run,
                           std::size_t threads = 1);
RankerOutputs train_ranker(const ExperimentConfig& c, const Layout& where, const RankerRun& run,
                           const Loaded& in, std::size_t threads = 1);

// Restores a trained ranker with the lookups it was trained with.
ranker::RankerModel load_ranker(const ExperimentConfig& c, const Layout& where, const RankerRun& run,
                                const Loaded& in);

// ---- analyses over stage outputs ----

analysis::MetricsReport analyze_segments(const ExperimentConfig& c, const Layout& where,
                                         const std::vector<RankerRun>& runs, const Loaded& in);
analysis::MetricsReport analyze_drift(const ExperimentConfig& c, const Layout& where,
                                      const std::vector<RankerRun>& runs, const Loaded& in);
// Pairs of (short, long) runs.
analysis::MetricsReport analyze_retention(const ExperimentConfig& c, const Layout& where,
                                          const std::vector<std::pair<RankerRun, RankerRun>>& runs);
analysis::MetricsReport analyze_clusters(const ExperimentConfig& c, const Layout& where,
                                         const RankerRun& ie_run, const Loaded& in);
analysis::MetricsReport analyze_attention(const ExperimentConfig& c, const Layout& where,
                                          const std::vector<RankerRun>& runs, const Loaded& in);
analysis::MetricsReport analyze_aar(const ExperimentConfig& c, const Layout& where,
                                    const std::vector<RankerRun>& runs, const Loaded& in);
analysis::MetricsReport analyze_click_loss(const ExperimentConfig& c, const Layout& where,
                                           const RankerRun& run, const Loaded& in);
analysis::MetricsReport analyze_distributions(const ExperimentConfig& c, const Layout& where,
                                              const Loaded& in);

// ---- repro pipelines ----

// Target-item runs with RH history, as in the segment experiments.
RankerRun target_run(const ExperimentConfig& c, tokenization::LookupKind target);
// History-feature runs with an RH target, as in the aggregation experiments.
RankerRun history_run(const ExperimentConfig& c, ranker::Aggregation agg, tokenization::LookupKind history);

const std::vector<std::string>& repro_targets();
// Runs every stage a target needs under where.root (reusing nothing) and
// writes reports/<target>.{json,txt}.
analysis::MetricsReport repro(const std::string& target, const ExperimentConfig& c, const Layout& where,
                              std::size_t threads = 1);

}  // namespace semid::experiment
