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

#include "semid/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "semid/checkpoint.hpp"
#include "semid/errors.hpp"
#include "semid/io.hpp"
#include "semid/log.hpp"
#include "semid/random.hpp"

namespace semid::experiment {

namespace fs = std::filesystem;
using analysis::MetricsReport;
using tokenization::LookupKind;

// ---- config ----

ExperimentConfig ExperimentConfig::desk() {
  ExperimentConfig c;
  c.corpus.aa_pairs = 1000;
  c.rqvae.input_dim = c.corpus.dim;
  return c;
}

void ExperimentConfig::set_seed(std::uint64_t s) {
  seed = s;
  corpus.seed = s;
  rqvae.seed = s;
  ranker.seed = s;
  analysis.click_loss.seed = s;
}

void ExperimentConfig::validate() const {
  corpus.validate();
  rqvae.validate();
  ranker.validate();
  if (rqvae.input_dim != corpus.dim) {
    throw ConfigError("rqvae.input_dim (" + std::to_string(rqvae.input_dim) + ") must equal corpus.dim (" +
                      std::to_string(corpus.dim) + ")");
  }
  if (rqvae_sample != 0 && rqvae_sample < rqvae.codebook_size) {
    throw ConfigError("rqvae_sample must be 0 or at least the codebook size");
  }
  if (!(analysis.retention_short_days > 0.0 && analysis.retention_short_days < analysis.retention_long_days)) {
    throw ConfigError("analysis: need 0 < retention_short_days < retention_long_days");
  }
  if (analysis.cluster_collision_factor < 1.0) throw ConfigError("analysis: cluster_collision_factor must be >= 1");
}

std::uint64_t ExperimentConfig::hash() const {
  nlohmann::json j = *this;
  j.erase("out");
  return io::fnv1a64(j.dump());
}

void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  const auto& a = c.analysis;
  j = nlohmann::json{{"corpus", c.corpus},
                     {"rqvae", c.rqvae},
                     {"rqvae_sample", c.rqvae_sample},
                     {"ranker", c.ranker},
                     {"analysis",
                      {{"attention_examples", a.attention_examples},
                       {"click_loss_contexts", a.click_loss.contexts},
                       {"click_loss_candidates", a.click_loss.candidates},
                       {"click_loss_set_size", a.click_loss.set_size},
                       {"click_loss_seed", a.click_loss.seed},
                       {"cluster_collision_factor", a.cluster_collision_factor},
                       {"retention_long_days", a.retention_long_days},
                       {"retention_short_days", a.retention_short_days}}},
                     {"out", c.out},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  c = ExperimentConfig::desk();
  if (j.contains("corpus")) {
    // Unlisted fields keep desk values rather than library defaults.
    nlohmann::json merged = c.corpus;
    merged.merge_patch(j.at("corpus"));
    c.corpus = merged.get<corpus::CorpusConfig>();
  }
  if (j.contains("rqvae")) {
    nlohmann::json merged = c.rqvae;
    merged.merge_patch(j.at("rqvae"));
    c.rqvae = merged.get<rqvae::RqVaeConfig>();
    if (!j.at("rqvae").contains("input_dim")) c.rqvae.input_dim = c.corpus.dim;
  } else {
    c.rqvae.input_dim = c.corpus.dim;
  }
  c.rqvae_sample = j.value("rqvae_sample", c.rqvae_sample);
  if (j.contains("ranker")) {
    nlohmann::json merged = c.ranker;
    merged.merge_patch(j.at("ranker"));
    c.ranker = merged.get<ranker::RankerConfig>();
  }
  if (j.contains("analysis")) {
    const auto& a = j.at("analysis");
    auto& o = c.analysis;
    o.attention_examples = a.value("attention_examples", o.attention_examples);
    o.click_loss.contexts = a.value("click_loss_contexts", o.click_loss.contexts);
    o.click_loss.candidates = a.value("click_loss_candidates", o.click_loss.candidates);
    o.click_loss.set_size = a.value("click_loss_set_size", o.click_loss.set_size);
    o.click_loss.seed = a.value("click_loss_seed", o.click_loss.seed);
    o.cluster_collision_factor = a.value("cluster_collision_factor", o.cluster_collision_factor);
    o.retention_long_days = a.value("retention_long_days", o.retention_long_days);
    o.retention_short_days = a.value("retention_short_days", o.retention_short_days);
  }
  c.out = j.value("out", c.out);
  if (j.contains("seed")) c.set_seed(j.at("seed").get<std::uint64_t>());
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot read config " + path.string());
  try {
    return nlohmann::json::parse(in).get<ExperimentConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

// ---- hashes ----

std::uint64_t corpus_hash(const ExperimentConfig& c) { return c.corpus.hash(); }

std::uint64_t quantizer_hash(const ExperimentConfig& c, std::size_t levels) {
  auto q = c.rqvae;
  if (levels) q.levels = levels;
  nlohmann::json j = q;
  return io::fnv1a64(io::hex64(corpus_hash(c)) + "|" + j.dump() + "|" + std::to_string(c.rqvae_sample));
}

namespace {

std::size_t levels_of(const ExperimentConfig& c, const RankerRun& run) {
  return run.quantizer_levels ? run.quantizer_levels : c.rqvae.levels;
}

bool uses_semids(const ranker::RankerConfig& r) {
  return r.target.kind == LookupKind::SemanticId || r.history.kind == LookupKind::SemanticId;
}

std::uint64_t combine(const std::vector<std::uint64_t>& hashes) {
  std::string s;
  for (auto h : hashes) s += io::hex64(h);
  return io::fnv1a64(s);
}

void copy_metrics(MetricsReport& into, const MetricsReport& from, const std::string& prefix) {
  for (const auto& m : from.metrics()) {
    if (m.value) {
      into.set(prefix + m.name, *m.value, m.note);
    } else {
      into.unavailable(prefix + m.name, m.note);
    }
  }
}

std::ofstream open_out(const fs::path& path) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  return out;
}

void stamp(tensor::Checkpoint& ckpt, std::uint64_t hash, std::uint64_t seed) {
  ckpt.metadata["config_hash"] = io::hex64(hash);
  ckpt.metadata["seed"] = std::to_string(seed);
}

void require_stamp(const tensor::Checkpoint& ckpt, std::uint64_t hash, const fs::path& path) {
  auto it = ckpt.metadata.find("config_hash");
  if (it == ckpt.metadata.end() || io::parse_hex64(it->second) != hash) {
    throw FormatError(path.string() + ": config-hash mismatch (expected " + io::hex64(hash) + ")");
  }
}

}  // namespace

std::uint64_t ranker_hash(const ExperimentConfig& c, const RankerRun& run) {
  nlohmann::json j = run.config;
  return io::fnv1a64(io::hex64(quantizer_hash(c, levels_of(c, run))) + "|" + j.dump() + "|" +
                     std::to_string(run.train_from));
}

fs::path Layout::quantizer(std::size_t levels, std::size_t default_levels) const {
  if (levels == 0 || levels == default_levels) return root / "rqvae";
  return root / ("rqvae-l" + std::to_string(levels));
}

// ---- corpus ----

void gen_corpus(const ExperimentConfig& c, const Layout& where) {
  c.validate();
  log_info("generating corpus: " + std::to_string(c.corpus.items) + " items, " +
           std::to_string(c.corpus.train_events + c.corpus.eval_events) + " events");
  auto corp = corpus::generate_items(c.corpus);
  auto stream = corpus::generate_stream(corp);
  if (c.corpus.aa_pairs) corpus::inject_aa_pairs(corp, c.corpus.aa_pairs, derive_seed(c.corpus.seed, 0xaa));
  corpus::save_corpus(where.corpus(), corp);
  corpus::save_stream(where.stream(), stream, c.corpus);
}

namespace {

corpus::Corpus load_corpus_checked(const ExperimentConfig& c, const Layout& where) {
  auto corp = corpus::load_corpus(where.corpus());
  if (corp.config.hash() != corpus_hash(c)) {
    throw FormatError(where.corpus().string() + ": config-hash mismatch (corpus was generated from a different config)");
  }
  return corp;
}

}  // namespace

Loaded load_inputs(const ExperimentConfig& c, const Layout& where) {
  Loaded in;
  in.corpus = load_corpus_checked(c, where);
  in.stream = corpus::load_stream(where.stream(), c.corpus);
  return in;
}

// ---- quantizer ----

void train_quantizer(const ExperimentConfig& c, const Layout& where, std::size_t levels) {
  c.validate();
  auto qc = c.rqvae;
  if (levels) qc.levels = levels;
  const std::uint64_t qhash = quantizer_hash(c, qc.levels);
  const auto dir = where.quantizer(qc.levels, c.rqvae.levels);
  auto corp = load_corpus_checked(c, where);

  std::vector<const corpus::Item*> originals;
  for (const auto& it : corp.items) {
    if (!it.copy_of) originals.push_back(&it);
  }
  const std::size_t n = c.rqvae_sample ? std::min(c.rqvae_sample, originals.size()) : originals.size();
  tensor::Tensor x({n, c.corpus.dim}, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& e = originals[i * originals.size() / n]->embedding;
    std::copy(e.begin(), e.end(), x.row(i).begin());
  }
  log_info("training quantizer: K=" + std::to_string(qc.codebook_size) + " L=" + std::to_string(qc.levels) +
           " on " + std::to_string(n) + " items");
  rqvae::RqVaeModel model(qc);
  auto curve = rqvae::train(model, x);

  std::vector<std::uint64_t> ids;
  std::unordered_map<std::uint64_t, std::vector<double>> emb;
  for (const auto& it : corp.items) {
    ids.push_back(it.raw_id);
    emb.emplace(it.raw_id, it.embedding);
  }
  auto assigned = rqvae::assign(model, ids, emb);

  fs::create_directories(dir);
  auto ckpt = model.to_checkpoint();
  stamp(ckpt, qhash, qc.seed);
  tensor::save_checkpoint(dir / "model.ckpt", ckpt);
  assigned.table.save(dir / "semids.tsv", io::FileHeader{"semid-table", 1, qhash, qc.seed});

  std::vector<std::uint32_t> top, labels;
  std::set<SemanticId> distinct;
  for (const auto& it : corp.items) {
    if (it.copy_of) continue;
    if (const auto* id = assigned.table.find(it.raw_id)) {
      top.push_back(id->codes[0]);
      labels.push_back(it.path.empty() ? 0 : it.path[0]);
      distinct.insert(*id);
    }
  }
  MetricsReport r("rqvae", qhash, qc.seed);
  r.set("train_items", static_cast<double>(n));
  r.set("post_init_mse", curve.post_init_mse);
  r.set("final_mse", curve.final_mse);
  r.set("mse_reduction", 1.0 - curve.final_mse / curve.post_init_mse);
  r.set("top_level_purity", rqvae::purity(top, labels));
  r.set("distinct_ids", static_cast<double>(distinct.size()));
  r.set("assign_errors", static_cast<double>(assigned.errors.size()));
  r.save(dir / "report");
}

std::shared_ptr<const SemanticIdTable> load_semids(const ExperimentConfig& c, const Layout& where,
                                                   std::size_t levels) {
  const std::size_t L = levels ? levels : c.rqvae.levels;
  const auto path = where.quantizer(L, c.rqvae.levels) / "semids.tsv";
  io::FileHeader h;
  auto table = std::make_shared<SemanticIdTable>(SemanticIdTable::load(path, &h));
  io::require_hash(h, quantizer_hash(c, L), path);
  return table;
}

// ---- ranker ----

namespace {

std::vector<corpus::Event> train_slice(const corpus::Stream& s, std::int64_t from) {
  std::vector<corpus::Event> out;
  for (const auto& e : s.train()) {
    if (e.time >= from) out.push_back(e);
  }
  return out;
}

std::vector<std::pair<std::uint64_t, std::uint64_t>> aa_pairs_of(const corpus::Corpus& corp) {
  std::vector<std::pair<std::uint64_t, std::uint64_t>> out;
  for (const auto& it : corp.items) {
    if (it.copy_of) out.emplace_back(it.copy_of, it.raw_id);
  }
  return out;
}

nlohmann::json run_json(const RankerRun& run, std::uint64_t hash) {
  return nlohmann::json{{"semid_lab", {{"kind", "ranker-run"}, {"version", 1}, {"config_hash", io::hex64(hash)}}},
                        {"name", run.name},
                        {"config", run.config},
                        {"quantizer_levels", run.quantizer_levels},
                        {"train_from", run.train_from}};
}

}  // namespace

RankerOutputs train_ranker(const ExperimentConfig& c, const Layout& where, const RankerRun& run,
                           std::size_t threads) {
  return train_ranker(c, where, run, load_inputs(c, where), threads);
}

RankerOutputs train_ranker(const ExperimentConfig& c, const Layout& where, const RankerRun& run,
                           const Loaded& in, std::size_t threads) {
  run.config.validate();
  const std::uint64_t rhash = ranker_hash(c, run);
  const std::uint64_t seed = run.config.seed;
  std::shared_ptr<const SemanticIdTable> semids;
  if (uses_semids(run.config)) semids = load_semids(c, where, levels_of(c, run));

  const auto events = train_slice(in.stream, run.train_from);
  if (events.empty()) throw ConfigError("ranker run " + run.name + ": no training events after train_from");
  log_info("training ranker '" + run.name + "' on " + std::to_string(events.size()) + " events");
  ranker::RankerModel model(run.config, ranker::make_lookups(run.config, in.stream, semids));
  auto result = ranker::train_one_epoch(model, in.stream, events);
  model.freeze();

  const auto dir = where.run(run.name);
  fs::create_directories(dir);
  auto ckpt = model.to_checkpoint();
  stamp(ckpt, rhash, seed);
  tensor::save_checkpoint(dir / "model.ckpt", ckpt);
  open_out(dir / "run.json") << run_json(run, rhash).dump(2) << '\n';

  const auto segments = analysis::build_segments(events);
  const io::FileHeader header{"predictions", 1, rhash, seed};
  auto ev = ranker::evaluate(model, in.stream, in.stream.eval(), threads);
  auto recs = analysis::make_records(in.stream.eval(), ev.predictions);
  analysis::tag_segments(recs, segments);
  analysis::save_predictions(dir / "predictions.tsv", header, recs);

  const auto windows = analysis::default_drift_windows(c.corpus.horizon_seconds());
  const auto drift = analysis::drift_events(events, windows);
  auto drift_recs = analysis::make_records(drift, ranker::predict_events(model, in.stream, drift, threads));
  analysis::tag_segments(drift_recs, segments);
  analysis::save_predictions(dir / "drift.tsv", header, drift_recs);

  analysis::Series curve{{"events", "end_time", "ne"}, {}};
  for (const auto& p : result.curve) {
    curve.rows.push_back({static_cast<double>(p.events), static_cast<double>(p.end_time), p.ne});
  }
  curve.save(dir / "curve.tsv", {"ne-curve", 1, rhash, seed});

  const auto pairs = aa_pairs_of(in.corpus);
  if (!pairs.empty()) {
    analysis::save_aa_pairs(dir / "aa.tsv", {"aa-pairs", 1, rhash, seed},
                            analysis::score_aa_pairs(model, in.stream, pairs));
  }
  return RankerOutputs{ev.ne, result.progressive_ne};
}

ranker::RankerModel load_ranker(const ExperimentConfig& c, const Layout& where, const RankerRun& run,
                                const Loaded& in) {
  const auto path = where.run(run.name) / "model.ckpt";
  auto ckpt = tensor::load_checkpoint(path);
  require_stamp(ckpt, ranker_hash(c, run), path);
  std::shared_ptr<const SemanticIdTable> semids;
  if (uses_semids(run.config)) semids = load_semids(c, where, levels_of(c, run));
  return ranker::RankerModel::from_checkpoint(ckpt, ranker::make_lookups(run.config, in.stream, semids));
}

// ---- analyses ----

namespace {

std::vector<analysis::PredictionRecord> load_dump(const ExperimentConfig& c, const Layout& where,
                                                  const RankerRun& run, const char* file) {
  const auto path = where.run(run.name) / file;
  io::FileHeader h;
  auto recs = analysis::load_predictions(path, &h);
  io::require_hash(h, ranker_hash(c, run), path);
  return recs;
}

std::vector<std::uint64_t> run_hashes(const ExperimentConfig& c, const std::vector<RankerRun>& runs) {
  std::vector<std::uint64_t> out;
  for (const auto& r : runs) out.push_back(ranker_hash(c, r));
  return out;
}

const std::vector<std::string> kSegmentNames{"head", "torso", "tail", "new", "seen", "overall"};

}  // namespace

MetricsReport analyze_segments(const ExperimentConfig& c, const Layout& where, const std::vector<RankerRun>& runs,
                               const Loaded& in) {
  if (runs.empty()) throw ContractError("segments: no ranker runs");
  MetricsReport r("segments", combine(run_hashes(c, runs)), c.seed);
  const auto seg = analysis::build_segments(in.stream.train());
  const double seen = static_cast<double>(seg.head_items + seg.torso_items + seg.tail_items);
  r.set("items.head_share", static_cast<double>(seg.head_items) / seen);
  r.set("items.torso_share", static_cast<double>(seg.torso_items) / seen);
  r.set("items.tail_share", static_cast<double>(seg.tail_items) / seen);
  for (const auto& run : runs) {
    copy_metrics(r, analysis::segment_ne(load_dump(c, where, run, "predictions.tsv"), {}), run.name + ".");
  }
  // Relative NE change of the last run against each earlier one.
  const auto& subject = runs.back().name;
  for (std::size_t i = 0; i + 1 < runs.size(); ++i) {
    for (const auto& s : kSegmentNames) {
      const std::string key = "gain." + s + "." + subject + "_vs_" + runs[i].name;
      auto a = r.get(subject + ".ne." + s), b = r.get(runs[i].name + ".ne." + s);
      if (a && b) {
        r.set(key, (*a - *b) / *b);
      } else {
        r.unavailable(key, "segment NE unavailable");
      }
    }
  }
  return r;
}

MetricsReport analyze_drift(const ExperimentConfig& c, const Layout& where, const std::vector<RankerRun>& runs,
                            const Loaded& in) {
  (void)in;
  if (runs.empty()) throw ContractError("drift-gap: no ranker runs");
  MetricsReport r("drift-gap", combine(run_hashes(c, runs)), c.seed);
  const auto w = analysis::default_drift_windows(c.corpus.horizon_seconds());
  r.set("window.early_begin", static_cast<double>(w.early.begin));
  r.set("window.early_end", static_cast<double>(w.early.end));
  r.set("window.late_begin", static_cast<double>(w.late.begin));
  r.set("window.late_end", static_cast<double>(w.late.end));
  for (const auto& run : runs) {
    const auto recs = load_dump(c, where, run, "drift.tsv");
    auto g = analysis::drifting_gap(recs, w);
    r.set(run.name + ".gap.overall", g.gap);
    r.set(run.name + ".ne.early", g.early_ne);
    r.set(run.name + ".ne.late", g.late_ne);
    for (const char* s : {"head", "torso", "tail"}) {
      std::vector<analysis::PredictionRecord> part;
      for (const auto& rec : recs) {
        if (rec.segment == s) part.push_back(rec);
      }
      try {
        r.set(run.name + ".gap." + s, analysis::drifting_gap(part, w).gap);
      } catch (const MetricError& e) {
        r.unavailable(run.name + ".gap." + s, e.what());
      }
    }
  }
  return r;
}

MetricsReport analyze_retention(const ExperimentConfig& c, const Layout& where,
                                const std::vector<std::pair<RankerRun, RankerRun>>& runs) {
  if (runs.empty()) throw ContractError("retention: no run pairs");
  std::vector<std::uint64_t> hashes;
  for (const auto& [s, l] : runs) {
    hashes.push_back(ranker_hash(c, s));
    hashes.push_back(ranker_hash(c, l));
  }
  MetricsReport r("retention", combine(hashes), c.seed);
  for (const auto& [short_run, long_run] : runs) {
    auto s = analysis::records_ne(load_dump(c, where, short_run, "predictions.tsv"));
    auto l = analysis::records_ne(load_dump(c, where, long_run, "predictions.tsv"));
    if (!s || !l) throw MetricError("retention: single-class eval set");
    const std::string p = long_run.name + ".";
    r.set(p + "ne.short", *s);
    r.set(p + "ne.long", *l);
    r.set(p + "gain", *l - *s);
    r.set(p + "gain_relative", (*l - *s) / *s);
  }
  return r;
}

MetricsReport analyze_clusters(const ExperimentConfig& c, const Layout& where, const RankerRun& ie_run,
                               const Loaded& in) {
  if (ie_run.config.target.kind != LookupKind::IndividualEmbedding) {
    throw ContractError("clusters: needs a run with individual target embeddings");
  }
  auto model = load_ranker(c, where, ie_run, in);
  auto semids = load_semids(c, where);
  const auto& table = model.parameters().get("target.table").value;
  const auto& vocab = *model.lookups().target.vocabulary();

  std::unordered_map<std::uint64_t, std::vector<double>> emb;
  for (const auto& it : in.corpus.items) {
    if (it.copy_of) continue;
    const std::size_t row = vocab.row(it.raw_id);
    if (row == vocab.reserved_row()) continue;
    auto v = table.row(row);
    emb.emplace(it.raw_id, std::vector<double>(v.begin(), v.end()));
  }
  const auto H = static_cast<std::uint64_t>(
      std::max(1.0, std::ceil(static_cast<double>(emb.size()) / c.analysis.cluster_collision_factor)));
  std::unordered_map<std::uint64_t, std::uint64_t> by_hash, by_code;
  std::map<SemanticId, std::uint64_t> code_key;
  for (const auto& [raw, v] : emb) {
    by_hash[raw] = tokenization::random_hash(raw, H, c.ranker.target.hash_seed);
    if (const auto* id = semids->find(raw)) {
      by_code[raw] = code_key.emplace(*id, code_key.size()).first->second;
    }
  }
  // Keys from an ordered map: assignment order must not depend on hashing.
  std::map<std::uint64_t, SemanticId> ordered;
  for (const auto& [raw, k] : by_code) ordered.emplace(raw, *semids->find(raw));
  code_key.clear();
  by_code.clear();
  for (const auto& [raw, id] : ordered) by_code[raw] = code_key.emplace(id, code_key.size()).first->second;

  MetricsReport r("clusters", combine({ranker_hash(c, ie_run), quantizer_hash(c, c.rqvae.levels)}), c.seed);
  r.set("items", static_cast<double>(emb.size()));
  r.set("rh.rows", static_cast<double>(H));
  r.set("semid.codes", static_cast<double>(code_key.size()));
  analysis::add_geometry(r, "rh", analysis::cluster_geometry(emb, by_hash, c.seed));
  analysis::add_geometry(r, "semid", analysis::cluster_geometry(emb, by_code, c.seed));
  return r;
}

MetricsReport analyze_attention(const ExperimentConfig& c, const Layout& where, const std::vector<RankerRun>& runs,
                                const Loaded& in) {
  MetricsReport r("attention", combine(run_hashes(c, runs)), c.seed);
  const auto eval = in.stream.eval();
  const auto events = eval.first(std::min(c.analysis.attention_examples, eval.size()));
  r.set("examples", static_cast<double>(events.size()));
  for (const auto& run : runs) {
    if (run.config.aggregation == ranker::Aggregation::Bypass) {
      r.unavailable(run.name + ".entropy", "bypass has no attention");
      continue;
    }
    auto model = load_ranker(c, where, run, in);
    const bool square = run.config.aggregation == ranker::Aggregation::Transformer;
    auto s = analysis::attention_metrics(analysis::collect_attention(model, in.stream, events), square);
    r.set(run.name + ".first", s.first);
    r.set(run.name + ".pad", s.pad);
    r.set(run.name + ".entropy", s.entropy);
    if (s.self) {
      r.set(run.name + ".self", *s.self);
    } else {
      r.unavailable(run.name + ".self", "pooling queries are seeds, not positions");
    }
  }
  return r;
}

MetricsReport analyze_aar(const ExperimentConfig& c, const Layout& where, const std::vector<RankerRun>& runs,
                          const Loaded& in) {
  if (aa_pairs_of(in.corpus).empty()) {
    throw ContractError("precondition: the corpus has no injected A/A pairs (set corpus.aa_pairs > 0)");
  }
  MetricsReport r("aar", combine(run_hashes(c, runs)), c.seed);
  for (const auto& run : runs) {
    const auto path = where.run(run.name) / "aa.tsv";
    io::FileHeader h;
    auto pairs = analysis::load_aa_pairs(path, &h);
    io::require_hash(h, ranker_hash(c, run), path);
    copy_metrics(r, analysis::aar_report(pairs, {}), run.name + ".");
  }
  return r;
}

MetricsReport analyze_click_loss(const ExperimentConfig& c, const Layout& where, const RankerRun& run,
                                 const Loaded& in) {
  auto model = load_ranker(c, where, run, in);
  auto semids = load_semids(c, where, levels_of(c, run));
  auto rates = analysis::click_loss_analog(model, in.corpus, in.stream, *semids, c.analysis.click_loss);
  MetricsReport r("click-loss", combine({ranker_hash(c, run), quantizer_hash(c, levels_of(c, run))}), c.seed);
  for (const auto& d : rates) {
    const std::string p = "depth" + std::to_string(d.depth) + ".";
    r.set(p + "rate", d.rate);
    r.set(p + "swaps", static_cast<double>(d.swaps));
    r.set(p + "skips", static_cast<double>(d.skips));
  }
  return r;
}

MetricsReport analyze_distributions(const ExperimentConfig& c, const Layout& where, const Loaded& in) {
  auto semids = load_semids(c, where);
  const std::uint64_t qhash = quantizer_hash(c, c.rqvae.levels);
  auto d = analysis::distribution_exports(in.corpus, in.stream, *semids);
  const io::FileHeader h{"series", 1, qhash, c.seed};
  d.cumulative_impressions.save(where.series() / "cumulative_impressions.tsv", h);
  d.survival.save(where.series() / "survival.tsv", h);
  d.raw_clicks.save(where.series() / "clicks_raw.tsv", h);
  d.semid_clicks.save(where.series() / "clicks_semid.tsv", h);

  MetricsReport r("distributions", qhash, c.seed);
  // Impression share of the top head_fraction of items, read off the curve.
  const double frac = c.corpus.head_fraction;
  double head = 0.0;
  for (const auto& row : d.cumulative_impressions.rows) {
    if (row[0] <= frac + 1e-12) head = row[1];
  }
  r.set("impressions.head_share", head);
  for (const auto& row : d.survival.rows) {
    if (std::abs(row[0] - c.corpus.median_lifetime_days) < 1e-9) r.set("survival.at_median_lifetime", row[1]);
  }
  r.set("gini.raw", d.gini_raw);
  r.set("gini.semid", d.gini_semid);
  return r;
}

// ---- repro ----

RankerRun target_run(const ExperimentConfig& c, LookupKind target) {
  RankerRun run;
  run.config = c.ranker;
  run.config.target.kind = target;
  run.config.history.kind = LookupKind::RandomHash;
  run.name = tokenization::lookup_kind_name(target);
  return run;
}

RankerRun history_run(const ExperimentConfig& c, ranker::Aggregation agg, LookupKind history) {
  RankerRun run;
  run.config = c.ranker;
  run.config.aggregation = agg;
  run.config.target.kind = LookupKind::RandomHash;
  run.config.history.kind = history;
  run.name = ranker::aggregation_name(agg) + "-" + tokenization::lookup_kind_name(history);
  return run;
}

const std::vector<std::string>& repro_targets() {
  static const std::vector<std::string> kTargets{"t2", "t3a", "t3b", "t4", "t5", "t6", "f6", "f7"};
  return kTargets;
}

namespace {

MetricsReport repro_t2(const ExperimentConfig& c, const Layout& where, const Loaded& in, std::size_t threads) {
  const std::size_t L = c.rqvae.levels;
  struct Row {
    const char* name;
    tokenization::Variant variant;
    std::size_t n;
    std::size_t levels;
  };
  const std::vector<Row> rows{{"trigram", tokenization::Variant::Trigram, 3, std::max<std::size_t>(L, 3)},
                              {"fourgram", tokenization::Variant::Fourgram, 4, std::max<std::size_t>(L, 4)},
                              {"all-bigrams", tokenization::Variant::AllBigrams, 2, std::max<std::size_t>(L, 4)},
                              {"prefix-3gram", tokenization::Variant::PrefixNgram, 3, std::max<std::size_t>(L, 3)}};
  std::set<std::size_t> depths{L};
  for (const auto& row : rows) depths.insert(row.levels);
  for (auto d : depths) train_quantizer(c, where, d);

  std::vector<RankerRun> runs{target_run(c, LookupKind::RandomHash)};
  for (const auto& row : rows) {
    RankerRun run = target_run(c, LookupKind::SemanticId);
    run.name = std::string("semid-") + row.name;
    run.config.target.variant = row.variant;
    run.config.target.ngram = row.n;
    run.quantizer_levels = row.levels == L ? 0 : row.levels;
    runs.push_back(run);
  }
  MetricsReport r("t2", combine(run_hashes(c, runs)), c.seed);
  std::vector<RankerOutputs> outs;
  for (const auto& run : runs) outs.push_back(train_ranker(c, where, run, in, threads));
  for (std::size_t i = 0; i < runs.size(); ++i) {
    r.set(runs[i].name + ".train_ne", outs[i].progressive_ne);
    r.set(runs[i].name + ".eval_ne", outs[i].eval_ne);
    if (i) {
      r.set(runs[i].name + ".train_gain_vs_rh", (outs[i].progressive_ne - outs[0].progressive_ne) / outs[0].progressive_ne);
      r.set(runs[i].name + ".eval_gain_vs_rh", (outs[i].eval_ne - outs[0].eval_ne) / outs[0].eval_ne);
    }
  }
  return r;
}

std::vector<RankerRun> segment_runs(const ExperimentConfig& c) {
  return {target_run(c, LookupKind::IndividualEmbedding), target_run(c, LookupKind::RandomHash),
          target_run(c, LookupKind::SemanticId)};
}

}  // namespace

MetricsReport repro(const std::string& target, const ExperimentConfig& base, const Layout& where,
                    std::size_t threads) {
  if (std::find(repro_targets().begin(), repro_targets().end(), target) == repro_targets().end()) {
    throw ConfigError("unknown repro target '" + target + "'");
  }
  ExperimentConfig c = base;
  if (target == "t4") {
    // Same per-day event rate, longer horizon.
    const double scale = c.analysis.retention_long_days / c.corpus.horizon_days;
    c.corpus.train_events = static_cast<std::size_t>(std::llround(static_cast<double>(c.corpus.train_events) * scale));
    c.corpus.horizon_days = c.analysis.retention_long_days;
  }
  c.validate();
  gen_corpus(c, where);
  train_quantizer(c, where);
  const Loaded in = load_inputs(c, where);

  MetricsReport r;
  if (target == "t2") {
    r = repro_t2(c, where, in, threads);
  } else if (target == "t3a" || target == "t3b") {
    auto runs = segment_runs(c);
    for (const auto& run : runs) train_ranker(c, where, run, in, threads);
    r = target == "t3a" ? analyze_segments(c, where, runs, in) : analyze_drift(c, where, runs, in);
  } else if (target == "t4") {
    const auto short_from =
        c.corpus.horizon_seconds() -
        static_cast<std::int64_t>(std::llround(c.analysis.retention_short_days * corpus::kSecondsPerDay));
    std::vector<std::pair<RankerRun, RankerRun>> pairs;
    for (auto kind : {LookupKind::RandomHash, LookupKind::SemanticId}) {
      RankerRun lng = target_run(c, kind), shrt = lng;
      shrt.name += "-short";
      shrt.train_from = short_from;
      train_ranker(c, where, shrt, in, threads);
      train_ranker(c, where, lng, in, threads);
      pairs.emplace_back(shrt, lng);
    }
    r = analyze_retention(c, where, pairs);
  } else if (target == "t5") {
    auto ie = target_run(c, LookupKind::IndividualEmbedding);
    train_ranker(c, where, ie, in, threads);
    r = analyze_clusters(c, where, ie, in);
  } else if (target == "t6") {
    std::vector<RankerRun> runs;
    for (auto agg : {ranker::Aggregation::Bypass, ranker::Aggregation::Transformer, ranker::Aggregation::Pma}) {
      for (auto kind : {LookupKind::RandomHash, LookupKind::SemanticId}) runs.push_back(history_run(c, agg, kind));
    }
    std::vector<RankerOutputs> outs;
    for (const auto& run : runs) outs.push_back(train_ranker(c, where, run, in, threads));
    r = analyze_attention(c, where, runs, in);
    for (std::size_t i = 0; i < runs.size(); ++i) {
      r.set(runs[i].name + ".train_ne", outs[i].progressive_ne);
      r.set(runs[i].name + ".eval_ne", outs[i].eval_ne);
      if (i % 2 == 1) {
        const std::string agg = ranker::aggregation_name(runs[i].config.aggregation);
        r.set(agg + ".train_gain", (outs[i].progressive_ne - outs[i - 1].progressive_ne) / outs[i - 1].progressive_ne);
        r.set(agg + ".eval_gain", (outs[i].eval_ne - outs[i - 1].eval_ne) / outs[i - 1].eval_ne);
      }
    }
  } else if (target == "f6") {
    auto run = target_run(c, LookupKind::SemanticId);
    train_ranker(c, where, run, in, threads);
    r = analyze_click_loss(c, where, run, in);
  } else {
    r = analyze_distributions(c, where, in);
  }
  MetricsReport out(target, r.config_hash(), c.seed);
  copy_metrics(out, r, "");
  out.save(where.reports() / target);
  return out;
}

}  // namespace semid::experiment
