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

#include "semid/ranker.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <thread>

#include "semid/errors.hpp"
#include "semid/metrics.hpp"

namespace semid::ranker {

using tensor::Parameter;
using tensor::Tape;
using tensor::Tensor;
using tensor::Var;
using tokenization::LookupKind;

namespace {

Tensor normal_tensor(tensor::Shape shape, double stddev, Rng& rng) {
  Tensor t(std::move(shape), 0.0);
  fill_normal(rng, t.data(), stddev);
  return t;
}

Tensor glorot(std::size_t in, std::size_t out, Rng& rng) {
  Tensor t({in, out}, 0.0);
  fill_uniform(rng, t.data(), std::sqrt(6.0 / static_cast<double>(in + out)));
  return t;
}

constexpr std::size_t kPredictBatch = 1024;

}  // namespace

std::string aggregation_name(Aggregation a) {
  switch (a) {
    case Aggregation::Bypass: return "bypass";
    case Aggregation::Transformer: return "transformer";
    case Aggregation::Pma: return "pma";
  }
  return "?";
}

Aggregation parse_aggregation(std::string_view name) {
  if (name == "bypass") return Aggregation::Bypass;
  if (name == "transformer") return Aggregation::Transformer;
  if (name == "pma") return Aggregation::Pma;
  throw ConfigError("unknown aggregation '" + std::string(name) + "' (bypass|transformer|pma)");
}

std::size_t age_bucket(std::int64_t age_seconds) {
  const auto age = static_cast<std::uint64_t>(std::max<std::int64_t>(age_seconds, 0));
  const std::size_t b = static_cast<std::size_t>(std::bit_width(age + 1)) - 1;
  return std::min(b, kAgeBuckets - 1);
}

void RankerConfig::validate() const {
  if (embedding_dim == 0) throw ConfigError("ranker: embedding_dim must be positive");
  if (attention_dim != embedding_dim) {
    throw ConfigError("ranker: attention_dim must equal embedding_dim (residual connections)");
  }
  if (history_length == 0) throw ConfigError("ranker: history_length must be positive");
  if (aggregation == Aggregation::Pma && pma_seeds == 0) throw ConfigError("ranker: pma_seeds must be positive");
  if (batch_size == 0) throw ConfigError("ranker: batch_size must be positive");
  if (learning_rate < 0.0) throw ConfigError("ranker: learning_rate must be >= 0");
  if (ne_window == 0) throw ConfigError("ranker: ne_window must be positive");
  for (const auto* f : {&target, &history}) {
    if (f->kind != LookupKind::IndividualEmbedding && f->table_size == 0) {
      throw ConfigError("ranker: RH/SemID features need a table size");
    }
  }
}

std::size_t RankerConfig::interaction_vectors() const {
  return 1 + (aggregation == Aggregation::Pma ? pma_seeds : history_length);
}

void to_json(nlohmann::json& j, const FeatureSpec& f) {
  j = nlohmann::json{{"kind", tokenization::lookup_kind_name(f.kind)},
                     {"table_size", f.table_size},
                     {"variant", tokenization::variant_name(f.variant)},
                     {"ngram", f.ngram},
                     {"hash_seed", f.hash_seed}};
}

void from_json(const nlohmann::json& j, FeatureSpec& f) {
  FeatureSpec d;
  f.kind = tokenization::parse_lookup_kind(j.value("kind", tokenization::lookup_kind_name(d.kind)));
  f.table_size = j.value("table_size", d.table_size);
  f.variant = tokenization::parse_variant(j.value("variant", tokenization::variant_name(d.variant)));
  f.ngram = j.value("ngram", d.ngram);
  f.hash_seed = j.value("hash_seed", d.hash_seed);
}

void to_json(nlohmann::json& j, const RankerConfig& c) {
  j = nlohmann::json{{"embedding_dim", c.embedding_dim},
                     {"attention_dim", c.attention_dim},
                     {"pma_seeds", c.pma_seeds},
                     {"history_length", c.history_length},
                     {"aggregation", aggregation_name(c.aggregation)},
                     {"target", c.target},
                     {"history", c.history},
                     {"top_hidden", c.top_hidden},
                     {"learning_rate", c.learning_rate},
                     {"embedding_init_std", c.embedding_init_std},
                     {"batch_size", c.batch_size},
                     {"ne_window", c.ne_window},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, RankerConfig& c) {
  RankerConfig d;
  c.embedding_dim = j.value("embedding_dim", d.embedding_dim);
  c.attention_dim = j.value("attention_dim", c.embedding_dim);
  c.pma_seeds = j.value("pma_seeds", d.pma_seeds);
  c.history_length = j.value("history_length", d.history_length);
  c.aggregation = parse_aggregation(j.value("aggregation", aggregation_name(d.aggregation)));
  c.target = j.contains("target") ? j.at("target").get<FeatureSpec>() : d.target;
  c.history = j.contains("history") ? j.at("history").get<FeatureSpec>() : d.history;
  c.top_hidden = j.value("top_hidden", d.top_hidden);
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.embedding_init_std = j.value("embedding_init_std", d.embedding_init_std);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.ne_window = j.value("ne_window", d.ne_window);
  c.seed = j.value("seed", d.seed);
}

namespace {

tokenization::LookupFn make_lookup(const FeatureSpec& spec, std::vector<std::uint64_t> vocab_ids,
                                   const std::shared_ptr<const SemanticIdTable>& semids) {
  switch (spec.kind) {
    case LookupKind::IndividualEmbedding:
      return tokenization::LookupFn::individual(
          std::make_shared<const tokenization::Vocabulary>(vocab_ids));
    case LookupKind::RandomHash:
      return tokenization::LookupFn::hashed(spec.table_size, spec.hash_seed);
    case LookupKind::SemanticId: {
      if (!semids) throw ConfigError("SemID feature needs a Semantic ID table");
      tokenization::Parameterization p;
      p.variant = spec.variant;
      p.n = spec.ngram;
      p.codebook_size = semids->codebook_size();
      p.table_size = spec.table_size;
      return tokenization::LookupFn::semantic(semids, p);
    }
  }
  throw ConfigError("unknown lookup kind");
}

}  // namespace

Lookups make_lookups(const RankerConfig& config, const corpus::Stream& stream,
                     std::shared_ptr<const SemanticIdTable> semids) {
  std::vector<std::uint64_t> targets, history;
  if (config.target.kind == LookupKind::IndividualEmbedding ||
      config.history.kind == LookupKind::IndividualEmbedding) {
    for (const auto& e : stream.train()) {
      targets.push_back(e.item);
      for (const auto& h : stream.history(e)) history.push_back(h.raw_id);
    }
  }
  return Lookups{make_lookup(config.target, std::move(targets), semids),
                 make_lookup(config.history, std::move(history), semids)};
}

std::vector<std::size_t> feature_rows(const tokenization::LookupFn& lookup,
                                      std::span<const std::uint64_t> raw_ids) {
  std::vector<std::uint64_t> ids(raw_ids.begin(), raw_ids.end());
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  std::vector<std::size_t> rows;
  for (auto id : ids) lookup.rows(id, rows);
  return rows;
}

Var sparse_embed(Var table, const tokenization::LookupFn& lookup,
                 std::span<const std::uint64_t> raw_ids) {
  const auto rows = feature_rows(lookup, raw_ids);
  tensor::Bags bags;
  bags.add(rows);
  return tensor::reshape(tensor::embedding_bag(table, bags), {table.value().cols()});
}

Example example_of(const corpus::Event& e, const corpus::Stream& stream) {
  return Example{e.item, e.time, stream.history(e), static_cast<double>(e.label)};
}

RankerModel::RankerModel(RankerConfig config, Lookups lookups)
    : config_(std::move(config)), lookups_(std::move(lookups)) {
  config_.validate();
  const std::size_t d = config_.embedding_dim;
  Rng rng(derive_seed(config_.seed, 0x52));
  const double sd = config_.embedding_init_std;
  target_table_ = &params_.add("target.table", normal_tensor({lookups_.target.table_size(), d}, sd, rng), true);
  history_table_ = &params_.add("history.table", normal_tensor({lookups_.history.table_size(), d}, sd, rng), true);
  age_table_ = &params_.add("history.age", normal_tensor({kAgeBuckets + 1, d}, sd, rng));
  switch (config_.aggregation) {
    case Aggregation::Bypass:
      params_.add("agg.w", glorot(d, d, rng));
      break;
    case Aggregation::Transformer:
    case Aggregation::Pma:
      position_table_ = &params_.add("history.position", normal_tensor({config_.history_length, d}, sd, rng));
      if (config_.aggregation == Aggregation::Pma) {
        params_.add("agg.seeds", normal_tensor({config_.pma_seeds, d}, 1.0, rng));
      } else {
        params_.add("agg.wq", glorot(d, d, rng));
      }
      params_.add("agg.wk", glorot(d, d, rng));
      params_.add("agg.wv", glorot(d, d, rng));
      params_.add("agg.ln1.gain", Tensor({d}, 1.0));
      params_.add("agg.ln1.bias", Tensor({d}, 0.0));
      params_.add("agg.ln2.gain", Tensor({d}, 1.0));
      params_.add("agg.ln2.bias", Tensor({d}, 0.0));
      block_mlp_ = tensor::Mlp(params_, "agg.mlp", {d, 2 * d, d}, rng);
      break;
  }
  const std::size_t m = config_.interaction_vectors();
  std::vector<std::size_t> widths{m * (m - 1) / 2 + m * d};
  widths.insert(widths.end(), config_.top_hidden.begin(), config_.top_hidden.end());
  widths.push_back(1);
  top_mlp_ = tensor::Mlp(params_, "top", widths, rng);
}

Var RankerModel::embed_target(Tape& tape, std::span<const Example> batch) const {
  tensor::Bags bags;
  std::vector<std::size_t> rows;
  for (const auto& ex : batch) {
    rows.clear();
    lookups_.target.rows(ex.target, rows);
    bags.add(rows);
  }
  return tensor::embedding_bag(tape.param(*target_table_), bags);
}

Var RankerModel::embed_history(Tape& tape, std::span<const Example> batch) const {
  const std::size_t T = config_.history_length;
  tensor::Bags bags;
  std::vector<std::size_t> ages;
  ages.reserve(batch.size() * T);
  std::vector<std::size_t> rows;
  for (const auto& ex : batch) {
    for (std::size_t t = 0; t < T; ++t) {
      rows.clear();
      if (t < ex.history.size()) {
        lookups_.history.rows(ex.history[t].raw_id, rows);
        ages.push_back(age_bucket(ex.time - ex.history[t].time));
      } else {
        ages.push_back(kPadRow);
      }
      bags.add(rows);
    }
  }
  Var items = tensor::embedding_bag(tape.param(*history_table_), bags);
  return tensor::add(items, tensor::gather_rows(tape.param(*age_table_), ages));
}

Var RankerModel::aggregate(Tape& tape, Var x, std::size_t batch, AttentionTrace* trace) const {
  const auto& P = params_;
  auto param = [&](const char* name) { return tape.param(const_cast<Parameter&>(P.get(name))); };
  if (config_.aggregation == Aggregation::Bypass) return tensor::matmul(x, param("agg.w"));

  const std::size_t T = config_.history_length;
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(config_.attention_dim));
  Var y = tensor::layernorm(x, param("agg.ln1.gain"), param("agg.ln1.bias"));
  Var keys = tensor::matmul(y, param("agg.wk"));
  Var values = tensor::matmul(y, param("agg.wv"));
  Var queries, residual;
  std::size_t rows = T;
  if (config_.aggregation == Aggregation::Transformer) {
    queries = tensor::matmul(y, param("agg.wq"));
    residual = x;
  } else {
    rows = config_.pma_seeds;
    queries = tensor::tile_rows(param("agg.seeds"), batch);
    residual = queries;
  }
  Var weights = tensor::softmax_rows(tensor::scale(tensor::bmm_nt(queries, keys, batch), inv_sqrt_d));
  if (trace) {
    trace->rows = rows;
    trace->cols = T;
    const auto w = tape.value(weights).data();
    trace->weights.insert(trace->weights.end(), w.begin(), w.end());
  }
  Var h = tensor::add(tensor::bmm(weights, values, batch), residual);
  Var z = tensor::layernorm(h, param("agg.ln2.gain"), param("agg.ln2.bias"));
  return tensor::add(block_mlp_.forward(tape, z), h);
}

Var RankerModel::forward(Tape& tape, std::span<const Example> batch, AttentionTrace* trace) const {
  if (batch.empty()) throw ContractError("ranker: empty batch");
  const std::size_t B = batch.size();
  if (trace) {
    for (const auto& ex : batch) {
      std::vector<bool> pad(config_.history_length);
      for (std::size_t t = 0; t < pad.size(); ++t) pad[t] = t >= ex.history.size();
      trace->padding.push_back(std::move(pad));
    }
  }
  Var x = embed_history(tape, batch);
  if (position_table_) x = tensor::add(x, tensor::tile_rows(tape.param(*position_table_), B));
  Var h = aggregate(tape, x, B, trace);
  Var target = embed_target(tape, batch);
  std::vector<Var> parts{target, h};
  Var v = tensor::concat_blocks(parts, B);
  const std::size_t m = config_.interaction_vectors();
  std::vector<Var> feats{tensor::pairwise_dots(v, m),
                         tensor::reshape(v, {B, m * config_.embedding_dim})};
  return top_mlp_.forward(tape, tensor::concat_cols(feats));
}

std::vector<double> RankerModel::predict(std::span<const Example> batch) const {
  std::vector<double> out;
  out.reserve(batch.size());
  for (std::size_t start = 0; start < batch.size(); start += kPredictBatch) {
    const auto part = batch.subspan(start, std::min(kPredictBatch, batch.size() - start));
    Tape tape;
    const Tensor& logits = tape.value(forward(tape, part));
    for (double l : logits.data()) out.push_back(tensor::sigmoid_value(l));
  }
  return out;
}

tensor::Checkpoint RankerModel::to_checkpoint() const {
  nlohmann::json cfg = config_;
  return tensor::snapshot(params_, {{"kind", "ranker"},
                                    {"config", cfg.dump()},
                                    {"frozen", frozen_ ? "1" : "0"},
                                    {"target_rows", std::to_string(lookups_.target.table_size())},
                                    {"history_rows", std::to_string(lookups_.history.table_size())}});
}

RankerModel RankerModel::from_checkpoint(const tensor::Checkpoint& ckpt, Lookups lookups) {
  auto kind = ckpt.metadata.find("kind");
  auto cfg = ckpt.metadata.find("config");
  if (kind == ckpt.metadata.end() || kind->second != "ranker" || cfg == ckpt.metadata.end()) {
    throw FormatError("checkpoint does not hold a ranker model");
  }
  RankerModel model(nlohmann::json::parse(cfg->second).get<RankerConfig>(), std::move(lookups));
  tensor::restore(model.params_, ckpt);
  auto frozen = ckpt.metadata.find("frozen");
  model.frozen_ = frozen != ckpt.metadata.end() && frozen->second == "1";
  return model;
}

TrainResult train_one_epoch(RankerModel& model, const corpus::Stream& stream,
                            std::span<const corpus::Event> events) {
  if (model.frozen()) throw FrozenModelError("ranker: training a frozen model");
  const auto& cfg = model.config();
  tensor::OptimizerOptions opts;
  opts.learning_rate = cfg.learning_rate;
  tensor::Optimizer opt(model.parameters().all(), opts);

  TrainResult result;
  std::vector<double> win_pred, win_label, all_pred, all_label;
  all_pred.reserve(events.size());
  all_label.reserve(events.size());
  auto flush = [&](std::size_t consumed, std::int64_t end_time) {
    if (win_pred.empty()) return;
    NePoint pt{consumed, end_time, std::nan("")};
    try {
      pt.ne = normalized_entropy(win_pred, win_label);
    } catch (const MetricError&) {
      // single-class window: left as NaN
    }
    result.curve.push_back(pt);
    win_pred.clear();
    win_label.clear();
  };

  std::vector<Example> batch;
  std::vector<double> labels;
  for (std::size_t start = 0; start < events.size(); start += cfg.batch_size) {
    const std::size_t n = std::min(cfg.batch_size, events.size() - start);
    batch.clear();
    labels.clear();
    for (std::size_t i = 0; i < n; ++i) {
      batch.push_back(example_of(events[start + i], stream));
      labels.push_back(batch.back().label);
    }
    Tape tape;
    Var logits = model.forward(tape, batch);
    const auto lv = tape.value(logits).data();
    for (std::size_t i = 0; i < n; ++i) {
      win_pred.push_back(tensor::sigmoid_value(lv[i]));
      win_label.push_back(labels[i]);
    }
    all_pred.insert(all_pred.end(), win_pred.end() - static_cast<std::ptrdiff_t>(n), win_pred.end());
    all_label.insert(all_label.end(), labels.begin(), labels.end());
    tape.backward(tensor::bce_with_logits(logits, labels));
    opt.step();
    ++result.steps;
    if (win_pred.size() >= cfg.ne_window) flush(start + n, events[start + n - 1].time);
  }
  if (!events.empty()) flush(events.size(), events.back().time);
  result.progressive_ne = std::nan("");
  try {
    result.progressive_ne = normalized_entropy(all_pred, all_label);
  } catch (const MetricError&) {
  }
  return result;
}

std::vector<double> predict_events(const RankerModel& model, const corpus::Stream& stream,
                                   std::span<const corpus::Event> events, std::size_t threads) {
  std::vector<double> out(events.size());
  auto work = [&](std::size_t begin, std::size_t end) {
    std::vector<Example> batch;
    for (std::size_t s = begin; s < end; s += kPredictBatch) {
      const std::size_t e = std::min(end, s + kPredictBatch);
      batch.clear();
      for (std::size_t i = s; i < e; ++i) batch.push_back(example_of(events[i], stream));
      auto p = model.predict(batch);
      std::copy(p.begin(), p.end(), out.begin() + static_cast<std::ptrdiff_t>(s));
    }
  };
  threads = std::max<std::size_t>(1, std::min(threads, events.size() / kPredictBatch + 1));
  if (threads == 1) {
    work(0, events.size());
    return out;
  }
  // Shards cover disjoint output ranges; results do not depend on the shard count.
  std::vector<std::thread> pool;
  const std::size_t chunk = (events.size() + threads - 1) / threads;
  for (std::size_t t = 0; t < threads; ++t) {
    const std::size_t b = std::min(events.size(), t * chunk);
    const std::size_t e = std::min(events.size(), b + chunk);
    pool.emplace_back(work, b, e);
  }
  for (auto& th : pool) th.join();
  return out;
}

Evaluation evaluate(const RankerModel& model, const corpus::Stream& stream,
                    std::span<const corpus::Event> events, std::size_t threads) {
  Evaluation ev;
  ev.predictions = predict_events(model, stream, events, threads);
  std::vector<double> labels;
  labels.reserve(events.size());
  for (const auto& e : events) labels.push_back(e.label);
  ev.ne = normalized_entropy(ev.predictions, labels);
  return ev;
}

}  // namespace semid::ranker
