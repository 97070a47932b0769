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

#include "semid/rqvae.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include "semid/errors.hpp"
#include "semid/log.hpp"
#include "semid/optim.hpp"

namespace semid::rqvae {

using tensor::Tape;
using tensor::Tensor;
using tensor::Var;

namespace {

double sq_dist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

std::size_t nearest_row(const Tensor& centers, std::span<const double> p) {
  std::size_t best = 0;
  double best_d = sq_dist(centers.row(0), p);
  for (std::size_t k = 1; k < centers.rows(); ++k) {
    const double d = sq_dist(centers.row(k), p);
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

Tensor take_rows(const Tensor& x, std::span<const std::size_t> rows) {
  const std::size_t d = x.cols();
  Tensor out({rows.size(), d});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto src = x.row(rows[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

constexpr std::size_t kEvalChunk = 4096;

}  // namespace

void RqVaeConfig::validate() const {
  if (levels < 1) throw ConfigError("rqvae: levels must be >= 1");
  if (codebook_size < 2) throw ConfigError("rqvae: codebook_size must be >= 2");
  if (!(beta > 0.0)) throw ConfigError("rqvae: beta must be > 0");
  if (input_dim == 0 || latent_dim == 0) throw ConfigError("rqvae: dimensions must be positive");
  if (batch_size == 0) throw ConfigError("rqvae: batch_size must be positive");
  if (learning_rate < 0.0) throw ConfigError("rqvae: learning_rate must be >= 0");
}

std::vector<std::size_t> RqVaeConfig::encoder_widths() const {
  std::vector<std::size_t> w{input_dim};
  if (encoder_hidden) {
    w.insert(w.end(), encoder_hidden->begin(), encoder_hidden->end());
  } else {
    w.push_back(2 * latent_dim);
  }
  w.push_back(latent_dim);
  return w;
}

std::vector<std::size_t> RqVaeConfig::decoder_widths() const {
  std::vector<std::size_t> w{latent_dim};
  if (decoder_hidden) {
    w.insert(w.end(), decoder_hidden->begin(), decoder_hidden->end());
  } else {
    w.push_back(2 * latent_dim);
  }
  w.push_back(input_dim);
  return w;
}

void to_json(nlohmann::json& j, const RqVaeConfig& c) {
  j = nlohmann::json{{"levels", c.levels},
                     {"codebook_size", c.codebook_size},
                     {"input_dim", c.input_dim},
                     {"latent_dim", c.latent_dim},
                     {"beta", c.beta},
                     {"learning_rate", c.learning_rate},
                     {"epochs", c.epochs},
                     {"batch_size", c.batch_size},
                     {"seed", c.seed},
                     {"kmeans_iters", c.kmeans_iters}};
  if (c.encoder_hidden) j["encoder_hidden"] = *c.encoder_hidden;
  if (c.decoder_hidden) j["decoder_hidden"] = *c.decoder_hidden;
}

void from_json(const nlohmann::json& j, RqVaeConfig& c) {
  RqVaeConfig d;
  c.levels = j.value("levels", d.levels);
  c.codebook_size = j.value("codebook_size", d.codebook_size);
  c.input_dim = j.value("input_dim", d.input_dim);
  c.latent_dim = j.value("latent_dim", d.latent_dim);
  c.beta = j.value("beta", d.beta);
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.epochs = j.value("epochs", d.epochs);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.seed = j.value("seed", d.seed);
  c.kmeans_iters = j.value("kmeans_iters", d.kmeans_iters);
  c.encoder_hidden.reset();
  c.decoder_hidden.reset();
  if (j.contains("encoder_hidden")) c.encoder_hidden = j.at("encoder_hidden").get<std::vector<std::size_t>>();
  if (j.contains("decoder_hidden")) c.decoder_hidden = j.at("decoder_hidden").get<std::vector<std::size_t>>();
}

RqVaeModel::RqVaeModel(RqVaeConfig config) : config_(std::move(config)) {
  config_.validate();
  Rng enc_rng(derive_seed(config_.seed, 1));
  Rng dec_rng(derive_seed(config_.seed, 2));
  encoder_ = tensor::Mlp(params_, "encoder", config_.encoder_widths(), enc_rng);
  decoder_ = tensor::Mlp(params_, "decoder", config_.decoder_widths(), dec_rng);
  for (std::size_t l = 0; l < config_.levels; ++l) {
    codebooks_.push_back(&params_.add("codebook" + std::to_string(l),
                                      Tensor({config_.codebook_size, config_.latent_dim}, 0.0)));
  }
}

void RqVaeModel::require_trainable(const char* what) const {
  if (frozen_) throw FrozenModelError(std::string("rqvae: ") + what + " on a frozen model");
}

std::size_t RqVaeModel::nearest(std::size_t level, std::span<const double> r) const {
  return nearest_row(codebooks_[level]->value, r);
}

Tensor RqVaeModel::encode_batch(const Tensor& x) const {
  if (x.rank() != 2 || x.cols() != config_.input_dim) {
    throw DimensionError("rqvae encode: expected [N x " + std::to_string(config_.input_dim) +
                         "], got " + tensor::shape_string(x.shape()));
  }
  Tape tape;
  return tape.value(encoder_.forward(tape, tape.constant(x)));
}

std::vector<double> RqVaeModel::encode(std::span<const double> x) const {
  if (x.size() != config_.input_dim) {
    throw DimensionError("rqvae encode: expected " + std::to_string(config_.input_dim) +
                         " values, got " + std::to_string(x.size()));
  }
  Tensor z = encode_batch(Tensor({1, x.size()}, std::vector<double>(x.begin(), x.end())));
  return z.storage();
}

Quantization RqVaeModel::quantize(std::span<const double> z) const {
  if (z.size() != config_.latent_dim) throw DimensionError("rqvae quantize: latent size mismatch");
  Quantization q;
  q.quantized.assign(z.size(), 0.0);
  std::vector<double> r(z.begin(), z.end());
  for (std::size_t l = 0; l < config_.levels; ++l) {
    q.residuals.push_back(r);
    const std::size_t c = nearest(l, r);
    q.id.codes.push_back(static_cast<std::uint32_t>(c));
    auto v = codebooks_[l]->value.row(c);
    for (std::size_t i = 0; i < r.size(); ++i) {
      r[i] -= v[i];
      q.quantized[i] += v[i];
    }
  }
  q.residuals.push_back(std::move(r));
  return q;
}

SemanticId RqVaeModel::semantic_id(std::span<const double> x) const {
  return quantize(encode(x)).id;
}

std::vector<double> RqVaeModel::decode(std::span<const double> z_hat) const {
  return decode_batch(Tensor({1, z_hat.size()}, std::vector<double>(z_hat.begin(), z_hat.end())))
      .storage();
}

Tensor RqVaeModel::decode_batch(const Tensor& z_hat) const {
  if (z_hat.rank() != 2 || z_hat.cols() != config_.latent_dim) {
    throw DimensionError("rqvae decode: latent size mismatch");
  }
  Tape tape;
  return tape.value(decoder_.forward(tape, tape.constant(z_hat)));
}

Var RqVaeModel::loss_graph(Tape& tape, const Tensor& x, LossTerms* terms,
                           std::vector<std::vector<std::uint32_t>>* codes) const {
  require_trainable("loss");
  if (x.rank() != 2 || x.cols() != config_.input_dim || x.rows() == 0) {
    throw DimensionError("rqvae loss: expected [N x " + std::to_string(config_.input_dim) + "]");
  }
  const std::size_t B = x.rows(), Dz = config_.latent_dim, L = config_.levels;
  Var X = tape.constant(x);
  Var z = encoder_.forward(tape, X);
  const Tensor zv = tape.value(z);

  // Greedy codes on the current values; everything below is a function of them.
  std::vector<Tensor> resid(L, Tensor({B, Dz}));
  std::vector<Tensor> through(L, Tensor({B, Dz}));  // sum of codewords for levels 0..l
  std::vector<std::vector<std::size_t>> chosen(L, std::vector<std::size_t>(B));
  std::vector<double> r(Dz), acc(Dz);
  for (std::size_t b = 0; b < B; ++b) {
    auto zr = zv.row(b);
    std::copy(zr.begin(), zr.end(), r.begin());
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t l = 0; l < L; ++l) {
      std::copy(r.begin(), r.end(), resid[l].row(b).begin());
      const std::size_t c = nearest(l, r);
      chosen[l][b] = c;
      auto v = codebooks_[l]->value.row(c);
      for (std::size_t i = 0; i < Dz; ++i) {
        r[i] -= v[i];
        acc[i] += v[i];
      }
      std::copy(acc.begin(), acc.end(), through[l].row(b).begin());
    }
  }
  if (codes) {
    codes->assign(L, std::vector<std::uint32_t>(B));
    for (std::size_t l = 0; l < L; ++l) {
      for (std::size_t b = 0; b < B; ++b) (*codes)[l][b] = static_cast<std::uint32_t>(chosen[l][b]);
    }
  }

  const double inv_b = 1.0 / static_cast<double>(B);
  // Straight-through: forward value is z_hat, gradient goes to z unchanged.
  Tensor shift = through[L - 1];
  for (std::size_t i = 0; i < shift.size(); ++i) shift[i] -= zv[i];
  Var z_st = tensor::add(z, tape.constant(std::move(shift)));
  Var diff = tensor::sub(decoder_.forward(tape, z_st), X);
  Var recon = tensor::scale(tensor::sum(tensor::mul(diff, diff)), inv_b);

  Var total = recon;
  double commit_value = 0.0;
  for (std::size_t l = 0; l < L; ++l) {
    // Encoder side: r_l - sg(v) = z - const(sum of codewords through level l).
    Var d_enc = tensor::sub(z, tape.constant(through[l]));
    Var enc_term = tensor::scale(tensor::sum(tensor::mul(d_enc, d_enc)), config_.beta * inv_b);
    // Codebook side: sg(r_l) - v.
    Var v = tensor::gather_rows(tape.param(*codebooks_[l]), chosen[l]);
    Var d_cb = tensor::sub(tape.constant(resid[l]), v);
    Var cb_term = tensor::scale(tensor::sum(tensor::mul(d_cb, d_cb)), inv_b);
    commit_value += tape.value(cb_term).item();
    total = tensor::add(total, tensor::add(enc_term, cb_term));
  }
  if (terms) {
    terms->reconstruction = tape.value(recon).item();
    terms->commitment = commit_value;
    terms->total = tape.value(total).item();
  }
  return total;
}

LossTerms RqVaeModel::loss(const Tensor& x) const {
  Tape tape;
  LossTerms t;
  loss_graph(tape, x, &t);
  return t;
}

tensor::Checkpoint RqVaeModel::to_checkpoint() const {
  nlohmann::json cfg = config_;
  return tensor::snapshot(params_, {{"kind", "rqvae"},
                                    {"config", cfg.dump()},
                                    {"frozen", frozen_ ? "1" : "0"}});
}

RqVaeModel RqVaeModel::from_checkpoint(const tensor::Checkpoint& ckpt) {
  auto kind = ckpt.metadata.find("kind");
  auto cfg = ckpt.metadata.find("config");
  if (kind == ckpt.metadata.end() || kind->second != "rqvae" || cfg == ckpt.metadata.end()) {
    throw FormatError("checkpoint does not hold an rqvae model");
  }
  RqVaeModel model(nlohmann::json::parse(cfg->second).get<RqVaeConfig>());
  tensor::restore(model.params_, ckpt);
  auto frozen = ckpt.metadata.find("frozen");
  model.frozen_ = frozen != ckpt.metadata.end() && frozen->second == "1";
  model.initialized_ = true;
  return model;
}

double reconstruction_mse(const RqVaeModel& model, const Tensor& x) {
  const std::size_t N = x.rows(), D = x.cols();
  if (N == 0) return 0.0;
  double total = 0.0;
  for (std::size_t start = 0; start < N; start += kEvalChunk) {
    const std::size_t n = std::min(kEvalChunk, N - start);
    std::vector<std::size_t> rows(n);
    std::iota(rows.begin(), rows.end(), start);
    Tensor z = model.encode_batch(take_rows(x, rows));
    Tensor zq({n, model.config().latent_dim});
    for (std::size_t i = 0; i < n; ++i) {
      auto q = model.quantize(z.row(i));
      std::copy(q.quantized.begin(), q.quantized.end(), zq.row(i).begin());
    }
    Tensor xhat = model.decode_batch(zq);
    for (std::size_t i = 0; i < n; ++i) total += sq_dist(xhat.row(i), x.row(start + i));
  }
  return total / static_cast<double>(N * D);
}

Tensor kmeans(const Tensor& points, std::size_t k, std::size_t iters, Rng& rng) {
  const std::size_t N = points.rows(), D = points.cols();
  if (N < k || k == 0) throw ConfigError("kmeans: need at least k points");
  Tensor centers({k, D});
  std::uniform_int_distribution<std::size_t> pick(0, N - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  {
    auto p = points.row(pick(rng));
    std::copy(p.begin(), p.end(), centers.row(0).begin());
  }
  std::vector<double> d2(N);
  for (std::size_t i = 0; i < N; ++i) d2[i] = sq_dist(points.row(i), centers.row(0));
  for (std::size_t c = 1; c < k; ++c) {
    const double mass = std::accumulate(d2.begin(), d2.end(), 0.0);
    std::size_t chosen = 0;
    if (mass > 0.0) {
      double u = unit(rng) * mass;
      chosen = N - 1;
      for (std::size_t i = 0; i < N; ++i) {
        u -= d2[i];
        if (u < 0.0 && d2[i] > 0.0) {
          chosen = i;
          break;
        }
      }
    } else {
      chosen = pick(rng);
    }
    auto p = points.row(chosen);
    std::copy(p.begin(), p.end(), centers.row(c).begin());
    for (std::size_t i = 0; i < N; ++i) d2[i] = std::min(d2[i], sq_dist(points.row(i), centers.row(c)));
  }
  std::vector<std::size_t> assign(N);
  std::vector<std::size_t> counts(k);
  for (std::size_t it = 0; it < iters; ++it) {
    bool moved = it == 0;
    for (std::size_t i = 0; i < N; ++i) {
      const std::size_t a = nearest_row(centers, points.row(i));
      if (a != assign[i]) moved = true;
      assign[i] = a;
    }
    if (!moved) break;
    Tensor sums({k, D});
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < N; ++i) {
      auto s = sums.row(assign[i]);
      auto p = points.row(i);
      for (std::size_t j = 0; j < D; ++j) s[j] += p[j];
      ++counts[assign[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;  // keep the old center
      auto s = sums.row(c);
      auto dst = centers.row(c);
      for (std::size_t j = 0; j < D; ++j) dst[j] = s[j] / static_cast<double>(counts[c]);
    }
  }
  return centers;
}

namespace {

void init_codebooks(RqVaeModel& model, const Tensor& sample, Rng& rng) {
  const auto& cfg = model.config();
  Tensor resid = model.encode_batch(sample);
  for (std::size_t l = 0; l < cfg.levels; ++l) {
    Tensor centers = kmeans(resid, cfg.codebook_size, cfg.kmeans_iters, rng);
    model.codebook(l) = centers;
    for (std::size_t i = 0; i < resid.rows(); ++i) {
      auto r = resid.row(i);
      auto v = centers.row(nearest_row(centers, r));
      for (std::size_t j = 0; j < r.size(); ++j) r[j] -= v[j];
    }
  }
}

// Resets codewords that no example selected during the epoch.
std::size_t restart_dead(RqVaeModel& model, const Tensor& embeddings,
                         const std::vector<std::vector<std::size_t>>& usage, Rng& rng) {
  const auto& cfg = model.config();
  std::uniform_int_distribution<std::size_t> pick(0, embeddings.rows() - 1);
  std::size_t restarted = 0;
  for (std::size_t l = 0; l < cfg.levels; ++l) {
    for (std::size_t k = 0; k < cfg.codebook_size; ++k) {
      if (usage[l][k] != 0) continue;
      auto q = model.quantize(model.encode(embeddings.row(pick(rng))));
      auto dst = model.codebook(l).row(k);
      std::copy(q.residuals[l].begin(), q.residuals[l].end(), dst.begin());
      ++restarted;
    }
  }
  return restarted;
}

void check_embeddings(const RqVaeConfig& cfg, const Tensor& embeddings) {
  if (embeddings.rank() != 2 || embeddings.cols() != cfg.input_dim) {
    throw DimensionError("rqvae: embeddings must be [N x " + std::to_string(cfg.input_dim) + "]");
  }
  if (embeddings.rows() < cfg.codebook_size) {
    throw ConfigError("rqvae: N=" + std::to_string(embeddings.rows()) + " < K=" +
                      std::to_string(cfg.codebook_size));
  }
}

}  // namespace

void initialize_codebooks(RqVaeModel& model, const Tensor& embeddings) {
  const auto& cfg = model.config();
  if (model.frozen()) throw FrozenModelError("rqvae: codebook init on a frozen model");
  check_embeddings(cfg, embeddings);
  const std::size_t N = embeddings.rows();
  Rng rng(derive_seed(cfg.seed, 4));
  std::vector<std::size_t> order(N);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t init_n = std::min(N, std::max<std::size_t>(cfg.batch_size, cfg.codebook_size));
  init_codebooks(model, take_rows(embeddings, std::span(order).first(init_n)), rng);
  model.mark_codebooks_initialized();
}

TrainingCurve train(RqVaeModel& model, const Tensor& embeddings) {
  const auto& cfg = model.config();
  if (model.frozen()) throw FrozenModelError("rqvae: train on a frozen model");
  check_embeddings(cfg, embeddings);
  if (!model.codebooks_initialized()) initialize_codebooks(model, embeddings);
  const std::size_t N = embeddings.rows();
  Rng rng(derive_seed(cfg.seed, 3));
  std::vector<std::size_t> order(N);
  std::iota(order.begin(), order.end(), 0);

  TrainingCurve curve;
  curve.post_init_mse = reconstruction_mse(model, embeddings);

  tensor::OptimizerOptions opts;
  opts.learning_rate = cfg.learning_rate;
  tensor::Optimizer opt(model.parameters().all(), opts);
  std::vector<std::vector<std::uint32_t>> codes;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::vector<std::size_t>> usage(cfg.levels,
                                                std::vector<std::size_t>(cfg.codebook_size, 0));
    EpochRecord rec;
    rec.epoch = epoch;
    for (std::size_t start = 0; start < N; start += cfg.batch_size) {
      const std::size_t n = std::min(cfg.batch_size, N - start);
      Tensor batch = take_rows(embeddings, std::span(order).subspan(start, n));
      Tape tape;
      LossTerms t;
      Var loss = model.loss_graph(tape, batch, &t, &codes);
      tape.backward(loss);
      opt.step();
      const double w = static_cast<double>(n) / static_cast<double>(N);
      rec.mean.total += w * t.total;
      rec.mean.reconstruction += w * t.reconstruction;
      rec.mean.commitment += w * t.commitment;
      for (std::size_t l = 0; l < cfg.levels; ++l) {
        for (auto c : codes[l]) ++usage[l][c];
      }
    }
    // With a zero learning rate the run must leave every parameter untouched.
    if (cfg.learning_rate > 0.0) rec.restarted_codewords = restart_dead(model, embeddings, usage, rng);
    curve.epochs.push_back(rec);
    log(LogLevel::Debug, "rqvae epoch " + std::to_string(epoch) + " loss " +
                             std::to_string(rec.mean.total));
  }
  model.freeze();
  curve.final_mse = reconstruction_mse(model, embeddings);
  return curve;
}

Assignment assign(const RqVaeModel& model, std::span<const std::uint64_t> raw_ids,
                  const std::unordered_map<std::uint64_t, std::vector<double>>& embeddings) {
  if (!model.frozen()) throw ContractError("rqvae assign: model must be frozen");
  const auto& cfg = model.config();
  Assignment out{SemanticIdTable(cfg.levels, cfg.codebook_size), {}};
  std::vector<std::uint64_t> ok_ids;
  std::vector<double> flat;
  for (auto id : raw_ids) {
    auto it = embeddings.find(id);
    if (it == embeddings.end()) {
      out.errors.push_back({id, "no content embedding"});
      continue;
    }
    if (it->second.size() != cfg.input_dim) {
      out.errors.push_back({id, "embedding has " + std::to_string(it->second.size()) +
                                    " values, expected " + std::to_string(cfg.input_dim)});
      continue;
    }
    ok_ids.push_back(id);
    flat.insert(flat.end(), it->second.begin(), it->second.end());
  }
  const Tensor x({ok_ids.size(), cfg.input_dim}, std::move(flat));
  for (std::size_t start = 0; start < ok_ids.size(); start += kEvalChunk) {
    const std::size_t n = std::min(kEvalChunk, ok_ids.size() - start);
    std::vector<std::size_t> rows(n);
    std::iota(rows.begin(), rows.end(), start);
    Tensor z = model.encode_batch(take_rows(x, rows));
    for (std::size_t i = 0; i < n; ++i) out.table.set(ok_ids[start + i], model.quantize(z.row(i)).id);
  }
  return out;
}

double purity(std::span<const std::uint32_t> codes, std::span<const std::uint32_t> labels) {
  if (codes.size() != labels.size()) throw DimensionError("purity: codes and labels differ in length");
  if (codes.empty()) return 0.0;
  std::map<std::uint32_t, std::map<std::uint32_t, std::size_t>> counts;
  for (std::size_t i = 0; i < codes.size(); ++i) ++counts[codes[i]][labels[i]];
  std::size_t majority = 0;
  for (const auto& [code, by_label] : counts) {
    std::size_t best = 0;
    for (const auto& [label, n] : by_label) best = std::max(best, n);
    majority += best;
  }
  return static_cast<double>(majority) / static_cast<double>(codes.size());
}

}  // namespace semid::rqvae
