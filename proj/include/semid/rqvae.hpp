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

// Residual-quantized autoencoder that turns content embeddings into
// Semantic IDs.
//
// encoder: x[D] -> z[D'];  quantizer: L greedy nearest-codeword steps on the
// running residual;  decoder: z_hat[D'] -> x_hat[D]. Codes never depend on the
// decoder.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "semid/checkpoint.hpp"
#include "semid/nn.hpp"
#include "semid/semantic_id.hpp"
#include "semid/tensor.hpp"

namespace semid::rqvae {

struct RqVaeConfig {
  std::size_t levels = 3;
  std::uint32_t codebook_size = 64;
  std::size_t input_dim = 32;
  std::size_t latent_dim = 16;
  double beta = 0.5;
  // Hidden widths; unset means {2 * latent_dim}, empty means one linear layer.
  std::optional<std::vector<std::size_t>> encoder_hidden;
  std::optional<std::vector<std::size_t>> decoder_hidden;
  double learning_rate = 1e-3;
  std::size_t epochs = 20;
  std::size_t batch_size = 256;
  std::uint64_t seed = 1;
  std::size_t kmeans_iters = 25;

  void validate() const;
  std::vector<std::size_t> encoder_widths() const;
  std::vector<std::size_t> decoder_widths() const;
};

void to_json(nlohmann::json& j, const RqVaeConfig& c);
void from_json(const nlohmann::json& j, RqVaeConfig& c);

struct Quantization {
  SemanticId id;
  // residuals[l] is the input to level l; residuals[L] is what is left over.
  std::vector<std::vector<double>> residuals;
  std::vector<double> quantized;
};

struct LossTerms {
  double total = 0.0;
  double reconstruction = 0.0;
  // Sum over levels of ||r_l - v_l||^2; enters the total with weight (1 + beta).
  double commitment = 0.0;
};

class RqVaeModel {
 public:
  explicit RqVaeModel(RqVaeConfig config);
  RqVaeModel(const RqVaeModel&) = delete;
  RqVaeModel& operator=(const RqVaeModel&) = delete;
  RqVaeModel(RqVaeModel&&) = default;

  const RqVaeConfig& config() const { return config_; }
  tensor::ParameterSet& parameters() { return params_; }
  const tensor::ParameterSet& parameters() const { return params_; }
  tensor::Tensor& codebook(std::size_t level) { return codebooks_.at(level)->value; }
  const tensor::Tensor& codebook(std::size_t level) const { return codebooks_.at(level)->value; }

  std::vector<double> encode(std::span<const double> x) const;
  // Row-wise encode of an [N x D] matrix.
  tensor::Tensor encode_batch(const tensor::Tensor& x) const;
  Quantization quantize(std::span<const double> z) const;
  SemanticId semantic_id(std::span<const double> x) const;
  std::vector<double> decode(std::span<const double> z_hat) const;
  tensor::Tensor decode_batch(const tensor::Tensor& z_hat) const;

  // Mean loss over the rows of x. Requires an unfrozen model.
  LossTerms loss(const tensor::Tensor& x) const;
  // Builds the training graph; gradient routing follows the stop-gradient terms.
  tensor::Var loss_graph(tensor::Tape& tape, const tensor::Tensor& x, LossTerms* terms,
                         std::vector<std::vector<std::uint32_t>>* codes = nullptr) const;

  void freeze() { frozen_ = true; }
  bool frozen() const { return frozen_; }
  bool codebooks_initialized() const { return initialized_; }
  void mark_codebooks_initialized() { initialized_ = true; }

  tensor::Checkpoint to_checkpoint() const;
  static RqVaeModel from_checkpoint(const tensor::Checkpoint& ckpt);

 private:
  void require_trainable(const char* what) const;
  std::size_t nearest(std::size_t level, std::span<const double> r) const;

  RqVaeConfig config_;
  tensor::ParameterSet params_;
  tensor::Mlp encoder_;
  tensor::Mlp decoder_;
  std::vector<tensor::Parameter*> codebooks_;
  bool frozen_ = false;
  bool initialized_ = false;
};

struct EpochRecord {
  std::size_t epoch = 0;
  LossTerms mean;
  std::size_t restarted_codewords = 0;
};

struct TrainingCurve {
  double post_init_mse = 0.0;
  double final_mse = 0.0;
  std::vector<EpochRecord> epochs;
};

// Mean over rows of ||x - decode(z_hat)||^2 / D.
double reconstruction_mse(const RqVaeModel& model, const tensor::Tensor& x);

// k-means++ seeding plus Lloyd iterations. Rows of `points` are samples.
tensor::Tensor kmeans(const tensor::Tensor& points, std::size_t k, std::size_t iters, Rng& rng);

// k-means on the first shuffled batch, level by level. train() calls this
// unless the codebooks were already initialized.
void initialize_codebooks(RqVaeModel& model, const tensor::Tensor& embeddings);

// Trains for config().epochs, then freezes the model.
TrainingCurve train(RqVaeModel& model, const tensor::Tensor& embeddings);

struct AssignError {
  std::uint64_t raw_id = 0;
  std::string message;
};

struct Assignment {
  SemanticIdTable table;
  std::vector<AssignError> errors;
};

Assignment assign(const RqVaeModel& model, std::span<const std::uint64_t> raw_ids,
                  const std::unordered_map<std::uint64_t, std::vector<double>>& embeddings);

// Sum over codes of the majority label count, divided by N.
double purity(std::span<const std::uint32_t> codes, std::span<const std::uint32_t> labels);

}  // namespace semid::rqvae
