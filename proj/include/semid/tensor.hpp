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

// Dense row-major float64 tensors and a define-by-run reverse-mode tape.
//
// A Tape is rebuilt for every training step. Leaves are either constants or
// bound Parameters; gradients of bound leaves accumulate straight into the
// Parameter's grad buffer, so a Tape never copies a parameter.

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace semid::tensor {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }
  static Tensor vector(std::vector<double> v);
  // Row-major matrix from nested rows; all rows must have equal length.
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  // Leading dimension; a rank-0/1 tensor counts as one row.
  std::size_t rows() const;
  // Product of all trailing dimensions.
  std::size_t cols() const;

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double>& storage() { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  std::span<double> row(std::size_t r);
  std::span<const double> row(std::size_t r) const;

  double item() const;
  void fill(double v);
  bool all_finite() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

// A named trainable tensor with its gradient buffer. Row-sparse parameters
// (embedding tables) record which rows received gradient so that zeroing and
// optimizer updates touch only those rows.
struct Parameter {
  Parameter(std::string name, Tensor value, bool sparse = false);

  std::string name;
  Tensor value;
  Tensor grad;
  bool sparse = false;
  std::vector<std::size_t> touched_rows;

  void mark_row(std::size_t r);
  void zero_grad();

 private:
  std::vector<char> row_marked_;
};

// Owns parameters with stable addresses, in insertion order.
class ParameterSet {
 public:
  Parameter& add(std::string name, Tensor value, bool sparse = false);
  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  bool contains(const std::string& name) const;

  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;
  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;
  void zero_grad();

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
};

class Tape;

// Handle to a node on a Tape.
class Var {
 public:
  Var() = default;
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  // Leaf with its own gradient buffer (used for gradient checks on raw inputs).
  Var leaf(Tensor value);
  Var param(Parameter& p);

  const Tensor& value(std::size_t id) const;
  const Tensor& value(Var v) const { return value(v.id()); }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  bool requires_grad(Var v) const { return requires_grad(v.id()); }
  // Gradient of a non-parameter leaf after backward().
  const Tensor& grad(Var v) const;

  // Reverse sweep from a scalar loss. May be called once per tape.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

  // Op-construction interface.
  Var record(Tensor value, std::vector<std::size_t> inputs, BackwardFn fn);
  // Incoming gradient of node `id` during its backward callback.
  const Tensor& out_grad(std::size_t id) const { return nodes_[id].grad; }
  // Gradient accumulator for an input node; allocated on first use.
  Tensor& grad_buffer(std::size_t id);
  // Adds g into row r of the gradient of `id`; sparse-aware.
  void accumulate_row(std::size_t id, std::size_t r, std::span<const double> g);

 private:
  struct Node {
    Tensor value;
    Parameter* param = nullptr;
    Tensor grad;
    bool grad_ready = false;
    bool requires_grad = false;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
  };
  std::deque<Node> nodes_;
  bool consumed_ = false;
};

// CSR list of index bags for embedding_bag: bag b owns
// indices[offsets[b] .. offsets[b+1]).
struct Bags {
  std::vector<std::size_t> offsets{0};
  std::vector<std::size_t> indices;

  void add(std::span<const std::size_t> bag);
  void add_single(std::size_t index);
  std::size_t count() const { return offsets.size() - 1; }
};

// ---- differentiable operations ----

Var matmul(Var a, Var b);
// Block-diagonal batched products over `batch` stacked blocks.
// bmm:    a[(B*m) x k] . b[(B*k) x n]   -> [(B*m) x n]
// bmm_nt: a[(B*m) x k] . b[(B*n) x k]^T -> [(B*m) x n]
Var bmm(Var a, Var b, std::size_t batch);
Var bmm_nt(Var a, Var b, std::size_t batch);
Var transpose(Var a);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
// a[m x n] + bias[n] broadcast over rows.
Var add_row(Var a, Var bias);
// Stacks `reps` copies of a along rows.
Var tile_rows(Var a, std::size_t reps);

Var relu(Var a);
Var sigmoid(Var a);
Var softmax_rows(Var a);
// Normalizes over the last dimension with population variance, eps 1e-5.
Var layernorm(Var a, Var gain, Var bias);

Var gather_sum(Var table, std::span<const std::size_t> rows);
Var embedding_bag(Var table, const Bags& bags);
Var gather_rows(Var table, std::span<const std::size_t> rows);

Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
// Each part holds `batch` equal blocks of rows; output block s stacks the
// parts' blocks s in order.
Var concat_blocks(std::span<const Var> parts, std::size_t batch);
Var reshape(Var a, Shape shape);
Var slice_rows(Var a, std::size_t begin, std::size_t count);

Var sum(Var a);
Var mean(Var a);

// For v[(B*m) x d]: all dot products between distinct rows of each block of
// m rows, pairs (i<j) in lexicographic order -> [B x m(m-1)/2].
Var pairwise_dots(Var v, std::size_t m);

// Mean binary cross-entropy computed from logits (any shape, size B).
Var bce_with_logits(Var logits, std::span<const double> labels);

// Stop-gradient copy.
Var detach(Var a);

double sigmoid_value(double x);

}  // namespace semid::tensor
