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

#include "semid/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "semid/errors.hpp"

namespace semid::tensor {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_size(shape_) != data_.size()) {
    throw DimensionError("tensor: shape " + shape_string(shape_) + " does not match " +
                         std::to_string(data_.size()) + " values");
  }
}

Tensor Tensor::vector(std::vector<double> v) {
  Shape s{v.size()};
  return Tensor(std::move(s), std::move(v));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t m = rows.size();
  const std::size_t n = m ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(m * n);
  for (const auto& r : rows) {
    if (r.size() != n) throw DimensionError("tensor: ragged matrix literal");
    data.insert(data.end(), r.begin(), r.end());
  }
  return Tensor({m, n}, std::move(data));
}

std::size_t Tensor::rows() const { return shape_.size() < 2 ? 1 : shape_[0]; }

std::size_t Tensor::cols() const {
  if (shape_.empty()) return 1;
  if (shape_.size() == 1) return shape_[0];
  const std::size_t r = shape_[0];
  return r == 0 ? 0 : data_.size() / r;
}

std::span<double> Tensor::row(std::size_t r) {
  const std::size_t c = cols();
  return std::span<double>(data_).subspan(r * c, c);
}

std::span<const double> Tensor::row(std::size_t r) const {
  const std::size_t c = cols();
  return std::span<const double>(data_).subspan(r * c, c);
}

double Tensor::item() const {
  if (data_.size() != 1) {
    throw ContractError("tensor: item() on " + shape_string(shape_));
  }
  return data_[0];
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Parameter::Parameter(std::string n, Tensor v, bool s)
    : name(std::move(n)), value(std::move(v)), grad(value.shape(), 0.0), sparse(s) {
  if (sparse) row_marked_.assign(value.rows(), 0);
}

void Parameter::mark_row(std::size_t r) {
  if (!sparse) return;
  if (!row_marked_[r]) {
    row_marked_[r] = 1;
    touched_rows.push_back(r);
  }
}

void Parameter::zero_grad() {
  if (!sparse) {
    grad.fill(0.0);
    return;
  }
  for (auto r : touched_rows) {
    auto g = grad.row(r);
    std::fill(g.begin(), g.end(), 0.0);
    row_marked_[r] = 0;
  }
  touched_rows.clear();
}

Parameter& ParameterSet::add(std::string name, Tensor value, bool sparse) {
  if (contains(name)) throw ConfigError("duplicate parameter name: " + name);
  params_.push_back(std::make_unique<Parameter>(std::move(name), std::move(value), sparse));
  return *params_.back();
}

Parameter& ParameterSet::get(const std::string& name) {
  for (auto& p : params_) {
    if (p->name == name) return *p;
  }
  throw IndexError("no parameter named " + name);
}

const Parameter& ParameterSet::get(const std::string& name) const {
  for (const auto& p : params_) {
    if (p->name == name) return *p;
  }
  throw IndexError("no parameter named " + name);
}

bool ParameterSet::contains(const std::string& name) const {
  return std::any_of(params_.begin(), params_.end(),
                     [&](const auto& p) { return p->name == name; });
}

std::vector<Parameter*> ParameterSet::all() {
  std::vector<Parameter*> out;
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<const Parameter*> ParameterSet::all() const {
  std::vector<const Parameter*> out;
  for (const auto& p : params_) out.push_back(p.get());
  return out;
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

const Tensor& Var::value() const { return tape_->value(id_); }

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::leaf(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::param(Parameter& p) {
  Node n;
  n.param = &p;
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

const Tensor& Tape::value(std::size_t id) const {
  const Node& n = nodes_[id];
  return n.param ? n.param->value : n.value;
}

const Tensor& Tape::grad(Var v) const {
  const Node& n = nodes_[v.id()];
  if (n.param) return n.param->grad;
  if (!n.grad_ready) throw ContractError("tape: no gradient reached this node");
  return n.grad;
}

Var Tape::record(Tensor value, std::vector<std::size_t> inputs, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  for (auto i : inputs) n.requires_grad = n.requires_grad || nodes_[i].requires_grad;
  n.inputs = std::move(inputs);
  if (n.requires_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Tensor& Tape::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (n.param) return n.param->grad;
  if (!n.grad_ready) {
    n.grad = Tensor(n.value.shape(), 0.0);
    n.grad_ready = true;
  }
  return n.grad;
}

void Tape::accumulate_row(std::size_t id, std::size_t r, std::span<const double> g) {
  Node& n = nodes_[id];
  Tensor& buf = grad_buffer(id);
  if (n.param) n.param->mark_row(r);
  auto dst = buf.row(r);
  for (std::size_t j = 0; j < g.size(); ++j) dst[j] += g[j];
}

void Tape::backward(Var loss) {
  if (loss.tape_ != this) throw ContractError("tape: loss belongs to another tape");
  if (consumed_) throw ContractError("tape: backward already ran on this tape");
  const Tensor& lv = value(loss.id());
  if (lv.size() != 1) {
    throw ContractError("tape: backward needs a scalar loss, got " + shape_string(lv.shape()));
  }
  consumed_ = true;
  if (!nodes_[loss.id()].requires_grad) return;
  Node& root = nodes_[loss.id()];
  if (root.param) {
    root.param->grad[0] += 1.0;
    return;
  }
  grad_buffer(loss.id()).fill(1.0);
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || !n.grad_ready || !n.backward) continue;
    n.backward(*this, i);
  }
}

void Bags::add(std::span<const std::size_t> bag) {
  indices.insert(indices.end(), bag.begin(), bag.end());
  offsets.push_back(indices.size());
}

void Bags::add_single(std::size_t index) {
  indices.push_back(index);
  offsets.push_back(indices.size());
}

}  // namespace semid::tensor
