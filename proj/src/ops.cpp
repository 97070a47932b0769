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

#include <algorithm>
#include <cmath>
#include <string>

#include "semid/errors.hpp"
#include "semid/tensor.hpp"

namespace semid::tensor {
namespace {

constexpr double kLayerNormEps = 1e-5;

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                         " vs " + shape_string(b.shape()));
  }
}

void require_same_tape(Var a, Var b, const char* op) {
  if (&a.tape() != &b.tape()) throw ContractError(std::string(op) + ": operands on different tapes");
}

// c[m x n] += a[m x k] . b[k x n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    const double* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      if (av == 0.0) continue;
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// c[m x n] += a[m x k] . b[n x k]^T
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* bj = b + j * k;
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += ai[p] * bj[p];
      c[i * n + j] += s;
    }
  }
}

// c[k x n] += a[m x k]^T . b[m x n]
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    const double* bi = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      if (av == 0.0) continue;
      double* cp = c + p * n;
      for (std::size_t j = 0; j < n; ++j) cp[j] += av * bi[j];
    }
  }
}

}  // namespace

double sigmoid_value(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Var matmul(Var a, Var b) {
  require_same_tape(a, b, "matmul");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_matrix(av, "matmul");
  require_matrix(bv, "matmul");
  const std::size_t m = av.shape()[0], k = av.shape()[1], n = bv.shape()[1];
  if (bv.shape()[0] != k) {
    throw DimensionError("matmul: inner dimensions " + shape_string(av.shape()) + " . " +
                         shape_string(bv.shape()));
  }
  Tensor out({m, n}, 0.0);
  gemm_nn(av.data().data(), bv.data().data(), out.data().data(), m, k, n);
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {ia, ib}, [ia, ib, m, k, n](Tape& t, std::size_t self) {
    const Tensor& g = t.out_grad(self);
    if (t.requires_grad(ia)) {
      gemm_nt(g.data().data(), t.value(ib).data().data(), t.grad_buffer(ia).data().data(), m, n, k);
    }
    if (t.requires_grad(ib)) {
      gemm_tn(t.value(ia).data().data(), g.data().data(), t.grad_buffer(ib).data().data(), m, k, n);
    }
  });
}

Var bmm(Var a, Var b, std::size_t batch) {
  require_same_tape(a, b, "bmm");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_matrix(av, "bmm");
  require_matrix(bv, "bmm");
  if (batch == 0 || av.shape()[0] % batch || bv.shape()[0] % batch) {
    throw DimensionError("bmm: row counts not divisible by batch");
  }
  const std::size_t m = av.shape()[0] / batch, k = av.shape()[1];
  const std::size_t n = bv.shape()[1];
  if (bv.shape()[0] / batch != k) throw DimensionError("bmm: inner dimensions disagree");
  Tensor out({batch * m, n}, 0.0);
  for (std::size_t s = 0; s < batch; ++s) {
    gemm_nn(av.data().data() + s * m * k, bv.data().data() + s * k * n,
            out.data().data() + s * m * n, m, k, n);
  }
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {ia, ib},
                         [ia, ib, m, k, n, batch](Tape& t, std::size_t self) {
    const double* g = t.out_grad(self).data().data();
    if (t.requires_grad(ia)) {
      double* ga = t.grad_buffer(ia).data().data();
      const double* bd = t.value(ib).data().data();
      for (std::size_t s = 0; s < batch; ++s) {
        gemm_nt(g + s * m * n, bd + s * k * n, ga + s * m * k, m, n, k);
      }
    }
    if (t.requires_grad(ib)) {
      double* gb = t.grad_buffer(ib).data().data();
      const double* ad = t.value(ia).data().data();
      for (std::size_t s = 0; s < batch; ++s) {
        gemm_tn(ad + s * m * k, g + s * m * n, gb + s * k * n, m, k, n);
      }
    }
  });
}

Var bmm_nt(Var a, Var b, std::size_t batch) {
  require_same_tape(a, b, "bmm_nt");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_matrix(av, "bmm_nt");
  require_matrix(bv, "bmm_nt");
  if (batch == 0 || av.shape()[0] % batch || bv.shape()[0] % batch) {
    throw DimensionError("bmm_nt: row counts not divisible by batch");
  }
  const std::size_t m = av.shape()[0] / batch, k = av.shape()[1];
  const std::size_t n = bv.shape()[0] / batch;
  if (bv.shape()[1] != k) throw DimensionError("bmm_nt: inner dimensions disagree");
  Tensor out({batch * m, n}, 0.0);
  for (std::size_t s = 0; s < batch; ++s) {
    gemm_nt(av.data().data() + s * m * k, bv.data().data() + s * n * k,
            out.data().data() + s * m * n, m, k, n);
  }
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {ia, ib},
                         [ia, ib, m, k, n, batch](Tape& t, std::size_t self) {
    const double* g = t.out_grad(self).data().data();
    if (t.requires_grad(ia)) {
      double* ga = t.grad_buffer(ia).data().data();
      const double* bd = t.value(ib).data().data();
      for (std::size_t s = 0; s < batch; ++s) {
        gemm_nn(g + s * m * n, bd + s * n * k, ga + s * m * k, m, n, k);
      }
    }
    if (t.requires_grad(ib)) {
      double* gb = t.grad_buffer(ib).data().data();
      const double* ad = t.value(ia).data().data();
      for (std::size_t s = 0; s < batch; ++s) {
        gemm_tn(g + s * m * n, ad + s * m * k, gb + s * n * k, m, n, k);
      }
    }
  });
}

Var transpose(Var a) {
  const Tensor& av = a.value();
  require_matrix(av, "transpose");
  const std::size_t m = av.shape()[0], n = av.shape()[1];
  Tensor out({n, m}, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = av[i * n + j];
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {ia}, [ia, m, n](Tape& t, std::size_t self) {
    const Tensor& g = t.out_grad(self);
    Tensor& ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j * m + i];
  });
}

Var add(Var a, Var b) {
  require_same_tape(a, b, "add");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_same_shape(av, bv, "add");
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    const Tensor& g = t.out_grad(self);
    for (auto in : {ia, ib}) {
      if (!t.requires_grad(in)) continue;
      Tensor& gi = t.grad_buffer(in);
      for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
    }
  });
}

Var sub(Var a, Var b) {
  require_same_tape(a, b, "sub");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_same_shape(av, bv, "sub");
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    const Tensor& g = t.out_grad(self);
    if (t.requires_grad(ia)) {
      Tensor& ga = t.grad_buffer(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (t.requires_grad(ib)) {
      Tensor& gb = t.grad_buffer(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

Var mul(Var a, Var b) {
  require_same_tape(a, b, "mul");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_same_shape(av, bv, "mul");
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    const Tensor& g = t.out_grad(self);
    if (t.requires_grad(ia)) {
      Tensor& ga = t.grad_buffer(ia);
      const Tensor& bv2 = t.value(ib);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv2[i];
    }
    if (t.requires_grad(ib)) {
      Tensor& gb = t.grad_buffer(ib);
      const Tensor& av2 = t.value(ia);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av2[i];
    }
  });
}

Var scale(Var a, double s) {
  Tensor out = a.value();
  for (auto& v : out.data()) v *= s;
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {ia}, [ia, s](Tape& t, std::size_t self) {
    const Tensor& g = t.out_grad(self);
    Tensor& ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
  });
}

Var add_row(Var a, Var bias) {
  require_same_tape(a, bias, "add_row");
  const Tensor& av = a.value();
  const Tensor& bv = bias.value();
  require_matrix(av, "add_row");
  const std::size_t m = av.shape()[0], n = av.shape()[1];
  if (bv.size() != n) {
    throw DimensionError("add_row: bias " + shape_string(bv.shape()) + " for rows of " +
                         std::to_string(n));
  }
  Tensor out = av;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += bv[j];
  const std::size_t ia = a.id(), ib = bias.id();
  return a.tape().record(std::move(out), {ia, ib}, [ia, ib, m, n](Tape& t, std::size_t self) {
    const Tensor& g = t.out_grad(self);
    if (t.requires_grad(ia)) {
      Tensor& ga = t.grad_buffer(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (t.requires_grad(ib)) {
      Tensor& gb = t.grad_buffer(ib);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
    }
  });
}

Var tile_rows(Var a, std::size_t reps) {
  const Tensor& av = a.value();
  require_matrix(av, "tile_rows");
  const std::size_t block = av.size();
  Tensor out({reps * av.shape()[0], av.shape()[1]}, 0.0);
  for (std::size_t r = 0; r < reps; ++r) std::copy(av.data().begin(), av.data().end(), out.data().begin() + r * block);
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {ia}, [ia, reps, block](Tape& t, std::size_t self) {
    const Tensor& g = t.out_grad(self);
    Tensor& ga = t.grad_buffer(ia);
    for (std::size_t r = 0; r < reps; ++r)
      for (std::size_t i = 0; i < block; ++i) ga[i] += g[r * block + i];
  });
}

Var relu(Var a) {
  Tensor out = a.value();
  for (auto& v : out.data()) v = v > 0.0 ? v : 0.0;
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {ia}, [ia](Tape& t, std::size_t self) {
    const Tensor& g = t.out_grad(self);
    const Tensor& x = t.value(ia);
    Tensor& ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (x[i] > 0.0) ga[i] += g[i];
  });
}

Var sigmoid(Var a) {
  Tensor out = a.value();
  for (auto& v : out.data()) v = sigmoid_value(v);
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {ia}, [ia](Tape& t, std::size_t self) {
    const Tensor& g = t.out_grad(self);
    const Tensor& y = t.value(self);
    Tensor& ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
  });
}

Var softmax_rows(Var a) {
  const Tensor& av = a.value();
  require_matrix(av, "softmax_rows");
  const std::size_t m = av.shape()[0], n = av.shape()[1];
  Tensor out({m, n}, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    auto x = av.row(i);
    auto y = out.row(i);
    const double mx = *std::max_element(x.begin(), x.end());
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      y[j] = std::exp(x[j] - mx);
      z += y[j];
    }
    for (std::size_t j = 0; j < n; ++j) y[j] /= z;
  }
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {ia}, [ia, m, n](Tape& t, std::size_t self) {
    const Tensor& g = t.out_grad(self);
    const Tensor& y = t.value(self);
    Tensor& ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < m; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += g[i * n + j] * y[i * n + j];
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += y[i * n + j] * (g[i * n + j] - dot);
    }
  });
}

Var layernorm(Var a, Var gain, Var bias) {
  require_same_tape(a, gain, "layernorm");
  require_same_tape(a, bias, "layernorm");
  const Tensor& av = a.value();
  if (av.rank() == 0) throw DimensionError("layernorm: scalar input");
  const std::size_t d = av.shape().back();
  if (gain.value().size() != d || bias.value().size() != d) {
    throw DimensionError("layernorm: gain/bias must have " + std::to_string(d) + " entries");
  }
  const std::size_t m = av.size() / d;
  // normalized values and inverse std are kept for the backward pass
  auto xhat = std::make_shared<std::vector<double>>(av.size());
  auto inv_std = std::make_shared<std::vector<double>>(m);
  Tensor out(av.shape(), 0.0);
  const Tensor& gv = gain.value();
  const Tensor& bv = bias.value();
  for (std::size_t i = 0; i < m; ++i) {
    const double* x = av.data().data() + i * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += x[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (x[j] - mu) * (x[j] - mu);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + kLayerNormEps);
    (*inv_std)[i] = is;
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (x[j] - mu) * is;
      (*xhat)[i * d + j] = h;
      out[i * d + j] = gv[j] * h + bv[j];
    }
  }
  const std::size_t ia = a.id(), ig = gain.id(), ib = bias.id();
  return a.tape().record(std::move(out), {ia, ig, ib},
                         [ia, ig, ib, m, d, xhat, inv_std](Tape& t, std::size_t self) {
    const Tensor& g = t.out_grad(self);
    const Tensor& gv2 = t.value(ig);
    if (t.requires_grad(ig)) {
      Tensor& gg = t.grad_buffer(ig);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < d; ++j) gg[j] += g[i * d + j] * (*xhat)[i * d + j];
    }
    if (t.requires_grad(ib)) {
      Tensor& gb = t.grad_buffer(ib);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < d; ++j) gb[j] += g[i * d + j];
    }
    if (t.requires_grad(ia)) {
      Tensor& ga = t.grad_buffer(ia);
      const double inv_d = 1.0 / static_cast<double>(d);
      for (std::size_t i = 0; i < m; ++i) {
        double mean_dh = 0.0, mean_dh_h = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          const double dh = g[i * d + j] * gv2[j];
          mean_dh += dh;
          mean_dh_h += dh * (*xhat)[i * d + j];
        }
        mean_dh *= inv_d;
        mean_dh_h *= inv_d;
        for (std::size_t j = 0; j < d; ++j) {
          const double dh = g[i * d + j] * gv2[j];
          ga[i * d + j] += (*inv_std)[i] * (dh - mean_dh - (*xhat)[i * d + j] * mean_dh_h);
        }
      }
    }
  });
}

Var embedding_bag(Var table, const Bags& bags) {
  const Tensor& tv = table.value();
  require_matrix(tv, "embedding_bag");
  const std::size_t h = tv.shape()[0], d = tv.shape()[1];
  for (auto r : bags.indices) {
    if (r >= h) {
      throw IndexError("embedding_bag: row " + std::to_string(r) + " outside table of " +
                       std::to_string(h));
    }
  }
  const std::size_t b = bags.count();
  Tensor out({b, d}, 0.0);
  for (std::size_t i = 0; i < b; ++i) {
    double* o = out.data().data() + i * d;
    for (std::size_t p = bags.offsets[i]; p < bags.offsets[i + 1]; ++p) {
      const double* src = tv.data().data() + bags.indices[p] * d;
      for (std::size_t j = 0; j < d; ++j) o[j] += src[j];
    }
  }
  const std::size_t it = table.id();
  auto shared_bags = std::make_shared<Bags>(bags);
  return table.tape().record(std::move(out), {it}, [it, d, shared_bags](Tape& t, std::size_t self) {
    const Tensor& g = t.out_grad(self);
    const Bags& bg = *shared_bags;
    for (std::size_t i = 0; i < bg.count(); ++i) {
      auto gi = g.data().subspan(i * d, d);
      for (std::size_t p = bg.offsets[i]; p < bg.offsets[i + 1]; ++p) t.accumulate_row(it, bg.indices[p], gi);
    }
  });
}

Var gather_sum(Var table, std::span<const std::size_t> rows) {
  Bags bags;
  bags.add(rows);
  Var pooled = embedding_bag(table, bags);
  return reshape(pooled, Shape{pooled.value().shape()[1]});
}

Var gather_rows(Var table, std::span<const std::size_t> rows) {
  Bags bags;
  bags.indices.assign(rows.begin(), rows.end());
  bags.offsets.resize(rows.size() + 1);
  for (std::size_t i = 0; i <= rows.size(); ++i) bags.offsets[i] = i;
  return embedding_bag(table, bags);
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_rows: no inputs");
  const std::size_t n = parts[0].value().cols();
  std::size_t m = 0;
  std::vector<std::size_t> ids;
  std::vector<double> data;
  for (const auto& p : parts) {
    require_same_tape(parts[0], p, "concat_rows");
    const Tensor& v = p.value();
    require_matrix(v, "concat_rows");
    if (v.shape()[1] != n) throw DimensionError("concat_rows: column counts differ");
    m += v.shape()[0];
    ids.push_back(p.id());
    data.insert(data.end(), v.data().begin(), v.data().end());
  }
  Tensor out({m, n}, std::move(data));
  auto in_ids = ids;
  return parts[0].tape().record(std::move(out), std::move(ids), [in_ids](Tape& t, std::size_t self) {
    const Tensor& g = t.out_grad(self);
    std::size_t off = 0;
    for (auto id : in_ids) {
      const std::size_t sz = t.value(id).size();
      if (t.requires_grad(id)) {
        Tensor& gi = t.grad_buffer(id);
        for (std::size_t i = 0; i < sz; ++i) gi[i] += g[off + i];
      }
      off += sz;
    }
  });
}

Var concat_blocks(std::span<const Var> parts, std::size_t batch) {
  if (parts.empty() || batch == 0) throw ContractError("concat_blocks: no inputs");
  const std::size_t n = parts[0].value().cols();
  std::vector<std::size_t> ids, block_sizes;
  std::size_t per_block = 0;
  for (const auto& p : parts) {
    require_same_tape(parts[0], p, "concat_blocks");
    const Tensor& v = p.value();
    require_matrix(v, "concat_blocks");
    if (v.shape()[1] != n) throw DimensionError("concat_blocks: column counts differ");
    if (v.shape()[0] % batch) throw DimensionError("concat_blocks: rows not a multiple of batch");
    ids.push_back(p.id());
    block_sizes.push_back(v.shape()[0] / batch * n);
    per_block += block_sizes.back();
  }
  Tensor out({batch * per_block / n, n});
  double* dst = out.data().data();
  for (std::size_t s = 0; s < batch; ++s) {
    for (std::size_t k = 0; k < parts.size(); ++k) {
      const double* src = parts[k].value().data().data() + s * block_sizes[k];
      dst = std::copy(src, src + block_sizes[k], dst);
    }
  }
  auto in_ids = ids;
  return parts[0].tape().record(
      std::move(out), std::move(ids), [in_ids, block_sizes, per_block, batch](Tape& t, std::size_t self) {
        const double* g = t.out_grad(self).data().data();
        std::size_t off = 0;
        for (std::size_t k = 0; k < in_ids.size(); ++k) {
          if (t.requires_grad(in_ids[k])) {
            double* gi = t.grad_buffer(in_ids[k]).data().data();
            for (std::size_t s = 0; s < batch; ++s) {
              const double* src = g + s * per_block + off;
              double* dstk = gi + s * block_sizes[k];
              for (std::size_t i = 0; i < block_sizes[k]; ++i) dstk[i] += src[i];
            }
          }
          off += block_sizes[k];
        }
      });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_cols: no inputs");
  const std::size_t m = parts[0].value().rows();
  std::vector<std::size_t> ids, widths;
  std::size_t n = 0;
  for (const auto& p : parts) {
    require_same_tape(parts[0], p, "concat_cols");
    const Tensor& v = p.value();
    require_matrix(v, "concat_cols");
    if (v.shape()[0] != m) throw DimensionError("concat_cols: row counts differ");
    ids.push_back(p.id());
    widths.push_back(v.shape()[1]);
    n += v.shape()[1];
  }
  Tensor out({m, n}, 0.0);
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& v = parts[k].value();
    for (std::size_t i = 0; i < m; ++i)
      std::copy_n(v.data().data() + i * widths[k], widths[k], out.data().data() + i * n + off);
    off += widths[k];
  }
  auto in_ids = ids;
  return parts[0].tape().record(std::move(out), std::move(ids),
                                [in_ids, widths, m, n](Tape& t, std::size_t self) {
    const Tensor& g = t.out_grad(self);
    std::size_t off2 = 0;
    for (std::size_t k = 0; k < in_ids.size(); ++k) {
      if (t.requires_grad(in_ids[k])) {
        Tensor& gi = t.grad_buffer(in_ids[k]);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < widths[k]; ++j) gi[i * widths[k] + j] += g[i * n + off2 + j];
      }
      off2 += widths[k];
    }
  });
}

Var reshape(Var a, Shape shape) {
  const Tensor& av = a.value();
  if (shape_size(shape) != av.size()) {
    throw DimensionError("reshape: " + shape_string(av.shape()) + " -> " + shape_string(shape));
  }
  Tensor out(std::move(shape), std::vector<double>(av.data().begin(), av.data().end()));
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {ia}, [ia](Tape& t, std::size_t self) {
    const Tensor& g = t.out_grad(self);
    Tensor& ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

Var slice_rows(Var a, std::size_t begin, std::size_t count) {
  const Tensor& av = a.value();
  require_matrix(av, "slice_rows");
  if (begin + count > av.shape()[0]) throw IndexError("slice_rows: range past end");
  const std::size_t n = av.shape()[1];
  Tensor out({count, n}, std::vector<double>(av.data().begin() + begin * n,
                                             av.data().begin() + (begin + count) * n));
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {ia}, [ia, begin, n](Tape& t, std::size_t self) {
    const Tensor& g = t.out_grad(self);
    Tensor& ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[begin * n + i] += g[i];
  });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  const std::size_t ia = a.id();
  return a.tape().record(Tensor::scalar(s), {ia}, [ia](Tape& t, std::size_t self) {
    const double g = t.out_grad(self)[0];
    Tensor& ga = t.grad_buffer(ia);
    for (auto& v : ga.data()) v += g;
  });
}

Var mean(Var a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw DimensionError("mean: empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var pairwise_dots(Var v, std::size_t m) {
  const Tensor& vv = v.value();
  require_matrix(vv, "pairwise_dots");
  if (m < 2 || vv.shape()[0] % m) throw DimensionError("pairwise_dots: rows not a multiple of m");
  const std::size_t b = vv.shape()[0] / m, d = vv.shape()[1];
  const std::size_t pairs = m * (m - 1) / 2;
  Tensor out({b, pairs}, 0.0);
  for (std::size_t s = 0; s < b; ++s) {
    const double* blk = vv.data().data() + s * m * d;
    std::size_t p = 0;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = i + 1; j < m; ++j, ++p) {
        double dot = 0.0;
        for (std::size_t k = 0; k < d; ++k) dot += blk[i * d + k] * blk[j * d + k];
        out[s * pairs + p] = dot;
      }
  }
  const std::size_t iv = v.id();
  return v.tape().record(std::move(out), {iv}, [iv, b, m, d, pairs](Tape& t, std::size_t self) {
    const Tensor& g = t.out_grad(self);
    const double* x = t.value(iv).data().data();
    double* gx = t.grad_buffer(iv).data().data();
    for (std::size_t s = 0; s < b; ++s) {
      std::size_t p = 0;
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = i + 1; j < m; ++j, ++p) {
          const double gp = g[s * pairs + p];
          if (gp == 0.0) continue;
          const double* xi = x + (s * m + i) * d;
          const double* xj = x + (s * m + j) * d;
          double* gi = gx + (s * m + i) * d;
          double* gj = gx + (s * m + j) * d;
          for (std::size_t k = 0; k < d; ++k) {
            gi[k] += gp * xj[k];
            gj[k] += gp * xi[k];
          }
        }
    }
  });
}

Var bce_with_logits(Var logits, std::span<const double> labels) {
  const Tensor& lv = logits.value();
  if (lv.size() != labels.size() || labels.empty()) {
    throw DimensionError("bce_with_logits: " + std::to_string(lv.size()) + " logits for " +
                         std::to_string(labels.size()) + " labels");
  }
  const double n = static_cast<double>(labels.size());
  double total = 0.0;
  for (std::size_t i = 0; i < lv.size(); ++i) {
    const double x = lv[i];
    total += std::max(x, 0.0) - x * labels[i] + std::log1p(std::exp(-std::abs(x)));
  }
  const std::size_t il = logits.id();
  std::vector<double> y(labels.begin(), labels.end());
  return logits.tape().record(Tensor::scalar(total / n), {il},
                              [il, y = std::move(y), n](Tape& t, std::size_t self) {
    const double g = t.out_grad(self)[0];
    const Tensor& x = t.value(il);
    Tensor& gl = t.grad_buffer(il);
    for (std::size_t i = 0; i < y.size(); ++i) gl[i] += g * (sigmoid_value(x[i]) - y[i]) / n;
  });
}

Var detach(Var a) { return a.tape().constant(a.value()); }

}  // namespace semid::tensor
