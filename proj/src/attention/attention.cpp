// Copyright 2026 The PostNAS Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "postnas/attention/attention.hpp"

#include <algorithm>
#include <cmath>

#include "postnas/core/error.hpp"
#include "postnas/core/ops.hpp"
#include "postnas/simd/kernels.hpp"

namespace postnas::attention {

void validate(const AttnConfig& c) {
  if (c.d_model < 1 || c.n_q_heads < 1 || c.n_kv_heads < 1 || c.head_dim < 1)
    fail(ErrorKind::Config, "attention: dimensions must be >= 1");
  if (c.n_q_heads % c.n_kv_heads != 0)
    fail(ErrorKind::Config, "attention: n_q_heads (" +
                                std::to_string(c.n_q_heads) +
                                ") not divisible by n_kv_heads (" +
                                std::to_string(c.n_kv_heads) + ")");
  if (c.head_dim % 2 != 0)
    fail(ErrorKind::Config, "attention: RoPE needs an even head_dim, got " +
                                std::to_string(c.head_dim));
  if (c.window < 0)
    fail(ErrorKind::Config, "attention: window must be >= 1, or 0 for full");
  if (c.max_positions < 1 || !(c.rope_base > 0.0f))
    fail(ErrorKind::Config, "attention: bad rope table settings");
}

RopeTable::RopeTable(int head_dim, float base, int max_positions)
    : head_dim_(head_dim), max_positions_(max_positions) {
  if (head_dim % 2 != 0)
    fail(ErrorKind::Shape,
         "rope: head_dim must be even, got " + std::to_string(head_dim));
  const int half = head_dim / 2;
  cos_.resize(static_cast<std::size_t>(max_positions) * half);
  sin_.resize(cos_.size());
  for (int p = 0; p < max_positions; ++p)
    for (int i = 0; i < half; ++i) {
      const double a =
          p * std::pow(static_cast<double>(base), -2.0 * i / head_dim);
      cos_[static_cast<std::size_t>(p) * half + i] = static_cast<float>(std::cos(a));
      sin_[static_cast<std::size_t>(p) * half + i] = static_cast<float>(std::sin(a));
    }
}

namespace {

void rotate(float* x, const float* c, const float* s, int half, float sign) {
  for (int i = 0; i < half; ++i) {
    const float a = x[2 * i];
    const float b = x[2 * i + 1];
    x[2 * i] = a * c[i] - sign * b * s[i];
    x[2 * i + 1] = sign * a * s[i] + b * c[i];
  }
}

}  // namespace

void RopeTable::apply(float* x, std::int64_t position) const {
  if (position < 0 || position >= max_positions_)
    fail(ErrorKind::Capacity, "rope: position " + std::to_string(position) +
                                  " outside table of " +
                                  std::to_string(max_positions_));
  const int half = head_dim_ / 2;
  rotate(x, &cos_[position * half], &sin_[position * half], half, 1.0f);
}

void RopeTable::apply_inverse(float* x, std::int64_t position) const {
  if (position < 0 || position >= max_positions_)
    fail(ErrorKind::Capacity, "rope: position " + std::to_string(position) +
                                  " outside table of " +
                                  std::to_string(max_positions_));
  const int half = head_dim_ / 2;
  rotate(x, &cos_[position * half], &sin_[position * half], half, -1.0f);
}

std::vector<float> rope(std::span<const float> x, std::int64_t position,
                        float base) {
  if (x.size() % 2 != 0)
    fail(ErrorKind::Shape,
         "rope: head_dim must be even, got " + std::to_string(x.size()));
  const int hd = static_cast<int>(x.size());
  std::vector<float> out(x.begin(), x.end());
  for (int i = 0; i < hd / 2; ++i) {
    const double a = static_cast<double>(position) *
                     std::pow(static_cast<double>(base), -2.0 * i / hd);
    const float c = static_cast<float>(std::cos(a));
    const float s = static_cast<float>(std::sin(a));
    rotate(out.data() + 2 * i, &c, &s, 1, 1.0f);
  }
  return out;
}

std::vector<NamedTensor> AttnParams::named(const std::string& prefix) const {
  return {{prefix + "wq", wq},
          {prefix + "wk", wk},
          {prefix + "wv", wv},
          {prefix + "wo", wo}};
}

std::int64_t AttnParams::parameter_count() const {
  return wq.numel() + wk.numel() + wv.numel() + wo.numel();
}

AttnParams init_attention(const AttnConfig& c, Rng& rng) {
  validate(c);
  AttnParams p;
  p.config = c;
  const int q = c.n_q_heads * c.head_dim;
  const int kv = c.n_kv_heads * c.head_dim;
  const float s = 1.0f / std::sqrt(static_cast<float>(c.d_model));
  p.wq = Tensor::randn({c.d_model, q}, rng, s, true);
  p.wk = Tensor::randn({c.d_model, kv}, rng, s, true);
  p.wv = Tensor::randn({c.d_model, kv}, rng, s, true);
  p.wo = Tensor::randn({q, c.d_model}, rng, 1.0f / std::sqrt(float(q)), true);
  p.rope = std::make_shared<RopeTable>(c.head_dim, c.rope_base, c.max_positions);
  return p;
}

KVCache::KVCache(const AttnConfig& c)
    : config_(c),
      width_(static_cast<std::int64_t>(c.n_kv_heads) * c.head_dim),
      capacity_(c.window) {
  validate(c);
  if (capacity_ > 0) {
    keys_.resize(static_cast<std::size_t>(capacity_ * width_));
    values_.resize(keys_.size());
  }
}

void KVCache::append(std::span<const float> k, std::span<const float> v) {
  if (static_cast<std::int64_t>(k.size()) != width_ ||
      static_cast<std::int64_t>(v.size()) != width_)
    fail(ErrorKind::Shape, "kv cache: entry width " + std::to_string(k.size()) +
                               " != " + std::to_string(width_));
  if (capacity_ == 0) {
    keys_.insert(keys_.end(), k.begin(), k.end());
    values_.insert(values_.end(), v.begin(), v.end());
    ++kept_;
  } else {
    std::int64_t slot;
    if (kept_ < capacity_) {
      slot = (head_ + kept_) % capacity_;
      ++kept_;
    } else {
      slot = head_;
      head_ = (head_ + 1) % capacity_;
    }
    std::copy(k.begin(), k.end(), keys_.begin() + slot * width_);
    std::copy(v.begin(), v.end(), values_.begin() + slot * width_);
  }
  ++position_;
}

const float* KVCache::key(std::int64_t i) const {
  const std::int64_t slot = capacity_ == 0 ? i : (head_ + i) % capacity_;
  return keys_.data() + slot * width_;
}

const float* KVCache::value(std::int64_t i) const {
  const std::int64_t slot = capacity_ == 0 ? i : (head_ + i) % capacity_;
  return values_.data() + slot * width_;
}

std::int64_t KVCache::bytes(int dtype_width) const {
  return 2 * kept_ * width_ * dtype_width;
}

std::vector<float> attend(const AttnConfig& c, std::span<const float> q,
                          const KVCache& cache) {
  const int hd = c.head_dim;
  if (static_cast<int>(q.size()) != c.n_q_heads * hd)
    fail(ErrorKind::Shape, "attend: query width " + std::to_string(q.size()) +
                               " != " + std::to_string(c.n_q_heads * hd));
  const std::int64_t n = cache.kept();
  if (n == 0) fail(ErrorKind::State, "attend: empty cache");
  const auto& kt = simd::active();
  const int group = c.n_q_heads / c.n_kv_heads;
  const float scale = 1.0f / std::sqrt(static_cast<float>(hd));
  std::vector<float> out(q.size(), 0.0f), p(static_cast<std::size_t>(n));
  for (int h = 0; h < c.n_q_heads; ++h) {
    const int g = h / group;
    const float* qh = q.data() + static_cast<std::size_t>(h) * hd;
    float m = -INFINITY;
    for (std::int64_t i = 0; i < n; ++i) {
      p[i] = kt.dot(qh, cache.key(i) + static_cast<std::size_t>(g) * hd, hd) * scale;
      m = std::max(m, p[i]);
    }
    float z = 0.0f;
    for (std::int64_t i = 0; i < n; ++i) {
      p[i] = std::exp(p[i] - m);
      z += p[i];
    }
    float* oh = out.data() + static_cast<std::size_t>(h) * hd;
    for (std::int64_t i = 0; i < n; ++i)
      kt.axpy(p[i] / z, cache.value(i) + static_cast<std::size_t>(g) * hd, oh, hd);
  }
  return out;
}

std::vector<float> attend_step(const AttnParams& p, KVCache& cache,
                               std::span<const float> x_t) {
  const auto& c = p.config;
  if (static_cast<int>(x_t.size()) != c.d_model)
    fail(ErrorKind::Shape, "attention step: input width " +
                               std::to_string(x_t.size()) + " != d_model " +
                               std::to_string(c.d_model));
  const auto& kt = simd::active();
  const int qw = c.n_q_heads * c.head_dim;
  const int kw = c.n_kv_heads * c.head_dim;
  std::vector<float> q(qw), k(kw), v(kw);
  kt.gemv_t(c.d_model, qw, p.wq.data().data(), qw, x_t.data(), q.data(), false);
  kt.gemv_t(c.d_model, kw, p.wk.data().data(), kw, x_t.data(), k.data(), false);
  kt.gemv_t(c.d_model, kw, p.wv.data().data(), kw, x_t.data(), v.data(), false);
  const std::int64_t pos = cache.position();
  for (int h = 0; h < c.n_q_heads; ++h) p.rope->apply(q.data() + h * c.head_dim, pos);
  for (int h = 0; h < c.n_kv_heads; ++h) p.rope->apply(k.data() + h * c.head_dim, pos);
  cache.append(k, v);
  auto o = attend(c, q, cache);
  std::vector<float> y(static_cast<std::size_t>(c.d_model));
  kt.gemv_t(qw, c.d_model, p.wo.data().data(), c.d_model, o.data(), y.data(), false);
  return y;
}

Tensor rope_tensor(const Tensor& x,
                   const std::shared_ptr<const RopeTable>& table_ptr) {
  const RopeTable& table = *table_ptr;
  if (x.rank() != 4 || x.dim(3) != table.head_dim())
    fail(ErrorKind::Shape, "rope: input " + shape_str(x.shape()) +
                               " does not end in head_dim " +
                               std::to_string(table.head_dim()));
  const std::int64_t B = x.dim(0), T = x.dim(1), H = x.dim(2), D = x.dim(3);
  if (T > table.max_positions())
    fail(ErrorKind::Capacity, "rope: sequence length " + std::to_string(T) +
                                  " exceeds table of " +
                                  std::to_string(table.max_positions()));
  std::vector<float> out(x.data().begin(), x.data().end());
  for (std::int64_t b = 0; b < B; ++b)
    for (std::int64_t t = 0; t < T; ++t)
      for (std::int64_t h = 0; h < H; ++h)
        table.apply(out.data() + ((b * T + t) * H + h) * D, t);
  return make_op("rope", x.shape(), std::move(out), {x},
                 [table_ptr, B, T, H, D](Node& self) {
                   const RopeTable& table = *table_ptr;
                   float* gx = self.parent_grad(0);
                   if (!gx) return;
                   std::vector<float> g(static_cast<std::size_t>(D));
                   for (std::int64_t b = 0; b < B; ++b)
                     for (std::int64_t t = 0; t < T; ++t)
                       for (std::int64_t h = 0; h < H; ++h) {
                         const std::int64_t off = ((b * T + t) * H + h) * D;
                         std::copy_n(self.grad.data() + off, D, g.data());
                         table.apply_inverse(g.data(), t);
                         for (std::int64_t d = 0; d < D; ++d) gx[off + d] += g[d];
                       }
                 });
}

Tensor causal_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                        int window) {
  if (q.rank() != 4 || k.rank() != 4 || k.shape() != v.shape() ||
      k.dim(0) != q.dim(0) || k.dim(1) != q.dim(1) || k.dim(3) != q.dim(3) ||
      q.dim(2) % k.dim(2) != 0 || window < 0)
    fail(ErrorKind::Shape, "causal_attention: q " + shape_str(q.shape()) +
                               ", k " + shape_str(k.shape()) + ", v " +
                               shape_str(v.shape()));
  const std::int64_t B = q.dim(0), T = q.dim(1), Hq = q.dim(2), Hk = k.dim(2),
                     D = q.dim(3);
  const std::int64_t group = Hq / Hk;
  const float scale = 1.0f / std::sqrt(static_cast<float>(D));
  const auto& kt = simd::active();
  auto probs = std::make_shared<std::vector<float>>(
      static_cast<std::size_t>(B * Hq * T * T), 0.0f);
  std::vector<float> out(static_cast<std::size_t>(q.numel()), 0.0f);
  const float* Q = q.data().data();
  const float* K = k.data().data();
  const float* V = v.data().data();
  for (std::int64_t b = 0; b < B; ++b)
    for (std::int64_t h = 0; h < Hq; ++h) {
      const std::int64_t g = h / group;
      for (std::int64_t i = 0; i < T; ++i) {
        const std::int64_t lo = window > 0 ? std::max<std::int64_t>(0, i - window + 1) : 0;
        float* p = probs->data() + ((b * Hq + h) * T + i) * T;
        const float* qi = Q + ((b * T + i) * Hq + h) * D;
        float m = -INFINITY;
        for (std::int64_t j = lo; j <= i; ++j) {
          p[j] = kt.dot(qi, K + ((b * T + j) * Hk + g) * D, D) * scale;
          m = std::max(m, p[j]);
        }
        float z = 0.0f;
        for (std::int64_t j = lo; j <= i; ++j) {
          p[j] = std::exp(p[j] - m);
          z += p[j];
        }
        float* oi = out.data() + ((b * T + i) * Hq + h) * D;
        for (std::int64_t j = lo; j <= i; ++j) {
          p[j] /= z;
          kt.axpy(p[j], V + ((b * T + j) * Hk + g) * D, oi, D);
        }
      }
    }
  return make_op(
      "causal_attention", q.shape(), std::move(out), {q, k, v},
      [=, probs = std::move(probs)](Node& self) {
        const auto& kt = simd::active();
        const float* Q = self.parents[0]->value.data();
        const float* K = self.parents[1]->value.data();
        const float* V = self.parents[2]->value.data();
        float* gq = self.parent_grad(0);
        float* gk = self.parent_grad(1);
        float* gv = self.parent_grad(2);
        std::vector<float> dp(static_cast<std::size_t>(T));
        for (std::int64_t b = 0; b < B; ++b)
          for (std::int64_t h = 0; h < Hq; ++h) {
            const std::int64_t g = h / group;
            for (std::int64_t i = 0; i < T; ++i) {
              const std::int64_t lo =
                  window > 0 ? std::max<std::int64_t>(0, i - window + 1) : 0;
              const float* p = probs->data() + ((b * Hq + h) * T + i) * T;
              const std::int64_t qi = ((b * T + i) * Hq + h) * D;
              const float* go = self.grad.data() + qi;
              float pdp = 0.0f;
              for (std::int64_t j = lo; j <= i; ++j) {
                const std::int64_t vj = ((b * T + j) * Hk + g) * D;
                dp[j] = kt.dot(go, V + vj, D);
                pdp += p[j] * dp[j];
                if (gv) kt.axpy(p[j], go, gv + vj, D);
              }
              for (std::int64_t j = lo; j <= i; ++j) {
                const float ds = p[j] * (dp[j] - pdp) * scale;
                const std::int64_t kj = ((b * T + j) * Hk + g) * D;
                if (gq) kt.axpy(ds, K + kj, gq + qi, D);
                if (gk) kt.axpy(ds, Q + qi, gk + kj, D);
              }
            }
          }
      });
}

Tensor attention_forward(const AttnParams& p, const Tensor& x, int B, int T) {
  const auto& c = p.config;
  const std::int64_t BT = static_cast<std::int64_t>(B) * T;
  if (x.rank() != 2 || x.dim(0) != BT || x.dim(1) != c.d_model)
    fail(ErrorKind::Shape, "attention: input " + shape_str(x.shape()) +
                               " does not match [" + std::to_string(BT) + "," +
                               std::to_string(c.d_model) + "]");
  Tensor q = rope_tensor(
      ops::reshape(ops::matmul(x, p.wq), {B, T, c.n_q_heads, c.head_dim}), p.rope);
  Tensor k = rope_tensor(
      ops::reshape(ops::matmul(x, p.wk), {B, T, c.n_kv_heads, c.head_dim}), p.rope);
  Tensor v = ops::reshape(ops::matmul(x, p.wv), {B, T, c.n_kv_heads, c.head_dim});
  Tensor o = causal_attention(q, k, v, c.window);
  return ops::matmul(
      ops::reshape(o, {BT, static_cast<std::int64_t>(c.n_q_heads) * c.head_dim}),
      p.wo);
}

}  // namespace postnas::attention
