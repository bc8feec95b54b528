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

#pragma once

// Causal softmax attention with grouped KV heads, rotary positions and an
// explicit KV cache. A window of 0 means full attention; a positive window
// keeps the newest `window` positions, the current token included.

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "postnas/core/optim.hpp"
#include "postnas/core/rng.hpp"
#include "postnas/core/tensor.hpp"

namespace postnas::attention {

struct AttnConfig {
  int d_model = 0;
  int n_q_heads = 1;
  int n_kv_heads = 1;
  int head_dim = 2;
  int window = 0;  // 0: full attention
  float rope_base = 10000.0f;
  int max_positions = 4096;

  bool full() const { return window == 0; }
  bool operator==(const AttnConfig&) const = default;
};

void validate(const AttnConfig& config);

// Precomputed rotation angles pos * base^(-2i/head_dim) for pairs
// (x[2i], x[2i+1]).
class RopeTable {
 public:
  RopeTable(int head_dim, float base, int max_positions);

  int head_dim() const { return head_dim_; }
  int max_positions() const { return max_positions_; }
  // In-place rotation of one head vector; throws past the table.
  void apply(float* x, std::int64_t position) const;
  void apply_inverse(float* x, std::int64_t position) const;

 private:
  int head_dim_;
  int max_positions_;
  std::vector<float> cos_, sin_;  // [max_positions, head_dim / 2]
};

// Single-vector RoPE without a table.
std::vector<float> rope(std::span<const float> x, std::int64_t position,
                        float base = 10000.0f);

struct AttnParams {
  AttnConfig config;
  Tensor wq, wk, wv, wo;  // [d, Hq*hd], [d, Hkv*hd] x2, [Hq*hd, d]
  std::shared_ptr<const RopeTable> rope;

  std::vector<NamedTensor> named(const std::string& prefix) const;
  std::int64_t parameter_count() const;
};

AttnParams init_attention(const AttnConfig& config, Rng& rng);

// Per-layer key/value store. Full attention appends; sliding-window layers
// overwrite the oldest slot once `window` positions are held.
class KVCache {
 public:
  explicit KVCache(const AttnConfig& config);

  // k, v are [n_kv_heads * head_dim], already rotated.
  void append(std::span<const float> k, std::span<const float> v);
  std::int64_t kept() const { return kept_; }
  std::int64_t position() const { return position_; }  // tokens seen
  // Slot i in age order (0 = oldest kept).
  const float* key(std::int64_t i) const;
  const float* value(std::int64_t i) const;
  std::int64_t bytes(int dtype_width) const;

 private:
  AttnConfig config_;
  std::int64_t width_;
  std::int64_t capacity_;  // 0: unbounded
  std::int64_t kept_ = 0;
  std::int64_t head_ = 0;  // ring index of the oldest entry
  std::int64_t position_ = 0;
  std::vector<float> keys_, values_;
};

// Attention of one rotated query [n_q_heads * head_dim] over the cache
// contents; each KV head serves n_q / n_kv consecutive query heads.
std::vector<float> attend(const AttnConfig& config, std::span<const float> q,
                          const KVCache& cache);

// Full decode step of an attention layer: project, rotate at the cache's
// next position, append, attend, output-project.
std::vector<float> attend_step(const AttnParams& params, KVCache& cache,
                               std::span<const float> x_t);

// Differentiable rotation of x [B, T, H, head_dim] at positions 0..T-1.
Tensor rope_tensor(const Tensor& x,
                   const std::shared_ptr<const RopeTable>& table);

// Differentiable causal attention with 1/sqrt(head_dim) scaling:
// q [B, T, Hq, hd], k and v [B, T, Hkv, hd] -> [B, T, Hq, hd].
Tensor causal_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                        int window);

// Differentiable layer over x [B*T, d_model].
Tensor attention_forward(const AttnParams& params, const Tensor& x, int B,
                         int T);

}  // namespace postnas::attention
