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

// Analytic memory and throughput model for autoregressive inference.
//
// Cache bytes per sequence at context L (width = bytes per element):
//   full attention   2 * n_kv * head_dim * width * L
//   sliding window   2 * n_kv * head_dim * width * min(L, window)
//   linear / Jet     state entries * width, independent of L (the
//                    convolution tails are reported separately)
//
// Decode is bandwidth bound: one step reads the weights once plus every
// sequence's cache. Prefill runs in chunks, each chunk timed by the roofline
// max(flops / compute, bytes / bandwidth).

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "postnas/model/config.hpp"

namespace postnas::perf {

struct HardwareSpec {
  std::string name;
  double memory_bytes = 0.0;
  double bandwidth = 0.0;  // bytes / s
  double compute = 0.0;    // flop / s

  bool operator==(const HardwareSpec&) const = default;
};

void validate(const HardwareSpec& hw);

struct LayerCache {
  int layer = 0;
  model::MixerKind kind = model::MixerKind::Full;
  std::int64_t kv_bytes = 0;     // full or sliding-window KV
  std::int64_t state_bytes = 0;  // recurrent matrix state
  std::int64_t tail_bytes = 0;   // convolution tails
  std::int64_t total() const { return kv_bytes + state_bytes + tail_bytes; }
};

struct CacheReport {
  std::int64_t context = 0;
  int dtype_width = 2;
  std::vector<LayerCache> layers;
  std::int64_t full_kv = 0;
  std::int64_t swa_kv = 0;
  std::int64_t linear_state = 0;
  std::int64_t conv_tails = 0;
  std::int64_t total = 0;
};

// width <= 0 uses the config's dtype_width.
CacheReport cache_bytes(const model::ModelConfig& config, std::int64_t context,
                        int width = 0);

// Full-attention KV bytes appended per token, all layers.
std::int64_t full_kv_bytes_per_token(const model::ModelConfig& config,
                                     int width = 0);

std::int64_t weight_bytes(const model::ModelConfig& config, int width = 0);

// Bytes held per sequence while prefilling a chunk: one hidden vector per
// block per chunk token.
std::int64_t activation_bytes(const model::ModelConfig& config, int chunk,
                              int width = 0);

// Largest batch whose weights + batch * (cache + activations) fit; 0 if none.
std::int64_t max_batch(const model::ModelConfig& config, const HardwareSpec& hw,
                       std::int64_t context, int chunk);

// Tokens per second at `batch`. Throws Error(Capacity) naming the binding
// constraint when weights + batch * cache exceed memory.
double decode_throughput(const model::ModelConfig& config, const HardwareSpec& hw,
                         std::int64_t context, std::int64_t batch);

// Floating-point work of one token: 2 flops per non-embedding weight plus
// 4 * n_q * head_dim per attended position and 4 * n_head * d_k * d_v per
// linear layer (plus 2 * n_head * d_v * kernel for Jet value convolution).
double token_flops(const model::ModelConfig& config, std::int64_t position);

// Prefill of `batch` prompts of length L in chunks of `chunk` tokens.
double prefill_throughput(const model::ModelConfig& config, const HardwareSpec& hw,
                          std::int64_t context, int chunk, std::int64_t batch);

struct ThroughputReport {
  std::int64_t context = 0;
  int chunk = 0;
  std::int64_t batch = 0;
  double prefill_tps = 0.0;
  double decode_tps = 0.0;
};

struct ChunkSweep {
  int min_chunk = 64;
  int max_chunk = 65536;
  double delta = 0.05;  // allowed prefill loss vs the best chunk
};

// Over power-of-two chunks: batch = max_batch(chunk); keep chunks whose
// prefill throughput is >= (1 - delta) * best; return the one with the
// highest decode throughput (ties: larger chunk). Throws Error(Capacity)
// if no chunk admits batch >= 1.
ThroughputReport optimize_chunk_and_batch(const model::ModelConfig& config,
                                          const HardwareSpec& hw,
                                          std::int64_t context,
                                          const ChunkSweep& sweep = {});

struct SpeedupPoint {
  std::int64_t context = 0;
  double prefill_x = 0.0;
  double decode_x = 0.0;
  ThroughputReport a, b;
};

// Throughput of `a` over baseline `b`, each at its own optimized chunk and
// batch.
std::vector<SpeedupPoint> speedup_curve(const model::ModelConfig& a,
                                        const model::ModelConfig& b,
                                        const HardwareSpec& hw,
                                        const std::vector<std::int64_t>& contexts,
                                        const ChunkSweep& sweep = {});

// layer,kind,bytes with one row per layer and a final "total" row.
void write_cache_csv(std::ostream& out, const CacheReport& report);
// context,prefill_x,decode_x
void write_speedup_csv(std::ostream& out, const std::vector<SpeedupPoint>& curve);

}  // namespace postnas::perf
