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

// Linear-attention block zoo. Every kind projects x to per-head q, k, v (plus
// gates), runs the matrix-state recurrence from scan.hpp and projects the
// concatenated head outputs back to d_model.
//
//   kind            decay                     write
//   RetNetDecay     fixed gamma_h per head    additive
//   GLADiagonalGate sigmoid, one per key dim  additive
//   ScalarDataGate  sigmoid, one per head     additive
//   DeltaRule       none                      delta, beta = sigmoid
//   GatedDelta      sigmoid, one per head     delta, beta = sigmoid
//
// Keys are L2-normalized for the delta kinds only. Queries are scaled by
// 1/sqrt(d_k) for every kind.

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "postnas/blocks/scan.hpp"
#include "postnas/core/optim.hpp"
#include "postnas/core/rng.hpp"
#include "postnas/core/tensor.hpp"

namespace postnas::blocks {

enum class LinearBlockKind {
  RetNetDecay,
  GLADiagonalGate,
  ScalarDataGate,
  DeltaRule,
  GatedDelta,
};

inline constexpr std::array<LinearBlockKind, 5> kAllLinearKinds{
    LinearBlockKind::RetNetDecay, LinearBlockKind::GLADiagonalGate,
    LinearBlockKind::ScalarDataGate, LinearBlockKind::DeltaRule,
    LinearBlockKind::GatedDelta};

// "retnet", "gla", "scalar_gate", "delta", "gated_delta"
std::string_view kind_name(LinearBlockKind kind);
LinearBlockKind parse_kind(std::string_view name);

WriteRule write_rule(LinearBlockKind kind);
DecayShape decay_shape(LinearBlockKind kind);
bool normalizes_keys(LinearBlockKind kind);

// gamma_h = 1 - 2^(-5-h)
float retnet_decay(int head);

struct LinearBlockConfig {
  LinearBlockKind kind = LinearBlockKind::GatedDelta;
  int d_model = 0;
  int n_head = 1;
  int d_k = 1;
  int d_v = 1;
  // Optional static causal conv on each projected stream.
  bool conv_q = false;
  bool conv_k = false;
  bool conv_v = false;
  int conv_size = 4;

  bool operator==(const LinearBlockConfig&) const = default;
};

void validate(const LinearBlockConfig& config);

struct StateSize {
  std::int64_t entries = 0;
  std::int64_t bytes = 0;
};

// n_head * d_k * d_v matrix entries plus (conv_size - 1) * width per
// convolved stream.
StateSize state_size(const LinearBlockConfig& config, int dtype_width = 2);

struct LinearBlockParams {
  LinearBlockConfig config;
  Tensor wq, wk, wv, wo;    // [d, H*d_k] x2, [d, H*d_v], [H*d_v, d]
  Tensor w_decay, b_decay;  // data-dependent decay gate, if any
  Tensor w_beta, b_beta;    // delta write strength, if any
  Tensor conv_q, conv_k, conv_v;  // [width, conv_size], if enabled

  // Defined tensors under `prefix` + name, in a fixed order.
  std::vector<NamedTensor> named(const std::string& prefix) const;
  std::int64_t parameter_count() const;
};

LinearBlockParams init_linear_block(const LinearBlockConfig& config, Rng& rng);

struct RecurrentState {
  std::vector<float> S;  // [H, d_v, d_k]
  std::vector<float> tail_q, tail_k, tail_v;  // static conv tails
  std::vector<float> tail_dyn;                // dynamic value-conv tail
  std::int64_t position = 0;
  bool initialized = false;
};

RecurrentState initial_state(const LinearBlockConfig& config);

// One token through the block; `state` must come from initial_state().
std::vector<float> step(const LinearBlockParams& params, RecurrentState& state,
                        std::span<const float> x_t);

// x is [T, d_model] row-major; both return [T, d_model] from a fresh state.
std::vector<float> forward_sequential(const LinearBlockParams& params,
                                      std::span<const float> x, int T);
// chunk_size 1 is the step loop itself; larger chunks use the chunk-parallel
// form and agree with it to float rounding.
std::vector<float> forward_chunked(const LinearBlockParams& params,
                                   std::span<const float> x, int T,
                                   int chunk_size);

// Differentiable block over x [B*T, d_model] (B sequences of length T).
Tensor block_forward(const LinearBlockParams& params, const Tensor& x, int B,
                     int T);

namespace detail {

// Per-token streams of T tokens after projection and gating:
// q, k [T, H*d_k]; v [T, H*d_v]; decay [T, H] or [T, H*d_k]; beta [T, H].
struct Streams {
  int T = 0;
  std::vector<float> q, k, v, decay, beta;
};

// Projections, gates and static convs (with `state` tails advanced).
Streams project(const LinearBlockParams& params, RecurrentState& state,
                std::span<const float> x, int T);
// Key normalization and query scaling.
void finish(const LinearBlockConfig& config, Streams& s);
// Recurrence over all heads; chunk_size <= 1 means cell steps. Returns
// [T, H*d_v].
std::vector<float> mix(const LinearBlockConfig& config, const Streams& s,
                       std::vector<float>& S, int chunk_size);
std::vector<float> output_projection(const LinearBlockParams& params,
                                     std::span<const float> o, int T);

// Differentiable counterparts; x is [B*T, d]. Returned q, k, v are already
// shaped [B, T, H, d_*].
struct StreamTensors {
  Tensor q, k, v, decay, beta;
};
StreamTensors project_tensors(const LinearBlockParams& params, const Tensor& x,
                              int B, int T);
Tensor mix_tensors(const LinearBlockParams& params, const StreamTensors& s,
                   int B, int T);

}  // namespace detail

}  // namespace postnas::blocks
