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

// JetBlock: gated-delta time mixing whose value stream first passes through a
// causal depthwise convolution with kernels generated from the current input
// token. q and k carry no static convolution.
//
//   w_t  = OutLinear(SiLU(ReduceLinear(x_t)))    one size-K kernel per head
//   v~_t = sum_i w_t[h, i] v_{t-(K-1-i)}          zero left padding
//
// then the usual gated-delta recurrence over (q, k, v~).

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "postnas/blocks/linear_block.hpp"

namespace postnas::blocks {

enum class TapNorm { None, Softmax };

std::string_view tap_norm_name(TapNorm norm);
TapNorm parse_tap_norm(std::string_view name);

// Generator hidden width presets: a fixed width of 32, or d_model / 8.
enum class GeneratorPreset { Fixed32, ReductionRatio8 };
int generator_hidden(GeneratorPreset preset, int d_model);

struct JetBlockConfig {
  LinearBlockConfig base;  // kind GatedDelta, static convs off
  int gen_hidden = 32;
  int kernel_size = 4;
  TapNorm norm = TapNorm::Softmax;

  bool operator==(const JetBlockConfig&) const = default;
};

// GatedDelta base with the given shapes and defaults for the rest.
JetBlockConfig make_jet_config(int d_model, int n_head, int d_k, int d_v);

void validate(const JetBlockConfig& config);

// Gated-delta state plus n_head * d_v * (kernel_size - 1) value-conv tail.
StateSize state_size(const JetBlockConfig& config, int dtype_width = 2);

struct JetBlockParams {
  JetBlockConfig config;
  LinearBlockParams base;
  Tensor gen_reduce_w, gen_reduce_b;  // [d_model, g], [g]
  Tensor gen_out_w, gen_out_b;        // [g, H*K], [H*K]

  std::vector<NamedTensor> named(const std::string& prefix) const;
  std::int64_t parameter_count() const;
};

JetBlockParams init_jetblock(const JetBlockConfig& config, Rng& rng);

// Per-head kernels for one token, [n_head, kernel_size].
std::vector<float> generate_kernels(const JetBlockParams& params,
                                    std::span<const float> x_t);
// Differentiable form over x [N, d_model] -> [N, n_head * kernel_size].
Tensor generate_kernels(const JetBlockParams& params, const Tensor& x);

RecurrentState initial_state(const JetBlockConfig& config);

std::vector<float> step(const JetBlockParams& params, RecurrentState& state,
                        std::span<const float> x_t);
std::vector<float> forward_sequential(const JetBlockParams& params,
                                      std::span<const float> x, int T);
std::vector<float> forward_chunked(const JetBlockParams& params,
                                   std::span<const float> x, int T,
                                   int chunk_size);
Tensor block_forward(const JetBlockParams& params, const Tensor& x, int B,
                     int T);

}  // namespace postnas::blocks
