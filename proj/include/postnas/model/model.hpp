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

// Decoder stack: embedding -> n_blocks x [x + mixer(norm(x)); x + mlp(norm(x))]
// -> final norm -> head. Norms are RMSNorm with a learned gain; the MLP is
// gated, down(silu(gate(x)) * up(x)).
//
// A block can hold several mixer paths at once (attention and a linear
// path in the search supernet). The LayerSpec list passed to forward()
// picks which one runs, so selecting a subnetwork never touches weights.
//
// Parameter names:
//   embed, head, final_norm,
//   blocks.{i}.mixer_norm, blocks.{i}.mlp_norm, blocks.{i}.mlp.{gate,up,down},
//   blocks.{i}.attn.*, blocks.{i}.lin.*, blocks.{i}.jet.*

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "postnas/core/optim.hpp"
#include "postnas/model/config.hpp"

namespace postnas::model {

struct BlockParams {
  Tensor mixer_norm, mlp_norm;
  Tensor gate, up, down;  // [d, I], [d, I], [I, d]
  std::optional<attention::AttnParams> attn;
  std::optional<blocks::LinearBlockParams> lin;
  std::optional<blocks::JetBlockParams> jet;
};

struct ModelParams {
  ModelConfig config;
  Tensor embed;       // [vocab, d]
  Tensor head;        // [d, vocab]; undefined when tied
  Tensor final_norm;  // [d]
  std::vector<BlockParams> blocks;

  std::vector<NamedTensor> named() const;
  std::int64_t parameter_count() const;
};

// Fresh parameters with one mixer path per block as the config says.
ModelParams init_model(const ModelConfig& config, std::uint64_t seed);

// Adds a linear (or, for GatedDelta with `jet`, Jet) path to block i,
// initialized from the block's attention weights where shapes allow.
void add_linear_path(ModelParams& params, int block, blocks::LinearBlockKind kind,
                     Rng& rng);
void add_jet_path(ModelParams& params, int block, Rng& rng);

// Student for `student_config` that inherits the teacher's embedding, head,
// norms and MLPs (copied), copies attention layers that stay attention, and
// initializes new linear/Jet mixers from the teacher's attention projections
// where shapes permit: query weights as-is, key/value weights with each KV
// head repeated across its query group, output weights as-is. Other tensors
// are random.
ModelParams inherit(const ModelParams& teacher, const ModelConfig& student_config,
                    std::uint64_t seed);

struct ForwardResult {
  Tensor logits;                // [B*T, vocab]
  std::vector<Tensor> hidden;   // per block output, [B*T, d]
};

// tokens are B sequences of length T, row-major. `layers` overrides the
// config's layer list (same length); the selected path must exist.
ForwardResult forward(const ModelParams& params, std::span<const int> tokens,
                      int B, int T, std::span<const LayerSpec> layers = {});

// Frozen during stage-1 distillation and supernet training: embed, head,
// final_norm, every mlp_norm and mlp weight.
bool is_frozen_name(const std::string& name);
std::vector<NamedTensor> frozen_parameters(const ModelParams& params);
std::vector<NamedTensor> trainable_parameters(const ModelParams& params,
                                              bool freeze);

// FNV-1a over the names, shapes and raw bytes of the frozen set.
std::uint64_t frozen_hash(const ModelParams& params);

// Deep copy with fresh tensors.
ModelParams clone(const ModelParams& params);

}  // namespace postnas::model
