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

// Architecture description shared by the trainer and the memory model. One
// LayerSpec per block selects its sequence mixer; all attention layers share
// one attention shape and all linear/Jet layers one linear shape.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "postnas/attention/attention.hpp"
#include "postnas/blocks/jetblock.hpp"
#include "postnas/blocks/linear_block.hpp"

namespace postnas::model {

enum class MixerKind { Full, SlidingWindow, Linear, Jet };

std::string_view mixer_name(MixerKind kind);
MixerKind parse_mixer(std::string_view name);

struct LayerSpec {
  MixerKind mixer = MixerKind::Full;
  int window = 0;  // SlidingWindow only
  blocks::LinearBlockKind kind = blocks::LinearBlockKind::GatedDelta;  // Linear only

  bool operator==(const LayerSpec&) const = default;
};

struct AttentionShape {
  int n_q_heads = 4;
  int n_kv_heads = 2;
  int head_dim = 32;
  float rope_base = 10000.0f;
  int max_positions = 4096;

  bool operator==(const AttentionShape&) const = default;
};

struct LinearShape {
  int n_head = 4;
  int d_k = 32;
  int d_v = 32;
  bool short_conv = false;  // static q/k/v convs on Linear layers
  int conv_size = 4;
  // Jet layers
  int kernel_size = 4;
  int gen_hidden = 32;
  blocks::TapNorm tap_norm = blocks::TapNorm::Softmax;

  bool operator==(const LinearShape&) const = default;
};

struct ModelConfig {
  std::string name;
  int vocab_size = 128;
  int d_model = 128;
  int n_blocks = 8;
  int mlp_intermediate = 256;
  bool tie_embeddings = false;
  int dtype_width = 2;  // bytes per cached element, memory model only
  AttentionShape attention;
  LinearShape linear;
  std::vector<LayerSpec> layers;

  bool operator==(const ModelConfig&) const = default;
};

void validate(const ModelConfig& config);

attention::AttnConfig attention_config(const ModelConfig& config,
                                       const LayerSpec& layer);
blocks::LinearBlockConfig linear_config(const ModelConfig& config,
                                        blocks::LinearBlockKind kind);
blocks::JetBlockConfig jet_config(const ModelConfig& config);

// All-Full model with the desk defaults: d_model 128, 8 blocks, 4 query /
// 2 kv heads of width 32, MLP 256, vocab 128.
ModelConfig desk_config();

// Copy of `base` whose layers are `other` except the listed Full and
// sliding-window indices. Throws on out-of-range or overlapping indices.
ModelConfig with_placement(const ModelConfig& base,
                           const std::vector<int>& full,
                           const std::vector<int>& swa, int window,
                           const LayerSpec& other);

std::vector<int> layers_of(const ModelConfig& config, MixerKind kind);

// Analytic parameter counts; they match the allocated models exactly.
std::int64_t mixer_parameter_count(const ModelConfig& config,
                                   const LayerSpec& layer);
std::int64_t parameter_count(const ModelConfig& config);

}  // namespace postnas::model
