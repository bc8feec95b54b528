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

#include "postnas/model/config.hpp"

#include <algorithm>

#include "postnas/core/error.hpp"

namespace postnas::model {

using blocks::LinearBlockKind;

std::string_view mixer_name(MixerKind kind) {
  switch (kind) {
    case MixerKind::Full: return "full";
    case MixerKind::SlidingWindow: return "swa";
    case MixerKind::Linear: return "linear";
    case MixerKind::Jet: return "jet";
  }
  return "?";
}

MixerKind parse_mixer(std::string_view name) {
  for (auto k : {MixerKind::Full, MixerKind::SlidingWindow, MixerKind::Linear,
                 MixerKind::Jet})
    if (mixer_name(k) == name) return k;
  fail(ErrorKind::Config, "unknown mixer '" + std::string(name) +
                              "' (expected full, swa, linear or jet)");
}

void validate(const ModelConfig& c) {
  auto bad = [&](const std::string& msg) {
    fail(ErrorKind::Config, "model '" + c.name + "': " + msg);
  };
  if (c.vocab_size < 1 || c.d_model < 1 || c.n_blocks < 1 || c.mlp_intermediate < 1)
    bad("vocab_size, d_model, n_blocks, mlp_intermediate must be >= 1");
  if (c.dtype_width < 1) bad("dtype_width must be >= 1");
  if (static_cast<int>(c.layers.size()) != c.n_blocks)
    bad("layers lists " + std::to_string(c.layers.size()) + " entries for " +
        std::to_string(c.n_blocks) + " blocks");
  for (std::size_t i = 0; i < c.layers.size(); ++i) {
    const auto& l = c.layers[i];
    switch (l.mixer) {
      case MixerKind::Full: attention::validate(attention_config(c, l)); break;
      case MixerKind::SlidingWindow:
        if (l.window < 1) bad("layer " + std::to_string(i) + ": swa window must be >= 1");
        attention::validate(attention_config(c, l));
        break;
      case MixerKind::Linear: blocks::validate(linear_config(c, l.kind)); break;
      case MixerKind::Jet: blocks::validate(jet_config(c)); break;
    }
  }
}

attention::AttnConfig attention_config(const ModelConfig& c, const LayerSpec& l) {
  attention::AttnConfig a;
  a.d_model = c.d_model;
  a.n_q_heads = c.attention.n_q_heads;
  a.n_kv_heads = c.attention.n_kv_heads;
  a.head_dim = c.attention.head_dim;
  a.window = l.mixer == MixerKind::SlidingWindow ? l.window : 0;
  a.rope_base = c.attention.rope_base;
  a.max_positions = c.attention.max_positions;
  return a;
}

blocks::LinearBlockConfig linear_config(const ModelConfig& c, LinearBlockKind kind) {
  blocks::LinearBlockConfig b;
  b.kind = kind;
  b.d_model = c.d_model;
  b.n_head = c.linear.n_head;
  b.d_k = c.linear.d_k;
  b.d_v = c.linear.d_v;
  b.conv_q = b.conv_k = b.conv_v = c.linear.short_conv;
  b.conv_size = c.linear.conv_size;
  return b;
}

blocks::JetBlockConfig jet_config(const ModelConfig& c) {
  auto j = blocks::make_jet_config(c.d_model, c.linear.n_head, c.linear.d_k,
                                   c.linear.d_v);
  j.kernel_size = c.linear.kernel_size;
  j.gen_hidden = c.linear.gen_hidden;
  j.norm = c.linear.tap_norm;
  return j;
}

ModelConfig desk_config() {
  ModelConfig c;
  c.name = "desk";
  c.layers.assign(static_cast<std::size_t>(c.n_blocks), LayerSpec{});
  return c;
}

ModelConfig with_placement(const ModelConfig& base, const std::vector<int>& full,
                           const std::vector<int>& swa, int window,
                           const LayerSpec& other) {
  ModelConfig c = base;
  c.layers.assign(static_cast<std::size_t>(c.n_blocks), other);
  auto check = [&](int i) {
    if (i < 0 || i >= c.n_blocks)
      fail(ErrorKind::Config, "placement index " + std::to_string(i) +
                                  " outside [0, " + std::to_string(c.n_blocks) + ")");
  };
  for (int i : full) {
    check(i);
    c.layers[static_cast<std::size_t>(i)] = LayerSpec{MixerKind::Full};
  }
  for (int i : swa) {
    check(i);
    if (std::find(full.begin(), full.end(), i) != full.end())
      fail(ErrorKind::Config, "layer " + std::to_string(i) +
                                  " is both full and sliding-window");
    c.layers[static_cast<std::size_t>(i)] = LayerSpec{MixerKind::SlidingWindow, window};
  }
  return c;
}

std::vector<int> layers_of(const ModelConfig& c, MixerKind kind) {
  std::vector<int> out;
  for (std::size_t i = 0; i < c.layers.size(); ++i)
    if (c.layers[i].mixer == kind) out.push_back(static_cast<int>(i));
  return out;
}

std::int64_t mixer_parameter_count(const ModelConfig& c, const LayerSpec& l) {
  const std::int64_t d = c.d_model;
  switch (l.mixer) {
    case MixerKind::Full:
    case MixerKind::SlidingWindow: {
      const std::int64_t q = std::int64_t{c.attention.n_q_heads} * c.attention.head_dim;
      const std::int64_t kv = std::int64_t{c.attention.n_kv_heads} * c.attention.head_dim;
      return d * q + 2 * d * kv + q * d;
    }
    case MixerKind::Linear:
    case MixerKind::Jet: {
      const auto kind = l.mixer == MixerKind::Jet ? LinearBlockKind::GatedDelta : l.kind;
      const std::int64_t H = c.linear.n_head;
      const std::int64_t qk = H * c.linear.d_k;
      const std::int64_t vw = H * c.linear.d_v;
      std::int64_t n = 2 * d * qk + d * vw + vw * d;
      const auto shape = blocks::decay_shape(kind);
      if (kind != LinearBlockKind::RetNetDecay && shape != blocks::DecayShape::None) {
        const std::int64_t g = shape == blocks::DecayShape::PerKey ? qk : H;
        n += d * g + g;
      }
      if (blocks::write_rule(kind) == blocks::WriteRule::Delta) n += d * H + H;
      if (l.mixer == MixerKind::Linear && c.linear.short_conv)
        n += (2 * qk + vw) * c.linear.conv_size;
      if (l.mixer == MixerKind::Jet) {
        const std::int64_t g = c.linear.gen_hidden;
        const std::int64_t HK = H * c.linear.kernel_size;
        n += d * g + g + g * HK + HK;
      }
      return n;
    }
  }
  return 0;
}

std::int64_t parameter_count(const ModelConfig& c) {
  const std::int64_t d = c.d_model;
  std::int64_t n = std::int64_t{c.vocab_size} * d;  // embedding
  if (!c.tie_embeddings) n += d * c.vocab_size;
  n += d;  // final norm
  for (const auto& l : c.layers)
    n += mixer_parameter_count(c, l) + 2 * d + 3 * d * c.mlp_intermediate;
  return n;
}

}  // namespace postnas::model
