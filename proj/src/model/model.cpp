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

#include "postnas/model/model.hpp"

#include <cmath>
#include <cstring>

#include "postnas/core/error.hpp"
#include "postnas/core/ops.hpp"

namespace postnas::model {
namespace {

using blocks::LinearBlockKind;

Tensor copy_of(const Tensor& t) {
  return t.defined() ? t.clone(t.requires_grad()) : Tensor();
}

attention::AttnParams copy_of(const attention::AttnParams& p) {
  auto c = p;
  c.wq = copy_of(p.wq);
  c.wk = copy_of(p.wk);
  c.wv = copy_of(p.wv);
  c.wo = copy_of(p.wo);
  return c;
}

blocks::LinearBlockParams copy_of(const blocks::LinearBlockParams& p) {
  auto c = p;
  for (Tensor* t : {&c.wq, &c.wk, &c.wv, &c.wo, &c.w_decay, &c.b_decay, &c.w_beta,
                    &c.b_beta, &c.conv_q, &c.conv_k, &c.conv_v})
    *t = copy_of(*t);
  return c;
}

blocks::JetBlockParams copy_of(const blocks::JetBlockParams& p) {
  auto c = p;
  c.base = copy_of(p.base);
  for (Tensor* t : {&c.gen_reduce_w, &c.gen_reduce_b, &c.gen_out_w, &c.gen_out_b})
    *t = copy_of(*t);
  return c;
}

BlockParams copy_of(const BlockParams& b) {
  BlockParams c;
  c.mixer_norm = copy_of(b.mixer_norm);
  c.mlp_norm = copy_of(b.mlp_norm);
  c.gate = copy_of(b.gate);
  c.up = copy_of(b.up);
  c.down = copy_of(b.down);
  if (b.attn) c.attn = copy_of(*b.attn);
  if (b.lin) c.lin = copy_of(*b.lin);
  if (b.jet) c.jet = copy_of(*b.jet);
  return c;
}

void overwrite(Tensor& dst, std::span<const float> src) {
  std::copy(src.begin(), src.end(), dst.mutable_data().begin());
}

// Columns of an [d, Hkv*hd] projection repeated so query head h reads kv
// head h / group: [d, Hq*hd].
std::vector<float> expand_groups(const Tensor& w, int n_kv, int n_q, int hd) {
  const std::int64_t d = w.dim(0);
  const int group = n_q / n_kv;
  std::vector<float> out(static_cast<std::size_t>(d) * n_q * hd);
  for (std::int64_t r = 0; r < d; ++r)
    for (int h = 0; h < n_q; ++h)
      for (int e = 0; e < hd; ++e)
        out[(static_cast<std::size_t>(r) * n_q + h) * hd + e] =
            w.data()[(static_cast<std::size_t>(r) * n_kv + h / group) * hd + e];
  return out;
}

void init_from_attention(blocks::LinearBlockParams& lin,
                         const attention::AttnParams& attn) {
  const auto& a = attn.config;
  const auto& c = lin.config;
  if (lin.wq.shape() == attn.wq.shape()) overwrite(lin.wq, attn.wq.data());
  if (c.n_head == a.n_q_heads) {
    if (c.d_k == a.head_dim)
      overwrite(lin.wk, expand_groups(attn.wk, a.n_kv_heads, a.n_q_heads, a.head_dim));
    if (c.d_v == a.head_dim)
      overwrite(lin.wv, expand_groups(attn.wv, a.n_kv_heads, a.n_q_heads, a.head_dim));
  }
  if (lin.wo.shape() == attn.wo.shape()) overwrite(lin.wo, attn.wo.data());
}

Tensor mlp(const BlockParams& b, const Tensor& x) {
  Tensor g = ops::silu(ops::matmul(x, b.gate));
  return ops::matmul(ops::mul(g, ops::matmul(x, b.up)), b.down);
}

}  // namespace

std::vector<NamedTensor> ModelParams::named() const {
  std::vector<NamedTensor> out{{"embed", embed}};
  if (head.defined()) out.push_back({"head", head});
  out.push_back({"final_norm", final_norm});
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto& b = blocks[i];
    const std::string p = "blocks." + std::to_string(i) + ".";
    out.push_back({p + "mixer_norm", b.mixer_norm});
    out.push_back({p + "mlp_norm", b.mlp_norm});
    out.push_back({p + "mlp.gate", b.gate});
    out.push_back({p + "mlp.up", b.up});
    out.push_back({p + "mlp.down", b.down});
    auto add = [&](std::vector<NamedTensor> v) {
      for (auto& n : v) out.push_back(std::move(n));
    };
    if (b.attn) add(b.attn->named(p + "attn."));
    if (b.lin) add(b.lin->named(p + "lin."));
    if (b.jet) add(b.jet->named(p + "jet."));
  }
  return out;
}

std::int64_t ModelParams::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& p : named()) n += p.tensor.numel();
  return n;
}

ModelParams init_model(const ModelConfig& c, std::uint64_t seed) {
  validate(c);
  Rng rng = Rng(seed).split(0x6d6f64656cULL);
  ModelParams p;
  p.config = c;
  const int d = c.d_model;
  const int I = c.mlp_intermediate;
  p.embed = Tensor::randn({c.vocab_size, d}, rng, 1.0f, true);
  if (!c.tie_embeddings)
    p.head = Tensor::randn({d, c.vocab_size}, rng, 1.0f / std::sqrt(float(d)), true);
  p.final_norm = Tensor::full({d}, 1.0f, true);
  // Residual-branch outputs start scaled by 1/sqrt(2 * n_blocks).
  const float out_scale = 1.0f / std::sqrt(2.0f * static_cast<float>(c.n_blocks));
  auto shrink = [out_scale](Tensor& t) {
    for (auto& v : t.mutable_data()) v *= out_scale;
  };
  std::shared_ptr<const attention::RopeTable> rope;
  for (int i = 0; i < c.n_blocks; ++i) {
    const auto& l = c.layers[static_cast<std::size_t>(i)];
    BlockParams b;
    b.mixer_norm = Tensor::full({d}, 1.0f, true);
    b.mlp_norm = Tensor::full({d}, 1.0f, true);
    b.gate = Tensor::randn({d, I}, rng, 1.0f / std::sqrt(float(d)), true);
    b.up = Tensor::randn({d, I}, rng, 1.0f / std::sqrt(float(d)), true);
    b.down = Tensor::randn({I, d}, rng, out_scale / std::sqrt(float(I)), true);
    switch (l.mixer) {
      case MixerKind::Full:
      case MixerKind::SlidingWindow: {
        auto ac = attention_config(c, l);
        ac.window = 0;  // the LayerSpec supplies the window at run time
        b.attn = attention::init_attention(ac, rng);
        if (rope) b.attn->rope = rope;
        rope = b.attn->rope;
        shrink(b.attn->wo);
        break;
      }
      case MixerKind::Linear:
        b.lin = blocks::init_linear_block(linear_config(c, l.kind), rng);
        shrink(b.lin->wo);
        break;
      case MixerKind::Jet:
        b.jet = blocks::init_jetblock(jet_config(c), rng);
        shrink(b.jet->base.wo);
        break;
    }
    p.blocks.push_back(std::move(b));
  }
  return p;
}

void add_linear_path(ModelParams& p, int block, LinearBlockKind kind, Rng& rng) {
  auto& b = p.blocks.at(static_cast<std::size_t>(block));
  b.lin = blocks::init_linear_block(linear_config(p.config, kind), rng);
  if (b.attn) init_from_attention(*b.lin, *b.attn);
}

void add_jet_path(ModelParams& p, int block, Rng& rng) {
  auto& b = p.blocks.at(static_cast<std::size_t>(block));
  b.jet = blocks::init_jetblock(jet_config(p.config), rng);
  if (b.attn) init_from_attention(b.jet->base, *b.attn);
}

ModelParams inherit(const ModelParams& teacher, const ModelConfig& sc,
                    std::uint64_t seed) {
  validate(sc);
  const auto& tc = teacher.config;
  if (sc.vocab_size != tc.vocab_size || sc.d_model != tc.d_model ||
      sc.n_blocks != tc.n_blocks || sc.mlp_intermediate != tc.mlp_intermediate ||
      sc.tie_embeddings != tc.tie_embeddings)
    fail(ErrorKind::Shape,
         "inherit: student trunk (vocab, d_model, blocks, mlp, tying) must match the teacher");
  Rng rng = Rng(seed).split(0x696e68ULL);
  ModelParams s;
  s.config = sc;
  s.embed = copy_of(teacher.embed);
  s.head = copy_of(teacher.head);
  s.final_norm = copy_of(teacher.final_norm);
  for (int i = 0; i < sc.n_blocks; ++i) {
    const auto& tb = teacher.blocks[static_cast<std::size_t>(i)];
    const auto& l = sc.layers[static_cast<std::size_t>(i)];
    BlockParams b;
    b.mixer_norm = copy_of(tb.mixer_norm);
    b.mlp_norm = copy_of(tb.mlp_norm);
    b.gate = copy_of(tb.gate);
    b.up = copy_of(tb.up);
    b.down = copy_of(tb.down);
    switch (l.mixer) {
      case MixerKind::Full:
      case MixerKind::SlidingWindow:
        if (tb.attn) {
          b.attn = copy_of(*tb.attn);
        } else {
          auto ac = attention_config(sc, l);
          ac.window = 0;
          b.attn = attention::init_attention(ac, rng);
        }
        break;
      case MixerKind::Linear:
        b.lin = blocks::init_linear_block(linear_config(sc, l.kind), rng);
        if (tb.attn) init_from_attention(*b.lin, *tb.attn);
        break;
      case MixerKind::Jet:
        b.jet = blocks::init_jetblock(jet_config(sc), rng);
        if (tb.attn) init_from_attention(b.jet->base, *tb.attn);
        break;
    }
    s.blocks.push_back(std::move(b));
  }
  return s;
}

ForwardResult forward(const ModelParams& p, std::span<const int> tokens, int B,
                      int T, std::span<const LayerSpec> layers) {
  const auto& c = p.config;
  if (layers.empty()) layers = c.layers;
  if (static_cast<int>(layers.size()) != c.n_blocks)
    fail(ErrorKind::Shape, "forward: " + std::to_string(layers.size()) +
                               " layer specs for " + std::to_string(c.n_blocks) + " blocks");
  if (B < 1 || T < 1 || tokens.size() != static_cast<std::size_t>(B) * T)
    fail(ErrorKind::Shape, "forward: " + std::to_string(tokens.size()) +
                               " tokens for B=" + std::to_string(B) + ", T=" + std::to_string(T));
  for (std::size_t i = 0; i < tokens.size(); ++i)
    if (tokens[i] < 0 || tokens[i] >= c.vocab_size)
      fail(ErrorKind::Shape, "forward: token " + std::to_string(tokens[i]) +
                                 " at position " + std::to_string(i) +
                                 " outside vocab of " + std::to_string(c.vocab_size));
  ForwardResult out;
  Tensor x = ops::embedding(p.embed, tokens);
  for (int i = 0; i < c.n_blocks; ++i) {
    const auto& b = p.blocks[static_cast<std::size_t>(i)];
    const auto& l = layers[static_cast<std::size_t>(i)];
    auto missing = [&](const char* what) {
      fail(ErrorKind::State, "forward: block " + std::to_string(i) + " has no " +
                                 what + " path");
    };
    Tensor h = ops::rms_norm(x, b.mixer_norm);
    Tensor m;
    switch (l.mixer) {
      case MixerKind::Full:
      case MixerKind::SlidingWindow: {
        if (!b.attn) missing("attention");
        auto a = *b.attn;
        a.config.window = l.mixer == MixerKind::SlidingWindow ? l.window : 0;
        m = attention::attention_forward(a, h, B, T);
        break;
      }
      case MixerKind::Linear:
        if (!b.lin || b.lin->config.kind != l.kind)
          missing(std::string(blocks::kind_name(l.kind)).c_str());
        m = blocks::block_forward(*b.lin, h, B, T);
        break;
      case MixerKind::Jet:
        if (!b.jet) missing("jet");
        m = blocks::block_forward(*b.jet, h, B, T);
        break;
    }
    x = ops::add(x, m);
    x = ops::add(x, mlp(b, ops::rms_norm(x, b.mlp_norm)));
    out.hidden.push_back(x);
  }
  Tensor f = ops::rms_norm(x, p.final_norm);
  out.logits = p.head.defined() ? ops::matmul(f, p.head)
                                : ops::matmul(f, ops::transpose(p.embed));
  return out;
}

bool is_frozen_name(const std::string& name) {
  if (name == "embed" || name == "head" || name == "final_norm") return true;
  return name.find(".mlp_norm") != std::string::npos ||
         name.find(".mlp.") != std::string::npos;
}

std::vector<NamedTensor> frozen_parameters(const ModelParams& p) {
  std::vector<NamedTensor> out;
  for (auto& n : p.named())
    if (is_frozen_name(n.name)) out.push_back(n);
  return out;
}

std::vector<NamedTensor> trainable_parameters(const ModelParams& p, bool freeze) {
  std::vector<NamedTensor> out;
  for (auto& n : p.named()) {
    const bool frozen = freeze && is_frozen_name(n.name);
    n.tensor.set_requires_grad(!frozen);
    if (!frozen) out.push_back(n);
  }
  return out;
}

std::uint64_t frozen_hash(const ModelParams& p) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&](const void* data, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& n : frozen_parameters(p)) {
    feed(n.name.data(), n.name.size());
    for (auto e : n.tensor.shape()) feed(&e, sizeof e);
    feed(n.tensor.data().data(), n.tensor.data().size() * sizeof(float));
  }
  return h;
}

ModelParams clone(const ModelParams& p) {
  ModelParams c;
  c.config = p.config;
  c.embed = copy_of(p.embed);
  c.head = copy_of(p.head);
  c.final_norm = copy_of(p.final_norm);
  for (const auto& b : p.blocks) c.blocks.push_back(copy_of(b));
  return c;
}

}  // namespace postnas::model
