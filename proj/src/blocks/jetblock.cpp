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

#include "postnas/blocks/jetblock.hpp"

#include <algorithm>
#include <cmath>

#include "postnas/blocks/conv.hpp"
#include "postnas/core/error.hpp"
#include "postnas/core/ops.hpp"
#include "postnas/simd/kernels.hpp"

namespace postnas::blocks {
namespace {

void softmax_taps(float* w, int K) {
  float m = w[0];
  for (int i = 1; i < K; ++i) m = std::max(m, w[i]);
  float z = 0.0f;
  for (int i = 0; i < K; ++i) {
    w[i] = std::exp(w[i] - m);
    z += w[i];
  }
  for (int i = 0; i < K; ++i) w[i] /= z;
}

// Value-stream convolution of T projected tokens, advancing `tail`.
void convolve_values(const JetBlockParams& p, std::span<const float> x, int T,
                     detail::Streams& s, std::vector<float>& tail) {
  const auto& c = p.config;
  const int d = c.base.d_model;
  const int H = c.base.n_head;
  const int dv = c.base.d_v;
  std::vector<float> out(static_cast<std::size_t>(H) * dv);
  for (int t = 0; t < T; ++t) {
    auto w = generate_kernels(p, x.subspan(static_cast<std::size_t>(t) * d, d));
    float* vt = s.v.data() + static_cast<std::size_t>(t) * H * dv;
    dynamic_conv_token(vt, w.data(), H, dv, c.kernel_size, tail.data(),
                       out.data());
    std::copy(out.begin(), out.end(), vt);
  }
}

}  // namespace

std::string_view tap_norm_name(TapNorm norm) {
  return norm == TapNorm::Softmax ? "softmax" : "none";
}

TapNorm parse_tap_norm(std::string_view name) {
  if (name == "softmax") return TapNorm::Softmax;
  if (name == "none") return TapNorm::None;
  fail(ErrorKind::Config, "unknown tap normalization '" + std::string(name) +
                              "' (expected softmax or none)");
}

int generator_hidden(GeneratorPreset preset, int d_model) {
  return preset == GeneratorPreset::Fixed32 ? 32 : std::max(1, d_model / 8);
}

JetBlockConfig make_jet_config(int d_model, int n_head, int d_k, int d_v) {
  JetBlockConfig c;
  c.base.kind = LinearBlockKind::GatedDelta;
  c.base.d_model = d_model;
  c.base.n_head = n_head;
  c.base.d_k = d_k;
  c.base.d_v = d_v;
  return c;
}

void validate(const JetBlockConfig& c) {
  validate(c.base);
  if (c.base.kind != LinearBlockKind::GatedDelta)
    fail(ErrorKind::Config, "jetblock: time mixing must be gated_delta");
  if (c.base.conv_q || c.base.conv_k || c.base.conv_v)
    fail(ErrorKind::Config, "jetblock: static q/k/v convolutions must be off");
  if (c.gen_hidden < 1)
    fail(ErrorKind::Config, "jetblock: generator hidden width must be >= 1");
  if (c.kernel_size < 1)
    fail(ErrorKind::Config, "jetblock: kernel_size must be >= 1");
}

StateSize state_size(const JetBlockConfig& c, int dtype_width) {
  StateSize s = state_size(c.base, dtype_width);
  s.entries += static_cast<std::int64_t>(c.base.n_head) * c.base.d_v *
               (c.kernel_size - 1);
  s.bytes = s.entries * dtype_width;
  return s;
}

std::vector<NamedTensor> JetBlockParams::named(const std::string& prefix) const {
  auto out = base.named(prefix);
  out.push_back({prefix + "gen_reduce_w", gen_reduce_w});
  out.push_back({prefix + "gen_reduce_b", gen_reduce_b});
  out.push_back({prefix + "gen_out_w", gen_out_w});
  out.push_back({prefix + "gen_out_b", gen_out_b});
  return out;
}

std::int64_t JetBlockParams::parameter_count() const {
  return base.parameter_count() + gen_reduce_w.numel() + gen_reduce_b.numel() +
         gen_out_w.numel() + gen_out_b.numel();
}

JetBlockParams init_jetblock(const JetBlockConfig& c, Rng& rng) {
  validate(c);
  JetBlockParams p;
  p.config = c;
  p.base = init_linear_block(c.base, rng);
  const int d = c.base.d_model;
  const int g = c.gen_hidden;
  const int HK = c.base.n_head * c.kernel_size;
  p.gen_reduce_w = Tensor::randn({d, g}, rng, 1.0f / std::sqrt(float(d)), true);
  p.gen_reduce_b = Tensor::zeros({g}, true);
  p.gen_out_w = Tensor::randn({g, HK}, rng, 0.1f / std::sqrt(float(g)), true);
  // Start close to the identity kernel: weight on the current token.
  std::vector<float> b(static_cast<std::size_t>(HK), 0.0f);
  for (int h = 0; h < c.base.n_head; ++h)
    b[static_cast<std::size_t>(h) * c.kernel_size + c.kernel_size - 1] =
        c.norm == TapNorm::Softmax ? 3.0f : 1.0f;
  p.gen_out_b = Tensor::from({HK}, std::move(b), true);
  return p;
}

std::vector<float> generate_kernels(const JetBlockParams& p,
                                    std::span<const float> x_t) {
  const auto& c = p.config;
  const int d = c.base.d_model;
  const int g = c.gen_hidden;
  const int K = c.kernel_size;
  const int HK = c.base.n_head * K;
  if (static_cast<int>(x_t.size()) != d)
    fail(ErrorKind::Shape, "generate_kernels: input width " +
                               std::to_string(x_t.size()) + " != d_model " +
                               std::to_string(d));
  const auto& kt = simd::active();
  std::vector<float> h(p.gen_reduce_b.data().begin(), p.gen_reduce_b.data().end());
  kt.gemv_t(d, g, p.gen_reduce_w.data().data(), g, x_t.data(), h.data(), true);
  for (auto& v : h) v = v / (1.0f + std::exp(-v));
  std::vector<float> w(p.gen_out_b.data().begin(), p.gen_out_b.data().end());
  kt.gemv_t(g, HK, p.gen_out_w.data().data(), HK, h.data(), w.data(), true);
  if (c.norm == TapNorm::Softmax)
    for (int hd = 0; hd < c.base.n_head; ++hd) softmax_taps(w.data() + hd * K, K);
  return w;
}

Tensor generate_kernels(const JetBlockParams& p, const Tensor& x) {
  const auto& c = p.config;
  Tensor h = ops::silu(ops::add(ops::matmul(x, p.gen_reduce_w), p.gen_reduce_b));
  Tensor w = ops::add(ops::matmul(h, p.gen_out_w), p.gen_out_b);
  if (c.norm == TapNorm::Softmax) {
    const std::int64_t N = x.dim(0);
    w = ops::reshape(
        ops::softmax(ops::reshape(w, {N * c.base.n_head, c.kernel_size})),
        {N, static_cast<std::int64_t>(c.base.n_head) * c.kernel_size});
  }
  return w;
}

RecurrentState initial_state(const JetBlockConfig& c) {
  validate(c);
  RecurrentState s = initial_state(c.base);
  s.tail_dyn.assign(static_cast<std::size_t>(c.kernel_size - 1) * c.base.n_head *
                        c.base.d_v,
                    0.0f);
  return s;
}

std::vector<float> step(const JetBlockParams& p, RecurrentState& state,
                        std::span<const float> x_t) {
  if (!state.initialized)
    fail(ErrorKind::State, "jetblock step: state not initialized");
  if (static_cast<int>(x_t.size()) != p.config.base.d_model)
    fail(ErrorKind::Shape, "jetblock step: input width " +
                               std::to_string(x_t.size()) + " != d_model " +
                               std::to_string(p.config.base.d_model));
  auto s = detail::project(p.base, state, x_t, 1);
  convolve_values(p, x_t, 1, s, state.tail_dyn);
  detail::finish(p.config.base, s);
  auto o = detail::mix(p.config.base, s, state.S, 1);
  ++state.position;
  return detail::output_projection(p.base, o, 1);
}

std::vector<float> forward_sequential(const JetBlockParams& p,
                                      std::span<const float> x, int T) {
  const int d = p.config.base.d_model;
  if (T < 0 || x.size() != static_cast<std::size_t>(T) * d)
    fail(ErrorKind::Shape, "jetblock forward: input size " +
                               std::to_string(x.size()) + " != T*d_model");
  auto state = initial_state(p.config);
  std::vector<float> y(x.size());
  for (int t = 0; t < T; ++t) {
    auto yt = step(p, state, x.subspan(static_cast<std::size_t>(t) * d, d));
    std::copy(yt.begin(), yt.end(), y.begin() + static_cast<std::ptrdiff_t>(t) * d);
  }
  return y;
}

std::vector<float> forward_chunked(const JetBlockParams& p,
                                   std::span<const float> x, int T,
                                   int chunk_size) {
  if (chunk_size < 1)
    fail(ErrorKind::Config, "forward_chunked: chunk_size must be >= 1");
  if (chunk_size == 1) return forward_sequential(p, x, T);
  if (T < 0 || x.size() != static_cast<std::size_t>(T) * p.config.base.d_model)
    fail(ErrorKind::Shape, "jetblock forward: input size " +
                               std::to_string(x.size()) + " != T*d_model");
  auto state = initial_state(p.config);
  auto s = detail::project(p.base, state, x, T);
  convolve_values(p, x, T, s, state.tail_dyn);
  detail::finish(p.config.base, s);
  auto o = detail::mix(p.config.base, s, state.S, chunk_size);
  return detail::output_projection(p.base, o, T);
}

Tensor block_forward(const JetBlockParams& p, const Tensor& x, int B, int T) {
  const auto& c = p.config;
  auto s = detail::project_tensors(p.base, x, B, T);
  Tensor w = ops::reshape(generate_kernels(p, x),
                          {B, T, c.base.n_head, c.kernel_size});
  s.v = dynamic_causal_conv(s.v, w);
  return detail::mix_tensors(p.base, s, B, T);
}

}  // namespace postnas::blocks
