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

#include "postnas/blocks/linear_block.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "postnas/blocks/conv.hpp"
#include "postnas/core/diagnostics.hpp"
#include "postnas/core/error.hpp"
#include "postnas/core/ops.hpp"
#include "postnas/simd/kernels.hpp"

namespace postnas::blocks {
namespace {

float sigmoid(float x) { return 1.0f / (1.0f + std::exp(-x)); }

Tensor randn_param(Shape shape, Rng& rng, float stddev) {
  return Tensor::randn(std::move(shape), rng, stddev, true);
}

Tensor conv_init(int width, int K, Rng& rng) {
  std::vector<float> w(static_cast<std::size_t>(width) * K);
  for (int c = 0; c < width; ++c)
    for (int i = 0; i < K; ++i)
      w[static_cast<std::size_t>(c) * K + i] =
          i == K - 1 ? 1.0f : 0.05f * static_cast<float>(rng.normal());
  return Tensor::from({width, K}, std::move(w), true);
}

// y[T, N] = x[T, D] W[D, N] (+ bias)
std::vector<float> affine(std::span<const float> x, int T, const Tensor& W,
                          const Tensor* bias) {
  const int D = static_cast<int>(W.dim(0));
  const int N = static_cast<int>(W.dim(1));
  std::vector<float> y(static_cast<std::size_t>(T) * N);
  simd::active().gemm(T, N, D, x.data(), D, W.data().data(), N, y.data(), N,
                      false);
  if (bias) {
    const float* b = bias->data().data();
    for (int t = 0; t < T; ++t)
      for (int j = 0; j < N; ++j) y[static_cast<std::size_t>(t) * N + j] += b[j];
  }
  return y;
}

void conv_stream(std::vector<float>& s, int T, const Tensor& w,
                 std::vector<float>& tail) {
  const int C = static_cast<int>(w.dim(0));
  const int K = static_cast<int>(w.dim(1));
  std::vector<float> y(static_cast<std::size_t>(C));
  for (int t = 0; t < T; ++t) {
    float* row = s.data() + static_cast<std::size_t>(t) * C;
    causal_conv_token(row, w.data().data(), C, K, tail.data(), y.data());
    std::memcpy(row, y.data(), sizeof(float) * C);
  }
}

Tensor conv_tensor(const Tensor& s, const Tensor& w, int B, int T) {
  const std::int64_t C = s.dim(1);
  return ops::reshape(causal_conv(ops::reshape(s, {B, T, C}), w),
                      {static_cast<std::int64_t>(B) * T, C});
}

}  // namespace

std::string_view kind_name(LinearBlockKind kind) {
  switch (kind) {
    case LinearBlockKind::RetNetDecay: return "retnet";
    case LinearBlockKind::GLADiagonalGate: return "gla";
    case LinearBlockKind::ScalarDataGate: return "scalar_gate";
    case LinearBlockKind::DeltaRule: return "delta";
    case LinearBlockKind::GatedDelta: return "gated_delta";
  }
  return "?";
}

LinearBlockKind parse_kind(std::string_view name) {
  for (auto k : kAllLinearKinds)
    if (kind_name(k) == name) return k;
  fail(ErrorKind::Config,
       "unknown linear block kind '" + std::string(name) +
           "' (expected retnet, gla, scalar_gate, delta, gated_delta)");
}

WriteRule write_rule(LinearBlockKind kind) {
  return kind == LinearBlockKind::DeltaRule || kind == LinearBlockKind::GatedDelta
             ? WriteRule::Delta
             : WriteRule::Additive;
}

DecayShape decay_shape(LinearBlockKind kind) {
  switch (kind) {
    case LinearBlockKind::GLADiagonalGate: return DecayShape::PerKey;
    case LinearBlockKind::DeltaRule: return DecayShape::None;
    default: return DecayShape::Scalar;
  }
}

bool normalizes_keys(LinearBlockKind kind) {
  return write_rule(kind) == WriteRule::Delta;
}

float retnet_decay(int head) {
  return 1.0f - std::exp2(-5.0f - static_cast<float>(head));
}

void validate(const LinearBlockConfig& c) {
  if (c.d_model < 1 || c.n_head < 1 || c.d_k < 1 || c.d_v < 1)
    fail(ErrorKind::Config,
         "linear block: d_model, n_head, d_k, d_v must be >= 1 (got " +
             std::to_string(c.d_model) + ", " + std::to_string(c.n_head) +
             ", " + std::to_string(c.d_k) + ", " + std::to_string(c.d_v) + ")");
  if ((c.conv_q || c.conv_k || c.conv_v) && c.conv_size < 1)
    fail(ErrorKind::Config, "linear block: conv_size must be >= 1");
}

StateSize state_size(const LinearBlockConfig& c, int dtype_width) {
  std::int64_t entries =
      static_cast<std::int64_t>(c.n_head) * c.d_k * c.d_v;
  const std::int64_t tail = c.conv_size - 1;
  const std::int64_t qk = static_cast<std::int64_t>(c.n_head) * c.d_k;
  const std::int64_t vw = static_cast<std::int64_t>(c.n_head) * c.d_v;
  if (c.conv_q) entries += tail * qk;
  if (c.conv_k) entries += tail * qk;
  if (c.conv_v) entries += tail * vw;
  return {entries, entries * dtype_width};
}

std::vector<NamedTensor> LinearBlockParams::named(
    const std::string& prefix) const {
  std::vector<NamedTensor> out;
  auto add = [&](const char* name, const Tensor& t) {
    if (t.defined()) out.push_back({prefix + name, t});
  };
  add("wq", wq);
  add("wk", wk);
  add("wv", wv);
  add("wo", wo);
  add("w_decay", w_decay);
  add("b_decay", b_decay);
  add("w_beta", w_beta);
  add("b_beta", b_beta);
  add("conv_q", conv_q);
  add("conv_k", conv_k);
  add("conv_v", conv_v);
  return out;
}

std::int64_t LinearBlockParams::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& p : named("")) n += p.tensor.numel();
  return n;
}

LinearBlockParams init_linear_block(const LinearBlockConfig& c, Rng& rng) {
  validate(c);
  LinearBlockParams p;
  p.config = c;
  const int qk = c.n_head * c.d_k;
  const int vw = c.n_head * c.d_v;
  const float s_in = 1.0f / std::sqrt(static_cast<float>(c.d_model));
  p.wq = randn_param({c.d_model, qk}, rng, s_in);
  p.wk = randn_param({c.d_model, qk}, rng, s_in);
  p.wv = randn_param({c.d_model, vw}, rng, s_in);
  p.wo = randn_param({vw, c.d_model}, rng, 1.0f / std::sqrt(static_cast<float>(vw)));
  const auto shape = decay_shape(c.kind);
  if (c.kind != LinearBlockKind::RetNetDecay && shape != DecayShape::None) {
    const int n = shape == DecayShape::PerKey ? qk : c.n_head;
    p.w_decay = randn_param({c.d_model, n}, rng, 0.1f * s_in);
    p.b_decay = Tensor::full({n}, 3.0f, true);
  }
  if (write_rule(c.kind) == WriteRule::Delta) {
    p.w_beta = randn_param({c.d_model, c.n_head}, rng, 0.1f * s_in);
    p.b_beta = Tensor::zeros({c.n_head}, true);
  }
  if (c.conv_q) p.conv_q = conv_init(qk, c.conv_size, rng);
  if (c.conv_k) p.conv_k = conv_init(qk, c.conv_size, rng);
  if (c.conv_v) p.conv_v = conv_init(vw, c.conv_size, rng);
  return p;
}

RecurrentState initial_state(const LinearBlockConfig& c) {
  validate(c);
  RecurrentState s;
  s.S.assign(static_cast<std::size_t>(c.n_head) * c.d_k * c.d_v, 0.0f);
  const std::size_t tail = static_cast<std::size_t>(c.conv_size - 1);
  const std::size_t qk = static_cast<std::size_t>(c.n_head) * c.d_k;
  const std::size_t vw = static_cast<std::size_t>(c.n_head) * c.d_v;
  if (c.conv_q) s.tail_q.assign(tail * qk, 0.0f);
  if (c.conv_k) s.tail_k.assign(tail * qk, 0.0f);
  if (c.conv_v) s.tail_v.assign(tail * vw, 0.0f);
  s.initialized = true;
  return s;
}

namespace detail {

Streams project(const LinearBlockParams& p, RecurrentState& state,
                std::span<const float> x, int T) {
  const auto& c = p.config;
  Streams s;
  s.T = T;
  s.q = affine(x, T, p.wq, nullptr);
  s.k = affine(x, T, p.wk, nullptr);
  s.v = affine(x, T, p.wv, nullptr);
  if (c.conv_q) conv_stream(s.q, T, p.conv_q, state.tail_q);
  if (c.conv_k) conv_stream(s.k, T, p.conv_k, state.tail_k);
  if (c.conv_v) conv_stream(s.v, T, p.conv_v, state.tail_v);
  if (c.kind == LinearBlockKind::RetNetDecay) {
    s.decay.resize(static_cast<std::size_t>(T) * c.n_head);
    for (int t = 0; t < T; ++t)
      for (int h = 0; h < c.n_head; ++h)
        s.decay[static_cast<std::size_t>(t) * c.n_head + h] = retnet_decay(h);
  } else if (p.w_decay.defined()) {
    s.decay = affine(x, T, p.w_decay, &p.b_decay);
    for (auto& a : s.decay) a = sigmoid(a);
  }
  if (p.w_beta.defined()) {
    s.beta = affine(x, T, p.w_beta, &p.b_beta);
    for (auto& b : s.beta) b = sigmoid(b);
  }
  return s;
}

void finish(const LinearBlockConfig& c, Streams& s) {
  const std::size_t rows = static_cast<std::size_t>(s.T) * c.n_head;
  if (normalizes_keys(c.kind)) {
    std::size_t zero_rows = 0;
    for (std::size_t r = 0; r < rows; ++r) {
      float* k = s.k.data() + r * c.d_k;
      float ss = 0.0f;
      for (int j = 0; j < c.d_k; ++j) ss += k[j] * k[j];
      const float n = std::sqrt(ss);
      if (n == 0.0f) {
        ++zero_rows;
        continue;
      }
      const float inv = 1.0f / n;
      for (int j = 0; j < c.d_k; ++j) k[j] *= inv;
    }
    if (zero_rows > 0)
      record_warning("linear block: " + std::to_string(zero_rows) +
                     " zero-norm key(s) mapped to zero");
  }
  const float qs = 1.0f / std::sqrt(static_cast<float>(c.d_k));
  for (auto& q : s.q) q *= qs;
}

std::vector<float> mix(const LinearBlockConfig& c, const Streams& s,
                       std::vector<float>& S, int chunk_size) {
  const int T = s.T;
  const int H = c.n_head;
  const int dk = c.d_k;
  const int dv = c.d_v;
  const WriteRule rule = write_rule(c.kind);
  const DecayShape shape = decay_shape(c.kind);
  const int dn = shape == DecayShape::PerKey ? dk : 1;
  const CellDims dims{dk, dv};
  std::vector<float> out(static_cast<std::size_t>(T) * H * dv);
  std::vector<float> q(static_cast<std::size_t>(T) * dk),
      k(static_cast<std::size_t>(T) * dk), v(static_cast<std::size_t>(T) * dv),
      a(static_cast<std::size_t>(T) * dn), b(static_cast<std::size_t>(T)),
      o(static_cast<std::size_t>(T) * dv);
  for (int h = 0; h < H; ++h) {
    for (int t = 0; t < T; ++t) {
      const std::size_t r = static_cast<std::size_t>(t) * H + h;
      std::memcpy(&q[static_cast<std::size_t>(t) * dk], &s.q[r * dk], sizeof(float) * dk);
      std::memcpy(&k[static_cast<std::size_t>(t) * dk], &s.k[r * dk], sizeof(float) * dk);
      std::memcpy(&v[static_cast<std::size_t>(t) * dv], &s.v[r * dv], sizeof(float) * dv);
      if (shape != DecayShape::None)
        std::memcpy(&a[static_cast<std::size_t>(t) * dn], &s.decay[r * dn], sizeof(float) * dn);
      if (rule == WriteRule::Delta) b[t] = s.beta[r];
    }
    float* Sh = S.data() + static_cast<std::size_t>(h) * dk * dv;
    if (chunk_size <= 1) {
      for (int t = 0; t < T; ++t)
        cell_step(rule, shape, dims, a.data() + static_cast<std::size_t>(t) * dn,
                  b[t], q.data() + static_cast<std::size_t>(t) * dk,
                  k.data() + static_cast<std::size_t>(t) * dk,
                  v.data() + static_cast<std::size_t>(t) * dv, Sh,
                  o.data() + static_cast<std::size_t>(t) * dv);
    } else {
      for (int t0 = 0; t0 < T; t0 += chunk_size) {
        const int n = std::min(chunk_size, T - t0);
        const std::size_t u = static_cast<std::size_t>(t0);
        chunk_steps(rule, shape, dims, n, a.data() + u * dn, b.data() + u,
                    q.data() + u * dk, k.data() + u * dk, v.data() + u * dv, Sh,
                    o.data() + u * dv);
      }
    }
    for (int t = 0; t < T; ++t)
      std::memcpy(&out[(static_cast<std::size_t>(t) * H + h) * dv],
                  &o[static_cast<std::size_t>(t) * dv], sizeof(float) * dv);
  }
  return out;
}

std::vector<float> output_projection(const LinearBlockParams& p,
                                     std::span<const float> o, int T) {
  return affine(o, T, p.wo, nullptr);
}

StreamTensors project_tensors(const LinearBlockParams& p, const Tensor& x,
                              int B, int T) {
  const auto& c = p.config;
  const std::int64_t BT = static_cast<std::int64_t>(B) * T;
  if (x.rank() != 2 || x.dim(0) != BT || x.dim(1) != c.d_model)
    fail(ErrorKind::Shape, "linear block: input " + shape_str(x.shape()) +
                               " does not match [" + std::to_string(BT) + "," +
                               std::to_string(c.d_model) + "]");
  StreamTensors s;
  Tensor q = ops::matmul(x, p.wq);
  Tensor k = ops::matmul(x, p.wk);
  Tensor v = ops::matmul(x, p.wv);
  if (c.conv_q) q = conv_tensor(q, p.conv_q, B, T);
  if (c.conv_k) k = conv_tensor(k, p.conv_k, B, T);
  if (c.conv_v) v = conv_tensor(v, p.conv_v, B, T);
  if (normalizes_keys(c.kind))
    k = ops::l2_normalize(ops::reshape(k, {BT * c.n_head, c.d_k}));
  q = ops::scale(q, 1.0f / std::sqrt(static_cast<float>(c.d_k)));
  s.q = ops::reshape(q, {B, T, c.n_head, c.d_k});
  s.k = ops::reshape(k, {B, T, c.n_head, c.d_k});
  s.v = ops::reshape(v, {B, T, c.n_head, c.d_v});
  if (c.kind == LinearBlockKind::RetNetDecay) {
    std::vector<float> a(static_cast<std::size_t>(BT) * c.n_head);
    for (std::size_t r = 0; r < a.size(); ++r)
      a[r] = retnet_decay(static_cast<int>(r % c.n_head));
    s.decay = Tensor::from({B, T, c.n_head}, std::move(a));
  } else if (p.w_decay.defined()) {
    Tensor a = ops::sigmoid(ops::add(ops::matmul(x, p.w_decay), p.b_decay));
    s.decay = decay_shape(c.kind) == DecayShape::PerKey
                  ? ops::reshape(a, {B, T, c.n_head, c.d_k})
                  : ops::reshape(a, {B, T, c.n_head});
  }
  if (p.w_beta.defined())
    s.beta = ops::reshape(
        ops::sigmoid(ops::add(ops::matmul(x, p.w_beta), p.b_beta)),
        {B, T, c.n_head});
  return s;
}

Tensor mix_tensors(const LinearBlockParams& p, const StreamTensors& s, int B,
                   int T) {
  const auto& c = p.config;
  Tensor o = linear_scan(write_rule(c.kind), s.q, s.k, s.v, s.decay, s.beta);
  o = ops::reshape(o, {static_cast<std::int64_t>(B) * T,
                       static_cast<std::int64_t>(c.n_head) * c.d_v});
  return ops::matmul(o, p.wo);
}

}  // namespace detail

std::vector<float> step(const LinearBlockParams& p, RecurrentState& state,
                        std::span<const float> x_t) {
  if (!state.initialized)
    fail(ErrorKind::State, "linear block step: state not initialized");
  if (static_cast<int>(x_t.size()) != p.config.d_model)
    fail(ErrorKind::Shape, "linear block step: input width " +
                               std::to_string(x_t.size()) + " != d_model " +
                               std::to_string(p.config.d_model));
  auto s = detail::project(p, state, x_t, 1);
  detail::finish(p.config, s);
  auto o = detail::mix(p.config, s, state.S, 1);
  ++state.position;
  return detail::output_projection(p, o, 1);
}

std::vector<float> forward_sequential(const LinearBlockParams& p,
                                      std::span<const float> x, int T) {
  const int d = p.config.d_model;
  if (T < 0 || x.size() != static_cast<std::size_t>(T) * d)
    fail(ErrorKind::Shape, "linear block forward: input size " +
                               std::to_string(x.size()) + " != T*d_model");
  auto state = initial_state(p.config);
  std::vector<float> y(x.size());
  for (int t = 0; t < T; ++t) {
    auto yt = step(p, state, x.subspan(static_cast<std::size_t>(t) * d, d));
    std::copy(yt.begin(), yt.end(), y.begin() + static_cast<std::ptrdiff_t>(t) * d);
  }
  return y;
}

std::vector<float> forward_chunked(const LinearBlockParams& p,
                                   std::span<const float> x, int T,
                                   int chunk_size) {
  if (chunk_size < 1)
    fail(ErrorKind::Config, "forward_chunked: chunk_size must be >= 1");
  if (chunk_size == 1) return forward_sequential(p, x, T);
  if (T < 0 || x.size() != static_cast<std::size_t>(T) * p.config.d_model)
    fail(ErrorKind::Shape, "linear block forward: input size " +
                               std::to_string(x.size()) + " != T*d_model");
  auto state = initial_state(p.config);
  auto s = detail::project(p, state, x, T);
  detail::finish(p.config, s);
  auto o = detail::mix(p.config, s, state.S, chunk_size);
  return detail::output_projection(p, o, T);
}

Tensor block_forward(const LinearBlockParams& p, const Tensor& x, int B,
                     int T) {
  return detail::mix_tensors(p, detail::project_tensors(p, x, B, T), B, T);
}

}  // namespace postnas::blocks
