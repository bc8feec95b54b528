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

#include <doctest.h>

#include <cmath>
#include <cstring>

#include "fd_check.hpp"
#include "oracles.hpp"
#include "postnas/blocks/conv.hpp"
#include "postnas/blocks/jetblock.hpp"
#include "postnas/core/error.hpp"
#include "postnas/core/ops.hpp"

using namespace postnas;
using namespace postnas::blocks;
using namespace postnas::testing;

namespace {

JetBlockConfig random_jet(Rng& rng) {
  auto c = make_jet_config(4 + static_cast<int>(rng.below(9)),
                           1 + static_cast<int>(rng.below(3)),
                           2 + static_cast<int>(rng.below(4)),
                           2 + static_cast<int>(rng.below(4)));
  c.gen_hidden = 1 + static_cast<int>(rng.below(6));
  c.kernel_size = 1 + static_cast<int>(rng.below(4));
  c.norm = rng.bernoulli(0.5) ? TapNorm::Softmax : TapNorm::None;
  return c;
}

void perturb(JetBlockParams& p, Rng& rng) {
  for (auto& v : p.base.b_decay.mutable_data()) v = rng.uniform(-1.0f, 2.0f);
  for (auto& v : p.base.b_beta.mutable_data()) v = rng.uniform(-1.0f, 2.0f);
  for (auto& v : p.gen_out_w.mutable_data()) v = rng.uniform(-1.0f, 1.0f);
  for (auto& v : p.gen_out_b.mutable_data()) v = rng.uniform(-1.0f, 1.0f);
}

// Kernels of one token: OutLinear(SiLU(ReduceLinear(x))) then optional softmax.
std::vector<double> kernel_oracle(const JetBlockParams& p, const std::vector<double>& x) {
  const auto& c = p.config;
  const int d = c.base.d_model, g = c.gen_hidden, HK = c.base.n_head * c.kernel_size;
  std::vector<double> h(g), w(HK);
  for (int j = 0; j < g; ++j) {
    double a = p.gen_reduce_b.data()[j];
    for (int i = 0; i < d; ++i) a += x[i] * p.gen_reduce_w.data()[i * g + j];
    h[j] = a / (1.0 + std::exp(-a));
  }
  for (int j = 0; j < HK; ++j) {
    double a = p.gen_out_b.data()[j];
    for (int i = 0; i < g; ++i) a += h[i] * p.gen_out_w.data()[i * HK + j];
    w[j] = a;
  }
  if (c.norm == TapNorm::Softmax)
    for (int hd = 0; hd < c.base.n_head; ++hd) {
      double z = 0.0;
      for (int i = 0; i < c.kernel_size; ++i) z += std::exp(w[hd * c.kernel_size + i]);
      for (int i = 0; i < c.kernel_size; ++i)
        w[hd * c.kernel_size + i] = std::exp(w[hd * c.kernel_size + i]) / z;
    }
  return w;
}

Mat jet_oracle(const JetBlockParams& p, std::span<const float> x, int T) {
  const auto& c = p.config;
  const int H = c.base.n_head, dv = c.base.d_v, K = c.kernel_size;
  const Mat xm = to_mat(x, T, c.base.d_model);
  auto s = streams_oracle(p.base, xm);
  Mat conv = zeros(T, static_cast<std::size_t>(H) * dv);
  for (int t = 0; t < T; ++t) {
    auto w = kernel_oracle(p, xm[t]);
    for (int h = 0; h < H; ++h)
      for (int i = 0; i < K; ++i) {
        const int src = t - (K - 1 - i);
        if (src < 0) continue;
        for (int j = 0; j < dv; ++j)
          conv[t][h * dv + j] += w[h * K + i] * s.v[src][h * dv + j];
      }
  }
  s.v = conv;
  return dense(recurrence_oracle(c.base, s), p.base.wo);
}

}  // namespace

TEST_CASE("kernel generator degenerate and normalized cases") {
  Rng rng(1);
  auto c = make_jet_config(8, 3, 4, 4);
  for (auto norm : {TapNorm::None, TapNorm::Softmax}) {
    c.norm = norm;
    auto p = init_jetblock(c, rng);
    for (Tensor* t : {&p.gen_reduce_w, &p.gen_reduce_b, &p.gen_out_w, &p.gen_out_b})
      for (auto& v : t->mutable_data()) v = 0.0f;
    auto x = random_input(rng, 8);
    auto w = generate_kernels(p, x);
    for (float v : w)
      CHECK(v == doctest::Approx(norm == TapNorm::None ? 0.0 : 1.0 / c.kernel_size));
  }
  c.norm = TapNorm::Softmax;
  auto p = init_jetblock(c, rng);
  perturb(p, rng);
  auto w = generate_kernels(p, random_input(rng, 8, 3.0f));
  for (int h = 0; h < 3; ++h) {
    double z = 0.0;
    for (int i = 0; i < c.kernel_size; ++i) z += w[h * c.kernel_size + i];
    CHECK(std::abs(z - 1.0) < 1e-6);
  }
}

TEST_CASE("kernel generator matches the composition oracle") {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    auto c = random_jet(rng);
    auto p = init_jetblock(c, rng);
    perturb(p, rng);
    auto x = random_input(rng, static_cast<std::size_t>(c.base.d_model));
    auto w = generate_kernels(p, x);
    auto ref = kernel_oracle(p, std::vector<double>(x.begin(), x.end()));
    for (std::size_t i = 0; i < w.size(); ++i) CHECK(std::abs(w[i] - ref[i]) < 1e-5);
    auto wt = generate_kernels(p, Tensor::from({1, c.base.d_model}, x));
    for (std::size_t i = 0; i < w.size(); ++i) CHECK(std::abs(wt.data()[i] - ref[i]) < 1e-5);
  }
}

TEST_CASE("dynamic causal conv alignment and padding") {
  Rng rng(3);
  const int B = 1, T = 6, H = 2, D = 3, K = 4;
  auto v = Tensor::randn({B, T, H, D}, rng, 1.0f);
  std::vector<float> last(B * T * H * K, 0.0f), first(B * T * H * K, 0.0f);
  for (int r = 0; r < B * T * H; ++r) {
    last[r * K + K - 1] = 1.0f;
    first[r * K] = 1.0f;
  }
  auto same = dynamic_causal_conv(v, Tensor::from({B, T, H, K}, last));
  CHECK(std::memcmp(same.data().data(), v.data().data(), v.numel() * sizeof(float)) == 0);
  auto shifted = dynamic_causal_conv(v, Tensor::from({B, T, H, K}, first));
  for (int i = 0; i < H * D; ++i) CHECK(shifted.data()[i] == 0.0f);

  auto kern = Tensor::randn({B, T, H, K}, rng, 1.0f);
  auto y = dynamic_causal_conv(v, kern);
  for (int t = 0; t < T; ++t)
    for (int h = 0; h < H; ++h)
      for (int d = 0; d < D; ++d) {
        float acc = 0.0f;
        for (int i = 0; i < K; ++i) {
          const int s = t - (K - 1 - i);
          if (s >= 0)
            acc += kern.data()[(t * H + h) * K + i] * v.data()[(s * H + h) * D + d];
        }
        CHECK(y.data()[(t * H + h) * D + d] == acc);
      }

  std::vector<float> tail((K - 1) * H * D, 0.0f), out(H * D);
  for (int t = 0; t < T; ++t) {
    dynamic_conv_token(v.data().data() + t * H * D, kern.data().data() + t * H * K,
                       H, D, K, tail.data(), out.data());
    for (int i = 0; i < H * D; ++i) CHECK(out[i] == y.data()[t * H * D + i]);
  }
}

TEST_CASE("kernel size 1 with unit kernels is plain gated delta") {
  Rng rng(4);
  auto c = make_jet_config(8, 2, 4, 3);
  c.kernel_size = 1;
  c.norm = TapNorm::None;
  auto p = init_jetblock(c, rng);
  for (auto& v : p.gen_out_w.mutable_data()) v = 0.0f;
  for (auto& v : p.gen_out_b.mutable_data()) v = 1.0f;
  const int T = 7;
  auto x = random_input(rng, T * 8);
  auto jet = forward_sequential(p, x, T);
  auto gd = forward_sequential(p.base, x, T);
  CHECK(std::memcmp(jet.data(), gd.data(), jet.size() * sizeof(float)) == 0);
  auto xt = Tensor::from({T, 8}, x);
  auto jt = block_forward(p, xt, 1, T);
  auto gt = block_forward(p.base, xt, 1, T);
  CHECK(std::memcmp(jt.data().data(), gt.data().data(), jet.size() * sizeof(float)) == 0);
}

TEST_CASE("jetblock is strictly causal") {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    auto c = random_jet(rng);
    auto p = init_jetblock(c, rng);
    perturb(p, rng);
    const int T = 8, d = c.base.d_model;
    const int t0 = 1 + static_cast<int>(rng.below(T - 1));
    auto x = random_input(rng, static_cast<std::size_t>(T) * d);
    auto x2 = x;
    for (int i = t0 * d; i < T * d; ++i) x2[i] += 1.0f;
    for (int chunk : {1, 3}) {
      auto a = forward_chunked(p, x, T, chunk);
      auto b = forward_chunked(p, x2, T, chunk);
      CHECK(std::memcmp(a.data(), b.data(), sizeof(float) * t0 * d) == 0);
    }
    auto ta = block_forward(p, Tensor::from({T, d}, x), 1, T);
    auto tb = block_forward(p, Tensor::from({T, d}, x2), 1, T);
    CHECK(std::memcmp(ta.data().data(), tb.data().data(), sizeof(float) * t0 * d) == 0);
  }
}

TEST_CASE("jetblock matches the composed oracle") {
  Rng rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    auto c = random_jet(rng);
    auto p = init_jetblock(c, rng);
    perturb(p, rng);
    const int T = 8;
    auto x = random_input(rng, static_cast<std::size_t>(T) * c.base.d_model);
    CHECK(max_abs_diff(forward_sequential(p, x, T), jet_oracle(p, x, T)) < 1e-5);
  }
}

TEST_CASE("jetblock chunked, step and differentiable paths agree") {
  Rng rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    auto c = random_jet(rng);
    auto p = init_jetblock(c, rng);
    perturb(p, rng);
    const int T = 16, d = c.base.d_model;
    auto x = random_input(rng, static_cast<std::size_t>(T) * d);
    auto seq = forward_sequential(p, x, T);
    for (int chunk : {2, 3, 5, 16}) CHECK(max_abs_diff(forward_chunked(p, x, T, chunk), seq) < 1e-4);
    auto t = block_forward(p, Tensor::from({T, d}, x), 1, T);
    CHECK(max_abs_diff(t.data(), seq) < 1e-5);
  }
}

TEST_CASE("gradients reach the kernel generator") {
  Rng rng(8);
  for (int trial = 0; trial < 5; ++trial) {
    auto c = random_jet(rng);
    c.kernel_size = 2 + static_cast<int>(rng.below(3));
    auto p = init_jetblock(c, rng);
    perturb(p, rng);
    const int B = 2, T = 5, d = c.base.d_model;
    auto x = Tensor::from({B * T, d}, random_input(rng, static_cast<std::size_t>(B * T) * d));
    auto w = Tensor::randn({B * T, d}, rng, 1.0f);
    auto rep = check_gradients([&] { return weighted_sum(block_forward(p, x, B, T), w); },
                               {p.gen_reduce_w, p.gen_reduce_b, p.gen_out_w, p.gen_out_b},
                               kBlockStep);
    CHECK(rep.max_rel_err < 1e-2);
    CHECK(p.gen_reduce_w.has_grad());
  }
}

TEST_CASE("parameter and state accounting against gated delta") {
  Rng rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    auto c = random_jet(rng);
    auto jet = init_jetblock(c, rng);
    auto gd = init_linear_block(c.base, rng);
    const std::int64_t d = c.base.d_model, g = c.gen_hidden,
                       HK = c.base.n_head * c.kernel_size;
    CHECK(jet.parameter_count() - gd.parameter_count() == d * g + g + g * HK + HK);
    CHECK(state_size(c).entries ==
          state_size(c.base).entries +
              static_cast<std::int64_t>(c.base.n_head) * c.base.d_v * (c.kernel_size - 1));
  }
  CHECK(generator_hidden(GeneratorPreset::Fixed32, 1536) == 32);
  CHECK(generator_hidden(GeneratorPreset::ReductionRatio8, 1536) == 192);
}

TEST_CASE("jetblock config validation") {
  auto c = make_jet_config(8, 2, 4, 4);
  c.base.conv_q = true;
  Rng rng(1);
  CHECK_THROWS_AS(init_jetblock(c, rng), Error);
  c = make_jet_config(8, 2, 4, 4);
  c.base.kind = LinearBlockKind::GLADiagonalGate;
  CHECK_THROWS_AS(init_jetblock(c, rng), Error);
}
