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
#include <limits>

#include "fd_check.hpp"
#include "oracles.hpp"
#include "postnas/attention/attention.hpp"
#include "postnas/core/error.hpp"
#include "postnas/core/ops.hpp"

using namespace postnas;
using namespace postnas::attention;
using namespace postnas::testing;

namespace {

AttnConfig small_config(Rng& rng, int window) {
  AttnConfig c;
  c.n_kv_heads = 1 + static_cast<int>(rng.below(2));
  c.n_q_heads = c.n_kv_heads * (1 + static_cast<int>(rng.below(3)));
  c.head_dim = 2 * (1 + static_cast<int>(rng.below(3)));
  c.d_model = 4 + static_cast<int>(rng.below(6));
  c.window = window;
  c.max_positions = 64;
  return c;
}

// Dense masked attention layer in double: rotate, Q K^T / sqrt(hd), mask to
// the causal window, softmax, P V, output projection.
Mat attention_oracle(const AttnParams& p, std::span<const float> x, int T) {
  const auto& c = p.config;
  const int hd = c.head_dim;
  const Mat xm = to_mat(x, T, c.d_model);
  Mat Q = dense(xm, p.wq), K = dense(xm, p.wk), V = dense(xm, p.wv);
  auto rot = [&](Mat& M, int heads) {
    for (int t = 0; t < T; ++t)
      for (int h = 0; h < heads; ++h)
        for (int i = 0; i < hd / 2; ++i) {
          const double a = t * std::pow(static_cast<double>(c.rope_base), -2.0 * i / hd);
          double& u = M[t][h * hd + 2 * i];
          double& w = M[t][h * hd + 2 * i + 1];
          const double nu = u * std::cos(a) - w * std::sin(a);
          const double nw = u * std::sin(a) + w * std::cos(a);
          u = nu;
          w = nw;
        }
  };
  rot(Q, c.n_q_heads);
  rot(K, c.n_kv_heads);
  Mat O = zeros(T, static_cast<std::size_t>(c.n_q_heads) * hd);
  const int group = c.n_q_heads / c.n_kv_heads;
  for (int h = 0; h < c.n_q_heads; ++h) {
    const int g = h / group;
    for (int i = 0; i < T; ++i) {
      std::vector<double> s(T, -std::numeric_limits<double>::infinity());
      for (int j = 0; j <= i; ++j) {
        if (c.window > 0 && j < i - c.window + 1) continue;
        double d = 0.0;
        for (int e = 0; e < hd; ++e) d += Q[i][h * hd + e] * K[j][g * hd + e];
        s[j] = d / std::sqrt(static_cast<double>(hd));
      }
      double m = -std::numeric_limits<double>::infinity();
      for (double v : s) m = std::max(m, v);
      double z = 0.0;
      for (auto& v : s) z += (v = std::exp(v - m));
      for (int j = 0; j < T; ++j)
        for (int e = 0; e < hd; ++e) O[i][h * hd + e] += s[j] / z * V[j][g * hd + e];
    }
  }
  return dense(O, p.wo);
}

std::vector<float> decode_all(const AttnParams& p, std::span<const float> x, int T) {
  KVCache cache(p.config);
  const int d = p.config.d_model;
  std::vector<float> y;
  for (int t = 0; t < T; ++t) {
    auto yt = attend_step(p, cache, x.subspan(static_cast<std::size_t>(t) * d, d));
    y.insert(y.end(), yt.begin(), yt.end());
  }
  return y;
}

}  // namespace

TEST_CASE("attend over one key and over identical keys") {
  AttnConfig c{4, 1, 1, 2};
  KVCache cache(c);
  const float k[] = {0.3f, -0.7f};
  const float v1[] = {1.5f, 2.5f};
  const float v2[] = {-0.5f, 4.5f};
  const float q[] = {2.0f, 1.0f};
  cache.append(k, v1);
  auto o = attend(c, q, cache);
  CHECK(o[0] == doctest::Approx(1.5f));
  CHECK(o[1] == doctest::Approx(2.5f));
  cache.append(k, v2);
  o = attend(c, q, cache);
  CHECK(o[0] == doctest::Approx(0.5f));
  CHECK(o[1] == doctest::Approx(3.5f));
}

TEST_CASE("decode and training paths match the dense masked oracle") {
  Rng rng(11);
  for (int window : {0, 1, 3}) {
    for (int trial = 0; trial < 6; ++trial) {
      auto c = small_config(rng, window);
      auto p = init_attention(c, rng);
      const int T = window == 3 ? 8 : 5;
      auto x = random_input(rng, static_cast<std::size_t>(T) * c.d_model);
      auto ref = attention_oracle(p, x, T);
      CAPTURE(window);
      CHECK(max_abs_diff(decode_all(p, x, T), ref) < 1e-5);
      auto y = attention_forward(p, Tensor::from({T, c.d_model}, x), 1, T);
      CHECK(max_abs_diff(y.data(), ref) < 1e-5);
    }
  }
}

TEST_CASE("window of one attends to the current token only") {
  Rng rng(12);
  AttnConfig c{6, 2, 1, 4, 1};
  auto p = init_attention(c, rng);
  KVCache cache(c);
  for (int t = 0; t < 5; ++t) {
    auto x = random_input(rng, 6);
    attend_step(p, cache, x);
    CHECK(cache.kept() == 1);
    // With a single kept entry every head returns its kv head's value.
    std::vector<float> q(8, 0.3f);
    auto o = attend(c, q, cache);
    for (int e = 0; e < 4; ++e) {
      CHECK(o[e] == doctest::Approx(cache.value(0)[e]));
      CHECK(o[4 + e] == doctest::Approx(cache.value(0)[e]));
    }
  }
}

TEST_CASE("inactive window is bitwise identical to full attention") {
  Rng rng(13);
  for (int trial = 0; trial < 5; ++trial) {
    auto full = small_config(rng, 0);
    auto p = init_attention(full, rng);
    const int T = 7;
    auto x = random_input(rng, static_cast<std::size_t>(T) * full.d_model);
    auto swa = p;
    swa.config.window = T + static_cast<int>(rng.below(3));
    auto a = decode_all(p, x, T), b = decode_all(swa, x, T);
    CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0);
    auto xt = Tensor::from({T, full.d_model}, x);
    auto ta = attention_forward(p, xt, 1, T), tb = attention_forward(swa, xt, 1, T);
    CHECK(std::memcmp(ta.data().data(), tb.data().data(), a.size() * sizeof(float)) == 0);
  }
}

TEST_CASE("grouped kv with one query per kv head is multi-head attention") {
  Rng rng(14);
  AttnConfig c{8, 3, 3, 4};
  auto p = init_attention(c, rng);
  const int T = 6;
  auto x = random_input(rng, T * 8);
  // Per-head oracle: run each head as its own single-head layer.
  std::vector<double> total(T * 8, 0.0);
  for (int h = 0; h < 3; ++h) {
    AttnParams one;
    one.config = {8, 1, 1, 4};
    one.rope = p.rope;
    auto cols = [&](const Tensor& W, int from, int width) {
      std::vector<float> v;
      for (int r = 0; r < W.dim(0); ++r)
        for (int j = 0; j < width; ++j) v.push_back(W.data()[r * W.dim(1) + from + j]);
      return Tensor::from({W.dim(0), width}, v);
    };
    one.wq = cols(p.wq, h * 4, 4);
    one.wk = cols(p.wk, h * 4, 4);
    one.wv = cols(p.wv, h * 4, 4);
    std::vector<float> wo(p.wo.data().begin() + h * 4 * 8, p.wo.data().begin() + (h + 1) * 4 * 8);
    one.wo = Tensor::from({4, 8}, wo);
    auto part = attention_oracle(one, x, T);
    for (int t = 0; t < T; ++t)
      for (int j = 0; j < 8; ++j) total[t * 8 + j] += part[t][j];
  }
  auto y = decode_all(p, x, T);
  for (int i = 0; i < T * 8; ++i) CHECK(std::abs(y[i] - total[i]) < 1e-5);
}

TEST_CASE("rope properties") {
  Rng rng(15);
  for (int trial = 0; trial < 50; ++trial) {
    const int hd = 2 * (1 + static_cast<int>(rng.below(8)));
    auto x = random_input(rng, hd);
    auto r0 = rope(x, 0);
    for (int i = 0; i < hd; ++i) CHECK(r0[i] == x[i]);
    const auto p = static_cast<std::int64_t>(rng.below(5000));
    auto r = rope(x, p);
    double nx = 0.0, nr = 0.0;
    for (int i = 0; i < hd; ++i) {
      nx += double(x[i]) * x[i];
      nr += double(r[i]) * r[i];
    }
    CHECK(std::abs(std::sqrt(nr) - std::sqrt(nx)) < 1e-5 * (1.0 + std::sqrt(nx)));

    auto q = random_input(rng, hd), k = random_input(rng, hd);
    const auto m = static_cast<std::int64_t>(rng.below(200));
    const auto n = static_cast<std::int64_t>(rng.below(200));
    const auto shift = static_cast<std::int64_t>(rng.below(200));
    auto dotp = [&](std::int64_t a, std::int64_t b) {
      auto rq = rope(q, a), rk = rope(k, b);
      double d = 0.0;
      for (int i = 0; i < hd; ++i) d += double(rq[i]) * rk[i];
      return d;
    };
    CHECK(std::abs(dotp(m, n) - dotp(m + shift, n + shift)) < 1e-4);
  }
  std::vector<float> odd(3, 1.0f);
  CHECK_THROWS_AS(rope(odd, 1), Error);
  RopeTable table(4, 10000.0f, 8);
  std::vector<float> v(4, 1.0f);
  CHECK_THROWS_AS(table.apply(v.data(), 8), Error);
  AttnConfig c{4, 1, 1, 2};
  c.max_positions = 2;
  Rng r2(1);
  auto p = init_attention(c, r2);
  KVCache cache(c);
  attend_step(p, cache, v);
  attend_step(p, cache, v);
  CHECK_THROWS_AS(attend_step(p, cache, v), Error);
}

TEST_CASE("sliding-window cache keeps only the window") {
  AttnConfig c{4, 1, 1, 2, 3};
  KVCache cache(c);
  for (int t = 0; t < 7; ++t) {
    const float k[] = {float(t), 0.0f};
    cache.append(k, k);
    CHECK(cache.kept() == std::min(t + 1, 3));
    CHECK(cache.key(cache.kept() - 1)[0] == float(t));
    CHECK(cache.key(0)[0] == float(std::max(0, t - 2)));
  }
  CHECK(cache.bytes(2) == 2 * 3 * 2 * 2);
}

TEST_CASE("attention gradients match finite differences") {
  Rng rng(16);
  for (int window : {0, 2}) {
    for (int trial = 0; trial < 4; ++trial) {
      auto c = small_config(rng, window);
      auto p = init_attention(c, rng);
      const int B = 2, T = 5;
      auto x = Tensor::from({B * T, c.d_model},
                            random_input(rng, static_cast<std::size_t>(B * T) * c.d_model),
                            true);
      auto w = Tensor::randn({B * T, c.d_model}, rng, 1.0f);
      auto rep = check_gradients(
          [&] { return weighted_sum(attention_forward(p, x, B, T), w); },
          {x, p.wq, p.wk, p.wv, p.wo}, kBlockStep);
      CHECK(rep.max_rel_err < 1e-2);
    }
  }
  // Op level at the default step.
  for (int trial = 0; trial < 5; ++trial) {
    auto q = Tensor::randn({1, 4, 2, 2}, rng, 1.0f, true);
    auto k = Tensor::randn({1, 4, 1, 2}, rng, 1.0f, true);
    auto v = Tensor::randn({1, 4, 1, 2}, rng, 1.0f, true);
    auto w = Tensor::randn({1, 4, 2, 2}, rng, 1.0f);
    auto rep = check_gradients(
        [&] { return weighted_sum(causal_attention(q, k, v, 0), w); }, {q, k, v});
    CHECK(rep.max_rel_err < 1e-2);
    auto table = std::make_shared<const RopeTable>(2, 10000.0f, 8);
    auto rep2 = check_gradients([&] { return weighted_sum(rope_tensor(q, table), w); }, {q});
    CHECK(rep2.max_rel_err < 1e-2);
  }
}
