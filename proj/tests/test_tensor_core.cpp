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
#include <functional>
#include <string>

#include "fd_check.hpp"
#include "postnas/core/diagnostics.hpp"
#include "postnas/core/error.hpp"
#include "postnas/core/ops.hpp"
#include "postnas/core/optim.hpp"

using namespace postnas;
using postnas::testing::check_gradients;
using postnas::testing::weighted_sum;

namespace {

Shape random_shape(Rng& rng, int rank) {
  Shape s;
  for (int i = 0; i < rank; ++i) s.push_back(1 + static_cast<std::int64_t>(rng.below(4)));
  return s;
}

Tensor rand_param(Rng& rng, Shape s, float lo = -1.0f, float hi = 1.0f) {
  std::vector<float> v(static_cast<std::size_t>(shape_numel(s)));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor::from(std::move(s), std::move(v), true);
}

}  // namespace

TEST_CASE("forward op examples") {
  auto sm = ops::softmax(Tensor::from({2}, {0.0f, 0.0f}));
  CHECK(sm.data()[0] == doctest::Approx(0.5f));
  CHECK(sm.data()[1] == doctest::Approx(0.5f));

  CHECK(ops::silu(Tensor::scalar(0.0f)).item() == 0.0f);

  Rng rng(3);
  auto A = Tensor::randn({3, 3}, rng, 1.0f);
  auto I = Tensor::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  auto P = ops::matmul(I, A);
  for (int i = 0; i < 9; ++i) CHECK(P.data()[i] == A.data()[i]);
}

TEST_CASE("shape mismatch names op and shapes") {
  auto a = Tensor::zeros({2, 3});
  auto b = Tensor::zeros({4, 2});
  try {
    ops::matmul(a, b);
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Shape);
    const std::string msg = e.what();
    CHECK(msg.find("matmul") != std::string::npos);
    CHECK(msg.find("[2,3]") != std::string::npos);
    CHECK(msg.find("[4,2]") != std::string::npos);
  }
  CHECK_THROWS_AS(ops::add(Tensor::zeros({2, 3}), Tensor::zeros({2})), Error);
}

TEST_CASE("backward examples") {
  auto x = Tensor::from({2}, {1.0f, 2.0f}, true);
  auto p = Tensor::from({1}, {5.0f}, true);
  auto loss = ops::sum(ops::mul(x, x));
  backward(loss);
  CHECK(x.grad()[0] == 2.0f);
  CHECK(x.grad()[1] == 4.0f);
  CHECK_FALSE(p.has_grad());  // independent of p: grad is zero/absent

  auto nonscalar = ops::mul(x, x);
  CHECK_THROWS_AS(backward(nonscalar), Error);
}

TEST_CASE("recording is skipped without grad-requiring inputs or in no-grad mode") {
  auto x = Tensor::from({2}, {1.0f, 2.0f}, true);
  auto y = ops::exp(Tensor::from({2}, {1.0f, 2.0f}));
  CHECK_FALSE(y.requires_grad());
  NoGradGuard guard;
  auto z = ops::exp(x);
  CHECK_FALSE(z.requires_grad());
}

TEST_CASE("finite-difference agreement for every differentiable op") {
  Rng rng(2024);
  // Each builder draws random-shaped params and returns them with the op.
  const std::vector<std::pair<std::string, std::function<std::pair<std::vector<Tensor>, std::function<Tensor(const std::vector<Tensor>&)>>(Rng&)>>> cases = {
      {"matmul", [](Rng& r) {
         const auto M = 1 + r.below(4), K = 1 + r.below(4), N = 1 + r.below(4);
         return std::pair{std::vector{rand_param(r, {(long)M, (long)K}), rand_param(r, {(long)K, (long)N})},
                          std::function<Tensor(const std::vector<Tensor>&)>([](const std::vector<Tensor>& p) { return ops::matmul(p[0], p[1]); })};
       }},
      {"bmm", [](Rng& r) {
         const long B = 1 + r.below(4), M = 1 + r.below(4), K = 1 + r.below(4), N = 1 + r.below(4);
         return std::pair{std::vector{rand_param(r, {B, M, K}), rand_param(r, {B, K, N})},
                          std::function<Tensor(const std::vector<Tensor>&)>([](const std::vector<Tensor>& p) { return ops::bmm(p[0], p[1]); })};
       }},
      {"add", [](Rng& r) {
         auto s = random_shape(r, 3);
         Shape tail(s.begin() + 1, s.end());
         return std::pair{std::vector{rand_param(r, s), rand_param(r, tail)},
                          std::function<Tensor(const std::vector<Tensor>&)>([](const std::vector<Tensor>& p) { return ops::add(p[0], p[1]); })};
       }},
      {"sub", [](Rng& r) {
         auto s = random_shape(r, 3);
         return std::pair{std::vector{rand_param(r, s), rand_param(r, s)},
                          std::function<Tensor(const std::vector<Tensor>&)>([](const std::vector<Tensor>& p) { return ops::sub(p[0], p[1]); })};
       }},
      {"mul", [](Rng& r) {
         auto s = random_shape(r, 3);
         Shape tail(s.begin() + 2, s.end());
         return std::pair{std::vector{rand_param(r, s), rand_param(r, tail)},
                          std::function<Tensor(const std::vector<Tensor>&)>([](const std::vector<Tensor>& p) { return ops::mul(p[0], p[1]); })};
       }},
      {"div", [](Rng& r) {
         auto s = random_shape(r, 3);
         return std::pair{std::vector{rand_param(r, s), rand_param(r, s, 0.5f, 2.0f)},
                          std::function<Tensor(const std::vector<Tensor>&)>([](const std::vector<Tensor>& p) { return ops::div(p[0], p[1]); })};
       }},
      {"exp", [](Rng& r) {
         return std::pair{std::vector{rand_param(r, random_shape(r, 3))},
                          std::function<Tensor(const std::vector<Tensor>&)>([](const std::vector<Tensor>& p) { return ops::exp(p[0]); })};
       }},
      {"log", [](Rng& r) {
         return std::pair{std::vector{rand_param(r, random_shape(r, 3), 0.5f, 2.0f)},
                          std::function<Tensor(const std::vector<Tensor>&)>([](const std::vector<Tensor>& p) { return ops::log(p[0]); })};
       }},
      {"sigmoid", [](Rng& r) {
         return std::pair{std::vector{rand_param(r, random_shape(r, 3), -3.0f, 3.0f)},
                          std::function<Tensor(const std::vector<Tensor>&)>([](const std::vector<Tensor>& p) { return ops::sigmoid(p[0]); })};
       }},
      {"silu", [](Rng& r) {
         return std::pair{std::vector{rand_param(r, random_shape(r, 3), -3.0f, 3.0f)},
                          std::function<Tensor(const std::vector<Tensor>&)>([](const std::vector<Tensor>& p) { return ops::silu(p[0]); })};
       }},
      {"softmax", [](Rng& r) {
         return std::pair{std::vector{rand_param(r, random_shape(r, 3), -2.0f, 2.0f)},
                          std::function<Tensor(const std::vector<Tensor>&)>([](const std::vector<Tensor>& p) { return ops::softmax(p[0]); })};
       }},
      {"log_softmax", [](Rng& r) {
         return std::pair{std::vector{rand_param(r, random_shape(r, 3), -2.0f, 2.0f)},
                          std::function<Tensor(const std::vector<Tensor>&)>([](const std::vector<Tensor>& p) { return ops::log_softmax(p[0]); })};
       }},
      {"l2_normalize", [](Rng& r) {
         auto s = random_shape(r, 3);
         s.back() = 2 + static_cast<long>(r.below(3));
         return std::pair{std::vector{rand_param(r, s, 0.2f, 1.0f)},
                          std::function<Tensor(const std::vector<Tensor>&)>([](const std::vector<Tensor>& p) { return ops::l2_normalize(p[0]); })};
       }},
      {"rms_norm", [](Rng& r) {
         auto s = random_shape(r, 3);
         s.back() = 2 + static_cast<long>(r.below(3));
         return std::pair{std::vector{rand_param(r, s), rand_param(r, {s.back()})},
                          std::function<Tensor(const std::vector<Tensor>&)>([](const std::vector<Tensor>& p) { return ops::rms_norm(p[0], p[1]); })};
       }},
      {"reshape", [](Rng& r) {
         auto s = random_shape(r, 3);
         return std::pair{std::vector{rand_param(r, s)},
                          std::function<Tensor(const std::vector<Tensor>&)>([](const std::vector<Tensor>& p) { return ops::reshape(p[0], {p[0].numel()}); })};
       }},
      {"transpose", [](Rng& r) {
         return std::pair{std::vector{rand_param(r, random_shape(r, 3))},
                          std::function<Tensor(const std::vector<Tensor>&)>([](const std::vector<Tensor>& p) { return ops::transpose(p[0]); })};
       }},
      {"slice", [](Rng& r) {
         auto s = random_shape(r, 3);
         s[1] = 3;
         return std::pair{std::vector{rand_param(r, s)},
                          std::function<Tensor(const std::vector<Tensor>&)>([](const std::vector<Tensor>& p) { return ops::slice(p[0], 1, 1, 2); })};
       }},
      {"concat", [](Rng& r) {
         auto s = random_shape(r, 3);
         auto s2 = s;
         s2[1] = 1 + static_cast<long>(r.below(4));
         return std::pair{std::vector{rand_param(r, s), rand_param(r, s2)},
                          std::function<Tensor(const std::vector<Tensor>&)>([](const std::vector<Tensor>& p) { return ops::concat(p, 1); })};
       }},
      {"cumsum", [](Rng& r) {
         return std::pair{std::vector{rand_param(r, random_shape(r, 3))},
                          std::function<Tensor(const std::vector<Tensor>&)>([](const std::vector<Tensor>& p) { return ops::cumsum(p[0]); })};
       }},
      {"embedding", [](Rng& r) {
         return std::pair{std::vector{rand_param(r, {4, 1 + (long)r.below(4)})},
                          std::function<Tensor(const std::vector<Tensor>&)>([](const std::vector<Tensor>& p) {
                            const int ids[] = {3, 0, 3, 1};
                            return ops::embedding(p[0], ids);
                          })};
       }},
  };

  for (const auto& [name, make] : cases) {
    for (int trial = 0; trial < 5; ++trial) {
      auto [params, fn] = make(rng);
      Tensor out = fn(params);
      Rng wr = rng.split(static_cast<std::uint64_t>(trial));
      Tensor w = Tensor::randn(out.shape(), wr, 1.0f);
      auto rep = check_gradients([&] { return weighted_sum(fn(params), w); }, params);
      CAPTURE(name);
      CAPTURE(rep.worst_analytic);
      CAPTURE(rep.worst_numeric);
      CHECK(rep.max_rel_err < 1e-2);
    }
  }
}

TEST_CASE("finite-difference agreement for losses") {
  Rng rng(99);
  for (int trial = 0; trial < 5; ++trial) {
    auto logits = rand_param(rng, {4, 5}, -2.0f, 2.0f);
    const int targets[] = {0, 4, 2, 1};
    const float weights[] = {1.0f, 0.0f, 2.0f, 1.0f};
    auto r1 = check_gradients([&] { return ops::cross_entropy(logits, targets, weights); }, {logits});
    CHECK(r1.max_rel_err < 1e-2);

    auto a = rand_param(rng, {3, 4});
    auto b = rand_param(rng, {3, 4});
    auto r2 = check_gradients([&] { return ops::mse(a, b); }, {a, b});
    CHECK(r2.max_rel_err < 1e-2);

    auto teacher = Tensor::randn({4, 5}, rng, 1.0f);
    auto r3 = check_gradients([&] { return ops::kl_div(logits, teacher); }, {logits});
    CHECK(r3.max_rel_err < 1e-2);

    auto r4 = check_gradients([&] { return ops::mean(ops::mul(a, b)); }, {a, b});
    CHECK(r4.max_rel_err < 1e-2);
  }
}

TEST_CASE("composite graph matches finite differences") {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    auto x = rand_param(rng, {3, 4});
    auto w = rand_param(rng, {4, 4});
    auto g = rand_param(rng, {4}, 0.5f, 1.5f);
    auto f = [&] {
      auto h = ops::silu(ops::matmul(ops::rms_norm(x, g), w));
      auto s = ops::softmax(ops::add(h, ops::l2_normalize(x)));
      return ops::sum(ops::mul(s, ops::log(ops::add(ops::sigmoid(h), Tensor::scalar(1.0f)))));
    };
    auto rep = check_gradients(f, {x, w, g});
    CHECK(rep.max_rel_err < 1e-2);
  }
}

TEST_CASE("softmax and l2-normalize output invariants") {
  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    auto x = Tensor::randn(random_shape(rng, 3), rng, 3.0f);
    auto s = ops::softmax(x);
    const auto cols = x.dim(-1);
    for (std::int64_t r = 0; r < x.numel() / cols; ++r) {
      double total = 0.0;
      for (std::int64_t j = 0; j < cols; ++j) {
        const float v = s.data()[static_cast<std::size_t>(r * cols + j)];
        CHECK(v >= 0.0f);
        total += v;
      }
      CHECK(std::abs(total - 1.0) < 1e-6);
    }
    auto n = ops::l2_normalize(x);
    for (std::int64_t r = 0; r < x.numel() / cols; ++r) {
      double ss = 0.0;
      for (std::int64_t j = 0; j < cols; ++j) {
        const float v = n.data()[static_cast<std::size_t>(r * cols + j)];
        ss += static_cast<double>(v) * v;
      }
      CHECK(std::abs(std::sqrt(ss) - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("zero vector through l2-normalize returns zero and warns") {
  const auto before = warning_count();
  auto z = ops::l2_normalize(Tensor::zeros({1, 3}, true));
  for (float v : z.data()) CHECK(v == 0.0f);
  CHECK(warning_count() == before + 1);
  take_warnings();
}

TEST_CASE("gradients are bitwise deterministic across identical rebuilds") {
  auto run = [] {
    Rng rng(1234);
    auto x = Tensor::randn({4, 4}, rng, 1.0f, true);
    auto w = Tensor::randn({4, 4}, rng, 1.0f, true);
    auto loss = ops::mean(ops::silu(ops::matmul(ops::softmax(x), w)));
    backward(loss);
    std::vector<float> g(x.grad().begin(), x.grad().end());
    g.insert(g.end(), w.grad().begin(), w.grad().end());
    return g;
  };
  CHECK(run() == run());
}

TEST_CASE("nan/inf validation") {
  auto t = Tensor::from({2}, {1.0f, NAN});
  CHECK_THROWS_AS(validate_finite(t, "t"), Error);
  CHECK_NOTHROW(validate_finite(Tensor::zeros({3}), "z"));
}

TEST_CASE("optimizer examples") {
  SUBCASE("sgd") {
    std::vector<NamedTensor> ps{{"p", Tensor::from({1}, {1.0f}, true)}};
    ps[0].tensor.mutable_grad()[0] = 2.0f;
    OptimizerState st;
    st.config.kind = OptimizerKind::Sgd;
    st.config.lr = 0.1f;
    optimizer_step(ps, st);
    CHECK(ps[0].tensor.data()[0] == doctest::Approx(0.8f));
  }
  SUBCASE("adam zero gradient leaves parameter unchanged") {
    std::vector<NamedTensor> ps{{"p", Tensor::from({1}, {1.5f}, true)}};
    ps[0].tensor.mutable_grad()[0] = 0.0f;
    OptimizerState st;
    optimizer_step(ps, st);
    CHECK(ps[0].tensor.data()[0] == 1.5f);
  }
  SUBCASE("adam descends a quadratic") {
    std::vector<NamedTensor> ps{{"p", Tensor::from({1}, {0.0f}, true)}};
    OptimizerState st;
    st.config.lr = 0.1f;
    for (int i = 0; i < 200; ++i) {
      zero_grad(ps);
      auto d = ops::sub(ps[0].tensor, Tensor::scalar(3.0f));
      backward(ops::sum(ops::mul(d, d)));
      optimizer_step(ps, st);
    }
    CHECK(std::abs(ps[0].tensor.data()[0] - 3.0f) < 1e-2f);
    CHECK(st.step == 200);
  }
  SUBCASE("non-finite gradient names the parameter") {
    std::vector<NamedTensor> ps{{"blocks.0.w", Tensor::from({1}, {1.0f}, true)}};
    ps[0].tensor.mutable_grad()[0] = INFINITY;
    OptimizerState st;
    try {
      optimizer_step(ps, st);
      FAIL("expected throw");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Numeric);
      CHECK(std::string(e.what()).find("blocks.0.w") != std::string::npos);
    }
  }
  SUBCASE("parameters without gradients are untouched") {
    std::vector<NamedTensor> ps{{"a", Tensor::from({1}, {1.0f}, true)},
                                {"b", Tensor::from({1}, {2.0f}, true)}};
    ps[0].tensor.mutable_grad()[0] = 1.0f;
    OptimizerState st;
    optimizer_step(ps, st);
    CHECK(ps[0].tensor.data()[0] != 1.0f);
    CHECK(ps[1].tensor.data()[0] == 2.0f);
  }
}
