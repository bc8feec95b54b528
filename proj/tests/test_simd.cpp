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
#include <vector>

#include "postnas/core/rng.hpp"
#include "postnas/simd/kernels.hpp"

using namespace postnas;
using postnas::simd::KernelTable;

namespace {

std::vector<float> random_vec(Rng& rng, std::size_t n) {
  std::vector<float> v(n);
  for (auto& x : v) x = rng.uniform(-1.0f, 1.0f);
  return v;
}

float max_abs_diff(const std::vector<float>& a, const std::vector<float>& b) {
  float m = 0.0f;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Every compiled variant that the host can run, scalar first.
std::vector<const KernelTable*> variants() {
  std::vector<const KernelTable*> v{&simd::scalar_kernels()};
  if (simd::host_supports(simd::Isa::Avx2)) v.push_back(simd::avx2_kernels());
  return v;
}

}  // namespace

TEST_CASE("scalar kernels compute textbook results") {
  const auto& k = simd::scalar_kernels();
  const float A[] = {1, 2, 3, 4, 5, 6};  // 2x3
  const float B[] = {1, 0, 0, 1, 1, 1};  // 3x2
  float C[4];
  k.gemm(2, 2, 3, A, 3, B, 2, C, 2, false);
  CHECK(C[0] == 4);
  CHECK(C[1] == 5);
  CHECK(C[2] == 10);
  CHECK(C[3] == 11);
  const float x[] = {1, 1, 1};
  float y[2];
  k.gemv(2, 3, A, 3, x, y, false);
  CHECK(y[0] == 6);
  CHECK(y[1] == 15);
  CHECK(k.dot(A, A, 6) == 91);
}

TEST_CASE("every variant matches the scalar reference") {
  Rng rng(7);
  const auto& ref = simd::scalar_kernels();
  for (const KernelTable* kt : variants()) {
    CAPTURE(simd::isa_name(kt->isa));
    // Odd sizes hit every tail path of the 6x16 / 8-wide tiles.
    for (int M : {1, 5, 6, 13}) {
      for (int N : {1, 7, 8, 16, 23, 40}) {
        for (int K : {1, 3, 32, 65}) {
          auto A = random_vec(rng, static_cast<std::size_t>(M) * K);
          auto B = random_vec(rng, static_cast<std::size_t>(K) * N);
          auto C0 = random_vec(rng, static_cast<std::size_t>(M) * N);
          auto C1 = C0;
          ref.gemm(M, N, K, A.data(), K, B.data(), N, C0.data(), N, true);
          kt->gemm(M, N, K, A.data(), K, B.data(), N, C1.data(), N, true);
          CHECK(max_abs_diff(C0, C1) <= 1e-4f * static_cast<float>(K));
        }
      }
    }
    for (std::size_t n : {1u, 7u, 8u, 17u, 64u, 131u}) {
      auto x = random_vec(rng, n);
      auto y = random_vec(rng, n);
      CHECK(std::abs(ref.dot(x.data(), y.data(), n) - kt->dot(x.data(), y.data(), n)) <
            1e-4f * static_cast<float>(n));
      auto y0 = y;
      auto y1 = y;
      ref.axpy(0.3f, x.data(), y0.data(), n);
      kt->axpy(0.3f, x.data(), y1.data(), n);
      CHECK(max_abs_diff(y0, y1) < 1e-6f);
      ref.scal(-1.5f, y0.data(), n);
      kt->scal(-1.5f, y1.data(), n);
      CHECK(max_abs_diff(y0, y1) < 1e-6f);
    }
    const int M = 9, N = 19;
    auto A = random_vec(rng, M * N);
    auto x = random_vec(rng, N);
    auto xm = random_vec(rng, M);
    std::vector<float> y0(M, 0.5f), y1(M, 0.5f), z0(N, 0.25f), z1(N, 0.25f);
    ref.gemv(M, N, A.data(), N, x.data(), y0.data(), true);
    kt->gemv(M, N, A.data(), N, x.data(), y1.data(), true);
    CHECK(max_abs_diff(y0, y1) < 1e-5f);
    ref.gemv_t(M, N, A.data(), N, xm.data(), z0.data(), false);
    kt->gemv_t(M, N, A.data(), N, xm.data(), z1.data(), false);
    CHECK(max_abs_diff(z0, z1) < 1e-5f);
    auto A0 = A;
    auto A1 = A;
    ref.ger(M, N, 0.7f, xm.data(), x.data(), A0.data(), N);
    kt->ger(M, N, 0.7f, xm.data(), x.data(), A1.data(), N);
    CHECK(max_abs_diff(A0, A1) < 1e-6f);
  }
}

TEST_CASE("transposed gemm wrapper agrees with explicit transposes") {
  Rng rng(11);
  const int M = 7, N = 5, K = 9;
  auto At = random_vec(rng, K * M);  // stored K x M
  auto Bt = random_vec(rng, N * K);  // stored N x K
  std::vector<float> A(M * K), B(K * N);
  for (int i = 0; i < M; ++i)
    for (int k = 0; k < K; ++k) A[i * K + k] = At[k * M + i];
  for (int k = 0; k < K; ++k)
    for (int j = 0; j < N; ++j) B[k * N + j] = Bt[j * K + k];
  std::vector<float> C0(M * N), C1(M * N);
  simd::scalar_kernels().gemm(M, N, K, A.data(), K, B.data(), N, C0.data(), N,
                              false);
  simd::gemm(true, true, M, N, K, At.data(), M, Bt.data(), K, C1.data(), N,
             false);
  CHECK(max_abs_diff(C0, C1) < 1e-5f);
}

TEST_CASE("isa can be forced for equivalence runs") {
  const auto original = simd::active().isa;
  CHECK(simd::force_isa(simd::Isa::Scalar));
  CHECK(simd::active().isa == simd::Isa::Scalar);
  simd::force_isa(original);
  CHECK(simd::active().isa == original);
}
