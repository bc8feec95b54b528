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

// AVX2 + FMA kernels. This translation unit is compiled with -mavx2 -mfma and
// must only be reached through the dispatch table after a CPUID check. Keep
// standard-library headers out of it so no AVX-encoded inline function can be
// merged into code that runs on older hosts.

#include "postnas/simd/kernels.hpp"

#if defined(POSTNAS_HAVE_AVX2)
#include <immintrin.h>

namespace postnas::simd {
namespace {

inline float hsum(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  __m128 sh = _mm_movehdup_ps(lo);
  __m128 s = _mm_add_ps(lo, sh);
  sh = _mm_movehl_ps(sh, s);
  s = _mm_add_ss(s, sh);
  return _mm_cvtss_f32(s);
}

// MR rows x 16 columns register tile.
template <int MR>
inline void tile16(int K, const float* A, int lda, const float* B, int ldb,
                   float* C, int ldc, bool accumulate) {
  __m256 c0[MR];
  __m256 c1[MR];
#pragma GCC unroll 8
  for (int r = 0; r < MR; ++r) {
    c0[r] = _mm256_setzero_ps();
    c1[r] = _mm256_setzero_ps();
  }
  for (int k = 0; k < K; ++k) {
    const float* b = B + static_cast<long>(k) * ldb;
    const __m256 b0 = _mm256_loadu_ps(b);
    const __m256 b1 = _mm256_loadu_ps(b + 8);
#pragma GCC unroll 8
    for (int r = 0; r < MR; ++r) {
      const __m256 a = _mm256_broadcast_ss(A + static_cast<long>(r) * lda + k);
      c0[r] = _mm256_fmadd_ps(a, b0, c0[r]);
      c1[r] = _mm256_fmadd_ps(a, b1, c1[r]);
    }
  }
#pragma GCC unroll 8
  for (int r = 0; r < MR; ++r) {
    float* c = C + static_cast<long>(r) * ldc;
    if (accumulate) {
      c0[r] = _mm256_add_ps(c0[r], _mm256_loadu_ps(c));
      c1[r] = _mm256_add_ps(c1[r], _mm256_loadu_ps(c + 8));
    }
    _mm256_storeu_ps(c, c0[r]);
    _mm256_storeu_ps(c + 8, c1[r]);
  }
}

template <int MR>
inline void tile8(int K, const float* A, int lda, const float* B, int ldb,
                  float* C, int ldc, bool accumulate) {
  __m256 c0[MR];
#pragma GCC unroll 8
  for (int r = 0; r < MR; ++r) c0[r] = _mm256_setzero_ps();
  for (int k = 0; k < K; ++k) {
    const __m256 b0 = _mm256_loadu_ps(B + static_cast<long>(k) * ldb);
#pragma GCC unroll 8
    for (int r = 0; r < MR; ++r) {
      const __m256 a = _mm256_broadcast_ss(A + static_cast<long>(r) * lda + k);
      c0[r] = _mm256_fmadd_ps(a, b0, c0[r]);
    }
  }
#pragma GCC unroll 8
  for (int r = 0; r < MR; ++r) {
    float* c = C + static_cast<long>(r) * ldc;
    if (accumulate) c0[r] = _mm256_add_ps(c0[r], _mm256_loadu_ps(c));
    _mm256_storeu_ps(c, c0[r]);
  }
}

template <int MR>
inline void row_block(int N, int K, const float* A, int lda, const float* B,
                      int ldb, float* C, int ldc, bool accumulate) {
  int j = 0;
  for (; j + 16 <= N; j += 16)
    tile16<MR>(K, A, lda, B + j, ldb, C + j, ldc, accumulate);
  for (; j + 8 <= N; j += 8)
    tile8<MR>(K, A, lda, B + j, ldb, C + j, ldc, accumulate);
  for (; j < N; ++j) {
    for (int r = 0; r < MR; ++r) {
      const float* a = A + static_cast<long>(r) * lda;
      float s = 0.0f;
      for (int k = 0; k < K; ++k) s += a[k] * B[static_cast<long>(k) * ldb + j];
      float* c = C + static_cast<long>(r) * ldc + j;
      *c = accumulate ? *c + s : s;
    }
  }
}

void gemm_avx2(int M, int N, int K, const float* A, int lda, const float* B,
               int ldb, float* C, int ldc, bool accumulate) {
  int i = 0;
  for (; i + 6 <= M; i += 6)
    row_block<6>(N, K, A + static_cast<long>(i) * lda, lda, B, ldb,
                 C + static_cast<long>(i) * ldc, ldc, accumulate);
  for (; i < M; ++i)
    row_block<1>(N, K, A + static_cast<long>(i) * lda, lda, B, ldb,
                 C + static_cast<long>(i) * ldc, ldc, accumulate);
}

float dot_avx2(const float* x, const float* y, std::size_t n) {
  __m256 s0 = _mm256_setzero_ps();
  __m256 s1 = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    s0 = _mm256_fmadd_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i), s0);
    s1 = _mm256_fmadd_ps(_mm256_loadu_ps(x + i + 8), _mm256_loadu_ps(y + i + 8),
                         s1);
  }
  for (; i + 8 <= n; i += 8)
    s0 = _mm256_fmadd_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i), s0);
  float s = hsum(_mm256_add_ps(s0, s1));
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

void axpy_avx2(float a, const float* x, float* y, std::size_t n) {
  const __m256 va = _mm256_set1_ps(a);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i),
                                            _mm256_loadu_ps(y + i)));
  for (; i < n; ++i) y[i] += a * x[i];
}

void scal_avx2(float a, float* x, std::size_t n) {
  const __m256 va = _mm256_set1_ps(a);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(x + i, _mm256_mul_ps(va, _mm256_loadu_ps(x + i)));
  for (; i < n; ++i) x[i] *= a;
}

void gemv_avx2(int M, int N, const float* A, int lda, const float* x, float* y,
               bool accumulate) {
  for (int i = 0; i < M; ++i) {
    const float s = dot_avx2(A + static_cast<long>(i) * lda, x,
                             static_cast<std::size_t>(N));
    y[i] = accumulate ? y[i] + s : s;
  }
}

void gemv_t_avx2(int M, int N, const float* A, int lda, const float* x,
                 float* y, bool accumulate) {
  if (!accumulate) {
    for (int j = 0; j < N; ++j) y[j] = 0.0f;
  }
  for (int i = 0; i < M; ++i)
    axpy_avx2(x[i], A + static_cast<long>(i) * lda, y,
              static_cast<std::size_t>(N));
}

void ger_avx2(int M, int N, float alpha, const float* x, const float* y,
              float* A, int lda) {
  for (int i = 0; i < M; ++i)
    axpy_avx2(alpha * x[i], y, A + static_cast<long>(i) * lda,
              static_cast<std::size_t>(N));
}

}  // namespace

const KernelTable* avx2_kernels() {
  static const KernelTable table{Isa::Avx2, gemm_avx2, gemv_avx2, gemv_t_avx2,
                                 ger_avx2,  dot_avx2,  axpy_avx2, scal_avx2};
  return &table;
}

}  // namespace postnas::simd

#else

namespace postnas::simd {
const KernelTable* avx2_kernels() { return nullptr; }
}  // namespace postnas::simd

#endif
