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

// Reference kernels. Plain loops, no intrinsics.

#include "postnas/simd/kernels.hpp"

namespace postnas::simd {
namespace {

void gemm_ref(int M, int N, int K, const float* A, int lda, const float* B,
              int ldb, float* C, int ldc, bool accumulate) {
  for (int i = 0; i < M; ++i) {
    float* c = C + static_cast<std::size_t>(i) * ldc;
    if (!accumulate) {
      for (int j = 0; j < N; ++j) c[j] = 0.0f;
    }
    const float* a = A + static_cast<std::size_t>(i) * lda;
    for (int k = 0; k < K; ++k) {
      const float aik = a[k];
      const float* b = B + static_cast<std::size_t>(k) * ldb;
      for (int j = 0; j < N; ++j) c[j] += aik * b[j];
    }
  }
}

void gemv_ref(int M, int N, const float* A, int lda, const float* x, float* y,
              bool accumulate) {
  for (int i = 0; i < M; ++i) {
    const float* a = A + static_cast<std::size_t>(i) * lda;
    float s = 0.0f;
    for (int j = 0; j < N; ++j) s += a[j] * x[j];
    y[i] = accumulate ? y[i] + s : s;
  }
}

void gemv_t_ref(int M, int N, const float* A, int lda, const float* x,
                float* y, bool accumulate) {
  if (!accumulate) {
    for (int j = 0; j < N; ++j) y[j] = 0.0f;
  }
  for (int i = 0; i < M; ++i) {
    const float* a = A + static_cast<std::size_t>(i) * lda;
    const float xi = x[i];
    for (int j = 0; j < N; ++j) y[j] += a[j] * xi;
  }
}

void ger_ref(int M, int N, float alpha, const float* x, const float* y,
             float* A, int lda) {
  for (int i = 0; i < M; ++i) {
    float* a = A + static_cast<std::size_t>(i) * lda;
    const float s = alpha * x[i];
    for (int j = 0; j < N; ++j) a[j] += s * y[j];
  }
}

float dot_ref(const float* x, const float* y, std::size_t n) {
  float s = 0.0f;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

void axpy_ref(float a, const float* x, float* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void scal_ref(float a, float* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] *= a;
}

}  // namespace

const KernelTable& scalar_kernels() {
  static const KernelTable table{Isa::Scalar, gemm_ref,  gemv_ref, gemv_t_ref,
                                 ger_ref,     dot_ref,   axpy_ref, scal_ref};
  return table;
}

}  // namespace postnas::simd
