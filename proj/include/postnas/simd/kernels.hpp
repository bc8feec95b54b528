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
#pragma once

#include <cstddef>
#include <string_view>

namespace postnas::simd {

// Instruction-set variants. Every kernel has a Scalar reference; faster
// variants must agree with it to float rounding (see tests/test_simd.cpp).
enum class Isa { Scalar, Avx2 };

std::string_view isa_name(Isa isa);

// All matrices are row-major with explicit leading dimensions.
struct KernelTable {
  Isa isa;
  // C[M,N] (+)= A[M,K] * B[K,N]
  void (*gemm)(int M, int N, int K, const float* A, int lda, const float* B,
               int ldb, float* C, int ldc, bool accumulate);
  // y[M] (+)= A[M,N] * x[N]
  void (*gemv)(int M, int N, const float* A, int lda, const float* x, float* y,
               bool accumulate);
  // y[N] (+)= A[M,N]^T * x[M]
  void (*gemv_t)(int M, int N, const float* A, int lda, const float* x,
                 float* y, bool accumulate);
  // A[M,N] += alpha * x[M] y[N]^T
  void (*ger)(int M, int N, float alpha, const float* x, const float* y,
              float* A, int lda);
  float (*dot)(const float* x, const float* y, std::size_t n);
  // y += a * x
  void (*axpy)(float a, const float* x, float* y, std::size_t n);
  // x *= a
  void (*scal)(float a, float* x, std::size_t n);
};

const KernelTable& scalar_kernels();
// Returns nullptr when the variant was not compiled in or the host lacks it.
const KernelTable* avx2_kernels();

bool host_supports(Isa isa);

// The table selected at startup: the best supported variant unless the
// POSTNAS_ISA environment variable ("scalar" | "avx2") overrides it.
const KernelTable& active();

// Test hook; returns false if the requested variant is unavailable.
bool force_isa(Isa isa);

// Transposition-aware GEMM on top of the active table:
// C (+)= op(A) * op(B) with op(X) = X or X^T. Shapes are given post-op.
void gemm(bool trans_a, bool trans_b, int M, int N, int K, const float* A,
          int lda, const float* B, int ldb, float* C, int ldc,
          bool accumulate);

}  // namespace postnas::simd
