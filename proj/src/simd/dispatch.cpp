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
#include <atomic>
#include <cstdlib>
#include <string>
#include <vector>

#include "postnas/simd/kernels.hpp"

namespace postnas::simd {
namespace {

const KernelTable* select_default() {
  if (const char* env = std::getenv("POSTNAS_ISA")) {
    const std::string want(env);
    if (want == "scalar") return &scalar_kernels();
    if (want == "avx2" && host_supports(Isa::Avx2)) return avx2_kernels();
  }
  if (host_supports(Isa::Avx2)) return avx2_kernels();
  return &scalar_kernels();
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> table{select_default()};
  return table;
}

void transpose_into(int rows, int cols, const float* src, int ld,
                    std::vector<float>& dst) {
  dst.resize(static_cast<std::size_t>(rows) * cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      dst[static_cast<std::size_t>(c) * rows + r] =
          src[static_cast<std::size_t>(r) * ld + c];
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::Scalar:
      return "scalar";
    case Isa::Avx2:
      return "avx2";
  }
  return "unknown";
}

bool host_supports(Isa isa) {
  switch (isa) {
    case Isa::Scalar:
      return true;
    case Isa::Avx2:
#if defined(__x86_64__) || defined(__i386__)
      return avx2_kernels() != nullptr && __builtin_cpu_supports("avx2") &&
             __builtin_cpu_supports("fma");
#else
      return false;
#endif
  }
  return false;
}

const KernelTable& active() { return *current().load(std::memory_order_relaxed); }

bool force_isa(Isa isa) {
  if (!host_supports(isa)) return false;
  current().store(isa == Isa::Scalar ? &scalar_kernels() : avx2_kernels());
  return true;
}

void gemm(bool trans_a, bool trans_b, int M, int N, int K, const float* A,
          int lda, const float* B, int ldb, float* C, int ldc,
          bool accumulate) {
  thread_local std::vector<float> a_buf;
  thread_local std::vector<float> b_buf;
  if (trans_a) {
    // A is stored K x M.
    transpose_into(K, M, A, lda, a_buf);
    A = a_buf.data();
    lda = K;
  }
  if (trans_b) {
    // B is stored N x K.
    transpose_into(N, K, B, ldb, b_buf);
    B = b_buf.data();
    ldb = N;
  }
  active().gemm(M, N, K, A, lda, B, ldb, C, ldc, accumulate);
}

}  // namespace postnas::simd
