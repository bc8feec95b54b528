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

// Linear-attention recurrence over a per-head matrix state S (d_v x d_k,
// row-major). One step, for decay G (identity, scalar, or diagonal) and
// write strength beta:
//
//   P   = S G
//   u   = v                      (additive write)
//   u   = beta (v - P k)         (delta write)
//   S'  = P + u k^T
//   o   = S' q
//
// The delta write expands to S' = S G (I - beta k k^T) + beta v k^T, so the
// five block kinds differ only in (decay shape, write rule).

#include <cstdint>

#include "postnas/core/tensor.hpp"

namespace postnas::blocks {

enum class WriteRule { Additive, Delta };
enum class DecayShape { None, Scalar, PerKey };

struct CellDims {
  int d_k = 0;
  int d_v = 0;
};

// decay points at 1 (Scalar) or d_k (PerKey) values; ignored for None.
// beta is ignored for Additive. S is updated in place; o receives d_v values.
void cell_step(WriteRule rule, DecayShape shape, CellDims dims,
               const float* decay, float beta, const float* q, const float* k,
               const float* v, float* S, float* o);

// Chunk-parallel evaluation of `n` consecutive steps of one head. Inputs are
// contiguous per token: q, k [n, d_k]; v [n, d_v]; decay [n] or [n, d_k];
// beta [n]. Matches n calls of cell_step up to float rounding.
void chunk_steps(WriteRule rule, DecayShape shape, CellDims dims, int n,
                 const float* decay, const float* beta, const float* q,
                 const float* k, const float* v, float* S, float* o);

// Differentiable scan from S = 0 over a batch of sequences.
//   q, k  [B, T, H, d_k]
//   v     [B, T, H, d_v]
//   decay [B, T, H] (Scalar), [B, T, H, d_k] (PerKey), or undefined (None)
//   beta  [B, T, H] for Delta, undefined for Additive
// Returns o [B, T, H, d_v]. Backward replays the stored states in reverse.
Tensor linear_scan(WriteRule rule, const Tensor& q, const Tensor& k,
                   const Tensor& v, const Tensor& decay, const Tensor& beta);

}  // namespace postnas::blocks
