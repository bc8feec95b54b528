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

#include <span>
#include <vector>

#include "postnas/core/tensor.hpp"

// Differentiable primitives. Every op validates shapes and names itself and
// the offending shapes on mismatch. Reductions over "the last axis" treat a
// tensor as [rows, last].
namespace postnas::ops {

// a[..., M, K] x b[K, N] -> [..., M, N]
Tensor matmul(const Tensor& a, const Tensor& b);
// a[B, M, K] x b[B, K, N] -> [B, M, N]
Tensor bmm(const Tensor& a, const Tensor& b);

// Elementwise with suffix broadcasting: b's shape must equal a's shape or a
// trailing suffix of it (bias-style), or b is a scalar.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, float factor);

Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor silu(const Tensor& x);

Tensor softmax(const Tensor& x);
Tensor log_softmax(const Tensor& x);
// Rows with zero norm map to zero and record a warning.
Tensor l2_normalize(const Tensor& x, float eps = 0.0f);
Tensor rms_norm(const Tensor& x, const Tensor& weight, float eps = 1e-6f);

Tensor reshape(const Tensor& x, Shape shape);
// Swaps the last two axes.
Tensor transpose(const Tensor& x);
Tensor slice(const Tensor& x, int axis, std::int64_t start, std::int64_t length);
Tensor concat(std::span<const Tensor> parts, int axis);
// Inclusive prefix sum along the last axis.
Tensor cumsum(const Tensor& x);

// table[V, D] gathered at ids -> [ids.size(), D]
Tensor embedding(const Tensor& table, std::span<const int> ids);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// Weighted mean next-token cross entropy. logits[N, V]; rows with weight 0
// are ignored. Returns a scalar.
Tensor cross_entropy(const Tensor& logits, std::span<const int> targets,
                     std::span<const float> weights);
// Mean squared error over all elements.
Tensor mse(const Tensor& a, const Tensor& b);
// Mean over rows of KL(softmax(teacher) || softmax(student)). The teacher is
// treated as a constant.
Tensor kl_div(const Tensor& student_logits, const Tensor& teacher_logits);

}  // namespace postnas::ops
