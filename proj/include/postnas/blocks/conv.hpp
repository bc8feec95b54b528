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

// Causal depthwise convolutions along time with zero left padding. Tap i of
// a size-K kernel multiplies the input K-1-i steps back, so the last tap
// sees the current token.

#include "postnas/core/tensor.hpp"

namespace postnas::blocks {

// Static kernel per channel: x [B, T, C], w [C, K] -> [B, T, C].
Tensor causal_conv(const Tensor& x, const Tensor& w);

// Per-token kernel per head, shared across the head's channels:
// v [B, T, H, D], kernels [B, T, H, K] -> [B, T, H, D].
Tensor dynamic_causal_conv(const Tensor& v, const Tensor& kernels);

// Single-token forms for incremental decoding. `tail` holds the previous
// K-1 inputs, oldest first ([K-1, width]); it is shifted to include x.
void causal_conv_token(const float* x, const float* w, int channels, int K,
                       float* tail, float* y);
void dynamic_conv_token(const float* v, const float* kernels, int heads,
                        int d, int K, float* tail, float* y);

}  // namespace postnas::blocks
