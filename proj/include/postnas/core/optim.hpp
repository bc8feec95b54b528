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

#include <cstdint>
#include <string>
#include <vector>

#include "postnas/core/tensor.hpp"

namespace postnas {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

enum class OptimizerKind { Sgd, Adam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Adam;
  float lr = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
  // Decoupled (AdamW-style); 0 keeps zero-gradient steps exact no-ops.
  float weight_decay = 0.0f;
  // Global L2 gradient clipping threshold; <= 0 disables.
  float clip_norm = 0.0f;
};

// Moment buffers are keyed by parameter name so a parameter that receives no
// gradient on some step (inactive supernet path) keeps its own history.
struct OptimizerState {
  OptimizerConfig config;
  std::int64_t step = 0;
  struct Moments {
    std::vector<float> m;
    std::vector<float> v;
    std::int64_t updates = 0;
  };
  std::vector<std::pair<std::string, Moments>> moments;

  Moments& moments_for(const std::string& name, std::size_t size);
};

// Updates every parameter that requires grad and holds a gradient; those
// without one are left bitwise untouched. Gradients are not cleared.
// Throws Error(Numeric) naming the first parameter with a non-finite grad.
void optimizer_step(std::vector<NamedTensor>& params, OptimizerState& state);

void zero_grad(std::vector<NamedTensor>& params);

// Global gradient L2 norm over parameters that hold gradients.
double grad_norm(const std::vector<NamedTensor>& params);

}  // namespace postnas
