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

// Once-for-all supernet: the teacher with an extra linear mixer path in
// every block. Training samples a path per step and distills the resulting
// subnetwork toward the teacher; only the linear paths learn. Attention
// paths, norms, MLPs, embeddings and head stay bitwise equal to the
// teacher's, so the all-attention path is the teacher.

#include <cstdint>
#include <vector>

#include "postnas/model/training.hpp"

namespace postnas::search {

enum class PathSampling {
  Uniform,      // each layer Full with probability full_probability
  Constrained,  // exactly j Full layers, j ~ uniform{0..max_full}
};

struct SupernetConfig {
  model::TrainConfig train;
  blocks::LinearBlockKind linear_kind = blocks::LinearBlockKind::GLADiagonalGate;
  PathSampling sampling = PathSampling::Uniform;
  double full_probability = 0.5;
  int max_full = 2;
};

struct SuperNet {
  model::ModelParams params;
  blocks::LinearBlockKind linear_kind = blocks::LinearBlockKind::GLADiagonalGate;
};

SuperNet build_supernet(const model::ModelParams& teacher,
                        blocks::LinearBlockKind linear_kind, std::uint64_t seed);

// Layer list of the subnetwork with `full` as attention, `swa` as
// sliding-window attention and every other block on its linear path.
std::vector<model::LayerSpec> subnet_layers(const SuperNet& net,
                                            const std::vector<int>& full,
                                            const std::vector<int>& swa = {},
                                            int window = 0);

std::vector<model::LayerSpec> sample_path(const SuperNet& net,
                                          const SupernetConfig& config, Rng& rng);

// Parameters that train in the supernet: the linear paths.
bool is_supernet_trainable(const std::string& name);

model::TrainReport train_supernet(SuperNet& net, const model::ModelParams& teacher,
                                  std::span<const tasks::TaskSpec> tasks,
                                  const SupernetConfig& config);

}  // namespace postnas::search
