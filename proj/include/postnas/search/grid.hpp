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

// Linear-block hyperparameter grid at a fixed recurrent state size, and
// the hardware-aware pick over it.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "postnas/perf/perf_model.hpp"
#include "postnas/search/block_select.hpp"

namespace postnas::search {

// d_k runs over [d_k_min, d_k_max] in steps of d_k_step; d_v must be a
// multiple of d_v_step.
struct GridRange {
  int n_head = 1;
  int d_k_min = 1;
  int d_k_max = 1;
  int d_k_step = 1;
  int d_v_step = 1;

  bool operator==(const GridRange&) const = default;
};

struct GridRow {
  int d_k = 0;
  int d_v = 0;
  int n_head = 0;
  std::int64_t params = 0;         // one Jet mixer with this shape
  std::int64_t state_entries = 0;  // n_head * d_k * d_v
  std::int64_t state_bytes = 0;    // per layer, at the base dtype width
};

// Every (d_k, d_v, n_head) inside the ranges with n_head * d_k * d_v equal
// to `state_entries`, ordered by n_head ascending then d_k descending.
// Parameter counts use `base` (d_model, kernel and generator sizes). An
// empty result records a warning.
std::vector<GridRow> grid_candidates(std::int64_t state_entries,
                                     std::span<const GridRange> ranges,
                                     const model::ModelConfig& base);

model::ModelConfig with_linear_shape(const model::ModelConfig& config, const GridRow& row);

// d_k,d_v,n_head,params,state_entries,state_bytes
void write_grid_csv(std::ostream& out, const std::vector<GridRow>& rows);

// Desk-scale accuracy of a grid row.
using GridEvaluator = std::function<double(const GridRow&)>;

// Distills a hybrid student with Jet layers of the row's shape outside the
// placement and returns its mean accuracy over the tasks.
GridEvaluator distilled_grid_evaluator(const model::ModelParams& teacher,
                                       const Placement& placement,
                                       std::vector<tasks::TaskSpec> tasks,
                                       const model::TrainConfig& distill,
                                       const model::EvalConfig& eval);

struct HwRow {
  GridRow row;
  double accuracy = 0.0;
  double decode_tps = 0.0;  // reference architecture with this shape
  std::int64_t batch = 0;
  bool eligible = false;    // within tolerance of the baseline throughput
};

struct HwResult {
  std::vector<HwRow> rows;
  double baseline_tps = 0.0;
  int chosen = -1;
};

// Decode throughput of `reference` with each row's linear shape at
// `context`, each at its optimized chunk and batch. Among rows with
// throughput >= (1 - tolerance) * baseline, picks the highest accuracy
// (ties: higher throughput, then earlier row).
HwResult hardware_aware_search(const std::vector<GridRow>& grid,
                               const GridEvaluator& evaluate,
                               const model::ModelConfig& reference,
                               const perf::HardwareSpec& hw, std::int64_t context,
                               double tolerance);

// d_k,d_v,n_head,params,state_bytes,accuracy,decode_tok_s,batch,eligible,chosen
void write_hw_csv(std::ostream& out, const HwResult& result);

}  // namespace postnas::search
