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

// Linear block selection for a fixed attention placement: each candidate
// block fills every non-attention layer, is distilled from the teacher and
// scored on the task set.

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "postnas/search/placement.hpp"

namespace postnas::search {

// Teacher config with the placement's full and sliding-window layers and
// `other` everywhere else.
model::ModelConfig hybrid_config(const model::ModelConfig& teacher,
                                 const Placement& placement,
                                 const model::LayerSpec& other);

// "jet" for Jet layers, the linear kind name otherwise.
std::string block_label(const model::LayerSpec& layer);
model::LayerSpec parse_block(std::string_view name);

struct SelectionRow {
  std::string block;
  // Wall-clock rates of this process; desk-scale only.
  double train_tok_s = 0.0;
  double eval_tok_s = 0.0;
  std::vector<model::TaskScore> scores;
};

struct SelectionTable {
  std::vector<std::string> tasks;
  std::vector<SelectionRow> rows;
};

SelectionTable select_block(const model::ModelParams& teacher,
                            const Placement& placement,
                            std::span<const model::LayerSpec> candidates,
                            std::span<const tasks::TaskSpec> tasks,
                            const model::TrainConfig& distill,
                            const model::EvalConfig& eval);

// block,desk_train_tok_s,desk_eval_tok_s,<task>_accuracy,...
void write_selection_csv(std::ostream& out, const SelectionTable& table);

}  // namespace postnas::search
