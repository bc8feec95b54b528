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

#include "postnas/search/block_select.hpp"

#include <chrono>
#include <iomanip>
#include <ostream>

#include "postnas/core/error.hpp"

namespace postnas::search {

using model::LayerSpec;
using model::MixerKind;

model::ModelConfig hybrid_config(const model::ModelConfig& teacher,
                                 const Placement& placement, const LayerSpec& other) {
  auto cfg = model::with_placement(teacher, placement.full, placement.swa,
                                   placement.window, other);
  return cfg;
}

std::string block_label(const LayerSpec& layer) {
  if (layer.mixer == MixerKind::Jet) return "jet";
  if (layer.mixer != MixerKind::Linear)
    fail(ErrorKind::Config, "block candidates must be linear or jet layers");
  return std::string(blocks::kind_name(layer.kind));
}

LayerSpec parse_block(std::string_view name) {
  LayerSpec l;
  if (name == "jet") {
    l.mixer = MixerKind::Jet;
  } else {
    l.mixer = MixerKind::Linear;
    l.kind = blocks::parse_kind(name);
  }
  return l;
}

SelectionTable select_block(const model::ModelParams& teacher, const Placement& placement,
                            std::span<const LayerSpec> candidates,
                            std::span<const tasks::TaskSpec> ts,
                            const model::TrainConfig& distill,
                            const model::EvalConfig& eval) {
  SelectionTable table;
  for (const auto& t : ts) table.tasks.push_back(tasks::task_label(t));
  for (const auto& c : candidates) {
    SelectionRow row;
    row.block = block_label(c);
    const auto cfg = hybrid_config(teacher.config, placement, c);
    auto student = model::distill_stage1(teacher, cfg, ts, distill);
    row.train_tok_s = student.report.seconds > 0.0
                          ? static_cast<double>(student.report.tokens) / student.report.seconds
                          : 0.0;
    const auto t0 = std::chrono::steady_clock::now();
    row.scores = model::evaluate(student.params, ts, eval);
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::int64_t tokens = 0;
    for (const auto& t : ts)
      tokens += static_cast<std::int64_t>(eval.items) * tasks::item_length(t);
    row.eval_tok_s = secs > 0.0 ? static_cast<double>(tokens) / secs : 0.0;
    table.rows.push_back(std::move(row));
  }
  return table;
}

void write_selection_csv(std::ostream& out, const SelectionTable& table) {
  out << "block,desk_train_tok_s,desk_eval_tok_s";
  for (const auto& t : table.tasks) out << ',' << t << "_accuracy";
  out << '\n' << std::setprecision(9);
  for (const auto& r : table.rows) {
    out << r.block << ',' << std::fixed << std::setprecision(1) << r.train_tok_s << ','
        << r.eval_tok_s << std::defaultfloat << std::setprecision(9);
    for (const auto& s : r.scores) out << ',' << s.accuracy;
    out << '\n';
  }
}

}  // namespace postnas::search
