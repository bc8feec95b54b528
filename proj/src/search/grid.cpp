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

#include "postnas/search/grid.hpp"

#include <algorithm>
#include <iomanip>
#include <ostream>

#include "postnas/core/diagnostics.hpp"
#include "postnas/core/error.hpp"

namespace postnas::search {

model::ModelConfig with_linear_shape(const model::ModelConfig& config, const GridRow& row) {
  auto c = config;
  c.linear.n_head = row.n_head;
  c.linear.d_k = row.d_k;
  c.linear.d_v = row.d_v;
  return c;
}

std::vector<GridRow> grid_candidates(std::int64_t sigma, std::span<const GridRange> ranges,
                                     const model::ModelConfig& base) {
  if (sigma <= 0) fail(ErrorKind::Config, "grid: state entries must be positive");
  std::vector<GridRow> rows;
  model::LayerSpec jet;
  jet.mixer = model::MixerKind::Jet;
  for (const auto& r : ranges) {
    if (r.n_head < 1 || r.d_k_min < 1 || r.d_k_max < r.d_k_min || r.d_k_step < 1 ||
        r.d_v_step < 1)
      fail(ErrorKind::Config, "grid: malformed range for n_head " + std::to_string(r.n_head));
    for (int dk = r.d_k_max; dk >= r.d_k_min; --dk) {
      if ((dk - r.d_k_min) % r.d_k_step != 0) continue;
      const std::int64_t hk = static_cast<std::int64_t>(r.n_head) * dk;
      if (sigma % hk != 0) continue;
      const std::int64_t dv = sigma / hk;
      if (dv % r.d_v_step != 0 || dv > (1 << 24)) continue;
      GridRow row;
      row.d_k = dk;
      row.d_v = static_cast<int>(dv);
      row.n_head = r.n_head;
      row.state_entries = sigma;
      row.state_bytes = sigma * base.dtype_width;
      row.params = model::mixer_parameter_count(with_linear_shape(base, row), jet);
      rows.push_back(row);
    }
  }
  std::stable_sort(rows.begin(), rows.end(), [](const GridRow& a, const GridRow& b) {
    if (a.n_head != b.n_head) return a.n_head < b.n_head;
    return a.d_k > b.d_k;
  });
  rows.erase(std::unique(rows.begin(), rows.end(),
                         [](const GridRow& a, const GridRow& b) {
                           return a.n_head == b.n_head && a.d_k == b.d_k;
                         }),
             rows.end());
  if (rows.empty())
    record_warning("grid: no (d_k, d_v, n_head) in the given ranges multiplies to " +
                   std::to_string(sigma));
  return rows;
}

void write_grid_csv(std::ostream& out, const std::vector<GridRow>& rows) {
  out << "d_k,d_v,n_head,params,state_entries,state_bytes\n";
  for (const auto& r : rows)
    out << r.d_k << ',' << r.d_v << ',' << r.n_head << ',' << r.params << ','
        << r.state_entries << ',' << r.state_bytes << '\n';
}

GridEvaluator distilled_grid_evaluator(const model::ModelParams& teacher,
                                       const Placement& placement,
                                       std::vector<tasks::TaskSpec> ts,
                                       const model::TrainConfig& distill,
                                       const model::EvalConfig& eval) {
  return [&teacher, placement, ts = std::move(ts), distill, eval](const GridRow& row) {
    model::LayerSpec jet;
    jet.mixer = model::MixerKind::Jet;
    const auto cfg = hybrid_config(with_linear_shape(teacher.config, row), placement, jet);
    const auto student = model::distill_stage1(teacher, cfg, ts, distill);
    const auto scores = model::evaluate(student.params, ts, eval);
    double acc = 0.0;
    for (const auto& s : scores) acc += s.accuracy;
    return scores.empty() ? 0.0 : acc / static_cast<double>(scores.size());
  };
}

HwResult hardware_aware_search(const std::vector<GridRow>& grid, const GridEvaluator& evaluate,
                               const model::ModelConfig& reference,
                               const perf::HardwareSpec& hw, std::int64_t context,
                               double tolerance) {
  if (grid.empty()) fail(ErrorKind::Config, "hw-search: the grid is empty");
  if (tolerance < 0.0 || tolerance >= 1.0)
    fail(ErrorKind::Config, "hw-search: tolerance must lie in [0, 1)");
  HwResult res;
  res.baseline_tps = perf::optimize_chunk_and_batch(reference, hw, context).decode_tps;
  for (const auto& g : grid) {
    HwRow r;
    r.row = g;
    const auto tp = perf::optimize_chunk_and_batch(with_linear_shape(reference, g), hw, context);
    r.decode_tps = tp.decode_tps;
    r.batch = tp.batch;
    r.eligible = r.decode_tps >= (1.0 - tolerance) * res.baseline_tps;
    r.accuracy = evaluate(g);
    res.rows.push_back(r);
  }
  for (std::size_t i = 0; i < res.rows.size(); ++i) {
    const auto& r = res.rows[i];
    if (!r.eligible) continue;
    if (res.chosen < 0) {
      res.chosen = static_cast<int>(i);
      continue;
    }
    const auto& c = res.rows[static_cast<std::size_t>(res.chosen)];
    if (r.accuracy > c.accuracy || (r.accuracy == c.accuracy && r.decode_tps > c.decode_tps))
      res.chosen = static_cast<int>(i);
  }
  if (res.chosen < 0)
    record_warning("hw-search: no grid row reaches the throughput tolerance of the baseline");
  return res;
}

void write_hw_csv(std::ostream& out, const HwResult& res) {
  out << "d_k,d_v,n_head,params,state_bytes,accuracy,decode_tok_s,batch,eligible,chosen\n"
      << std::setprecision(9);
  for (std::size_t i = 0; i < res.rows.size(); ++i) {
    const auto& r = res.rows[i];
    out << r.row.d_k << ',' << r.row.d_v << ',' << r.row.n_head << ',' << r.row.params << ','
        << r.row.state_bytes << ',' << r.accuracy << ',' << r.decode_tps << ',' << r.batch
        << ',' << (r.eligible ? 1 : 0) << ',' << (static_cast<int>(i) == res.chosen ? 1 : 0)
        << '\n';
  }
}

}  // namespace postnas::search
