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

#include "postnas/search/placement.hpp"

#include <algorithm>
#include <iomanip>
#include <ostream>

#include <json.hpp>

#include "postnas/core/error.hpp"

namespace postnas::search {

std::string_view objective_name(Objective o) {
  return o == Objective::Accuracy ? "accuracy" : "neg-loss";
}

Objective parse_objective(std::string_view name) {
  if (name == "accuracy") return Objective::Accuracy;
  if (name == "neg-loss") return Objective::NegLoss;
  fail(ErrorKind::Config, "unknown objective '" + std::string(name) +
                              "' (expected accuracy or neg-loss)");
}

bool better(const ScoredSet& a, const ScoredSet& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.layers < b.layers;
}

double MemoScorer::operator()(const std::vector<int>& set) {
  auto it = cache_.find(set);
  if (it != cache_.end()) return it->second;
  ++evaluations_;
  const double s = inner_(set);
  cache_.emplace(set, s);
  return s;
}

ScoredSet beam_search(const std::vector<int>& candidates, int k, int beam,
                      const Scorer& score, BeamTrace* trace) {
  const int n = static_cast<int>(candidates.size());
  if (k < 0 || k > n)
    fail(ErrorKind::Config, "beam search: k = " + std::to_string(k) + " outside [0, " +
                                std::to_string(n) + "]");
  if (beam < 1) fail(ErrorKind::Config, "beam search: beam width must be >= 1");
  MemoScorer memo(score);
  std::vector<ScoredSet> frontier{ScoredSet{{}, 0.0}};
  if (k == 0) frontier[0].score = memo({});
  for (int depth = 1; depth <= k; ++depth) {
    std::vector<ScoredSet> next;
    for (const auto& s : frontier)
      for (int c : candidates) {
        if (std::find(s.layers.begin(), s.layers.end(), c) != s.layers.end()) continue;
        ScoredSet e{s.layers, 0.0};
        e.layers.insert(std::upper_bound(e.layers.begin(), e.layers.end(), c), c);
        if (std::any_of(next.begin(), next.end(),
                        [&](const ScoredSet& x) { return x.layers == e.layers; }))
          continue;
        e.score = memo(e.layers);
        next.push_back(std::move(e));
      }
    std::sort(next.begin(), next.end(), better);
    if (static_cast<int>(next.size()) > beam) next.resize(static_cast<std::size_t>(beam));
    frontier = std::move(next);
    if (trace) trace->depths.push_back(frontier);
  }
  if (trace) trace->evaluations = memo.evaluations();
  return frontier.front();
}

ScoredSet exhaustive_search(const std::vector<int>& candidates, int k,
                            const Scorer& score) {
  const int n = static_cast<int>(candidates.size());
  if (k < 0 || k > n)
    fail(ErrorKind::Config, "exhaustive search: k outside [0, " + std::to_string(n) + "]");
  std::vector<int> sorted = candidates;
  std::sort(sorted.begin(), sorted.end());
  std::vector<bool> pick(static_cast<std::size_t>(n), false);
  std::fill(pick.begin(), pick.begin() + k, true);
  ScoredSet best;
  bool have = false;
  do {
    ScoredSet s;
    for (int i = 0; i < n; ++i)
      if (pick[static_cast<std::size_t>(i)]) s.layers.push_back(sorted[static_cast<std::size_t>(i)]);
    s.score = score(s.layers);
    if (!have || better(s, best)) best = s;
    have = true;
  } while (std::prev_permutation(pick.begin(), pick.end()));
  return best;
}

Scorer subnet_scorer(const SuperNet& net, const tasks::TaskSpec& task,
                     const SubnetEval& settings, bool as_swa,
                     std::vector<int> fixed_full, int window) {
  return [&net, task, settings, as_swa, fixed_full, window](const std::vector<int>& set) {
    const auto layers = as_swa ? subnet_layers(net, fixed_full, set, window)
                               : subnet_layers(net, set);
    const tasks::TaskSpec one[] = {task};
    const auto sc = model::evaluate(net.params, one, settings.eval, layers).front();
    return settings.objective == Objective::Accuracy ? sc.accuracy : -sc.answer_loss;
  };
}

namespace {

std::vector<int> all_blocks(int n) {
  std::vector<int> v(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = i;
  return v;
}

}  // namespace

Placement beam_search_placement(const SuperNet& net, const tasks::TaskSpec& task, int k,
                                 int beam, const SubnetEval& settings, BeamTrace* trace) {
  const int n = net.params.config.n_blocks;
  if (k > n)
    fail(ErrorKind::Config, "search-placement: k = " + std::to_string(k) +
                                " exceeds n_blocks = " + std::to_string(n));
  const auto best =
      beam_search(all_blocks(n), k, beam, subnet_scorer(net, task, settings), trace);
  Placement p;
  p.full = best.layers;
  p.score = best.score;
  p.objective = settings.objective;
  return p;
}

Placement search_swa(const SuperNet& net, Placement placement, const tasks::TaskSpec& task,
                     int count, int window, int beam, const SubnetEval& settings,
                     BeamTrace* trace) {
  if (count == 0) return placement;
  if (window < 1) fail(ErrorKind::Config, "swa search: window must be >= 1");
  std::vector<int> rest;
  for (int i = 0; i < net.params.config.n_blocks; ++i)
    if (std::find(placement.full.begin(), placement.full.end(), i) == placement.full.end())
      rest.push_back(i);
  const auto best = beam_search(
      rest, count, beam, subnet_scorer(net, task, settings, true, placement.full, window),
      trace);
  placement.swa = best.layers;
  placement.window = window;
  return placement;
}

std::vector<int> uniform_placement(int n, int k) {
  if (k < 0 || k > n) fail(ErrorKind::Config, "uniform placement: k outside [0, n]");
  std::vector<int> out;
  for (int j = 0; j < k; ++j) out.push_back((2 * j + 1) * n / (2 * k));
  return out;
}

Heatmap layer_heatmap(const SuperNet& net, std::span<const tasks::TaskSpec> ts,
                      const model::EvalConfig& eval) {
  Heatmap h;
  for (const auto& t : ts) h.tasks.push_back(tasks::task_label(t));
  for (int l = 0; l < net.params.config.n_blocks; ++l)
    h.cells.push_back(model::evaluate(net.params, ts, eval, subnet_layers(net, {l})));
  return h;
}

void write_heatmap_csv(std::ostream& out, const Heatmap& h) {
  out << "layer,task,accuracy,neg_loss\n" << std::setprecision(9);
  for (std::size_t l = 0; l < h.cells.size(); ++l)
    for (std::size_t t = 0; t < h.tasks.size(); ++t)
      out << l << ',' << h.tasks[t] << ',' << h.cells[l][t].accuracy << ','
          << -h.cells[l][t].answer_loss << '\n';
}

std::string beam_trace_json(const BeamTrace& trace, const ScoredSet& best,
                            Objective objective, int k, int beam) {
  nlohmann::ordered_json j;
  j["objective"] = std::string(objective_name(objective));
  j["k"] = k;
  j["beam"] = beam;
  j["evaluations"] = trace.evaluations;
  j["depths"] = nlohmann::ordered_json::array();
  for (const auto& d : trace.depths) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& s : d) arr.push_back({{"layers", s.layers}, {"score", s.score}});
    j["depths"].push_back(arr);
  }
  j["best"] = {{"layers", best.layers}, {"score", best.score}};
  return j.dump(2) + "\n";
}

}  // namespace postnas::search
