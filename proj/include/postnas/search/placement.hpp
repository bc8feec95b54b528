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

// Placement of full-attention (and sliding-window) layers over a trained
// supernet, scored on the subnetwork with the chosen layers as attention
// and every other layer linear. Scoring never changes supernet weights.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "postnas/search/supernet.hpp"

namespace postnas::search {

enum class Objective {
  Accuracy,  // higher accuracy is better
  NegLoss,   // lower correct-answer loss is better; score = -loss
};

std::string_view objective_name(Objective objective);
Objective parse_objective(std::string_view name);

// Score of a sorted index set; higher is better.
using Scorer = std::function<double(const std::vector<int>&)>;

struct ScoredSet {
  std::vector<int> layers;  // sorted ascending
  double score = 0.0;
};

// Higher score first; equal scores resolved toward the lexicographically
// smaller index tuple.
bool better(const ScoredSet& a, const ScoredSet& b);

struct BeamTrace {
  std::vector<std::vector<ScoredSet>> depths;  // beam kept after each depth
  int evaluations = 0;
};

// Grows a set of k indices from `candidates` one index per depth, keeping the
// best `beam` sets at each depth. Returns the best set of size k. k = 0
// returns the empty set scored once.
ScoredSet beam_search(const std::vector<int>& candidates, int k, int beam,
                      const Scorer& score, BeamTrace* trace = nullptr);

// Best k-subset of candidates by full enumeration, same tie rule.
ScoredSet exhaustive_search(const std::vector<int>& candidates, int k,
                            const Scorer& score);

// Caches scores by index set.
class MemoScorer {
 public:
  explicit MemoScorer(Scorer inner) : inner_(std::move(inner)) {}
  double operator()(const std::vector<int>& set);
  int evaluations() const { return evaluations_; }

 private:
  Scorer inner_;
  std::map<std::vector<int>, double> cache_;
  int evaluations_ = 0;
};

struct SubnetEval {
  model::EvalConfig eval;
  Objective objective = Objective::Accuracy;
};

// Score of the subnetwork where `set` is full attention (or sliding-window
// attention when `as_swa`, with `fixed_full` as full attention).
Scorer subnet_scorer(const SuperNet& net, const tasks::TaskSpec& task,
                     const SubnetEval& settings, bool as_swa = false,
                     std::vector<int> fixed_full = {}, int window = 0);

struct Placement {
  std::vector<int> full;
  std::vector<int> swa;
  int window = 0;
  double score = 0.0;
  Objective objective = Objective::Accuracy;
};

Placement beam_search_placement(const SuperNet& net, const tasks::TaskSpec& task,
                                int k, int beam, const SubnetEval& settings,
                                BeamTrace* trace = nullptr);

// Second pass: with `placement.full` fixed, choose `count` sliding-window
// layers among the rest.
Placement search_swa(const SuperNet& net, Placement placement,
                     const tasks::TaskSpec& task, int count, int window, int beam,
                     const SubnetEval& settings, BeamTrace* trace = nullptr);

// k indices spread evenly over n blocks: floor((2j + 1) * n / (2k)).
std::vector<int> uniform_placement(int n_blocks, int k);

struct Heatmap {
  std::vector<std::string> tasks;
  // [layer][task]
  std::vector<std::vector<model::TaskScore>> cells;
};

// Row l evaluates the subnetwork with only layer l as full attention.
Heatmap layer_heatmap(const SuperNet& net, std::span<const tasks::TaskSpec> tasks,
                      const model::EvalConfig& eval);

// layer,task,accuracy,neg_loss
void write_heatmap_csv(std::ostream& out, const Heatmap& heatmap);

// {"objective", "k", "beam", "evaluations", "depths": [[{"layers", "score"}]],
//  "best": {"layers", "score"}}
std::string beam_trace_json(const BeamTrace& trace, const ScoredSet& best,
                            Objective objective, int k, int beam);

}  // namespace postnas::search
