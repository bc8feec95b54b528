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

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "postnas/core/diagnostics.hpp"
#include "postnas/core/error.hpp"
#include "postnas/core/rng.hpp"
#include "postnas/io/config_io.hpp"
#include "postnas/model/training.hpp"
#include "postnas/search/block_select.hpp"
#include "postnas/search/grid.hpp"
#include "postnas/search/placement.hpp"
#include "postnas/search/supernet.hpp"

using namespace postnas;
using namespace postnas::search;
using model::MixerKind;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::State;
}

std::vector<int> iota(int n) {
  std::vector<int> v(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = i;
  return v;
}

std::int64_t choose(int n, int k) {
  std::int64_t r = 1;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

// Random table over every subset of size <= k, with a few coarse values so
// that ties occur.
Scorer table_scorer(Rng& rng, bool coarse) {
  auto table = std::make_shared<std::map<std::vector<int>, double>>();
  auto r = std::make_shared<Rng>(rng.split(rng.below(1u << 30)));
  return [table, r, coarse](const std::vector<int>& s) {
    auto it = table->find(s);
    if (it != table->end()) return it->second;
    const double v = coarse ? static_cast<double>(r->below(3)) : r->uniform();
    (*table)[s] = v;
    return v;
  };
}

// Every k-subset in lexicographic order; the oracle keeps the first best.
ScoredSet brute_force(int n, int k, const Scorer& score) {
  ScoredSet best;
  bool have = false;
  std::vector<int> idx(static_cast<std::size_t>(k));
  std::function<void(int, int)> rec = [&](int pos, int start) {
    if (pos == k) {
      const double v = score(idx);
      if (!have || v > best.score) {
        best = {idx, v};
        have = true;
      }
      return;
    }
    for (int i = start; i < n; ++i) {
      idx[static_cast<std::size_t>(pos)] = i;
      rec(pos + 1, i + 1);
    }
  };
  rec(0, 0);
  return best;
}

model::ModelConfig tiny(int n_blocks) {
  model::ModelConfig c;
  c.vocab_size = 40;
  c.d_model = 16;
  c.n_blocks = n_blocks;
  c.mlp_intermediate = 24;
  c.attention = {2, 1, 8, 10000.0f, 256};
  c.linear.n_head = 2;
  c.linear.d_k = 8;
  c.linear.d_v = 8;
  c.linear.gen_hidden = 8;
  c.layers.assign(static_cast<std::size_t>(n_blocks), model::LayerSpec{});
  return c;
}

tasks::TaskSpec lm_task() {
  tasks::TaskSpec t;
  t.kind = tasks::TaskKind::Lm;
  t.vocab_size = 40;
  t.seq_len = 16;
  return t;
}

tasks::TaskSpec mc_task() {
  tasks::TaskSpec s;
  s.kind = tasks::TaskKind::Multichoice;
  s.vocab_size = 40;
  s.n_subjects = 8;
  s.n_relations = 2;
  s.n_attributes = 10;
  return s;
}

std::vector<float> snapshot(const model::ModelParams& p) {
  std::vector<float> out;
  for (const auto& n : p.named()) {
    const auto d = n.tensor.data();
    out.insert(out.end(), d.begin(), d.end());
  }
  return out;
}

const model::TrainedModel& tiny_teacher() {
  static const auto t = [] {
    model::TrainConfig tc;
    tc.steps = 200;
    tc.optim.lr = 1e-2f;
    tc.seed = 4;
    const std::vector<tasks::TaskSpec> ts{lm_task()};
    return model::train_teacher(tiny(4), ts, tc);
  }();
  return t;
}

}  // namespace

TEST_CASE("beam search with a wide beam equals exhaustive enumeration") {
  Rng rng(2024);
  int instances = 0;
  for (int n = 1; n <= 10; ++n) {
    for (int k = 1; k <= std::min(3, n); ++k) {
      for (bool coarse : {false, true}) {
        const int beam = static_cast<int>(choose(n, k));
        const auto score = table_scorer(rng, coarse);
        const auto b = beam_search(iota(n), k, beam, score);
        const auto e = exhaustive_search(iota(n), k, score);
        const auto o = brute_force(n, k, score);
        CAPTURE(n);
        CAPTURE(k);
        CHECK(b.layers == o.layers);
        CHECK(b.score == o.score);
        CHECK(e.layers == o.layers);
        ++instances;
      }
    }
  }
  CHECK(instances >= 20);
}

TEST_CASE("beam edge cases") {
  const Scorer sum = [](const std::vector<int>& s) {
    double v = 0;
    for (int i : s) v += i;
    return v;
  };
  BeamTrace trace;
  const auto empty = beam_search(iota(5), 0, 2, sum, &trace);
  CHECK(empty.layers.empty());
  CHECK(trace.evaluations == 1);
  CHECK(beam_search(iota(5), 5, 1, sum).layers == iota(5));
  CHECK(kind_of([&] { beam_search(iota(5), 6, 2, sum); }) == ErrorKind::Config);
  CHECK(kind_of([&] { beam_search(iota(5), 2, 0, sum); }) == ErrorKind::Config);

  BeamTrace t2;
  beam_search(iota(6), 3, 2, sum, &t2);
  REQUIRE(t2.depths.size() == 3);
  for (const auto& d : t2.depths) {
    CHECK(d.size() <= 2);
    for (std::size_t i = 1; i < d.size(); ++i) CHECK(!better(d[i], d[i - 1]));
  }
}

TEST_CASE("equal scores go to the lower index tuple") {
  const Scorer flat = [](const std::vector<int>&) { return 0.5; };
  CHECK(beam_search(iota(6), 2, 3, flat).layers == std::vector<int>{0, 1});
  CHECK(exhaustive_search(iota(6), 3, flat).layers == std::vector<int>{0, 1, 2});
  CHECK(better({{0, 3}, 1.0}, {{1, 2}, 1.0}));
  CHECK(better({{4, 5}, 2.0}, {{0, 1}, 1.0}));
}

TEST_CASE("memoized scorer evaluates each set once") {
  int calls = 0;
  MemoScorer m([&](const std::vector<int>& s) {
    ++calls;
    return static_cast<double>(s.size());
  });
  m({1, 2});
  m({1, 2});
  m({3});
  CHECK(calls == 2);
  CHECK(m.evaluations() == 2);
}

TEST_CASE("uniform placement spreads layers evenly") {
  CHECK(uniform_placement(8, 2) == std::vector<int>{2, 6});
  CHECK(uniform_placement(8, 1) == std::vector<int>{4});
  CHECK(uniform_placement(28, 2) == std::vector<int>{7, 21});
  CHECK(uniform_placement(5, 5) == iota(5));
  CHECK(uniform_placement(8, 0).empty());
}

TEST_CASE("the 2B reference grid has nine rows at one state size") {
  const auto ranges = io::load_ranges(std::string(POSTNAS_FIXTURE_DIR) + "/grid_ranges_2b.json");
  const auto base = io::load_model_config(std::string(POSTNAS_FIXTURE_DIR) + "/jet2b_like.json");
  const auto rows = grid_candidates(294912, ranges, base);
  const std::vector<std::array<int, 3>> expected{
      {256, 288, 4}, {192, 384, 4}, {128, 576, 4},  {256, 144, 8},  {192, 192, 8},
      {128, 288, 8}, {128, 192, 12}, {96, 256, 12}, {64, 384, 12}};
  REQUIRE(rows.size() == expected.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i].d_k == expected[i][0]);
    CHECK(rows[i].d_v == expected[i][1]);
    CHECK(rows[i].n_head == expected[i][2]);
    CHECK(std::int64_t{rows[i].n_head} * rows[i].d_k * rows[i].d_v == 294912);
    CHECK(rows[i].state_entries == 294912);
    CHECK(rows[i].state_bytes == rows[0].state_bytes);
    CHECK(rows[i].params == model::mixer_parameter_count(
                                with_linear_shape(base, rows[i]), model::LayerSpec{MixerKind::Jet}));
  }
  // Parameters grow as d_k shrinks within each head count.
  CHECK(rows[0].params < rows[2].params);
  CHECK(rows[6].params < rows[8].params);
  CHECK(grid_candidates(294912, ranges, base).size() == rows.size());
}

TEST_CASE("grid edge cases") {
  const auto base = model::desk_config();
  const std::vector<GridRange> unit{{1, 1, 4, 1, 1}};
  const auto one = grid_candidates(1, unit, base);
  REQUIRE(one.size() == 1);
  CHECK(one[0].d_k == 1);
  CHECK(one[0].d_v == 1);
  CHECK(one[0].n_head == 1);

  set_warning_echo(false);
  take_warnings();
  const std::vector<GridRange> coarse{{2, 32, 64, 32, 32}};
  CHECK(grid_candidates(7, coarse, base).empty());
  CHECK(take_warnings().size() == 1);
  CHECK(kind_of([&] { grid_candidates(0, unit, base); }) == ErrorKind::Config);

  std::ostringstream csv;
  write_grid_csv(csv, one);
  CHECK(csv.str().rfind("d_k,d_v,n_head,params,state_entries,state_bytes\n1,1,1,", 0) == 0);
}

TEST_CASE("hardware-aware search picks the best accurate row that keeps speed") {
  const auto ranges = io::load_ranges(std::string(POSTNAS_FIXTURE_DIR) + "/grid_ranges_2b.json");
  const auto ref = io::load_model_config(std::string(POSTNAS_FIXTURE_DIR) + "/jet2b_like.json");
  const auto hw = io::load_hardware(std::string(POSTNAS_FIXTURE_DIR) + "/h100_like.json");
  const auto grid = grid_candidates(294912, ranges, ref);
  // Larger value width strictly helps.
  const GridEvaluator by_dv = [](const GridRow& r) { return r.d_v / 1000.0; };
  const auto res = hardware_aware_search(grid, by_dv, ref, hw, 65536, 0.05);
  REQUIRE(res.rows.size() == grid.size());
  REQUIRE(res.chosen >= 0);
  int max_dv = 0;
  for (const auto& r : grid) max_dv = std::max(max_dv, r.d_v);
  CHECK(res.rows[static_cast<std::size_t>(res.chosen)].row.d_v == max_dv);
  for (const auto& r : res.rows) {
    CHECK(r.row.state_bytes == grid.front().state_bytes);
    CHECK(r.eligible == (r.decode_tps >= 0.95 * res.baseline_tps));
  }

  // A zero tolerance with a throughput that only the baseline reaches.
  const auto strict = hardware_aware_search(grid, by_dv, ref, hw, 65536, 0.0);
  for (const auto& r : strict.rows)
    if (r.eligible) CHECK(r.decode_tps >= strict.baseline_tps);

  std::ostringstream csv;
  write_hw_csv(csv, res);
  std::istringstream in(csv.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "d_k,d_v,n_head,params,state_bytes,accuracy,decode_tok_s,batch,eligible,chosen");
  int n = 0;
  while (std::getline(in, line)) ++n;
  CHECK(n == static_cast<int>(grid.size()));
}

TEST_CASE("supernet training only moves the linear paths") {
  const auto& teacher = tiny_teacher();
  const std::vector<tasks::TaskSpec> ts{lm_task()};
  const auto hash = model::frozen_hash(teacher.params);

  SUBCASE("always-attention paths reproduce the teacher") {
    auto net = build_supernet(teacher.params, blocks::LinearBlockKind::GLADiagonalGate, 1);
    SupernetConfig cfg;
    cfg.train.steps = 4;
    cfg.full_probability = 1.0;
    const auto rep = train_supernet(net, teacher.params, ts, cfg);
    REQUIRE(rep.losses.size() == 4);
    for (float l : rep.losses) CHECK(l == doctest::Approx(0.0).epsilon(1e-7));
  }

  SUBCASE("frozen set and attention stay bitwise, all-linear path improves") {
    auto net = build_supernet(teacher.params, blocks::LinearBlockKind::GLADiagonalGate, 1);
    model::EvalConfig ec;
    ec.items = 128;
    const auto all_linear = subnet_layers(net, {});
    const double untrained = model::eval_loss(net.params, ts, ec, all_linear);
    SupernetConfig cfg;
    cfg.train.steps = 150;
    cfg.train.seed = 7;
    train_supernet(net, teacher.params, ts, cfg);
    CHECK(model::frozen_hash(net.params) == hash);
    for (const auto& n : teacher.params.named()) {
      if (is_supernet_trainable(n.name)) continue;
      for (const auto& m : net.params.named())
        if (m.name == n.name) {
          const auto a = n.tensor.data(), b = m.tensor.data();
          CHECK(std::equal(a.begin(), a.end(), b.begin(), b.end()));
        }
    }
    CHECK(model::eval_loss(net.params, ts, ec, all_linear) < untrained);
  }
}

TEST_CASE("scoring and heatmaps never change supernet weights") {
  const auto& teacher = tiny_teacher();
  const auto net = build_supernet(teacher.params, blocks::LinearBlockKind::GLADiagonalGate, 3);
  const auto before = snapshot(net.params);
  const std::vector<tasks::TaskSpec> ts{lm_task(), mc_task()};
  model::EvalConfig ec;
  ec.items = 32;
  const auto hm = layer_heatmap(net, ts, ec);
  REQUIRE(hm.cells.size() == 4);
  for (const auto& row : hm.cells) CHECK(row.size() == 2);
  CHECK(hm.tasks.size() == 2);

  BeamTrace trace;
  const auto p = beam_search_placement(net, mc_task(), 2, 6, {ec, Objective::NegLoss}, &trace);
  CHECK(p.full.size() == 2);
  CHECK(std::is_sorted(p.full.begin(), p.full.end()));
  CHECK(trace.depths.size() == 2);
  const auto s = search_swa(net, p, mc_task(), 1, 8, 4, {ec, Objective::Accuracy});
  REQUIRE(s.swa.size() == 1);
  CHECK(std::find(p.full.begin(), p.full.end(), s.swa[0]) == p.full.end());
  CHECK(s.full == p.full);
  CHECK(kind_of([&] { beam_search_placement(net, mc_task(), 5, 2, {ec, Objective::Accuracy}); }) ==
        ErrorKind::Config);
  CHECK(snapshot(net.params) == before);

  const auto j = nlohmann::json::parse(beam_trace_json(trace, {p.full, p.score}, p.objective, 2, 6));
  CHECK(j.at("objective") == "neg-loss");
  CHECK(j.at("k") == 2);
  CHECK(j.at("beam") == 6);
  CHECK(j.at("depths").size() == 2);
  CHECK(j.at("best").at("layers").get<std::vector<int>>() == p.full);

  std::ostringstream csv;
  write_heatmap_csv(csv, hm);
  std::istringstream in(csv.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "layer,task,accuracy,neg_loss");
  int n = 0;
  while (std::getline(in, line)) ++n;
  CHECK(n == 8);
}

TEST_CASE("identical untrained layers give a flat heatmap") {
  auto teacher = model::init_model(tiny(4), 11);
  auto net = build_supernet(teacher, blocks::LinearBlockKind::GLADiagonalGate, 11);
  auto named = net.params.named();
  std::map<std::string, NamedTensor> block0;
  for (const auto& n : named)
    if (n.name.rfind("blocks.0.", 0) == 0) block0.emplace(n.name.substr(9), n);
  for (auto& n : named) {
    if (n.name.rfind("blocks.", 0) != 0) continue;
    const auto rest = n.name.substr(n.name.find('.', 7) + 1);
    const auto src = block0.at(rest).tensor.data();
    std::copy(src.begin(), src.end(), n.tensor.mutable_data().begin());
  }
  const std::vector<tasks::TaskSpec> ts{mc_task()};
  model::EvalConfig ec;
  ec.items = 64;
  const auto hm = layer_heatmap(net, ts, ec);
  double lo = 1e9, hi = -1e9;
  for (const auto& row : hm.cells) {
    lo = std::min(lo, row[0].answer_loss);
    hi = std::max(hi, row[0].answer_loss);
  }
  // Rows differ only by where the attention layer sits in the stack.
  CHECK(hi - lo < 0.05 * hi);
}

TEST_CASE("block selection emits one deterministic row per candidate") {
  const auto& teacher = tiny_teacher();
  Placement p;
  p.full = {1};
  const std::vector<tasks::TaskSpec> ts{lm_task(), mc_task()};
  model::TrainConfig d;
  d.steps = 5;
  d.seed = 2;
  model::EvalConfig ec;
  ec.items = 32;
  const std::vector<model::LayerSpec> one{parse_block("gla")};
  const std::vector<model::LayerSpec> two{parse_block("gla"), parse_block("jet")};
  const auto a = select_block(teacher.params, p, one, ts, d, ec);
  const auto b = select_block(teacher.params, p, two, ts, d, ec);
  REQUIRE(a.rows.size() == 1);
  REQUIRE(b.rows.size() == 2);
  CHECK(b.rows[1].block == "jet");
  CHECK(a.rows[0].block == "gla");
  for (std::size_t t = 0; t < 2; ++t) CHECK(a.rows[0].scores[t].accuracy == b.rows[0].scores[t].accuracy);

  const auto cfg = hybrid_config(teacher.params.config, p, parse_block("jet"));
  CHECK(cfg.layers[1].mixer == MixerKind::Full);
  CHECK(cfg.layers[0].mixer == MixerKind::Jet);
  CHECK(kind_of([] { parse_block("mamba"); }) == ErrorKind::Config);

  std::ostringstream csv;
  write_selection_csv(csv, b);
  CHECK(csv.str().rfind("block,desk_train_tok_s,desk_eval_tok_s,lm_accuracy,multichoice_accuracy\n", 0) == 0);
}
