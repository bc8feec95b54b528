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

#include "commands.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "postnas/core/error.hpp"

#ifndef POSTNAS_REVISION
#define POSTNAS_REVISION "unknown"
#endif

namespace postnas::cli {

namespace {

using io::Json;

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream ss;
  ss << std::hex << std::setw(16) << std::setfill('0') << v;
  return ss.str();
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
  }

 private:
  std::chrono::steady_clock::time_point t0_ = std::chrono::steady_clock::now();
};

void log(const std::string& line) { std::cerr << "[postnas] " << line << std::endl; }

void emit(RunManifest& m, const std::string& name, const std::string& text) {
  const auto path = m.dir() / name;
  io::write_text_file(path, text);
  m.add(path);
}

template <class F>
void emit_stream(RunManifest& m, const std::string& name, F&& write) {
  std::ostringstream ss;
  write(ss);
  emit(m, name, ss.str());
}

Json scores_json(const std::vector<model::TaskScore>& scores) {
  Json a = Json::array();
  for (const auto& s : scores)
    a.push_back({{"task", s.task},
                 {"accuracy", s.accuracy},
                 {"answer_loss", s.answer_loss},
                 {"items", s.items}});
  return a;
}

std::string scores_line(const std::vector<model::TaskScore>& scores) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(3);
  for (const auto& s : scores) ss << ' ' << s.task << '=' << s.accuracy;
  return ss.str();
}

double tail_mean(const std::vector<float>& v, std::size_t n) {
  if (v.empty()) return 0.0;
  const std::size_t k = std::min(n, v.size());
  double s = 0.0;
  for (std::size_t i = v.size() - k; i < v.size(); ++i) s += v[i];
  return s / static_cast<double>(k);
}

search::SuperNet load_supernet(const fs::path& path) {
  auto ck = io::load_checkpoint(path);
  auto it = ck.meta.find("linear_kind");
  if (ck.meta["role"] != "supernet" || it == ck.meta.end())
    fail(ErrorKind::Config, path.string() + " is not a supernet checkpoint");
  search::SuperNet net;
  net.linear_kind = blocks::parse_kind(it->second);
  net.params = std::move(ck.params);
  return net;
}

model::ModelParams load_teacher(const fs::path& path) {
  auto ck = io::load_checkpoint(path);
  if (ck.meta["role"] != "teacher")
    fail(ErrorKind::Config, path.string() + " is not a teacher checkpoint");
  return std::move(ck.params);
}

model::ModelParams do_teacher(const io::RunConfig& run, RunManifest& m) {
  log("training teacher: " + std::to_string(run.teacher.steps) + " steps");
  auto t = model::train_teacher(run.model, run.tasks, run.teacher);
  const auto scores = model::evaluate(t.params, run.tasks, run.search.eval);
  log("teacher done in " + std::to_string(static_cast<int>(t.report.seconds)) + " s:" +
      scores_line(scores));
  io::save_checkpoint(m.dir() / "teacher.ckpt", t.params, {{"role", "teacher"}});
  m.add(m.dir() / "teacher.ckpt");
  Json j;
  j["steps"] = run.teacher.steps;
  j["final_loss"] = tail_mean(t.report.losses, 50);
  j["seconds"] = t.report.seconds;
  j["scores"] = scores_json(scores);
  emit(m, "teacher_scores.json", j.dump(2) + "\n");
  return std::move(t.params);
}

search::SuperNet do_supernet(const io::RunConfig& run, const model::ModelParams& teacher,
                             RunManifest& m) {
  auto net = search::build_supernet(teacher, run.supernet.linear_kind, run.supernet.train.seed);
  const std::vector<model::LayerSpec> all_linear = search::subnet_layers(net, {});
  const double before = model::eval_loss(net.params, run.tasks, run.search.search_eval, all_linear);
  log("training supernet: " + std::to_string(run.supernet.train.steps) + " steps");
  const auto rep = search::train_supernet(net, teacher, run.tasks, run.supernet);
  const double after = model::eval_loss(net.params, run.tasks, run.search.search_eval, all_linear);
  const auto th = model::frozen_hash(teacher);
  const auto sh = model::frozen_hash(net.params);
  if (th != sh) fail(ErrorKind::State, "supernet training changed frozen parameters");
  log("supernet done in " + std::to_string(static_cast<int>(rep.seconds)) +
      " s; all-linear eval loss " + std::to_string(before) + " -> " + std::to_string(after));
  io::save_checkpoint(m.dir() / "supernet.ckpt", net.params,
                      {{"role", "supernet"},
                       {"linear_kind", std::string(blocks::kind_name(net.linear_kind))}});
  m.add(m.dir() / "supernet.ckpt");
  Json j;
  j["steps"] = run.supernet.train.steps;
  j["linear_kind"] = std::string(blocks::kind_name(net.linear_kind));
  j["first_loss"] = rep.losses.empty() ? 0.0 : rep.losses.front();
  j["final_loss"] = tail_mean(rep.losses, 50);
  j["seconds"] = rep.seconds;
  j["all_linear_eval_loss_before"] = before;
  j["all_linear_eval_loss_after"] = after;
  j["frozen_hash"] = hex64(sh);
  j["frozen_hash_matches_teacher"] = true;
  emit(m, "supernet_report.json", j.dump(2) + "\n");
  return net;
}

void do_heatmap(const search::SuperNet& net, const std::vector<tasks::TaskSpec>& ts,
                const model::EvalConfig& eval, RunManifest& m) {
  log("heatmap over " + std::to_string(net.params.config.n_blocks) + " layers");
  const auto h = search::layer_heatmap(net, ts, eval);
  emit_stream(m, "heatmap.csv", [&](std::ostream& o) { search::write_heatmap_csv(o, h); });
}

search::Placement do_placement(const search::SuperNet& net, const PlacementArgs& a,
                               RunManifest& m) {
  search::SubnetEval se{a.eval, a.objective};
  search::BeamTrace trace;
  log("beam search: k=" + std::to_string(a.k) + " beam=" + std::to_string(a.beam) + " on " +
      tasks::task_label(a.task));
  auto p = search::beam_search_placement(net, a.task, a.k, a.beam, se, &trace);
  emit(m, "beam_trace.json",
       search::beam_trace_json(trace, {p.full, p.score}, a.objective, a.k, a.beam));
  if (a.swa_count > 0) {
    search::BeamTrace st;
    search::SubnetEval sw{a.eval, a.objective};
    p = search::search_swa(net, p, a.swa_task, a.swa_count, a.swa_window, a.beam, sw, &st);
    const auto& best = st.depths.back().front();
    emit(m, "swa_trace.json",
         search::beam_trace_json(st, best, a.objective, a.swa_count, a.beam));
  }
  std::ostringstream ss;
  for (int i : p.full) ss << ' ' << i;
  log("placement: full =" + ss.str() + " score " + std::to_string(p.score));
  emit(m, "placement.json", io::to_json(p).dump(2) + "\n");
  return p;
}

search::SelectionTable do_select(const io::RunConfig& run, const model::ModelParams& teacher,
                                 const search::Placement& p,
                                 const std::vector<model::LayerSpec>& kinds, RunManifest& m) {
  log("block selection over " + std::to_string(kinds.size()) + " candidates");
  auto t = search::select_block(teacher, p, kinds, run.tasks, run.distill, run.search.eval);
  for (const auto& r : t.rows) log("  " + r.block + ":" + scores_line(r.scores));
  emit_stream(m, "selection_table.csv",
              [&](std::ostream& o) { search::write_selection_csv(o, t); });
  return t;
}

std::vector<search::GridRow> do_grid(std::int64_t sigma,
                                     const std::vector<search::GridRange>& ranges,
                                     const model::ModelConfig& base, RunManifest& m) {
  auto rows = search::grid_candidates(sigma, ranges, base);
  emit_stream(m, "grid_table.csv", [&](std::ostream& o) { search::write_grid_csv(o, rows); });
  return rows;
}

search::HwResult do_hw(const io::RunConfig& run, const model::ModelParams& teacher,
                       const search::Placement& p, const std::vector<search::GridRow>& grid,
                       const model::ModelConfig& reference, RunManifest& m) {
  log("hardware-aware search over " + std::to_string(grid.size()) + " grid rows");
  const auto eval =
      search::distilled_grid_evaluator(teacher, p, run.tasks, run.distill, run.search.eval);
  auto res = search::hardware_aware_search(grid, eval, reference, run.hardware,
                                           run.search.hw_context, run.search.hw_tolerance);
  emit_stream(m, "hw_table.csv", [&](std::ostream& o) { search::write_hw_csv(o, res); });
  Json j;
  j["reference"] = reference.name;
  j["hardware"] = run.hardware.name;
  j["context"] = run.search.hw_context;
  j["tolerance"] = run.search.hw_tolerance;
  j["baseline_decode_tok_s"] = res.baseline_tps;
  if (res.chosen >= 0) {
    const auto& r = res.rows[static_cast<std::size_t>(res.chosen)];
    j["chosen"] = {{"d_k", r.row.d_k},
                   {"d_v", r.row.d_v},
                   {"n_head", r.row.n_head},
                   {"accuracy", r.accuracy},
                   {"decode_tok_s", r.decode_tps}};
    log("chosen shape: d_k=" + std::to_string(r.row.d_k) + " d_v=" + std::to_string(r.row.d_v) +
        " n_head=" + std::to_string(r.row.n_head));
  } else {
    j["chosen"] = nullptr;
  }
  emit(m, "hw_choice.json", j.dump(2) + "\n");
  return res;
}

void print_cache(const perf::CacheReport& r, const std::string& name) {
  auto mib = [](std::int64_t b) {
    std::ostringstream ss;
    if (b % (1 << 20) == 0)
      ss << b / (1 << 20);
    else
      ss << std::fixed << std::setprecision(2) << static_cast<double>(b) / (1 << 20);
    return ss.str();
  };
  std::cout << "config: " << name << "\ncontext: " << r.context
            << "\ndtype_width: " << r.dtype_width << "\nfull_kv: " << r.full_kv
            << " bytes\nswa_kv: " << r.swa_kv << " bytes\nlinear_state: " << r.linear_state
            << " bytes\nconv_tails: " << r.conv_tails << " bytes\ntotal: " << r.total
            << " bytes (" << mib(r.total) << " MiB)\n";
}

}  // namespace

RunManifest::RunManifest(fs::path out_dir, std::string command, std::string hash,
                         std::uint64_t seed)
    : dir_(std::move(out_dir)),
      command_(std::move(command)),
      config_hash_(std::move(hash)),
      started_(utc_now()),
      seed_(seed) {
  write();
}

void RunManifest::add(const fs::path& output) {
  const auto s = output.lexically_relative(dir_).string();
  if (std::find(outputs_.begin(), outputs_.end(), s) == outputs_.end()) outputs_.push_back(s);
}

void RunManifest::finish(bool ok, const std::string& error) {
  status_ = ok ? "ok" : "failed";
  error_ = error;
  finished_ = utc_now();
  write();
}

void RunManifest::write() const {
  Json j;
  j["command"] = command_;
  j["config_hash"] = config_hash_;
  j["seed"] = seed_;
  j["revision"] = POSTNAS_REVISION;
  j["started"] = started_;
  j["finished"] = finished_.empty() ? Json(nullptr) : Json(finished_);
  j["status"] = status_;
  if (!error_.empty()) j["error"] = error_;
  j["outputs"] = outputs_;
  io::write_text_file(dir_ / "manifest.json", j.dump(2) + "\n");
}

std::string config_hash(const io::Json& j) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : j.dump()) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return hex64(h);
}

void train_teacher_cmd(const io::RunConfig& run, RunManifest& m) { do_teacher(run, m); }

void supernet_cmd(const io::RunConfig& run, const fs::path& teacher, RunManifest& m) {
  const auto t = load_teacher(teacher);
  if (!(t.config == run.model))
    fail(ErrorKind::Config, "teacher checkpoint does not match the configured model");
  do_supernet(run, t, m);
}

void heatmap_cmd(const fs::path& supernet, const std::vector<tasks::TaskSpec>& ts,
                 const model::EvalConfig& eval, RunManifest& m) {
  do_heatmap(load_supernet(supernet), ts, eval, m);
}

search::Placement search_placement_cmd(const fs::path& supernet, const PlacementArgs& a,
                                       RunManifest& m) {
  const auto net = load_supernet(supernet);
  return do_placement(net, a, m);
}

void select_block_cmd(const io::RunConfig& run, const fs::path& teacher,
                      const search::Placement& p, const std::vector<model::LayerSpec>& kinds,
                      RunManifest& m) {
  do_select(run, load_teacher(teacher), p, kinds, m);
}

std::vector<search::GridRow> grid_cmd(std::int64_t sigma,
                                      const std::vector<search::GridRange>& ranges,
                                      const model::ModelConfig& base, RunManifest& m) {
  auto rows = do_grid(sigma, ranges, base, m);
  std::cout << "rows: " << rows.size() << "\n";
  search::write_grid_csv(std::cout, rows);
  return rows;
}

std::vector<search::GridRow> read_grid_csv(const fs::path& path) {
  std::istringstream in(io::read_text_file(path));
  std::string line;
  std::getline(in, line);
  if (line != "d_k,d_v,n_head,params,state_entries,state_bytes")
    fail(ErrorKind::Config, path.string() + ": not a grid table (unexpected header)");
  std::vector<search::GridRow> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    search::GridRow r;
    char c[5];
    std::istringstream ls(line);
    if (!(ls >> r.d_k >> c[0] >> r.d_v >> c[1] >> r.n_head >> c[2] >> r.params >> c[3] >>
          r.state_entries >> c[4] >> r.state_bytes))
      fail(ErrorKind::Config, path.string() + ":" + std::to_string(lineno) + ": malformed row");
    rows.push_back(r);
  }
  if (rows.empty()) fail(ErrorKind::Config, path.string() + ": the grid is empty");
  return rows;
}

search::HwResult hw_search_cmd(const io::RunConfig& run, const model::ModelParams& teacher,
                               const search::Placement& p,
                               const std::vector<search::GridRow>& grid,
                               const model::ModelConfig& reference, RunManifest& m) {
  return do_hw(run, teacher, p, grid, reference, m);
}

void estimate_cache_cmd(const model::ModelConfig& config, std::int64_t context,
                        const fs::path& csv) {
  const auto r = perf::cache_bytes(config, context);
  print_cache(r, config.name);
  if (!csv.empty()) {
    std::ostringstream ss;
    perf::write_cache_csv(ss, r);
    io::write_text_file(csv, ss.str());
  }
}

void estimate_throughput_cmd(const model::ModelConfig& a, const model::ModelConfig& b,
                             const perf::HardwareSpec& hw,
                             const std::vector<std::int64_t>& contexts, RunManifest& m) {
  const auto curve = perf::speedup_curve(a, b, hw, contexts);
  emit_stream(m, "speedup.csv", [&](std::ostream& o) { perf::write_speedup_csv(o, curve); });
  std::cout << "context,prefill_x,decode_x,chunk_a,batch_a,chunk_b,batch_b\n"
            << std::setprecision(6);
  for (const auto& p : curve)
    std::cout << p.context << ',' << p.prefill_x << ',' << p.decode_x << ',' << p.a.chunk << ','
              << p.a.batch << ',' << p.b.chunk << ',' << p.b.batch << '\n';
  const double kv_a = static_cast<double>(perf::full_kv_bytes_per_token(a));
  const double kv_b = static_cast<double>(perf::full_kv_bytes_per_token(b));
  if (kv_a > 0.0) std::cout << "full_kv_read_ratio: " << kv_b / kv_a << '\n';
}

void pipeline_cmd(const io::RunConfig& run, RunManifest& m) {
  Stopwatch total;
  const auto teacher = do_teacher(run, m);
  const auto net = do_supernet(run, teacher, m);
  do_heatmap(net, run.tasks, run.search.search_eval, m);

  PlacementArgs pa;
  pa.k = run.search.k;
  pa.beam = run.search.beam;
  pa.objective = run.search.objective;
  pa.task = run.tasks[io::find_task(run.tasks, run.search.placement_task)];
  pa.eval = run.search.search_eval;
  pa.swa_count = run.search.swa_count;
  pa.swa_window = run.search.swa_window;
  if (pa.swa_count > 0) pa.swa_task = run.tasks[io::find_task(run.tasks, run.search.swa_task)];
  const auto placement = do_placement(net, pa, m);

  // Held-out comparison against evenly spaced attention layers.
  const auto uniform = search::uniform_placement(teacher.config.n_blocks, run.search.k);
  const auto searched_scores =
      model::evaluate(net.params, run.tasks, run.search.eval,
                      search::subnet_layers(net, placement.full));
  const auto uniform_scores = model::evaluate(net.params, run.tasks, run.search.eval,
                                              search::subnet_layers(net, uniform));

  const auto selection = do_select(run, teacher, placement, run.search.kinds, m);

  model::LayerSpec jet;
  jet.mixer = model::MixerKind::Jet;
  const auto hybrid = search::hybrid_config(teacher.config, placement, jet);
  const auto grid = do_grid(run.search.grid_state_entries, run.search.grid_ranges, hybrid, m);
  if (grid.empty()) fail(ErrorKind::Config, "search.grid_ranges admit no row");
  const auto reference = run.search.hw_reference.value_or(hybrid);
  const auto hw = do_hw(run, teacher, placement, grid, reference, m);
  const auto& chosen = hw.chosen >= 0 ? hw.rows[static_cast<std::size_t>(hw.chosen)].row
                                      : grid.front();

  auto final_config = search::with_linear_shape(hybrid, chosen);
  final_config.name = "hybrid";
  log("final stage 1 distillation: " + std::to_string(run.distill.steps) + " steps");
  auto student = model::distill_stage1(teacher, final_config, run.tasks, run.distill);
  if (model::frozen_hash(student.params) != model::frozen_hash(teacher))
    fail(ErrorKind::State, "stage 1 changed frozen parameters");
  const auto stage1_scores = model::evaluate(student.params, run.tasks, run.search.eval);
  log("final stage 2: " + std::to_string(run.stage2.steps) + " steps");
  auto final_model = model::train_stage2(std::move(student.params), run.tasks, run.stage2);
  const auto final_scores = model::evaluate(final_model.params, run.tasks, run.search.eval);
  log("final:" + scores_line(final_scores));
  io::save_checkpoint(m.dir() / "final.ckpt", final_model.params, {{"role", "hybrid"}});
  m.add(m.dir() / "final.ckpt");
  emit(m, "final_config.json", io::to_json(final_config).dump(2) + "\n");

  const auto teacher_cache = perf::cache_bytes(teacher.config, run.search.hw_context);
  const auto final_cache = perf::cache_bytes(final_config, run.search.hw_context);
  emit_stream(m, "cache_report.csv",
              [&](std::ostream& o) { perf::write_cache_csv(o, final_cache); });

  Json r;
  r["teacher_scores"] = scores_json(model::evaluate(teacher, run.tasks, run.search.eval));
  r["placement"] = io::to_json(placement);
  r["searched_subnet_scores"] = scores_json(searched_scores);
  r["uniform_placement"] = uniform;
  r["uniform_subnet_scores"] = scores_json(uniform_scores);
  Json sel = Json::array();
  for (const auto& row : selection.rows)
    sel.push_back({{"block", row.block}, {"scores", scores_json(row.scores)}});
  r["block_selection"] = sel;
  r["chosen_shape"] = {{"d_k", chosen.d_k}, {"d_v", chosen.d_v}, {"n_head", chosen.n_head}};
  r["stage1_scores"] = scores_json(stage1_scores);
  r["final_scores"] = scores_json(final_scores);
  r["cache_bytes"] = {{"context", run.search.hw_context},
                      {"teacher", teacher_cache.total},
                      {"hybrid", final_cache.total}};
  r["parameters"] = {{"teacher", teacher.parameter_count()},
                     {"hybrid", final_model.params.parameter_count()}};
  r["seconds"] = total.seconds();
  emit(m, "report.json", r.dump(2) + "\n");
  log("pipeline done in " + std::to_string(static_cast<int>(total.seconds())) + " s");
}

}  // namespace postnas::cli
