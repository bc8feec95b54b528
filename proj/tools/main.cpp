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

#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "commands.hpp"
#include "postnas/core/diagnostics.hpp"
#include "postnas/core/error.hpp"

namespace {

using namespace postnas;
namespace fs = std::filesystem;

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

// 65536, 64K or 1M (binary multiples).
std::int64_t parse_context(const std::string& s) {
  std::size_t pos = 0;
  long long v = 0;
  try {
    v = std::stoll(s, &pos);
  } catch (const std::exception&) {
    fail(ErrorKind::Usage, "bad context length '" + s + "'");
  }
  const std::string suffix = s.substr(pos);
  if (suffix == "K" || suffix == "k")
    v *= 1024;
  else if (suffix == "M" || suffix == "m")
    v *= 1024 * 1024;
  else if (!suffix.empty())
    fail(ErrorKind::Usage, "bad context length '" + s + "'");
  if (v < 0) fail(ErrorKind::Usage, "context length must be >= 0");
  return v;
}

struct Common {
  std::string config;
  std::string out = "out";
};

io::RunConfig load_run(const std::string& path) {
  if (path.empty()) fail(ErrorKind::Usage, "--config is required");
  return io::load_run_config(path);
}

std::string hash_of(const std::string& path) {
  return path.empty() ? std::string("none") : cli::config_hash(io::read_json_file(path));
}

// Task list from a JSON file or comma-separated names; names resolve
// against the run config's tasks when one is given.
std::vector<tasks::TaskSpec> resolve_tasks(const std::string& spec, const io::RunConfig* run) {
  if (spec.size() > 5 && spec.substr(spec.size() - 5) == ".json")
    return io::tasks_from_json(io::read_json_file(spec), spec);
  std::vector<tasks::TaskSpec> out;
  for (const auto& name : split(spec)) {
    if (run) {
      out.push_back(run->tasks[io::find_task(run->tasks, name)]);
    } else {
      tasks::TaskSpec t;
      t.kind = tasks::parse_task(name);
      out.push_back(t);
    }
  }
  if (out.empty()) fail(ErrorKind::Usage, "no tasks given");
  return out;
}

int run(int argc, char** argv) {
  CLI::App app{"Post-training hybrid architecture search on synthetic tasks"};
  app.require_subcommand(1);
  bool quiet_warnings = false;
  app.add_flag("--quiet-warnings", quiet_warnings, "Do not echo warnings to stderr");

  Common c;
  auto add_common = [&](CLI::App* s, bool config_required) {
    auto* o = s->add_option("--config", c.config, "Run config (JSON)");
    if (config_required) o->required()->check(CLI::ExistingFile);
    s->add_option("--out", c.out, "Output directory")->capture_default_str();
  };

  auto* teacher_cmd = app.add_subcommand("train-teacher", "Train the full-attention teacher");
  add_common(teacher_cmd, true);

  std::string teacher, supernet, placement_file, tasks_spec = "recall,multichoice";
  auto* supernet_cmd = app.add_subcommand("supernet", "Train the weight-shared supernet");
  add_common(supernet_cmd, true);
  supernet_cmd->add_option("--teacher", teacher, "Teacher checkpoint")->required();

  int eval_items = 0;
  auto* heatmap_cmd = app.add_subcommand("heatmap", "Per-layer importance heatmap");
  add_common(heatmap_cmd, false);
  heatmap_cmd->add_option("--supernet", supernet, "Supernet checkpoint")->required();
  heatmap_cmd->add_option("--tasks", tasks_spec, "Task names (comma-separated) or JSON file")
      ->capture_default_str();
  heatmap_cmd->add_option("--eval-items", eval_items, "Evaluation items per task");

  int k = 2, beam = 4, swa_count = 0, swa_window = 0;
  std::string objective = "accuracy", task_name = "recall", swa_task = "multichoice";
  auto* place_cmd = app.add_subcommand("search-placement", "Beam search for attention layers");
  add_common(place_cmd, false);
  place_cmd->add_option("--supernet", supernet, "Supernet checkpoint")->required();
  place_cmd->add_option("--k", k, "Number of full-attention layers")->capture_default_str();
  place_cmd->add_option("--beam", beam, "Beam width")->capture_default_str();
  place_cmd->add_option("--objective", objective, "accuracy or neg-loss")
      ->check(CLI::IsMember({"accuracy", "neg-loss"}))
      ->capture_default_str();
  place_cmd->add_option("--task", task_name, "Task that scores placements")->capture_default_str();
  place_cmd->add_option("--swa-count", swa_count, "Sliding-window layers to place afterwards");
  place_cmd->add_option("--swa-window", swa_window, "Sliding-window size");
  place_cmd->add_option("--swa-task", swa_task, "Task that scores sliding-window layers")
      ->capture_default_str();
  place_cmd->add_option("--eval-items", eval_items, "Evaluation items per score");

  std::string kinds = "gla,jet";
  auto* select_cmd = app.add_subcommand("select-block", "Compare linear blocks at a placement");
  add_common(select_cmd, true);
  select_cmd->add_option("--placement", placement_file, "placement.json")->required();
  select_cmd->add_option("--kinds", kinds, "Comma-separated block names")->capture_default_str();
  select_cmd->add_option("--teacher", teacher, "Teacher checkpoint")->required();

  std::int64_t state_entries = 0;
  std::string ranges;
  auto* grid_cmd = app.add_subcommand("grid", "Linear block shapes at a fixed state size");
  add_common(grid_cmd, false);
  grid_cmd->add_option("--state-entries", state_entries, "n_head * d_k * d_v")->required();
  grid_cmd->add_option("--ranges", ranges, "Ranges JSON file")->required();
  std::string model_path;
  grid_cmd->add_option("--model", model_path, "Model config used for parameter counts");

  std::string grid_file, hardware, reference, context_s;
  double tolerance = -1.0;
  auto* hw_cmd = app.add_subcommand("hw-search", "Hardware-aware pick over a grid");
  add_common(hw_cmd, true);
  hw_cmd->add_option("--grid", grid_file, "grid_table.csv")->required();
  hw_cmd->add_option("--hardware", hardware, "Hardware JSON")->required();
  hw_cmd->add_option("--teacher", teacher, "Teacher checkpoint")->required();
  hw_cmd->add_option("--placement", placement_file, "placement.json")->required();
  hw_cmd->add_option("--reference", reference, "Model whose throughput is ranked");
  hw_cmd->add_option("--context", context_s, "Reference context length");
  hw_cmd->add_option("--tolerance", tolerance, "Allowed throughput loss vs the baseline");

  std::string csv;
  auto* cache_cmd = app.add_subcommand("estimate-cache", "Cache bytes per sequence");
  cache_cmd->add_option("--config", model_path, "Model config JSON")->required();
  cache_cmd->add_option("--context", context_s, "Context length")->required();
  cache_cmd->add_option("--csv", csv, "Also write cache_report.csv here");

  std::string config_a, config_b, contexts = "4K,16K,64K,256K,1M";
  auto* tp_cmd = app.add_subcommand("estimate-throughput", "Prefill and decode speedups");
  tp_cmd->add_option("--config-a", config_a, "Model config")->required();
  tp_cmd->add_option("--config-b", config_b, "Baseline model config")->required();
  tp_cmd->add_option("--hardware", hardware, "Hardware JSON")->required();
  tp_cmd->add_option("--contexts", contexts, "Comma-separated context lengths")
      ->capture_default_str();
  tp_cmd->add_option("--out", c.out, "Output directory")->capture_default_str();

  auto* pipe_cmd = app.add_subcommand("pipeline", "Run every stage in order");
  add_common(pipe_cmd, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : exit_code(ErrorKind::Usage);
  }
  set_warning_echo(!quiet_warnings);

  auto* sub = app.get_subcommands().front();
  const std::string name = sub->get_name();

  if (name == "estimate-cache") {
    cli::estimate_cache_cmd(io::load_model_config(model_path), parse_context(context_s), csv);
    return 0;
  }

  std::optional<io::RunConfig> runcfg;
  if (!c.config.empty()) runcfg = load_run(c.config);
  cli::RunManifest manifest(c.out, name, hash_of(name == "estimate-throughput" ? "" : c.config),
                            runcfg ? runcfg->seed : 0);
  try {
    if (name == "train-teacher") {
      cli::train_teacher_cmd(*runcfg, manifest);
    } else if (name == "supernet") {
      cli::supernet_cmd(*runcfg, teacher, manifest);
    } else if (name == "heatmap") {
      model::EvalConfig ev = runcfg ? runcfg->search.search_eval : model::EvalConfig{};
      if (eval_items > 0) ev.items = eval_items;
      cli::heatmap_cmd(supernet, resolve_tasks(tasks_spec, runcfg ? &*runcfg : nullptr), ev,
                       manifest);
    } else if (name == "search-placement") {
      cli::PlacementArgs a;
      a.k = k;
      a.beam = beam;
      a.objective = search::parse_objective(objective);
      const auto* r = runcfg ? &*runcfg : nullptr;
      a.task = resolve_tasks(task_name, r).front();
      a.eval = r ? r->search.search_eval : model::EvalConfig{};
      if (eval_items > 0) a.eval.items = eval_items;
      a.swa_count = swa_count;
      a.swa_window = swa_window;
      if (swa_count > 0) a.swa_task = resolve_tasks(swa_task, r).front();
      cli::search_placement_cmd(supernet, a, manifest);
    } else if (name == "select-block") {
      std::vector<model::LayerSpec> ks;
      for (const auto& s : split(kinds)) ks.push_back(search::parse_block(s));
      cli::select_block_cmd(*runcfg, teacher, io::load_placement(placement_file), ks, manifest);
    } else if (name == "grid") {
      const auto base = model_path.empty() ? model::desk_config() : io::load_model_config(model_path);
      cli::grid_cmd(state_entries, io::load_ranges(ranges), base, manifest);
    } else if (name == "hw-search") {
      auto run = *runcfg;
      run.hardware = io::load_hardware(hardware);
      if (!context_s.empty()) run.search.hw_context = parse_context(context_s);
      if (tolerance >= 0.0) run.search.hw_tolerance = tolerance;
      const auto ck = io::load_checkpoint(teacher);
      const auto p = io::load_placement(placement_file);
      model::LayerSpec jet;
      jet.mixer = model::MixerKind::Jet;
      const auto ref = !reference.empty() ? io::load_model_config(reference)
                       : run.search.hw_reference ? *run.search.hw_reference
                                                 : search::hybrid_config(ck.params.config, p, jet);
      cli::hw_search_cmd(run, ck.params, p, cli::read_grid_csv(grid_file), ref, manifest);
    } else if (name == "estimate-throughput") {
      std::vector<std::int64_t> ctx;
      for (const auto& s : split(contexts)) ctx.push_back(parse_context(s));
      cli::estimate_throughput_cmd(io::load_model_config(config_a),
                                   io::load_model_config(config_b), io::load_hardware(hardware),
                                   ctx, manifest);
    } else if (name == "pipeline") {
      cli::pipeline_cmd(*runcfg, manifest);
    }
  } catch (const Error& e) {
    manifest.finish(false, e.what());
    throw;
  }
  manifest.finish(true);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const postnas::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return postnas::exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
