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

// JSON readers and writers for configs, fixtures and run settings. Files may
// contain // and /* */ comments. Readers are strict: unknown keys are
// rejected with the full list, and every error names the JSON path.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "postnas/search/grid.hpp"

namespace postnas::io {

using Json = nlohmann::ordered_json;

Json read_json_file(const std::filesystem::path& path);
std::string read_text_file(const std::filesystem::path& path);
// Creates parent directories.
void write_text_file(const std::filesystem::path& path, const std::string& text);

// Model schema:
//   name?, vocab_size, d_model, n_blocks, mlp_intermediate, tie_embeddings?,
//   dtype_width?,
//   attention {n_q_heads, n_kv_heads, head_dim, rope_base?, max_positions?},
//   linear? {n_head, d_k, d_v, short_conv?, conv_size?, kernel_size?,
//            gen_hidden?, tap_norm?},
//   layers?: a list of {mixer, window?, kind?}, or
//            {default: {mixer, ...}, full: [..], swa: [..], window}
//   Without layers every block is full attention.
Json to_json(const model::ModelConfig& config);
model::ModelConfig model_from_json(const Json& j, const std::string& where = "model");
model::ModelConfig load_model_config(const std::filesystem::path& path);

Json to_json(const tasks::TaskSpec& spec);
tasks::TaskSpec task_from_json(const Json& j, const std::string& where = "task");
// A list of task objects or task names.
std::vector<tasks::TaskSpec> tasks_from_json(const Json& j, const std::string& where);

Json to_json(const perf::HardwareSpec& hw);
perf::HardwareSpec hardware_from_json(const Json& j, const std::string& where = "hardware");
perf::HardwareSpec load_hardware(const std::filesystem::path& path);

Json to_json(const model::TrainConfig& train);
model::TrainConfig train_from_json(const Json& j, const std::string& where);

Json to_json(const search::GridRange& range);
// {"ranges": [...]} or a bare list.
std::vector<search::GridRange> ranges_from_json(const Json& j, const std::string& where);
std::vector<search::GridRange> load_ranges(const std::filesystem::path& path);

Json to_json(const search::Placement& placement);
search::Placement placement_from_json(const Json& j, const std::string& where = "placement");
search::Placement load_placement(const std::filesystem::path& path);

struct SearchSettings {
  int k = 0;
  int beam = 0;
  search::Objective objective = search::Objective::Accuracy;
  std::string placement_task;  // label of one of the run's tasks
  int swa_count = 0;
  int swa_window = 0;
  std::string swa_task;
  model::EvalConfig search_eval;  // placement scoring
  model::EvalConfig eval;         // reports
  std::vector<model::LayerSpec> kinds;
  std::int64_t grid_state_entries = 0;
  std::vector<search::GridRange> grid_ranges;
  // Architecture whose linear shape the grid varies; empty means the
  // run's own hybrid ("hybrid" in the file).
  std::optional<model::ModelConfig> hw_reference;
  std::int64_t hw_context = 65536;
  double hw_tolerance = 0.05;
};

// Sections: model, tasks, teacher, supernet, distill, stage2, search,
// hardware, seed. k, beam, objective, placement_task, kinds,
// grid_state_entries, grid_ranges and hw_reference are required. Strings
// in place of objects for hardware, grid_ranges and hw_reference are file
// paths relative to the config file.
struct RunConfig {
  model::ModelConfig model;
  std::vector<tasks::TaskSpec> tasks;
  model::TrainConfig teacher;
  search::SupernetConfig supernet;
  model::TrainConfig distill;
  model::TrainConfig stage2;
  SearchSettings search;
  perf::HardwareSpec hardware;
  std::uint64_t seed = 0;
};

RunConfig run_from_json(const Json& j, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);

// Index of the task with this label; throws Config when absent.
std::size_t find_task(const std::vector<tasks::TaskSpec>& tasks, const std::string& label);

}  // namespace postnas::io
