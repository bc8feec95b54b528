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

// Subcommand implementations behind the postnas command line. Each command
// writes its artifacts under `out` and lists them in out/manifest.json.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "postnas/io/checkpoint.hpp"
#include "postnas/io/config_io.hpp"

namespace postnas::cli {

namespace fs = std::filesystem;

// manifest.json: written when a command starts (status "running") and
// rewritten when it ends with every output path.
class RunManifest {
 public:
  RunManifest(fs::path out_dir, std::string command, std::string config_hash,
              std::uint64_t seed);
  void add(const fs::path& output);
  void finish(bool ok, const std::string& error = {});
  const fs::path& dir() const { return dir_; }

 private:
  void write() const;

  fs::path dir_;
  std::string command_, config_hash_, started_, finished_, status_ = "running", error_;
  std::uint64_t seed_ = 0;
  std::vector<std::string> outputs_;
};

// FNV-1a of the canonical JSON dump, as 16 hex digits.
std::string config_hash(const io::Json& j);

void train_teacher_cmd(const io::RunConfig& run, RunManifest& m);
void supernet_cmd(const io::RunConfig& run, const fs::path& teacher, RunManifest& m);
void heatmap_cmd(const fs::path& supernet, const std::vector<tasks::TaskSpec>& tasks,
                 const model::EvalConfig& eval, RunManifest& m);

struct PlacementArgs {
  int k = 2;
  int beam = 4;
  search::Objective objective = search::Objective::Accuracy;
  tasks::TaskSpec task;
  model::EvalConfig eval;
  int swa_count = 0;
  int swa_window = 0;
  tasks::TaskSpec swa_task;
};
search::Placement search_placement_cmd(const fs::path& supernet, const PlacementArgs& args,
                                       RunManifest& m);

void select_block_cmd(const io::RunConfig& run, const fs::path& teacher,
                      const search::Placement& placement,
                      const std::vector<model::LayerSpec>& kinds, RunManifest& m);

std::vector<search::GridRow> grid_cmd(std::int64_t state_entries,
                                      const std::vector<search::GridRange>& ranges,
                                      const model::ModelConfig& base, RunManifest& m);

// Reads a grid_table.csv written by grid_cmd.
std::vector<search::GridRow> read_grid_csv(const fs::path& path);

search::HwResult hw_search_cmd(const io::RunConfig& run, const model::ModelParams& teacher,
                               const search::Placement& placement,
                               const std::vector<search::GridRow>& grid,
                               const model::ModelConfig& reference, RunManifest& m);

void estimate_cache_cmd(const model::ModelConfig& config, std::int64_t context,
                        const fs::path& csv);

void estimate_throughput_cmd(const model::ModelConfig& a, const model::ModelConfig& b,
                             const perf::HardwareSpec& hw,
                             const std::vector<std::int64_t>& contexts, RunManifest& m);

void pipeline_cmd(const io::RunConfig& run, RunManifest& m);

}  // namespace postnas::cli
