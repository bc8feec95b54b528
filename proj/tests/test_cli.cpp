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

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include <sys/wait.h>
#include <unistd.h>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

const std::string kCli = POSTNAS_CLI;
const fs::path kFixtures = POSTNAS_FIXTURE_DIR;

struct Result {
  int code = -1;
  std::string output;
};

Result run(const std::string& args) {
  const std::string cmd = "'" + kCli + "' --quiet-warnings " + args + " 2>&1";
  Result r;
  FILE* p = ::popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  char buf[4096];
  std::size_t n = 0;
  while ((n = std::fread(buf, 1, sizeof buf, p)) > 0) r.output.append(buf, n);
  const int status = ::pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string fixture(const std::string& name) { return (kFixtures / (name + ".json")).string(); }

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("postnas_cli_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

nlohmann::json read_json(const fs::path& p) {
  std::ifstream in(p);
  return nlohmann::json::parse(in);
}

}  // namespace

TEST_CASE("estimate-cache prints exact byte totals") {
  const auto r = run("estimate-cache --config " + fixture("qwen3_17b_like") + " --context 65536");
  CHECK(r.code == 0);
  CHECK(r.output.find("total: 7516192768 bytes (7168 MiB)") != std::string::npos);
  const auto k = run("estimate-cache --config " + fixture("qwen25_15b_like") + " --context 64K");
  CHECK(k.output.find("(1792 MiB)") != std::string::npos);
  const auto s = run("estimate-cache --config " + fixture("smollm2_like") + " --context 64K");
  CHECK(s.output.find("(12288 MiB)") != std::string::npos);
}

TEST_CASE("estimate-cache writes a per-layer csv") {
  TempDir tmp("cache");
  const auto csv = tmp.path / "cache_report.csv";
  const auto r = run("estimate-cache --config " + fixture("jet2b_like") + " --context 64K --csv " +
                     csv.string());
  REQUIRE(r.code == 0);
  std::ifstream in(csv);
  std::string line;
  int rows = 0;
  std::getline(in, line);
  CHECK(line == "layer,kind,bytes");
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 29);
}

TEST_CASE("grid emits the nine reference shapes and a manifest") {
  TempDir tmp("grid");
  const auto r = run("grid --state-entries 294912 --ranges " +
                     (kFixtures / "grid_ranges_2b.json").string() + " --model " +
                     fixture("jet2b_like") + " --out " + tmp.path.string());
  REQUIRE(r.code == 0);
  CHECK(r.output.find("rows: 9") != std::string::npos);
  std::ifstream in(tmp.path / "grid_table.csv");
  std::string line;
  std::getline(in, line);
  CHECK(line == "d_k,d_v,n_head,params,state_entries,state_bytes");
  int rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    CHECK(line.find(",294912,") != std::string::npos);
  }
  CHECK(rows == 9);
  const auto m = read_json(tmp.path / "manifest.json");
  CHECK(m.at("command") == "grid");
  CHECK(m.at("status") == "ok");
  CHECK(m.at("outputs").at(0) == "grid_table.csv");
  for (const char* key : {"config_hash", "seed", "revision", "started", "finished"})
    CHECK(m.contains(key));
}

TEST_CASE("estimate-throughput writes the speedup curve") {
  TempDir tmp("tp");
  const auto r = run("estimate-throughput --config-a " + fixture("jet2b_like") + " --config-b " +
                     fixture("qwen3_17b_like") + " --hardware " + fixture("large_memory_like") +
                     " --contexts 4K,64K,1M --out " + tmp.path.string());
  REQUIRE(r.code == 0);
  CHECK(r.output.find("full_kv_read_ratio: 56") != std::string::npos);
  std::ifstream in(tmp.path / "speedup.csv");
  std::string line;
  std::getline(in, line);
  CHECK(line == "context,prefill_x,decode_x");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 3);
}

TEST_CASE("exit codes follow the error kind") {
  CHECK(run("").code == 2);
  CHECK(run("no-such-command").code == 2);
  CHECK(run("estimate-cache --config " + fixture("qwen3_17b_like")).code == 2);
  CHECK(run("estimate-cache --config " + fixture("qwen3_17b_like") + " --context 12Q").code == 2);
  CHECK(run("estimate-cache --config /nonexistent/model.json --context 1").code == 3);

  TempDir tmp("codes");
  fs::create_directories(tmp.path);
  const auto bad = tmp.path / "bad.json";
  std::ofstream(bad) << R"({"vocab_size": 8, "d_model": 8, "n_blocks": 1,
    "mlp_intermediate": 8, "attention": {"n_q_heads": 1, "n_kv_heads": 1, "head_dim": 8},
    "colour": "red"})";
  const auto r = run("estimate-cache --config " + bad.string() + " --context 1");
  CHECK(r.code == 2);
  CHECK(r.output.find("colour") != std::string::npos);

  auto tiny = nlohmann::json::parse(std::ifstream(fixture("h100_like")), nullptr, true, true);
  tiny["memory_bytes"] = 1e9;
  const auto hw = tmp.path / "tiny_hw.json";
  std::ofstream(hw) << tiny.dump();
  const auto out = tmp.path / "run";
  const auto cap = run("estimate-throughput --config-a " + fixture("jet2b_like") + " --config-b " +
                       fixture("qwen3_17b_like") + " --hardware " + hw.string() +
                       " --contexts 64K --out " + out.string());
  CHECK(cap.code == 5);
  const auto m = read_json(out / "manifest.json");
  CHECK(m.at("status") == "failed");
  CHECK(!m.at("error").get<std::string>().empty());
}
