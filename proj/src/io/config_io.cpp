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

#include "postnas/io/config_io.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "postnas/core/error.hpp"

namespace postnas::io {

namespace fs = std::filesystem;
using model::LayerSpec;
using model::MixerKind;

Json read_json_file(const fs::path& path) {
  const std::string text = read_text_file(path);
  try {
    return Json::parse(text, nullptr, true, true);
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorKind::Config, path.string() + ": " + e.what());
  }
}

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) fail(ErrorKind::Io, "cannot create " + path.parent_path().string());
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out << text;
  if (!out) fail(ErrorKind::Io, "write failed: " + path.string());
}

namespace {

// Reads the keys of one JSON object and rejects whatever it did not read.
class Obj {
 public:
  Obj(const Json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j.is_object()) fail(ErrorKind::Config, where_ + ": expected an object");
  }

  bool has(const char* key) const { return j_.contains(key); }

  const Json& at(const char* key) {
    seen_.insert(key);
    if (!j_.contains(key)) fail(ErrorKind::Config, path(key) + ": required key is missing");
    return j_.at(key);
  }

  template <class T>
  T get(const char* key) {
    return convert<T>(at(key), path(key));
  }

  template <class T>
  T get(const char* key, T fallback) {
    seen_.insert(key);
    if (!j_.contains(key)) return fallback;
    return convert<T>(j_.at(key), path(key));
  }

  std::string path(const char* key) const { return where_ + "." + key; }

  void done() const {
    std::string unknown;
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) unknown += (unknown.empty() ? "" : ", ") + it.key();
    if (!unknown.empty()) fail(ErrorKind::Config, where_ + ": unknown keys: " + unknown);
  }

  template <class T>
  static T convert(const Json& v, const std::string& where) {
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) fail(ErrorKind::Config, where + ": expected a boolean");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) fail(ErrorKind::Config, where + ": expected an integer");
        if constexpr (std::is_unsigned_v<T>)
          if (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0)
            fail(ErrorKind::Config, where + ": expected a non-negative integer");
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) fail(ErrorKind::Config, where + ": expected a number");
      }
      return v.get<T>();
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::Config, where + ": " + e.what());
    }
  }

 private:
  const Json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

std::vector<int> int_list(const Json& j, const std::string& where) {
  if (!j.is_array()) fail(ErrorKind::Config, where + ": expected a list of integers");
  std::vector<int> out;
  for (std::size_t i = 0; i < j.size(); ++i)
    out.push_back(Obj::convert<int>(j[i], where + "[" + std::to_string(i) + "]"));
  return out;
}

template <class F>
auto wrap(const std::string& where, F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Config || e.kind() == ErrorKind::Io) throw;
    fail(ErrorKind::Config, where + ": " + e.what());
  }
}

LayerSpec layer_from_json(const Json& j, const std::string& where) {
  Obj o(j, where);
  LayerSpec l;
  l.mixer = wrap(o.path("mixer"), [&] { return model::parse_mixer(o.get<std::string>("mixer")); });
  l.window = o.get<int>("window", 0);
  if (o.has("kind"))
    l.kind = wrap(o.path("kind"), [&] { return blocks::parse_kind(o.get<std::string>("kind")); });
  else
    o.get<std::string>("kind", "");
  o.done();
  return l;
}

Json layer_to_json(const LayerSpec& l) {
  Json j;
  j["mixer"] = std::string(model::mixer_name(l.mixer));
  if (l.mixer == MixerKind::SlidingWindow) j["window"] = l.window;
  if (l.mixer == MixerKind::Linear) j["kind"] = std::string(blocks::kind_name(l.kind));
  return j;
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

}  // namespace

Json to_json(const model::ModelConfig& c) {
  Json j;
  j["name"] = c.name;
  j["vocab_size"] = c.vocab_size;
  j["d_model"] = c.d_model;
  j["n_blocks"] = c.n_blocks;
  j["mlp_intermediate"] = c.mlp_intermediate;
  j["tie_embeddings"] = c.tie_embeddings;
  j["dtype_width"] = c.dtype_width;
  j["attention"] = {{"n_q_heads", c.attention.n_q_heads},
                    {"n_kv_heads", c.attention.n_kv_heads},
                    {"head_dim", c.attention.head_dim},
                    {"rope_base", c.attention.rope_base},
                    {"max_positions", c.attention.max_positions}};
  j["linear"] = {{"n_head", c.linear.n_head},
                 {"d_k", c.linear.d_k},
                 {"d_v", c.linear.d_v},
                 {"short_conv", c.linear.short_conv},
                 {"conv_size", c.linear.conv_size},
                 {"kernel_size", c.linear.kernel_size},
                 {"gen_hidden", c.linear.gen_hidden},
                 {"tap_norm", std::string(blocks::tap_norm_name(c.linear.tap_norm))}};
  j["layers"] = Json::array();
  for (const auto& l : c.layers) j["layers"].push_back(layer_to_json(l));
  return j;
}

model::ModelConfig model_from_json(const Json& j, const std::string& where) {
  Obj o(j, where);
  model::ModelConfig c;
  c.name = o.get<std::string>("name", "");
  c.vocab_size = o.get<int>("vocab_size");
  c.d_model = o.get<int>("d_model");
  c.n_blocks = o.get<int>("n_blocks");
  c.mlp_intermediate = o.get<int>("mlp_intermediate");
  c.tie_embeddings = o.get<bool>("tie_embeddings", false);
  c.dtype_width = o.get<int>("dtype_width", 2);
  {
    Obj a(o.at("attention"), o.path("attention"));
    c.attention.n_q_heads = a.get<int>("n_q_heads");
    c.attention.n_kv_heads = a.get<int>("n_kv_heads");
    c.attention.head_dim = a.get<int>("head_dim");
    c.attention.rope_base = a.get<float>("rope_base", c.attention.rope_base);
    c.attention.max_positions = a.get<int>("max_positions", c.attention.max_positions);
    a.done();
  }
  if (o.has("linear")) {
    Obj l(o.at("linear"), o.path("linear"));
    c.linear.n_head = l.get<int>("n_head");
    c.linear.d_k = l.get<int>("d_k");
    c.linear.d_v = l.get<int>("d_v");
    c.linear.short_conv = l.get<bool>("short_conv", c.linear.short_conv);
    c.linear.conv_size = l.get<int>("conv_size", c.linear.conv_size);
    c.linear.kernel_size = l.get<int>("kernel_size", c.linear.kernel_size);
    c.linear.gen_hidden = l.get<int>("gen_hidden", c.linear.gen_hidden);
    if (l.has("tap_norm"))
      c.linear.tap_norm = wrap(l.path("tap_norm"), [&] {
        return blocks::parse_tap_norm(l.get<std::string>("tap_norm"));
      });
    l.done();
  }
  LayerSpec full;
  c.layers.assign(static_cast<std::size_t>(std::max(c.n_blocks, 0)), full);
  if (o.has("layers")) {
    const Json& lj = o.at("layers");
    const std::string lw = o.path("layers");
    if (lj.is_array()) {
      c.layers.clear();
      for (std::size_t i = 0; i < lj.size(); ++i)
        c.layers.push_back(layer_from_json(lj[i], lw + "[" + std::to_string(i) + "]"));
    } else {
      Obj p(lj, lw);
      const LayerSpec other = p.has("default") ? layer_from_json(p.at("default"), p.path("default"))
                                               : full;
      const auto f = p.has("full") ? int_list(p.at("full"), p.path("full")) : std::vector<int>{};
      const auto s = p.has("swa") ? int_list(p.at("swa"), p.path("swa")) : std::vector<int>{};
      const int window = p.get<int>("window", 0);
      p.done();
      auto base = c;
      base.layers.assign(c.layers.size(), other);
      c.layers = wrap(lw, [&] { return model::with_placement(base, f, s, window, other).layers; });
    }
  }
  o.done();
  wrap(where, [&] {
    model::validate(c);
    return 0;
  });
  return c;
}

model::ModelConfig load_model_config(const fs::path& path) {
  return model_from_json(read_json_file(path), path.filename().string());
}

Json to_json(const tasks::TaskSpec& s) {
  Json j;
  j["task"] = std::string(tasks::task_name(s.kind));
  j["vocab_size"] = s.vocab_size;
  switch (s.kind) {
    case tasks::TaskKind::Recall:
      j["n_pairs"] = s.n_pairs;
      j["n_queries"] = s.n_queries;
      break;
    case tasks::TaskKind::Multichoice:
      j["n_choices"] = s.n_choices;
      j["n_subjects"] = s.n_subjects;
      j["n_relations"] = s.n_relations;
      j["n_attributes"] = s.n_attributes;
      break;
    case tasks::TaskKind::Arithmetic:
      j["depth"] = s.depth;
      j["modulus"] = s.modulus;
      break;
    case tasks::TaskKind::Lm:
      j["seq_len"] = s.seq_len;
      j["branching"] = s.branching;
      break;
  }
  j["seed"] = s.seed;
  return j;
}

tasks::TaskSpec task_from_json(const Json& j, const std::string& where) {
  tasks::TaskSpec s;
  if (j.is_string()) {
    s.kind = wrap(where, [&] { return tasks::parse_task(j.get<std::string>()); });
    return s;
  }
  Obj o(j, where);
  s.kind = wrap(o.path("task"), [&] { return tasks::parse_task(o.get<std::string>("task")); });
  s.vocab_size = o.get<int>("vocab_size", s.vocab_size);
  s.n_pairs = o.get<int>("n_pairs", s.n_pairs);
  s.n_queries = o.get<int>("n_queries", s.n_queries);
  s.n_choices = o.get<int>("n_choices", s.n_choices);
  s.n_subjects = o.get<int>("n_subjects", s.n_subjects);
  s.n_relations = o.get<int>("n_relations", s.n_relations);
  s.n_attributes = o.get<int>("n_attributes", s.n_attributes);
  s.depth = o.get<int>("depth", s.depth);
  s.modulus = o.get<int>("modulus", s.modulus);
  s.seq_len = o.get<int>("seq_len", s.seq_len);
  s.branching = o.get<int>("branching", s.branching);
  s.seed = o.get<std::uint64_t>("seed", s.seed);
  o.done();
  wrap(where, [&] {
    tasks::validate(s);
    return 0;
  });
  return s;
}

std::vector<tasks::TaskSpec> tasks_from_json(const Json& j, const std::string& where) {
  if (!j.is_array() || j.empty())
    fail(ErrorKind::Config, where + ": expected a non-empty list of tasks");
  std::vector<tasks::TaskSpec> out;
  for (std::size_t i = 0; i < j.size(); ++i)
    out.push_back(task_from_json(j[i], where + "[" + std::to_string(i) + "]"));
  return out;
}

Json to_json(const perf::HardwareSpec& hw) {
  return Json{{"name", hw.name},
              {"memory_bytes", hw.memory_bytes},
              {"bandwidth", hw.bandwidth},
              {"compute", hw.compute}};
}

perf::HardwareSpec hardware_from_json(const Json& j, const std::string& where) {
  Obj o(j, where);
  perf::HardwareSpec hw;
  hw.name = o.get<std::string>("name", "");
  hw.memory_bytes = o.get<double>("memory_bytes");
  hw.bandwidth = o.get<double>("bandwidth");
  hw.compute = o.get<double>("compute");
  o.done();
  wrap(where, [&] {
    perf::validate(hw);
    return 0;
  });
  return hw;
}

perf::HardwareSpec load_hardware(const fs::path& path) {
  return hardware_from_json(read_json_file(path), path.filename().string());
}

Json to_json(const model::TrainConfig& t) {
  return Json{{"steps", t.steps},
              {"batch", t.batch},
              {"optimizer", t.optim.kind == OptimizerKind::Adam ? "adam" : "sgd"},
              {"lr", t.optim.lr},
              {"beta1", t.optim.beta1},
              {"beta2", t.optim.beta2},
              {"eps", t.optim.eps},
              {"weight_decay", t.optim.weight_decay},
              {"clip_norm", t.optim.clip_norm},
              {"seed", t.seed},
              {"train_items", t.train_items},
              {"kl_weight", t.kl_weight}};
}

model::TrainConfig train_from_json(const Json& j, const std::string& where) {
  Obj o(j, where);
  model::TrainConfig t;
  t.steps = o.get<int>("steps");
  t.batch = o.get<int>("batch", t.batch);
  const auto opt = o.get<std::string>("optimizer", "adam");
  if (opt == "adam")
    t.optim.kind = OptimizerKind::Adam;
  else if (opt == "sgd")
    t.optim.kind = OptimizerKind::Sgd;
  else
    fail(ErrorKind::Config, o.path("optimizer") + ": expected adam or sgd");
  t.optim.lr = o.get<float>("lr", t.optim.lr);
  t.optim.beta1 = o.get<float>("beta1", t.optim.beta1);
  t.optim.beta2 = o.get<float>("beta2", t.optim.beta2);
  t.optim.eps = o.get<float>("eps", t.optim.eps);
  t.optim.weight_decay = o.get<float>("weight_decay", t.optim.weight_decay);
  t.optim.clip_norm = o.get<float>("clip_norm", t.optim.clip_norm);
  t.seed = o.get<std::uint64_t>("seed", t.seed);
  t.train_items = o.get<std::uint64_t>("train_items", t.train_items);
  t.kl_weight = o.get<float>("kl_weight", t.kl_weight);
  o.done();
  if (t.steps < 0 || t.batch < 1 || !(t.optim.lr > 0.0f))
    fail(ErrorKind::Config, where + ": steps >= 0, batch >= 1 and lr > 0 are required");
  return t;
}

Json to_json(const search::GridRange& r) {
  return Json{{"n_head", r.n_head},     {"d_k_min", r.d_k_min},   {"d_k_max", r.d_k_max},
              {"d_k_step", r.d_k_step}, {"d_v_step", r.d_v_step}};
}

std::vector<search::GridRange> ranges_from_json(const Json& j, const std::string& where) {
  const Json* list = &j;
  std::string lw = where;
  std::optional<Obj> outer;
  if (j.is_object()) {
    outer.emplace(j, where);
    list = &outer->at("ranges");
    lw = outer->path("ranges");
    outer->done();
  }
  if (!list->is_array() || list->empty())
    fail(ErrorKind::Config, lw + ": expected a non-empty list of ranges");
  std::vector<search::GridRange> out;
  for (std::size_t i = 0; i < list->size(); ++i) {
    Obj o((*list)[i], lw + "[" + std::to_string(i) + "]");
    search::GridRange r;
    r.n_head = o.get<int>("n_head");
    r.d_k_min = o.get<int>("d_k_min");
    r.d_k_max = o.get<int>("d_k_max");
    r.d_k_step = o.get<int>("d_k_step", 1);
    r.d_v_step = o.get<int>("d_v_step", 1);
    o.done();
    out.push_back(r);
  }
  return out;
}

std::vector<search::GridRange> load_ranges(const fs::path& path) {
  return ranges_from_json(read_json_file(path), path.filename().string());
}

Json to_json(const search::Placement& p) {
  return Json{{"full", p.full},
              {"swa", p.swa},
              {"window", p.window},
              {"score", p.score},
              {"objective", std::string(search::objective_name(p.objective))}};
}

search::Placement placement_from_json(const Json& j, const std::string& where) {
  Obj o(j, where);
  search::Placement p;
  p.full = int_list(o.at("full"), o.path("full"));
  p.swa = o.has("swa") ? int_list(o.at("swa"), o.path("swa")) : std::vector<int>{};
  p.window = o.get<int>("window", 0);
  p.score = o.get<double>("score", 0.0);
  if (o.has("objective"))
    p.objective = wrap(o.path("objective"), [&] {
      return search::parse_objective(o.get<std::string>("objective"));
    });
  o.done();
  if (!p.swa.empty() && p.window < 1)
    fail(ErrorKind::Config, where + ": sliding-window layers need window >= 1");
  return p;
}

search::Placement load_placement(const fs::path& path) {
  return placement_from_json(read_json_file(path), path.filename().string());
}

std::size_t find_task(const std::vector<tasks::TaskSpec>& ts, const std::string& label) {
  for (std::size_t i = 0; i < ts.size(); ++i)
    if (tasks::task_label(ts[i]) == label) return i;
  fail(ErrorKind::Config, "task '" + label + "' is not among the configured tasks");
}

namespace {

model::EvalConfig eval_from_json(const Json& j, const std::string& where) {
  Obj o(j, where);
  model::EvalConfig e;
  e.items = o.get<int>("items");
  e.batch = o.get<int>("batch", e.batch);
  e.first = tasks::kEvalOffset + o.get<std::uint64_t>("offset", 0);
  o.done();
  if (e.items < 1 || e.batch < 1)
    fail(ErrorKind::Config, where + ": items and batch must be >= 1");
  return e;
}

}  // namespace

RunConfig run_from_json(const Json& j, const fs::path& base) {
  Obj o(j, "run");
  RunConfig r;
  r.seed = o.get<std::uint64_t>("seed");
  r.model = model_from_json(o.at("model"), "model");
  r.tasks = tasks_from_json(o.at("tasks"), "tasks");
  // Sections without their own seed derive one from the run seed.
  auto train = [&](const char* key, std::uint64_t stage) {
    auto t = train_from_json(o.at(key), key);
    if (!o.at(key).contains("seed")) t.seed = r.seed * 1000003ULL + stage;
    return t;
  };
  r.teacher = train("teacher", 1);
  r.distill = train("distill", 3);
  r.stage2 = train("stage2", 4);
  {
    Obj s(o.at("supernet"), "supernet");
    Json tj = Json::object();
    for (const char* k : {"steps", "batch", "optimizer", "lr", "beta1", "beta2", "eps",
                          "weight_decay", "clip_norm", "seed", "train_items", "kl_weight"})
      if (s.has(k)) tj[k] = s.at(k);
    r.supernet.train = train_from_json(tj, "supernet");
    if (!tj.contains("seed")) r.supernet.train.seed = r.seed * 1000003ULL + 2;
    r.supernet.linear_kind = wrap(s.path("linear_kind"), [&] {
      return blocks::parse_kind(s.get<std::string>("linear_kind", "gla"));
    });
    const auto sampling = s.get<std::string>("sampling", "uniform");
    if (sampling == "uniform")
      r.supernet.sampling = search::PathSampling::Uniform;
    else if (sampling == "constrained")
      r.supernet.sampling = search::PathSampling::Constrained;
    else
      fail(ErrorKind::Config, s.path("sampling") + ": expected uniform or constrained");
    r.supernet.full_probability = s.get<double>("full_probability", 0.5);
    r.supernet.max_full = s.get<int>("max_full", 2);
    s.done();
    if (r.supernet.full_probability < 0.0 || r.supernet.full_probability > 1.0)
      fail(ErrorKind::Config, "supernet.full_probability must lie in [0, 1]");
  }
  {
    Obj s(o.at("search"), "search");
    auto& q = r.search;
    q.k = s.get<int>("k");
    q.beam = s.get<int>("beam");
    q.objective = wrap(s.path("objective"), [&] {
      return search::parse_objective(s.get<std::string>("objective"));
    });
    q.placement_task = s.get<std::string>("placement_task");
    find_task(r.tasks, q.placement_task);
    q.swa_count = s.get<int>("swa_count", 0);
    q.swa_window = s.get<int>("swa_window", 0);
    q.swa_task = s.get<std::string>("swa_task", q.swa_count > 0 ? "multichoice" : "");
    if (q.swa_count > 0) find_task(r.tasks, q.swa_task);
    q.search_eval = s.has("search_eval") ? eval_from_json(s.at("search_eval"), s.path("search_eval"))
                                         : model::EvalConfig{};
    q.eval = s.has("eval") ? eval_from_json(s.at("eval"), s.path("eval")) : model::EvalConfig{};
    const Json& kinds = s.at("kinds");
    if (!kinds.is_array() || kinds.empty())
      fail(ErrorKind::Config, s.path("kinds") + ": expected a non-empty list");
    for (std::size_t i = 0; i < kinds.size(); ++i) {
      const auto w = s.path("kinds") + "[" + std::to_string(i) + "]";
      q.kinds.push_back(
          wrap(w, [&] { return search::parse_block(Obj::convert<std::string>(kinds[i], w)); }));
    }
    q.grid_state_entries = s.get<std::int64_t>("grid_state_entries");
    const Json& gr = s.at("grid_ranges");
    q.grid_ranges = gr.is_string()
                        ? load_ranges(resolve(base, gr.get<std::string>()))
                        : ranges_from_json(gr, s.path("grid_ranges"));
    const Json& ref = s.at("hw_reference");
    if (ref.is_string() && ref.get<std::string>() == "hybrid")
      q.hw_reference.reset();
    else if (ref.is_string())
      q.hw_reference = load_model_config(resolve(base, ref.get<std::string>()));
    else
      q.hw_reference = model_from_json(ref, s.path("hw_reference"));
    q.hw_context = s.get<std::int64_t>("hw_context", q.hw_context);
    q.hw_tolerance = s.get<double>("hw_tolerance", q.hw_tolerance);
    s.done();
    if (q.k < 0 || q.k > r.model.n_blocks)
      fail(ErrorKind::Config, "search.k must lie in [0, model.n_blocks]");
    if (q.beam < 1) fail(ErrorKind::Config, "search.beam must be >= 1");
    if (q.swa_count < 0 || q.k + q.swa_count > r.model.n_blocks)
      fail(ErrorKind::Config, "search.k + search.swa_count exceeds model.n_blocks");
    if (q.swa_count > 0 && q.swa_window < 1)
      fail(ErrorKind::Config, "search.swa_window must be >= 1 when swa_count > 0");
  }
  const Json& hw = o.at("hardware");
  r.hardware = hw.is_string() ? load_hardware(resolve(base, hw.get<std::string>()))
                              : hardware_from_json(hw, "hardware");
  o.done();
  for (const auto& l : r.model.layers)
    if (l.mixer != MixerKind::Full)
      fail(ErrorKind::Config, "model: the teacher must use full attention in every block");
  for (const auto& t : r.tasks)
    if (t.vocab_size > r.model.vocab_size)
      fail(ErrorKind::Config, "tasks: vocab_size " + std::to_string(t.vocab_size) +
                                  " exceeds model.vocab_size");
  return r;
}

RunConfig load_run_config(const fs::path& path) {
  return run_from_json(read_json_file(path), path.parent_path());
}

}  // namespace postnas::io
