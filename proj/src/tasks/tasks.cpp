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

#include "postnas/tasks/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include <json.hpp>

#include "postnas/core/error.hpp"
#include "postnas/core/rng.hpp"

namespace postnas::tasks {
namespace {

int content_count(const TaskSpec& s) { return s.vocab_size - kFirstContent; }

void need(bool ok, const std::string& msg) {
  if (!ok) fail(ErrorKind::Config, msg);
}

// k distinct values from [0, n).
std::vector<int> distinct(Rng& rng, int n, int k) {
  std::vector<int> pool(static_cast<std::size_t>(n));
  std::iota(pool.begin(), pool.end(), 0);
  for (int i = 0; i < k; ++i) {
    const int j = i + static_cast<int>(rng.below(static_cast<std::uint64_t>(n - i)));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(static_cast<std::size_t>(k));
  return pool;
}

Item make_recall(const TaskSpec& s, Rng& rng) {
  const int half = content_count(s) / 2;
  Item it;
  it.tokens.push_back(kBos);
  auto keys = distinct(rng, half, s.n_pairs);
  std::vector<int> values;
  for (int i = 0; i < s.n_pairs; ++i) {
    values.push_back(kFirstContent + half + static_cast<int>(rng.below(half)));
    it.tokens.push_back(kFirstContent + keys[i]);
    it.tokens.push_back(values.back());
  }
  const auto queries = distinct(rng, s.n_pairs, s.n_queries);
  for (int q : queries) {
    it.tokens.push_back(kQuery);
    it.tokens.push_back(kFirstContent + keys[q]);
    it.answer_positions.push_back(static_cast<int>(it.tokens.size()) - 1);
    it.answers.push_back(values[q]);
    it.tokens.push_back(values[q]);
  }
  return it;
}

int attribute_base(const TaskSpec& s) {
  return kFirstContent + s.n_subjects + s.n_relations;
}

Item make_multichoice(const TaskSpec& s, Rng& rng) {
  const int subj = static_cast<int>(rng.below(s.n_subjects));
  const int rel = static_cast<int>(rng.below(s.n_relations));
  const int answer = fact_attribute(s, subj, rel);
  Item it;
  it.correct = static_cast<int>(rng.below(s.n_choices));
  // Distractors: distinct attributes other than the answer.
  auto picks = distinct(rng, s.n_attributes - 1, s.n_choices - 1);
  const int answer_idx = answer - attribute_base(s);
  std::size_t next = 0;
  for (int c = 0; c < s.n_choices; ++c) {
    if (c == it.correct) {
      it.choices.push_back(answer);
    } else {
      int a = picks[next++];
      if (a >= answer_idx) ++a;
      it.choices.push_back(attribute_base(s) + a);
    }
  }
  it.tokens.push_back(kBos);
  for (int c : it.choices) it.tokens.push_back(c);
  it.tokens.push_back(kSep);
  it.tokens.push_back(kFirstContent + subj);
  it.tokens.push_back(kFirstContent + s.n_subjects + rel);
  it.tokens.push_back(kQuery);
  it.answer_positions.push_back(static_cast<int>(it.tokens.size()) - 1);
  it.answers.push_back(answer);
  return it;
}

Item make_arithmetic(const TaskSpec& s, Rng& rng) {
  Item it;
  int acc = static_cast<int>(rng.below(s.modulus));
  it.tokens = {kBos, kFirstContent + acc};
  for (int i = 0; i < s.depth; ++i) {
    const int a = static_cast<int>(rng.below(s.modulus));
    acc = (acc + a) % s.modulus;
    it.tokens.push_back(kSep);
    it.tokens.push_back(kFirstContent + a);
    it.tokens.push_back(kAns);
    it.answer_positions.push_back(static_cast<int>(it.tokens.size()) - 1);
    it.answers.push_back(kFirstContent + acc);
    it.tokens.push_back(kFirstContent + acc);
  }
  return it;
}

// Successor j of content token u and its unnormalized weight 2^-j.
int lm_successor(const TaskSpec& s, int u, int j) {
  const std::uint64_t h = mix64(s.seed ^ mix64(0x4c4dULL + static_cast<std::uint64_t>(u) * 131 +
                                               static_cast<std::uint64_t>(j)));
  return static_cast<int>(h % static_cast<std::uint64_t>(content_count(s)));
}

Item make_lm(const TaskSpec& s, Rng& rng) {
  Item it;
  it.tokens.push_back(kBos);
  int u = static_cast<int>(rng.below(content_count(s)));
  it.tokens.push_back(kFirstContent + u);
  const double total = 2.0 - std::ldexp(1.0, 1 - s.branching);
  while (static_cast<int>(it.tokens.size()) < s.seq_len) {
    double r = rng.uniform() * total;
    int j = 0;
    for (; j < s.branching - 1; ++j) {
      r -= std::ldexp(1.0, -j);
      if (r < 0.0) break;
    }
    u = lm_successor(s, u, j);
    it.tokens.push_back(kFirstContent + u);
  }
  for (int p = 1; p + 1 < s.seq_len; ++p) {
    it.answer_positions.push_back(p);
    it.answers.push_back(it.tokens[p + 1]);
  }
  return it;
}

}  // namespace

std::string_view task_name(TaskKind kind) {
  switch (kind) {
    case TaskKind::Recall: return "recall";
    case TaskKind::Multichoice: return "multichoice";
    case TaskKind::Arithmetic: return "arithmetic";
    case TaskKind::Lm: return "lm";
  }
  return "?";
}

TaskKind parse_task(std::string_view name) {
  for (auto k : {TaskKind::Recall, TaskKind::Multichoice, TaskKind::Arithmetic,
                 TaskKind::Lm})
    if (task_name(k) == name) return k;
  fail(ErrorKind::Config, "unknown task kind '" + std::string(name) +
                              "' (expected recall, multichoice, arithmetic or lm)");
}

std::string task_label(const TaskSpec& spec) {
  return std::string(task_name(spec.kind));
}

void validate(const TaskSpec& s) {
  const int content = content_count(s);
  need(content >= 2, "task: vocab_size must exceed " + std::to_string(kFirstContent + 1));
  switch (s.kind) {
    case TaskKind::Recall:
      need(s.n_pairs >= 1, "recall: n_pairs must be >= 1");
      need(s.n_queries >= 1 && s.n_queries <= s.n_pairs,
           "recall: n_queries must be in [1, n_pairs]");
      need(s.n_pairs <= content / 2,
           "recall: vocab too small for " + std::to_string(s.n_pairs) +
               " pairs (" + std::to_string(content / 2) + " distinct keys available)");
      break;
    case TaskKind::Multichoice:
      need(s.n_choices >= 2, "multichoice: n_choices must be >= 2");
      need(s.n_subjects >= 1 && s.n_relations >= 1, "multichoice: empty fact table");
      need(s.n_attributes >= s.n_choices,
           "multichoice: n_attributes must be >= n_choices");
      need(s.n_subjects + s.n_relations + s.n_attributes <= content,
           "multichoice: vocab too small for the fact table");
      break;
    case TaskKind::Arithmetic:
      need(s.modulus >= 2 && s.modulus <= 97, "arithmetic: modulus must be in [2, 97]");
      need(s.modulus <= content, "arithmetic: vocab too small for the modulus");
      need(s.depth >= 1, "arithmetic: depth must be >= 1");
      break;
    case TaskKind::Lm:
      need(s.seq_len >= 3, "lm: seq_len must be >= 3");
      need(s.branching >= 1 && s.branching <= 16, "lm: branching must be in [1, 16]");
      break;
  }
}

int item_length(const TaskSpec& s) {
  switch (s.kind) {
    case TaskKind::Recall: return 1 + 2 * s.n_pairs + 3 * s.n_queries;
    case TaskKind::Multichoice: return s.n_choices + 5;
    case TaskKind::Arithmetic: return 2 + 4 * s.depth;
    case TaskKind::Lm: return s.seq_len;
  }
  return 0;
}

int fact_attribute(const TaskSpec& s, int subject, int relation) {
  const std::uint64_t key =
      static_cast<std::uint64_t>(subject) * static_cast<std::uint64_t>(s.n_relations) +
      static_cast<std::uint64_t>(relation);
  const std::uint64_t h = mix64(s.seed ^ mix64(0xfac7ULL + key));
  return attribute_base(s) + static_cast<int>(h % static_cast<std::uint64_t>(s.n_attributes));
}

std::uint64_t item_hash(const Item& item) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (int t : item.tokens) {
    for (int b = 0; b < 4; ++b) {
      h ^= static_cast<std::uint64_t>((static_cast<unsigned>(t) >> (8 * b)) & 0xffu);
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

Item generate(const TaskSpec& spec, std::uint64_t index) {
  validate(spec);
  const std::uint64_t split = index >= kEvalOffset ? 1 : 0;
  const Rng base = Rng(spec.seed ^ 0x7a5c0ffeeULL).split(index);
  // Redraw until the hash parity matches the split. Training and evaluation
  // items can then never coincide.
  for (std::uint64_t attempt = 0;; ++attempt) {
    Rng rng = base.split(attempt);
    Item it;
    switch (spec.kind) {
      case TaskKind::Recall: it = make_recall(spec, rng); break;
      case TaskKind::Multichoice: it = make_multichoice(spec, rng); break;
      case TaskKind::Arithmetic: it = make_arithmetic(spec, rng); break;
      case TaskKind::Lm: it = make_lm(spec, rng); break;
    }
    if ((mix64(item_hash(it)) & 1) == split) return it;
    if (attempt > 256)
      fail(ErrorKind::Config, "task '" + task_label(spec) +
                                  "' has too few distinct items to split");
  }
}

std::vector<Item> generate(const TaskSpec& spec, std::uint64_t first,
                           std::size_t n) {
  std::vector<Item> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(generate(spec, first + i));
  return out;
}

void write_jsonl(std::ostream& out, const TaskSpec& spec, std::uint64_t first,
                 std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const Item it = generate(spec, first + i);
    nlohmann::json j;
    j["task"] = task_label(spec);
    j["index"] = first + i;
    j["tokens"] = it.tokens;
    j["answer_positions"] = it.answer_positions;
    j["answers"] = it.answers;
    j["choices"] = it.choices;
    j["correct"] = it.correct;
    out << j.dump() << '\n';
  }
}

}  // namespace postnas::tasks
