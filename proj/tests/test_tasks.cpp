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

#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "postnas/core/error.hpp"
#include "postnas/tasks/tasks.hpp"

using namespace postnas;
using namespace postnas::tasks;

namespace {

TaskSpec spec_of(TaskKind kind) {
  TaskSpec s;
  s.kind = kind;
  return s;
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::State;
}

}  // namespace

TEST_CASE("recall with one pair answers with its value") {
  TaskSpec s = spec_of(TaskKind::Recall);
  s.n_pairs = 1;
  for (std::uint64_t i = 0; i < 50; ++i) {
    const auto it = generate(s, i);
    REQUIRE(it.tokens.size() == static_cast<std::size_t>(item_length(s)));
    CHECK(it.tokens[0] == kBos);
    CHECK(it.tokens[3] == kQuery);
    CHECK(it.tokens[4] == it.tokens[1]);
    REQUIRE(it.answers.size() == 1);
    CHECK(it.answers[0] == it.tokens[2]);
    CHECK(it.answer_positions[0] == 4);
  }
}

TEST_CASE("recall answers follow from a lookup table of the prompt") {
  TaskSpec s = spec_of(TaskKind::Recall);
  s.n_pairs = 5;
  s.n_queries = 3;
  int correct = 0, total = 0;
  for (std::uint64_t i = 0; i < 300; ++i) {
    const auto it = generate(s, kEvalOffset + i);
    std::map<int, int> table;
    for (int p = 0; p < s.n_pairs; ++p) {
      const int key = it.tokens[static_cast<std::size_t>(1 + 2 * p)];
      CHECK(table.count(key) == 0);
      table[key] = it.tokens[static_cast<std::size_t>(2 + 2 * p)];
    }
    std::set<int> queried;
    for (std::size_t q = 0; q < it.answers.size(); ++q) {
      const int pos = it.answer_positions[q];
      CHECK(it.tokens[static_cast<std::size_t>(pos - 1)] == kQuery);
      const int key = it.tokens[static_cast<std::size_t>(pos)];
      CHECK(queried.insert(key).second);
      correct += table.count(key) && table[key] == it.answers[q];
      ++total;
    }
  }
  CHECK(total == 900);
  CHECK(correct == total);
}

TEST_CASE("multichoice correct index is uniform over choices") {
  TaskSpec s = spec_of(TaskKind::Multichoice);
  const int n = 1000;
  std::vector<int> counts(static_cast<std::size_t>(s.n_choices), 0);
  for (int i = 0; i < n; ++i) ++counts[static_cast<std::size_t>(generate(s, static_cast<std::uint64_t>(i)).correct)];
  const double expect = static_cast<double>(n) / s.n_choices;
  double chi2 = 0.0;
  for (int c : counts) chi2 += (c - expect) * (c - expect) / expect;
  // 3 degrees of freedom, p = 0.001.
  CHECK(chi2 < 16.27);
}

TEST_CASE("multichoice has exactly one correct candidate, the stored fact") {
  TaskSpec s = spec_of(TaskKind::Multichoice);
  for (std::uint64_t i = 0; i < 200; ++i) {
    const auto it = generate(s, i);
    REQUIRE(it.choices.size() == static_cast<std::size_t>(s.n_choices));
    const std::set<int> distinct(it.choices.begin(), it.choices.end());
    CHECK(distinct.size() == it.choices.size());
    const std::size_t n = it.tokens.size();
    const int subj = it.tokens[n - 3] - kFirstContent;
    const int rel = it.tokens[n - 2] - kFirstContent - s.n_subjects;
    const int attr = fact_attribute(s, subj, rel);
    CHECK(it.answers.back() == attr);
    CHECK(it.choices[static_cast<std::size_t>(it.correct)] == attr);
    CHECK(std::count(it.choices.begin(), it.choices.end(), attr) == 1);
    for (std::size_t c = 0; c < it.choices.size(); ++c)
      CHECK(it.tokens[1 + c] == it.choices[c]);
  }
}

TEST_CASE("arithmetic answers are running sums modulo p") {
  TaskSpec s = spec_of(TaskKind::Arithmetic);
  s.depth = 4;
  s.modulus = 13;
  for (std::uint64_t i = 0; i < 100; ++i) {
    const auto it = generate(s, i);
    int acc = it.tokens[1] - kFirstContent;
    REQUIRE(it.answers.size() == 4);
    for (int d = 0; d < 4; ++d) {
      const int a = it.tokens[static_cast<std::size_t>(3 + 4 * d)] - kFirstContent;
      acc = (acc + a) % 13;
      CHECK(it.answers[static_cast<std::size_t>(d)] == kFirstContent + acc);
      CHECK(it.tokens[static_cast<std::size_t>(it.answer_positions[static_cast<std::size_t>(d)])] == kAns);
    }
  }
}

TEST_CASE("generation is a pure function of spec and index") {
  for (auto k : {TaskKind::Recall, TaskKind::Multichoice, TaskKind::Arithmetic, TaskKind::Lm}) {
    const auto s = spec_of(k);
    for (std::uint64_t i : {std::uint64_t{0}, std::uint64_t{7}, kEvalOffset + 3}) {
      const auto a = generate(s, i), b = generate(s, i);
      CHECK(a.tokens == b.tokens);
      CHECK(a.answers == b.answers);
      CHECK(a.answer_positions == b.answer_positions);
    }
    const auto batch = generate(s, 10, 5);
    for (std::size_t j = 0; j < 5; ++j) CHECK(batch[j].tokens == generate(s, 10 + j).tokens);
  }
}

TEST_CASE("training and evaluation items never coincide") {
  for (auto k : {TaskKind::Recall, TaskKind::Multichoice, TaskKind::Arithmetic}) {
    const auto s = spec_of(k);
    std::set<std::uint64_t> train;
    for (std::uint64_t i = 0; i < 3000; ++i) train.insert(item_hash(generate(s, i)));
    int shared = 0;
    for (std::uint64_t i = 0; i < 3000; ++i)
      shared += static_cast<int>(train.count(item_hash(generate(s, kEvalOffset + i))));
    CHECK(shared == 0);
  }
}

TEST_CASE("too small a vocabulary is a config error") {
  TaskSpec s = spec_of(TaskKind::Recall);
  s.vocab_size = 12;
  s.n_pairs = 8;
  CHECK(kind_of([&] { validate(s); }) == ErrorKind::Config);
  CHECK(kind_of([&] { generate(s, 0); }) == ErrorKind::Config);
  TaskSpec q = spec_of(TaskKind::Recall);
  q.n_queries = q.n_pairs + 1;
  CHECK(kind_of([&] { validate(q); }) == ErrorKind::Config);
  CHECK(kind_of([&] { parse_task("sorting"); }) == ErrorKind::Config);
}

TEST_CASE("task dump has one parseable record per item") {
  const auto s = spec_of(TaskKind::Multichoice);
  std::ostringstream out;
  write_jsonl(out, s, 5, 3);
  std::istringstream in(out.str());
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j.at("task") == "multichoice");
    CHECK(j.at("index") == 5 + n);
    CHECK(j.at("tokens").get<std::vector<int>>() == generate(s, static_cast<std::uint64_t>(5 + n)).tokens);
    ++n;
  }
  CHECK(n == 3);
}
