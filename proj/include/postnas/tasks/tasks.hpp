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

// Synthetic task generators. Items are pure functions of (spec, index).
//
// Token layout shared by every task: 0 PAD, 1 BOS, 2 SEP, 3 QUERY, 4 ANS,
// content tokens from kFirstContent up to vocab_size - 1.
//
//   recall       BOS k1 v1 .. kK vK [QUERY kq v(kq)] x n_queries, distinct
//                query keys, every v(kq) scored
//   multichoice  BOS c1 .. ck SEP subj rel QUERY -> attr(subj, rel), one of c*
//   arithmetic   BOS a0 SEP a1 ANS s1 SEP a2 ANS s2 .. with s_i = s_{i-1} + a_i
//                mod p; every s_i is scored
//   lm           a random walk over a sparse Markov chain, every next token
//                scored
//
// Indices below kEvalOffset form the training split, the rest the evaluation
// split. A hash-parity rule keeps the two splits disjoint as token sequences.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace postnas::tasks {

inline constexpr int kPad = 0;
inline constexpr int kBos = 1;
inline constexpr int kSep = 2;
inline constexpr int kQuery = 3;
inline constexpr int kAns = 4;
inline constexpr int kFirstContent = 5;

inline constexpr std::uint64_t kEvalOffset = std::uint64_t{1} << 32;

enum class TaskKind { Recall, Multichoice, Arithmetic, Lm };

std::string_view task_name(TaskKind kind);
TaskKind parse_task(std::string_view name);

struct TaskSpec {
  TaskKind kind = TaskKind::Recall;
  int vocab_size = 128;
  int n_pairs = 4;        // recall
  int n_queries = 1;      // recall, <= n_pairs
  int n_choices = 4;      // multichoice
  int n_subjects = 16;    // multichoice fact table
  int n_relations = 4;
  int n_attributes = 16;
  int depth = 3;          // arithmetic chain length
  int modulus = 11;       // arithmetic, <= 97
  int seq_len = 16;       // lm
  int branching = 4;      // lm successors per token
  std::uint64_t seed = 0;

  bool operator==(const TaskSpec&) const = default;
};

void validate(const TaskSpec& spec);

// Display label, e.g. "recall".
std::string task_label(const TaskSpec& spec);

struct Item {
  std::vector<int> tokens;
  // Logits at answer_positions[i] are scored against answers[i].
  std::vector<int> answer_positions;
  std::vector<int> answers;
  std::vector<int> choices;  // multichoice candidates
  int correct = -1;          // index into choices
};

// Sequence length of every item of the spec.
int item_length(const TaskSpec& spec);

Item generate(const TaskSpec& spec, std::uint64_t index);
std::vector<Item> generate(const TaskSpec& spec, std::uint64_t first,
                           std::size_t n);

// FNV-1a over the token sequence.
std::uint64_t item_hash(const Item& item);

// Multichoice fact table lookup: attribute token of (subject, relation)
// given as zero-based indices.
int fact_attribute(const TaskSpec& spec, int subject, int relation);

// One JSON object per line: {"task", "index", "tokens", "answer_positions",
// "answers", "choices", "correct"}.
void write_jsonl(std::ostream& out, const TaskSpec& spec, std::uint64_t first,
                 std::size_t n);

}  // namespace postnas::tasks
