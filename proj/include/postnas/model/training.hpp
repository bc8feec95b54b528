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

// Training loops and evaluation over synthetic task mixtures. Each step
// draws one batch from one task, cycling through the task list.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "postnas/model/model.hpp"
#include "postnas/tasks/tasks.hpp"

namespace postnas::model {

struct TrainConfig {
  int steps = 300;
  int batch = 16;
  OptimizerConfig optim{OptimizerKind::Adam, 3e-3f, 0.9f, 0.999f, 1e-8f, 0.0f, 1.0f};
  std::uint64_t seed = 0;
  // 0: a fresh item every draw; otherwise training indices cycle in
  // [0, train_items).
  std::uint64_t train_items = 0;
  float kl_weight = 1.0f;  // logit KL weight in distillation
};

struct TrainReport {
  std::vector<float> losses;  // one per step, before that step's update
  double seconds = 0.0;
  std::int64_t tokens = 0;
};

struct Batch {
  std::vector<int> tokens;   // [B*T]
  std::vector<int> targets;  // [B*T]; answer token or 0 where unscored
  std::vector<float> weights;  // 1 on scored positions
  int B = 0;
  int T = 0;
};

Batch make_batch(const tasks::TaskSpec& spec, std::uint64_t first, int B);
Batch make_batch(std::span<const tasks::Item> items);

// Index of the first item of step `step`.
std::uint64_t batch_start(const TrainConfig& config, int step);

// Next-token cross entropy on answer positions. Nothing frozen.
struct TrainedModel {
  ModelParams params;
  TrainReport report;
};
TrainedModel train_language_model(ModelParams params,
                                  std::span<const tasks::TaskSpec> tasks,
                                  const TrainConfig& config);

// Fresh all-Full model trained from the config's seed. Throws on a non-Full
// layer; throws Error(Numeric) if the loss becomes non-finite.
TrainedModel train_teacher(const ModelConfig& config,
                           std::span<const tasks::TaskSpec> tasks,
                           const TrainConfig& train);

// sum over blocks of MSE(h_student, h_teacher) + kl_weight * KL(teacher ||
// student), all positions.
Tensor distillation_loss(const ForwardResult& student,
                         const ForwardResult& teacher, float kl_weight);

// Stage 1: student inherits the teacher trunk, MLP/embedding/head/norm
// weights frozen, trained on the distillation loss.
TrainedModel distill_stage1(const ModelParams& teacher,
                            const ModelConfig& student_config,
                            std::span<const tasks::TaskSpec> tasks,
                            const TrainConfig& train);

// Stage 2: continue with cross entropy, nothing frozen.
TrainedModel train_stage2(ModelParams student,
                          std::span<const tasks::TaskSpec> tasks,
                          const TrainConfig& train);

struct TaskScore {
  std::string task;
  double accuracy = 0.0;
  double answer_loss = 0.0;  // mean cross entropy of the correct answer
  int items = 0;
};

struct EvalConfig {
  int items = 256;
  int batch = 64;
  std::uint64_t first = tasks::kEvalOffset;
};

// Multichoice accuracy is the argmax over the candidate tokens; the other
// tasks use the argmax over the whole vocabulary at each answer position.
// The answer loss is always the full-vocabulary cross entropy.
std::vector<TaskScore> evaluate(const ModelParams& params,
                                std::span<const tasks::TaskSpec> tasks,
                                const EvalConfig& eval,
                                std::span<const LayerSpec> layers = {});

// Mean next-token loss of the scored positions on evaluation items.
double eval_loss(const ModelParams& params, std::span<const tasks::TaskSpec> tasks,
                 const EvalConfig& eval, std::span<const LayerSpec> layers = {});

}  // namespace postnas::model
