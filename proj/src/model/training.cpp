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

#include "postnas/model/training.hpp"

#include <chrono>
#include <cmath>

#include "postnas/core/error.hpp"
#include "postnas/core/ops.hpp"

namespace postnas::model {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void check_loss(float loss, int step, const char* what) {
  if (!std::isfinite(loss))
    fail(ErrorKind::Numeric, std::string(what) + ": loss became non-finite at step " +
                                 std::to_string(step));
}

const tasks::TaskSpec& task_for_step(std::span<const tasks::TaskSpec> ts, int step) {
  if (ts.empty()) fail(ErrorKind::Config, "training needs at least one task");
  return ts[static_cast<std::size_t>(step) % ts.size()];
}

Tensor ce_loss(const ForwardResult& out, const Batch& b) {
  return ops::cross_entropy(out.logits, b.targets, b.weights);
}

// Shared step loop; `loss_fn` builds the loss of one batch.
template <typename LossFn>
TrainReport run_steps(std::vector<NamedTensor> params, std::span<const tasks::TaskSpec> ts,
                      const TrainConfig& cfg, const char* what, LossFn&& loss_fn) {
  TrainReport rep;
  OptimizerState opt;
  opt.config = cfg.optim;
  const auto t0 = Clock::now();
  for (int s = 0; s < cfg.steps; ++s) {
    const auto& spec = task_for_step(ts, s);
    const Batch b = make_batch(spec, batch_start(cfg, s), cfg.batch);
    zero_grad(params);
    Tensor loss = loss_fn(b);
    const float l = loss.item();
    check_loss(l, s, what);
    rep.losses.push_back(l);
    rep.tokens += static_cast<std::int64_t>(b.tokens.size());
    if (loss.requires_grad()) {
      backward(loss);
      optimizer_step(params, opt);
    }
  }
  zero_grad(params);
  rep.seconds = seconds_since(t0);
  return rep;
}

}  // namespace

std::uint64_t batch_start(const TrainConfig& c, int step) {
  const std::uint64_t first =
      static_cast<std::uint64_t>(step) * static_cast<std::uint64_t>(c.batch);
  // Seeds shift the stream so different runs see different items.
  const std::uint64_t offset = (mix64(c.seed) % 1000003ULL) * 4096ULL;
  if (c.train_items == 0) return offset + first;
  return first % c.train_items;
}

Batch make_batch(std::span<const tasks::Item> items) {
  Batch b;
  b.B = static_cast<int>(items.size());
  b.T = items.empty() ? 0 : static_cast<int>(items[0].tokens.size());
  for (const auto& it : items) {
    if (static_cast<int>(it.tokens.size()) != b.T)
      fail(ErrorKind::Shape, "make_batch: items of different lengths");
    const std::size_t base = b.tokens.size();
    b.tokens.insert(b.tokens.end(), it.tokens.begin(), it.tokens.end());
    b.targets.resize(b.tokens.size(), 0);
    b.weights.resize(b.tokens.size(), 0.0f);
    for (std::size_t i = 0; i < it.answer_positions.size(); ++i) {
      b.targets[base + static_cast<std::size_t>(it.answer_positions[i])] = it.answers[i];
      b.weights[base + static_cast<std::size_t>(it.answer_positions[i])] = 1.0f;
    }
  }
  return b;
}

Batch make_batch(const tasks::TaskSpec& spec, std::uint64_t first, int B) {
  std::vector<tasks::Item> items;
  for (int i = 0; i < B; ++i) {
    // Wrap training indices so they never reach the evaluation split.
    std::uint64_t idx = first + static_cast<std::uint64_t>(i);
    if (first < tasks::kEvalOffset) idx %= tasks::kEvalOffset;
    items.push_back(tasks::generate(spec, idx));
  }
  return make_batch(items);
}

TrainedModel train_language_model(ModelParams params,
                                  std::span<const tasks::TaskSpec> ts,
                                  const TrainConfig& cfg) {
  auto trainable = trainable_parameters(params, false);
  auto rep = run_steps(trainable, ts, cfg, "train", [&](const Batch& b) {
    return ce_loss(forward(params, b.tokens, b.B, b.T), b);
  });
  return {std::move(params), std::move(rep)};
}

TrainedModel train_teacher(const ModelConfig& config,
                           std::span<const tasks::TaskSpec> ts,
                           const TrainConfig& train) {
  for (std::size_t i = 0; i < config.layers.size(); ++i)
    if (config.layers[i].mixer != MixerKind::Full)
      fail(ErrorKind::Config, "train_teacher: layer " + std::to_string(i) +
                                  " is not full attention");
  return train_language_model(init_model(config, train.seed), ts, train);
}

Tensor distillation_loss(const ForwardResult& s, const ForwardResult& t,
                         float kl_weight) {
  if (s.hidden.size() != t.hidden.size())
    fail(ErrorKind::Shape, "distillation: student has " + std::to_string(s.hidden.size()) +
                               " blocks, teacher " + std::to_string(t.hidden.size()));
  Tensor loss = ops::scale(ops::kl_div(s.logits, t.logits), kl_weight);
  for (std::size_t i = 0; i < s.hidden.size(); ++i) {
    if (s.hidden[i].shape() != t.hidden[i].shape())
      fail(ErrorKind::Shape, "distillation: block " + std::to_string(i) +
                                 " hidden " + shape_str(s.hidden[i].shape()) +
                                 " vs teacher " + shape_str(t.hidden[i].shape()));
    loss = ops::add(loss, ops::mse(s.hidden[i], t.hidden[i]));
  }
  return loss;
}

TrainedModel distill_stage1(const ModelParams& teacher,
                            const ModelConfig& student_config,
                            std::span<const tasks::TaskSpec> ts,
                            const TrainConfig& cfg) {
  ModelParams student = inherit(teacher, student_config, cfg.seed);
  auto trainable = trainable_parameters(student, true);
  auto rep = run_steps(trainable, ts, cfg, "distill", [&](const Batch& b) {
    ForwardResult t;
    {
      NoGradGuard ng;
      t = forward(teacher, b.tokens, b.B, b.T);
    }
    return distillation_loss(forward(student, b.tokens, b.B, b.T), t, cfg.kl_weight);
  });
  return {std::move(student), std::move(rep)};
}

TrainedModel train_stage2(ModelParams student, std::span<const tasks::TaskSpec> ts,
                          const TrainConfig& cfg) {
  return train_language_model(std::move(student), ts, cfg);
}

std::vector<TaskScore> evaluate(const ModelParams& params,
                                std::span<const tasks::TaskSpec> ts,
                                const EvalConfig& eval,
                                std::span<const LayerSpec> layers) {
  NoGradGuard ng;
  std::vector<TaskScore> out;
  for (const auto& spec : ts) {
    TaskScore sc;
    sc.task = tasks::task_label(spec);
    double hits = 0.0, loss = 0.0;
    int scored = 0;
    for (int start = 0; start < eval.items; start += eval.batch) {
      const int n = std::min(eval.batch, eval.items - start);
      auto items = tasks::generate(spec, eval.first + static_cast<std::uint64_t>(start),
                                   static_cast<std::size_t>(n));
      const Batch b = make_batch(items);
      const Tensor logits = forward(params, b.tokens, b.B, b.T, layers).logits;
      const auto V = static_cast<std::size_t>(logits.dim(1));
      const float* L = logits.data().data();
      for (int i = 0; i < n; ++i) {
        const auto& it = items[static_cast<std::size_t>(i)];
        for (std::size_t a = 0; a < it.answer_positions.size(); ++a) {
          const float* row =
              L + (static_cast<std::size_t>(i) * b.T + it.answer_positions[a]) * V;
          float m = row[0];
          for (std::size_t v = 1; v < V; ++v) m = std::max(m, row[v]);
          double z = 0.0;
          for (std::size_t v = 0; v < V; ++v) z += std::exp(double(row[v]) - m);
          loss += std::log(z) + m - row[it.answers[a]];
          if (!it.choices.empty()) {
            std::size_t best = 0;
            for (std::size_t c = 1; c < it.choices.size(); ++c)
              if (row[it.choices[c]] > row[it.choices[best]]) best = c;
            hits += static_cast<int>(best) == it.correct ? 1.0 : 0.0;
          } else {
            std::size_t best = 0;
            for (std::size_t v = 1; v < V; ++v)
              if (row[v] > row[best]) best = v;
            hits += static_cast<int>(best) == it.answers[a] ? 1.0 : 0.0;
          }
          ++scored;
        }
      }
    }
    sc.items = eval.items;
    sc.accuracy = scored ? hits / scored : 0.0;
    sc.answer_loss = scored ? loss / scored : 0.0;
    out.push_back(sc);
  }
  return out;
}

double eval_loss(const ModelParams& params, std::span<const tasks::TaskSpec> ts,
                 const EvalConfig& eval, std::span<const LayerSpec> layers) {
  const auto scores = evaluate(params, ts, eval, layers);
  double s = 0.0;
  for (const auto& sc : scores) s += sc.answer_loss;
  return scores.empty() ? 0.0 : s / static_cast<double>(scores.size());
}

}  // namespace postnas::model
