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

#include "postnas/search/supernet.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "postnas/core/error.hpp"

namespace postnas::search {

using model::LayerSpec;
using model::MixerKind;

SuperNet build_supernet(const model::ModelParams& teacher,
                        blocks::LinearBlockKind linear_kind, std::uint64_t seed) {
  for (std::size_t i = 0; i < teacher.blocks.size(); ++i)
    if (!teacher.blocks[i].attn)
      fail(ErrorKind::Config, "supernet: teacher block " + std::to_string(i) +
                                  " has no attention path");
  SuperNet net;
  net.linear_kind = linear_kind;
  net.params = model::clone(teacher);
  Rng rng = Rng(seed).split(0x5e9e7ULL);
  for (int i = 0; i < teacher.config.n_blocks; ++i)
    model::add_linear_path(net.params, i, linear_kind, rng);
  return net;
}

std::vector<LayerSpec> subnet_layers(const SuperNet& net, const std::vector<int>& full,
                                     const std::vector<int>& swa, int window) {
  LayerSpec lin;
  lin.mixer = MixerKind::Linear;
  lin.kind = net.linear_kind;
  return model::with_placement(net.params.config, full, swa, window, lin).layers;
}

std::vector<LayerSpec> sample_path(const SuperNet& net, const SupernetConfig& cfg,
                                   Rng& rng) {
  const int n = net.params.config.n_blocks;
  std::vector<int> full;
  if (cfg.sampling == PathSampling::Uniform) {
    for (int i = 0; i < n; ++i)
      if (rng.bernoulli(cfg.full_probability)) full.push_back(i);
  } else {
    const int j = static_cast<int>(rng.below(static_cast<std::uint64_t>(
        std::clamp(cfg.max_full, 0, n) + 1)));
    std::vector<int> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    for (int i = 0; i < j; ++i)
      std::swap(idx[i], idx[i + static_cast<int>(rng.below(static_cast<std::uint64_t>(n - i)))]);
    full.assign(idx.begin(), idx.begin() + j);
    std::sort(full.begin(), full.end());
  }
  return subnet_layers(net, full);
}

bool is_supernet_trainable(const std::string& name) {
  return name.find(".lin.") != std::string::npos ||
         name.find(".jet.") != std::string::npos;
}

model::TrainReport train_supernet(SuperNet& net, const model::ModelParams& teacher,
                                  std::span<const tasks::TaskSpec> ts,
                                  const SupernetConfig& cfg) {
  if (ts.empty()) fail(ErrorKind::Config, "supernet: at least one task is required");
  std::vector<NamedTensor> params;
  for (auto& n : net.params.named()) {
    const bool train = is_supernet_trainable(n.name);
    n.tensor.set_requires_grad(train);
    if (train) params.push_back(n);
  }
  OptimizerState opt;
  opt.config = cfg.train.optim;
  Rng rng = Rng(cfg.train.seed).split(0x9a7bULL);
  model::TrainReport rep;
  const auto t0 = std::chrono::steady_clock::now();
  for (int s = 0; s < cfg.train.steps; ++s) {
    const auto& spec = ts[static_cast<std::size_t>(s) % ts.size()];
    const auto b = model::make_batch(spec, model::batch_start(cfg.train, s), cfg.train.batch);
    const auto layers = sample_path(net, cfg, rng);
    zero_grad(params);
    model::ForwardResult t;
    {
      NoGradGuard ng;
      t = model::forward(teacher, b.tokens, b.B, b.T);
    }
    Tensor loss = model::distillation_loss(model::forward(net.params, b.tokens, b.B, b.T, layers),
                                           t, cfg.train.kl_weight);
    const float l = loss.item();
    if (!std::isfinite(l))
      fail(ErrorKind::Numeric, "supernet: loss became non-finite at step " + std::to_string(s));
    rep.losses.push_back(l);
    rep.tokens += static_cast<std::int64_t>(b.tokens.size());
    if (loss.requires_grad()) {
      backward(loss);
      optimizer_step(params, opt);
    }
  }
  zero_grad(params);
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

}  // namespace postnas::search
