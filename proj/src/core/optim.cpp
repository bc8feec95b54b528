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

#include "postnas/core/optim.hpp"

#include <cmath>

#include "postnas/core/error.hpp"

namespace postnas {

OptimizerState::Moments& OptimizerState::moments_for(const std::string& name,
                                                     std::size_t size) {
  for (auto& [key, mom] : moments)
    if (key == name) {
      if (mom.m.size() != size)
        fail(ErrorKind::Shape, "optimizer: parameter '" + name +
                                   "' changed size between steps");
      return mom;
    }
  moments.emplace_back(name, Moments{std::vector<float>(size, 0.0f),
                                     std::vector<float>(size, 0.0f), 0});
  return moments.back().second;
}

double grad_norm(const std::vector<NamedTensor>& params) {
  double s = 0.0;
  for (const auto& p : params) {
    if (!p.tensor.requires_grad() || !p.tensor.has_grad()) continue;
    for (float g : p.tensor.grad()) s += static_cast<double>(g) * g;
  }
  return std::sqrt(s);
}

void zero_grad(std::vector<NamedTensor>& params) {
  for (auto& p : params) p.tensor.clear_grad();
}

void optimizer_step(std::vector<NamedTensor>& params, OptimizerState& state) {
  const auto& cfg = state.config;
  for (const auto& p : params) {
    if (!p.tensor.requires_grad() || !p.tensor.has_grad()) continue;
    if (p.tensor.grad().size() != p.tensor.data().size())
      fail(ErrorKind::Shape, "optimizer: grad/param size mismatch for '" +
                                 p.name + "'");
    if (!all_finite(p.tensor.grad()))
      fail(ErrorKind::Numeric,
           "optimizer: non-finite gradient in parameter '" + p.name + "'");
  }
  float clip_scale = 1.0f;
  if (cfg.clip_norm > 0.0f) {
    const double n = grad_norm(params);
    if (n > cfg.clip_norm) clip_scale = static_cast<float>(cfg.clip_norm / n);
  }
  ++state.step;

  for (auto& p : params) {
    if (!p.tensor.requires_grad() || !p.tensor.has_grad()) continue;
    auto w = p.tensor.mutable_data();
    auto g = p.tensor.grad();
    if (cfg.kind == OptimizerKind::Sgd) {
      for (std::size_t i = 0; i < w.size(); ++i) {
        if (cfg.weight_decay != 0.0f) w[i] -= cfg.lr * cfg.weight_decay * w[i];
        w[i] -= cfg.lr * clip_scale * g[i];
      }
      continue;
    }
    auto& mom = state.moments_for(p.name, w.size());
    ++mom.updates;
    const auto t = static_cast<double>(mom.updates);
    const float bc1 = static_cast<float>(1.0 - std::pow(cfg.beta1, t));
    const float bc2 = static_cast<float>(1.0 - std::pow(cfg.beta2, t));
    for (std::size_t i = 0; i < w.size(); ++i) {
      const float gi = g[i] * clip_scale;
      mom.m[i] = cfg.beta1 * mom.m[i] + (1.0f - cfg.beta1) * gi;
      mom.v[i] = cfg.beta2 * mom.v[i] + (1.0f - cfg.beta2) * gi * gi;
      const float mhat = mom.m[i] / bc1;
      const float vhat = mom.v[i] / bc2;
      if (cfg.weight_decay != 0.0f) w[i] -= cfg.lr * cfg.weight_decay * w[i];
      w[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

}  // namespace postnas
