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

#include "postnas/blocks/conv.hpp"

#include <cstring>

#include "postnas/core/error.hpp"

namespace postnas::blocks {

Tensor causal_conv(const Tensor& x, const Tensor& w) {
  if (x.rank() != 3 || w.rank() != 2 || w.dim(0) != x.dim(2) || w.dim(1) < 1)
    fail(ErrorKind::Shape, "causal_conv: x " + shape_str(x.shape()) + ", w " +
                               shape_str(w.shape()));
  const std::int64_t B = x.dim(0), T = x.dim(1), C = x.dim(2), K = w.dim(1);
  const float* xd = x.data().data();
  const float* wd = w.data().data();
  std::vector<float> out(static_cast<std::size_t>(x.numel()));
  for (std::int64_t b = 0; b < B; ++b)
    for (std::int64_t t = 0; t < T; ++t)
      for (std::int64_t c = 0; c < C; ++c) {
        float acc = 0.0f;
        for (std::int64_t i = 0; i < K; ++i) {
          const std::int64_t s = t - (K - 1 - i);
          if (s >= 0) acc += wd[c * K + i] * xd[(b * T + s) * C + c];
        }
        out[(b * T + t) * C + c] = acc;
      }
  return make_op("causal_conv", x.shape(), std::move(out), {x, w},
                 [B, T, C, K](Node& self) {
                   const float* xv = self.parents[0]->value.data();
                   const float* wv = self.parents[1]->value.data();
                   float* gx = self.parent_grad(0);
                   float* gw = self.parent_grad(1);
                   const float* g = self.grad.data();
                   for (std::int64_t b = 0; b < B; ++b)
                     for (std::int64_t t = 0; t < T; ++t)
                       for (std::int64_t c = 0; c < C; ++c) {
                         const float go = g[(b * T + t) * C + c];
                         for (std::int64_t i = 0; i < K; ++i) {
                           const std::int64_t s = t - (K - 1 - i);
                           if (s < 0) continue;
                           const std::int64_t xi = (b * T + s) * C + c;
                           if (gx) gx[xi] += wv[c * K + i] * go;
                           if (gw) gw[c * K + i] += xv[xi] * go;
                         }
                       }
                 });
}

Tensor dynamic_causal_conv(const Tensor& v, const Tensor& kernels) {
  if (v.rank() != 4 || kernels.rank() != 4 || kernels.dim(0) != v.dim(0) ||
      kernels.dim(1) != v.dim(1) || kernels.dim(2) != v.dim(2) ||
      kernels.dim(3) < 1)
    fail(ErrorKind::Shape, "dynamic_causal_conv: v " + shape_str(v.shape()) +
                               ", kernels " + shape_str(kernels.shape()));
  const std::int64_t B = v.dim(0), T = v.dim(1), H = v.dim(2), D = v.dim(3),
                     K = kernels.dim(3);
  const float* vd = v.data().data();
  const float* kd = kernels.data().data();
  std::vector<float> out(static_cast<std::size_t>(v.numel()));
  for (std::int64_t b = 0; b < B; ++b)
    for (std::int64_t t = 0; t < T; ++t)
      for (std::int64_t h = 0; h < H; ++h) {
        const float* w = kd + ((b * T + t) * H + h) * K;
        float* y = out.data() + ((b * T + t) * H + h) * D;
        for (std::int64_t i = 0; i < K; ++i) {
          const std::int64_t s = t - (K - 1 - i);
          if (s < 0) continue;
          const float* src = vd + ((b * T + s) * H + h) * D;
          for (std::int64_t d = 0; d < D; ++d) y[d] += w[i] * src[d];
        }
      }
  return make_op(
      "dynamic_causal_conv", v.shape(), std::move(out), {v, kernels},
      [B, T, H, D, K](Node& self) {
        const float* vv = self.parents[0]->value.data();
        const float* kv = self.parents[1]->value.data();
        float* gv = self.parent_grad(0);
        float* gk = self.parent_grad(1);
        const float* g = self.grad.data();
        for (std::int64_t b = 0; b < B; ++b)
          for (std::int64_t t = 0; t < T; ++t)
            for (std::int64_t h = 0; h < H; ++h) {
              const std::int64_t ki = ((b * T + t) * H + h) * K;
              const float* go = g + ((b * T + t) * H + h) * D;
              for (std::int64_t i = 0; i < K; ++i) {
                const std::int64_t s = t - (K - 1 - i);
                if (s < 0) continue;
                const std::int64_t vi = ((b * T + s) * H + h) * D;
                float acc = 0.0f;
                for (std::int64_t d = 0; d < D; ++d) {
                  acc += vv[vi + d] * go[d];
                  if (gv) gv[vi + d] += kv[ki + i] * go[d];
                }
                if (gk) gk[ki + i] += acc;
              }
            }
      });
}

void causal_conv_token(const float* x, const float* w, int channels, int K,
                       float* tail, float* y) {
  for (int c = 0; c < channels; ++c) {
    float acc = 0.0f;
    for (int i = 0; i < K - 1; ++i)
      acc += w[c * K + i] * tail[static_cast<std::size_t>(i) * channels + c];
    acc += w[c * K + K - 1] * x[c];
    y[c] = acc;
  }
  if (K > 1) {
    std::memmove(tail, tail + channels,
                 sizeof(float) * static_cast<std::size_t>(K - 2) * channels);
    std::memcpy(tail + static_cast<std::size_t>(K - 2) * channels, x,
                sizeof(float) * channels);
  }
}

void dynamic_conv_token(const float* v, const float* kernels, int heads,
                        int d, int K, float* tail, float* y) {
  const std::size_t width = static_cast<std::size_t>(heads) * d;
  for (int h = 0; h < heads; ++h) {
    const float* w = kernels + static_cast<std::size_t>(h) * K;
    float* yh = y + static_cast<std::size_t>(h) * d;
    for (int j = 0; j < d; ++j) yh[j] = 0.0f;
    for (int i = 0; i < K - 1; ++i) {
      const float* src = tail + i * width + static_cast<std::size_t>(h) * d;
      for (int j = 0; j < d; ++j) yh[j] += w[i] * src[j];
    }
    const float* cur = v + static_cast<std::size_t>(h) * d;
    for (int j = 0; j < d; ++j) yh[j] += w[K - 1] * cur[j];
  }
  if (K > 1) {
    std::memmove(tail, tail + width, sizeof(float) * (K - 2) * width);
    std::memcpy(tail + (K - 2) * width, v, sizeof(float) * width);
  }
}

}  // namespace postnas::blocks
