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

#include "postnas/core/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "postnas/core/diagnostics.hpp"
#include "postnas/core/error.hpp"
#include "postnas/simd/kernels.hpp"

namespace postnas::ops {
namespace {

[[noreturn]] void shape_error(const std::string& op, const Shape& a,
                              const Shape& b) {
  fail(ErrorKind::Shape, op + ": incompatible shapes " + shape_str(a) +
                             " and " + shape_str(b));
}

struct RowView {
  std::int64_t rows;
  std::int64_t cols;
};

RowView rows_of(const Tensor& x, const char* op) {
  if (x.rank() == 0) fail(ErrorKind::Shape, std::string(op) + ": needs rank >= 1");
  const auto cols = x.dim(-1);
  return {cols == 0 ? 0 : x.numel() / cols, cols};
}

// True when b broadcasts onto a as a trailing suffix or a scalar.
bool suffix_broadcastable(const Shape& a, const Shape& b) {
  if (b.empty()) return true;
  if (b.size() > a.size()) return false;
  return std::equal(b.rbegin(), b.rend(), a.rbegin());
}

template <class Fwd, class DA, class DB>
Tensor binary(const char* name, const Tensor& a, const Tensor& b, Fwd fwd,
              DA da_fn, DB db_fn) {
  if (!suffix_broadcastable(a.shape(), b.shape()))
    shape_error(name, a.shape(), b.shape());
  const auto n = static_cast<std::size_t>(a.numel());
  const auto nb = static_cast<std::size_t>(b.numel());
  if (nb == 0 && n != 0) shape_error(name, a.shape(), b.shape());
  std::vector<float> out(n);
  const float* av = a.data().data();
  const float* bv = b.data().data();
  for (std::size_t i = 0; i < n; ++i) out[i] = fwd(av[i], bv[i % nb]);
  return make_op(name, a.shape(), std::move(out), {a, b},
                 [da_fn, db_fn, n, nb](Node& self) {
                   const float* g = self.grad.data();
                   const float* x = self.parents[0]->value.data();
                   const float* y = self.parents[1]->value.data();
                   if (float* ga = self.parent_grad(0))
                     for (std::size_t i = 0; i < n; ++i)
                       ga[i] += da_fn(g[i], x[i], y[i % nb]);
                   if (float* gb = self.parent_grad(1))
                     for (std::size_t i = 0; i < n; ++i)
                       gb[i % nb] += db_fn(g[i], x[i], y[i % nb]);
                 });
}

template <class Fwd, class Bwd>
Tensor unary(const char* name, const Tensor& x, Fwd fwd, Bwd bwd) {
  const auto n = static_cast<std::size_t>(x.numel());
  std::vector<float> out(n);
  const float* xv = x.data().data();
  for (std::size_t i = 0; i < n; ++i) out[i] = fwd(xv[i]);
  return make_op(name, x.shape(), std::move(out), {x}, [bwd, n](Node& self) {
    float* gx = self.parent_grad(0);
    if (!gx) return;
    const float* g = self.grad.data();
    const float* xin = self.parents[0]->value.data();
    const float* y = self.value.data();
    for (std::size_t i = 0; i < n; ++i) gx[i] += g[i] * bwd(xin[i], y[i]);
  });
}

void softmax_row(const float* x, float* y, std::int64_t n) {
  float m = -INFINITY;
  for (std::int64_t j = 0; j < n; ++j) m = std::max(m, x[j]);
  float s = 0.0f;
  for (std::int64_t j = 0; j < n; ++j) {
    y[j] = std::exp(x[j] - m);
    s += y[j];
  }
  const float inv = 1.0f / s;
  for (std::int64_t j = 0; j < n; ++j) y[j] *= inv;
}

void log_softmax_row(const float* x, float* y, std::int64_t n) {
  float m = -INFINITY;
  for (std::int64_t j = 0; j < n; ++j) m = std::max(m, x[j]);
  float s = 0.0f;
  for (std::int64_t j = 0; j < n; ++j) s += std::exp(x[j] - m);
  const float lse = m + std::log(s);
  for (std::int64_t j = 0; j < n; ++j) y[j] = x[j] - lse;
}

struct AxisSplit {
  std::int64_t outer;
  std::int64_t extent;
  std::int64_t inner;
};

AxisSplit split_at(const Shape& s, int axis) {
  AxisSplit r{1, s[static_cast<std::size_t>(axis)], 1};
  for (int i = 0; i < axis; ++i) r.outer *= s[static_cast<std::size_t>(i)];
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < s.size(); ++i)
    r.inner *= s[i];
  return r;
}

int normalize_axis(int axis, int rank, const char* op) {
  const int a = axis < 0 ? axis + rank : axis;
  if (a < 0 || a >= rank)
    fail(ErrorKind::Shape, std::string(op) + ": axis " + std::to_string(axis) +
                               " out of range for rank " + std::to_string(rank));
  return a;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (b.rank() != 2 || a.rank() < 1 || a.dim(-1) != b.dim(0))
    shape_error("matmul", a.shape(), b.shape());
  const int K = static_cast<int>(b.dim(0));
  const int N = static_cast<int>(b.dim(1));
  const int M = K == 0 ? 0 : static_cast<int>(a.numel() / K);
  Shape out_shape = a.shape();
  out_shape.back() = N;
  std::vector<float> out(static_cast<std::size_t>(M) * N);
  simd::gemm(false, false, M, N, K, a.data().data(), K, b.data().data(), N,
             out.data(), N, false);
  return make_op("matmul", std::move(out_shape), std::move(out), {a, b},
                 [M, N, K](Node& self) {
                   const float* g = self.grad.data();
                   const float* A = self.parents[0]->value.data();
                   const float* B = self.parents[1]->value.data();
                   if (float* ga = self.parent_grad(0))
                     simd::gemm(false, true, M, K, N, g, N, B, N, ga, K, true);
                   if (float* gb = self.parent_grad(1))
                     simd::gemm(true, false, K, N, M, A, K, g, N, gb, N, true);
                 });
}

Tensor bmm(const Tensor& a, const Tensor& b) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) ||
      a.dim(2) != b.dim(1))
    shape_error("bmm", a.shape(), b.shape());
  const int Bn = static_cast<int>(a.dim(0));
  const int M = static_cast<int>(a.dim(1));
  const int K = static_cast<int>(a.dim(2));
  const int N = static_cast<int>(b.dim(2));
  std::vector<float> out(static_cast<std::size_t>(Bn) * M * N);
  const auto sa = static_cast<std::size_t>(M) * K;
  const auto sb = static_cast<std::size_t>(K) * N;
  const auto sc = static_cast<std::size_t>(M) * N;
  for (int i = 0; i < Bn; ++i)
    simd::gemm(false, false, M, N, K, a.data().data() + i * sa, K,
               b.data().data() + i * sb, N, out.data() + i * sc, N, false);
  return make_op("bmm", {Bn, M, N}, std::move(out), {a, b},
                 [=](Node& self) {
                   const float* g = self.grad.data();
                   const float* A = self.parents[0]->value.data();
                   const float* B = self.parents[1]->value.data();
                   float* ga = self.parent_grad(0);
                   float* gb = self.parent_grad(1);
                   for (int i = 0; i < Bn; ++i) {
                     if (ga)
                       simd::gemm(false, true, M, K, N, g + i * sc, N,
                                  B + i * sb, N, ga + i * sa, K, true);
                     if (gb)
                       simd::gemm(true, false, K, N, M, A + i * sa, K,
                                  g + i * sc, N, gb + i * sb, N, true);
                   }
                 });
}

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      "add", a, b, [](float x, float y) { return x + y; },
      [](float g, float, float) { return g; },
      [](float g, float, float) { return g; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      "sub", a, b, [](float x, float y) { return x - y; },
      [](float g, float, float) { return g; },
      [](float g, float, float) { return -g; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      "mul", a, b, [](float x, float y) { return x * y; },
      [](float g, float, float y) { return g * y; },
      [](float g, float x, float) { return g * x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary(
      "div", a, b, [](float x, float y) { return x / y; },
      [](float g, float, float y) { return g / y; },
      [](float g, float x, float y) { return -g * x / (y * y); });
}

Tensor scale(const Tensor& x, float factor) {
  return unary(
      "scale", x, [factor](float v) { return v * factor; },
      [factor](float, float) { return factor; });
}

Tensor exp(const Tensor& x) {
  return unary(
      "exp", x, [](float v) { return std::exp(v); },
      [](float, float y) { return y; });
}

Tensor log(const Tensor& x) {
  return unary(
      "log", x, [](float v) { return std::log(v); },
      [](float v, float) { return 1.0f / v; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      "sigmoid", x, [](float v) { return 1.0f / (1.0f + std::exp(-v)); },
      [](float, float y) { return y * (1.0f - y); });
}

Tensor silu(const Tensor& x) {
  return unary(
      "silu", x, [](float v) { return v / (1.0f + std::exp(-v)); },
      [](float v, float) {
        const float s = 1.0f / (1.0f + std::exp(-v));
        return s + v * s * (1.0f - s);
      });
}

Tensor softmax(const Tensor& x) {
  const auto [rows, cols] = rows_of(x, "softmax");
  std::vector<float> out(static_cast<std::size_t>(x.numel()));
  for (std::int64_t r = 0; r < rows; ++r)
    softmax_row(x.data().data() + r * cols, out.data() + r * cols, cols);
  return make_op("softmax", x.shape(), std::move(out), {x},
                 [rows, cols](Node& self) {
                   float* gx = self.parent_grad(0);
                   if (!gx) return;
                   for (std::int64_t r = 0; r < rows; ++r) {
                     const float* y = self.value.data() + r * cols;
                     const float* g = self.grad.data() + r * cols;
                     float dotp = 0.0f;
                     for (std::int64_t j = 0; j < cols; ++j) dotp += g[j] * y[j];
                     for (std::int64_t j = 0; j < cols; ++j)
                       gx[r * cols + j] += y[j] * (g[j] - dotp);
                   }
                 });
}

Tensor log_softmax(const Tensor& x) {
  const auto [rows, cols] = rows_of(x, "log_softmax");
  std::vector<float> out(static_cast<std::size_t>(x.numel()));
  for (std::int64_t r = 0; r < rows; ++r)
    log_softmax_row(x.data().data() + r * cols, out.data() + r * cols, cols);
  return make_op("log_softmax", x.shape(), std::move(out), {x},
                 [rows, cols](Node& self) {
                   float* gx = self.parent_grad(0);
                   if (!gx) return;
                   for (std::int64_t r = 0; r < rows; ++r) {
                     const float* y = self.value.data() + r * cols;
                     const float* g = self.grad.data() + r * cols;
                     float gs = 0.0f;
                     for (std::int64_t j = 0; j < cols; ++j) gs += g[j];
                     for (std::int64_t j = 0; j < cols; ++j)
                       gx[r * cols + j] += g[j] - std::exp(y[j]) * gs;
                   }
                 });
}

Tensor l2_normalize(const Tensor& x, float eps) {
  const auto [rows, cols] = rows_of(x, "l2_normalize");
  std::vector<float> out(static_cast<std::size_t>(x.numel()));
  std::vector<float> norms(static_cast<std::size_t>(rows));
  std::int64_t zero_rows = 0;
  for (std::int64_t r = 0; r < rows; ++r) {
    const float* xr = x.data().data() + r * cols;
    float ss = 0.0f;
    for (std::int64_t j = 0; j < cols; ++j) ss += xr[j] * xr[j];
    const float n = std::sqrt(ss + eps);
    norms[static_cast<std::size_t>(r)] = n;
    if (n == 0.0f) {
      ++zero_rows;
      continue;  // stays zero
    }
    const float inv = 1.0f / n;
    for (std::int64_t j = 0; j < cols; ++j) out[r * cols + j] = xr[j] * inv;
  }
  if (zero_rows > 0)
    record_warning("l2_normalize: " + std::to_string(zero_rows) +
                   " zero-norm row(s) mapped to zero");
  return make_op("l2_normalize", x.shape(), std::move(out), {x},
                 [rows, cols, norms = std::move(norms)](Node& self) {
                   float* gx = self.parent_grad(0);
                   if (!gx) return;
                   for (std::int64_t r = 0; r < rows; ++r) {
                     const float n = norms[static_cast<std::size_t>(r)];
                     if (n == 0.0f) continue;
                     const float* y = self.value.data() + r * cols;
                     const float* g = self.grad.data() + r * cols;
                     float yg = 0.0f;
                     for (std::int64_t j = 0; j < cols; ++j) yg += y[j] * g[j];
                     const float inv = 1.0f / n;
                     for (std::int64_t j = 0; j < cols; ++j)
                       gx[r * cols + j] += (g[j] - y[j] * yg) * inv;
                   }
                 });
}

Tensor rms_norm(const Tensor& x, const Tensor& weight, float eps) {
  const auto [rows, cols] = rows_of(x, "rms_norm");
  if (weight.rank() != 1 || weight.dim(0) != cols)
    shape_error("rms_norm", x.shape(), weight.shape());
  std::vector<float> out(static_cast<std::size_t>(x.numel()));
  std::vector<float> inv_rms(static_cast<std::size_t>(rows));
  const float* w = weight.data().data();
  for (std::int64_t r = 0; r < rows; ++r) {
    const float* xr = x.data().data() + r * cols;
    float ss = 0.0f;
    for (std::int64_t j = 0; j < cols; ++j) ss += xr[j] * xr[j];
    const float inv = 1.0f / std::sqrt(ss / static_cast<float>(cols) + eps);
    inv_rms[static_cast<std::size_t>(r)] = inv;
    for (std::int64_t j = 0; j < cols; ++j) out[r * cols + j] = xr[j] * inv * w[j];
  }
  return make_op(
      "rms_norm", x.shape(), std::move(out), {x, weight},
      [rows, cols, inv_rms = std::move(inv_rms)](Node& self) {
        const float* xv = self.parents[0]->value.data();
        const float* w = self.parents[1]->value.data();
        float* gx = self.parent_grad(0);
        float* gw = self.parent_grad(1);
        for (std::int64_t r = 0; r < rows; ++r) {
          const float inv = inv_rms[static_cast<std::size_t>(r)];
          const float* xr = xv + r * cols;
          const float* g = self.grad.data() + r * cols;
          if (gw)
            for (std::int64_t j = 0; j < cols; ++j) gw[j] += g[j] * xr[j] * inv;
          if (gx) {
            float s = 0.0f;
            for (std::int64_t j = 0; j < cols; ++j) s += g[j] * w[j] * xr[j];
            const float c = inv * inv * inv * s / static_cast<float>(cols);
            for (std::int64_t j = 0; j < cols; ++j)
              gx[r * cols + j] += inv * g[j] * w[j] - xr[j] * c;
          }
        }
      });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) shape_error("reshape", x.shape(), shape);
  std::vector<float> out(x.data().begin(), x.data().end());
  return make_op("reshape", std::move(shape), std::move(out), {x},
                 [](Node& self) {
                   float* gx = self.parent_grad(0);
                   if (!gx) return;
                   for (std::size_t i = 0; i < self.grad.size(); ++i)
                     gx[i] += self.grad[i];
                 });
}

Tensor transpose(const Tensor& x) {
  if (x.rank() < 2) shape_error("transpose", x.shape(), {});
  const auto M = x.dim(-2);
  const auto N = x.dim(-1);
  const auto batch = M * N == 0 ? 0 : x.numel() / (M * N);
  Shape shape = x.shape();
  std::swap(shape[shape.size() - 1], shape[shape.size() - 2]);
  std::vector<float> out(static_cast<std::size_t>(x.numel()));
  const float* xv = x.data().data();
  for (std::int64_t b = 0; b < batch; ++b)
    for (std::int64_t i = 0; i < M; ++i)
      for (std::int64_t j = 0; j < N; ++j)
        out[b * M * N + j * M + i] = xv[b * M * N + i * N + j];
  return make_op("transpose", std::move(shape), std::move(out), {x},
                 [batch, M, N](Node& self) {
                   float* gx = self.parent_grad(0);
                   if (!gx) return;
                   for (std::int64_t b = 0; b < batch; ++b)
                     for (std::int64_t i = 0; i < M; ++i)
                       for (std::int64_t j = 0; j < N; ++j)
                         gx[b * M * N + i * N + j] +=
                             self.grad[b * M * N + j * M + i];
                 });
}

Tensor slice(const Tensor& x, int axis, std::int64_t start,
             std::int64_t length) {
  const int a = normalize_axis(axis, x.rank(), "slice");
  const auto sp = split_at(x.shape(), a);
  if (start < 0 || length < 0 || start + length > sp.extent)
    fail(ErrorKind::Shape, "slice: range [" + std::to_string(start) + ", " +
                               std::to_string(start + length) +
                               ") out of bounds for shape " +
                               shape_str(x.shape()));
  Shape shape = x.shape();
  shape[static_cast<std::size_t>(a)] = length;
  std::vector<float> out(static_cast<std::size_t>(sp.outer * length * sp.inner));
  const float* xv = x.data().data();
  for (std::int64_t o = 0; o < sp.outer; ++o)
    std::copy_n(xv + (o * sp.extent + start) * sp.inner, length * sp.inner,
                out.data() + o * length * sp.inner);
  return make_op("slice", std::move(shape), std::move(out), {x},
                 [sp, start, length](Node& self) {
                   float* gx = self.parent_grad(0);
                   if (!gx) return;
                   for (std::int64_t o = 0; o < sp.outer; ++o) {
                     float* dst = gx + (o * sp.extent + start) * sp.inner;
                     const float* src = self.grad.data() + o * length * sp.inner;
                     for (std::int64_t i = 0; i < length * sp.inner; ++i)
                       dst[i] += src[i];
                   }
                 });
}

Tensor concat(std::span<const Tensor> parts, int axis) {
  if (parts.empty()) fail(ErrorKind::Shape, "concat: no inputs");
  const int a = normalize_axis(axis, parts[0].rank(), "concat");
  Shape shape = parts[0].shape();
  std::int64_t total = 0;
  std::vector<std::int64_t> extents;
  for (const auto& p : parts) {
    Shape s = p.shape();
    if (s.size() != shape.size()) shape_error("concat", shape, s);
    s[static_cast<std::size_t>(a)] = shape[static_cast<std::size_t>(a)];
    if (s != shape) shape_error("concat", shape, p.shape());
    extents.push_back(p.dim(a));
    total += p.dim(a);
  }
  shape[static_cast<std::size_t>(a)] = total;
  const auto sp = split_at(shape, a);
  std::vector<float> out(static_cast<std::size_t>(shape_numel(shape)));
  std::int64_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const float* src = parts[k].data().data();
    const auto ext = extents[k];
    for (std::int64_t o = 0; o < sp.outer; ++o)
      std::copy_n(src + o * ext * sp.inner, ext * sp.inner,
                  out.data() + (o * total + offset) * sp.inner);
    offset += ext;
  }
  return make_op("concat", std::move(shape), std::move(out),
                 std::vector<Tensor>(parts.begin(), parts.end()),
                 [sp, total, extents](Node& self) {
                   std::int64_t offset = 0;
                   for (std::size_t k = 0; k < extents.size(); ++k) {
                     const auto ext = extents[k];
                     if (float* gp = self.parent_grad(k)) {
                       for (std::int64_t o = 0; o < sp.outer; ++o) {
                         const float* src =
                             self.grad.data() + (o * total + offset) * sp.inner;
                         float* dst = gp + o * ext * sp.inner;
                         for (std::int64_t i = 0; i < ext * sp.inner; ++i)
                           dst[i] += src[i];
                       }
                     }
                     offset += ext;
                   }
                 });
}

Tensor cumsum(const Tensor& x) {
  const auto [rows, cols] = rows_of(x, "cumsum");
  std::vector<float> out(static_cast<std::size_t>(x.numel()));
  for (std::int64_t r = 0; r < rows; ++r) {
    float acc = 0.0f;
    for (std::int64_t j = 0; j < cols; ++j) {
      acc += x.data()[static_cast<std::size_t>(r * cols + j)];
      out[static_cast<std::size_t>(r * cols + j)] = acc;
    }
  }
  return make_op("cumsum", x.shape(), std::move(out), {x},
                 [rows, cols](Node& self) {
                   float* gx = self.parent_grad(0);
                   if (!gx) return;
                   for (std::int64_t r = 0; r < rows; ++r) {
                     float acc = 0.0f;
                     for (std::int64_t j = cols - 1; j >= 0; --j) {
                       acc += self.grad[static_cast<std::size_t>(r * cols + j)];
                       gx[r * cols + j] += acc;
                     }
                   }
                 });
}

Tensor embedding(const Tensor& table, std::span<const int> ids) {
  if (table.rank() != 2) shape_error("embedding", table.shape(), {});
  const auto V = table.dim(0);
  const auto D = table.dim(1);
  std::vector<float> out(ids.size() * static_cast<std::size_t>(D));
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= V)
      fail(ErrorKind::Shape, "embedding: token id " + std::to_string(ids[i]) +
                                 " outside vocabulary of size " +
                                 std::to_string(V));
    std::copy_n(table.data().data() + ids[i] * D, D, out.data() + i * D);
  }
  std::vector<int> saved(ids.begin(), ids.end());
  return make_op("embedding",
                 {static_cast<std::int64_t>(ids.size()), D}, std::move(out),
                 {table}, [saved = std::move(saved), D](Node& self) {
                   float* gt = self.parent_grad(0);
                   if (!gt) return;
                   for (std::size_t i = 0; i < saved.size(); ++i) {
                     float* dst = gt + saved[i] * D;
                     const float* src = self.grad.data() + i * D;
                     for (std::int64_t j = 0; j < D; ++j) dst[j] += src[j];
                   }
                 });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (float v : x.data()) s += v;
  return make_op("sum", {}, {static_cast<float>(s)}, {x}, [](Node& self) {
    float* gx = self.parent_grad(0);
    if (!gx) return;
    const float g = self.grad[0];
    const auto n = self.parents[0]->value.size();
    for (std::size_t i = 0; i < n; ++i) gx[i] += g;
  });
}

Tensor mean(const Tensor& x) {
  const auto n = static_cast<float>(std::max<std::int64_t>(x.numel(), 1));
  return scale(sum(x), 1.0f / n);
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> targets,
                     std::span<const float> weights) {
  const auto [rows, cols] = rows_of(logits, "cross_entropy");
  if (static_cast<std::int64_t>(targets.size()) != rows ||
      static_cast<std::int64_t>(weights.size()) != rows)
    fail(ErrorKind::Shape,
         "cross_entropy: logits " + shape_str(logits.shape()) + " with " +
             std::to_string(targets.size()) + " targets and " +
             std::to_string(weights.size()) + " weights");
  double total_w = 0.0;
  double loss = 0.0;
  std::vector<float> logp(static_cast<std::size_t>(cols));
  for (std::int64_t r = 0; r < rows; ++r) {
    const float w = weights[static_cast<std::size_t>(r)];
    if (w == 0.0f) continue;
    const int t = targets[static_cast<std::size_t>(r)];
    if (t < 0 || t >= cols)
      fail(ErrorKind::Shape, "cross_entropy: target " + std::to_string(t) +
                                 " outside [0, " + std::to_string(cols) + ")");
    log_softmax_row(logits.data().data() + r * cols, logp.data(), cols);
    loss -= static_cast<double>(w) * logp[static_cast<std::size_t>(t)];
    total_w += w;
  }
  const float value = total_w > 0.0 ? static_cast<float>(loss / total_w) : 0.0f;
  std::vector<int> t(targets.begin(), targets.end());
  std::vector<float> w(weights.begin(), weights.end());
  return make_op(
      "cross_entropy", {}, {value}, {logits},
      [rows, cols, t = std::move(t), w = std::move(w), total_w](Node& self) {
        float* gx = self.parent_grad(0);
        if (!gx || total_w <= 0.0) return;
        const float g = self.grad[0];
        std::vector<float> p(static_cast<std::size_t>(cols));
        for (std::int64_t r = 0; r < rows; ++r) {
          const float wr = w[static_cast<std::size_t>(r)];
          if (wr == 0.0f) continue;
          softmax_row(self.parents[0]->value.data() + r * cols, p.data(), cols);
          const float c = g * wr / static_cast<float>(total_w);
          float* dst = gx + r * cols;
          for (std::int64_t j = 0; j < cols; ++j) dst[j] += c * p[j];
          dst[t[static_cast<std::size_t>(r)]] -= c;
        }
      });
}

Tensor mse(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error("mse", a.shape(), b.shape());
  const auto n = static_cast<std::size_t>(a.numel());
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(a.data()[i]) - b.data()[i];
    s += d * d;
  }
  const float value = n ? static_cast<float>(s / static_cast<double>(n)) : 0.0f;
  return make_op("mse", {}, {value}, {a, b}, [n](Node& self) {
    if (n == 0) return;
    const float c = 2.0f * self.grad[0] / static_cast<float>(n);
    const float* av = self.parents[0]->value.data();
    const float* bv = self.parents[1]->value.data();
    float* ga = self.parent_grad(0);
    float* gb = self.parent_grad(1);
    for (std::size_t i = 0; i < n; ++i) {
      const float d = c * (av[i] - bv[i]);
      if (ga) ga[i] += d;
      if (gb) gb[i] -= d;
    }
  });
}

Tensor kl_div(const Tensor& student_logits, const Tensor& teacher_logits) {
  if (student_logits.shape() != teacher_logits.shape())
    shape_error("kl_div", student_logits.shape(), teacher_logits.shape());
  const auto [rows, cols] = rows_of(student_logits, "kl_div");
  std::vector<float> ls(static_cast<std::size_t>(cols));
  std::vector<float> lt(static_cast<std::size_t>(cols));
  double total = 0.0;
  for (std::int64_t r = 0; r < rows; ++r) {
    log_softmax_row(student_logits.data().data() + r * cols, ls.data(), cols);
    log_softmax_row(teacher_logits.data().data() + r * cols, lt.data(), cols);
    double row = 0.0;
    for (std::int64_t j = 0; j < cols; ++j)
      row += static_cast<double>(std::exp(lt[j])) * (lt[j] - ls[j]);
    total += row;
  }
  const float value = rows ? static_cast<float>(total / rows) : 0.0f;
  Tensor teacher = teacher_logits.detach();
  return make_op("kl_div", {}, {value}, {student_logits},
                 [rows, cols, teacher](Node& self) {
                   float* gs = self.parent_grad(0);
                   if (!gs) return;
                   const float c = self.grad[0] / static_cast<float>(rows);
                   std::vector<float> ps(static_cast<std::size_t>(cols));
                   std::vector<float> pt(static_cast<std::size_t>(cols));
                   for (std::int64_t r = 0; r < rows; ++r) {
                     softmax_row(self.parents[0]->value.data() + r * cols,
                                 ps.data(), cols);
                     softmax_row(teacher.data().data() + r * cols, pt.data(),
                                 cols);
                     for (std::int64_t j = 0; j < cols; ++j)
                       gs[r * cols + j] += c * (ps[j] - pt[j]);
                   }
                 });
}

}  // namespace postnas::ops
