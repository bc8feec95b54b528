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

#include "postnas/blocks/scan.hpp"

#include <cmath>
#include <cstring>
#include <memory>
#include <vector>

#include "postnas/core/error.hpp"
#include "postnas/simd/kernels.hpp"

namespace postnas::blocks {
namespace {

void apply_decay(DecayShape shape, const float* decay, float* S, int d_k,
                 int d_v) {
  if (shape == DecayShape::Scalar) {
    simd::active().scal(decay[0], S, static_cast<std::size_t>(d_k) * d_v);
  } else if (shape == DecayShape::PerKey) {
    for (int i = 0; i < d_v; ++i) {
      float* row = S + static_cast<std::size_t>(i) * d_k;
      for (int j = 0; j < d_k; ++j) row[j] *= decay[j];
    }
  }
}

std::vector<float>& scratch(std::size_t n) {
  thread_local std::vector<float> buf;
  if (buf.size() < n) buf.resize(n);
  return buf;
}

}  // namespace

void cell_step(WriteRule rule, DecayShape shape, CellDims dims,
               const float* decay, float beta, const float* q, const float* k,
               const float* v, float* S, float* o) {
  const auto& kt = simd::active();
  const int dk = dims.d_k;
  const int dv = dims.d_v;
  apply_decay(shape, decay, S, dk, dv);
  if (rule == WriteRule::Additive) {
    kt.ger(dv, dk, 1.0f, v, k, S, dk);
  } else {
    auto& buf = scratch(static_cast<std::size_t>(dv));
    float* u = buf.data();
    // Erase then write, so beta = 1 with a unit key stores v exactly.
    kt.gemv(dv, dk, S, dk, k, u, false);
    for (int i = 0; i < dv; ++i) u[i] = -beta * u[i];
    kt.ger(dv, dk, 1.0f, u, k, S, dk);
    kt.ger(dv, dk, beta, v, k, S, dk);
  }
  kt.gemv(dv, dk, S, dk, q, o, false);
}

void chunk_steps(WriteRule rule, DecayShape shape, CellDims dims, int n,
                 const float* decay, const float* beta, const float* q,
                 const float* k, const float* v, float* S, float* o) {
  const int dk = dims.d_k;
  const int dv = dims.d_v;
  if (n <= 0) return;
  if (shape == DecayShape::PerKey && rule == WriteRule::Delta) {
    // No closed form is needed by any block kind; fall back to steps.
    for (int t = 0; t < n; ++t)
      cell_step(rule, shape, dims, decay + static_cast<std::size_t>(t) * dk,
                beta ? beta[t] : 0.0f, q + static_cast<std::size_t>(t) * dk,
                k + static_cast<std::size_t>(t) * dk,
                v + static_cast<std::size_t>(t) * dv, S,
                o + static_cast<std::size_t>(t) * dv);
    return;
  }
  const auto& kt = simd::active();
  const std::size_t N = static_cast<std::size_t>(n);
  const std::size_t DK = static_cast<std::size_t>(dk);
  const std::size_t DV = static_cast<std::size_t>(dv);

  if (shape == DecayShape::PerKey) {
    // Diagonal decay, additive write:
    //   o_t = S0 (c_t * q_t) + sum_{s<=t} v_s sum_j k_sj q_tj c_tj / c_sj
    // with c the running product of the gates, kept in log space.
    std::vector<float> lc(N * DK);
    for (std::size_t t = 0; t < N; ++t)
      for (std::size_t j = 0; j < DK; ++j)
        lc[t * DK + j] = (t ? lc[(t - 1) * DK + j] : 0.0f) +
                         std::log(decay[t * DK + j]);
    std::vector<float> qs(DK);
    for (std::size_t t = 0; t < N; ++t) {
      float* ot = o + t * DV;
      for (std::size_t j = 0; j < DK; ++j)
        qs[j] = q[t * DK + j] * std::exp(lc[t * DK + j]);
      kt.gemv(dv, dk, S, dk, qs.data(), ot, false);
      for (std::size_t s = 0; s <= t; ++s) {
        float a = 0.0f;
        for (std::size_t j = 0; j < DK; ++j)
          a += k[s * DK + j] * q[t * DK + j] *
               std::exp(lc[t * DK + j] - lc[s * DK + j]);
        kt.axpy(a, v + s * DV, ot, DV);
      }
    }
    const float* last = lc.data() + (N - 1) * DK;
    std::vector<float> scale(DK);
    for (std::size_t j = 0; j < DK; ++j) scale[j] = std::exp(last[j]);
    apply_decay(DecayShape::PerKey, scale.data(), S, dk, dv);
    std::vector<float> ks(DK);
    for (std::size_t s = 0; s < N; ++s) {
      for (std::size_t j = 0; j < DK; ++j)
        ks[j] = k[s * DK + j] * std::exp(last[j] - lc[s * DK + j]);
      kt.ger(dv, dk, 1.0f, v + s * DV, ks.data(), S, dk);
    }
    return;
  }

  // Scalar (or no) decay. With c_t the running gate product and
  // u_t the effective write,
  //   u_t + beta_t sum_{s<t} (c_t/c_s)(k_s.k_t) u_s = beta_t (v_t - c_t S0 k_t)
  //   o_t = c_t S0 q_t + sum_{s<=t} (c_t/c_s)(k_s.q_t) u_s
  //   S_n = c_n S0 + sum_s (c_n/c_s) u_s k_s^T
  std::vector<float> lc(N, 0.0f);
  if (shape == DecayShape::Scalar)
    for (std::size_t t = 0; t < N; ++t)
      lc[t] = (t ? lc[t - 1] : 0.0f) + std::log(decay[t]);

  std::vector<float> kk(N * N), kq(N * N), s0k(N * DV), s0q(N * DV);
  simd::gemm(false, true, n, n, dk, k, dk, k, dk, kk.data(), n, false);
  simd::gemm(false, true, n, n, dk, q, dk, k, dk, kq.data(), n, false);
  simd::gemm(false, true, n, dv, dk, q, dk, S, dk, s0q.data(), dv, false);

  std::vector<float> u(N * DV);
  if (rule == WriteRule::Additive) {
    std::memcpy(u.data(), v, N * DV * sizeof(float));
  } else {
    simd::gemm(false, true, n, dv, dk, k, dk, S, dk, s0k.data(), dv, false);
    for (std::size_t t = 0; t < N; ++t) {
      float* ut = u.data() + t * DV;
      const float ct = std::exp(lc[t]);
      const float b = beta[t];
      for (std::size_t i = 0; i < DV; ++i)
        ut[i] = b * (v[t * DV + i] - ct * s0k[t * DV + i]);
      for (std::size_t s = 0; s < t; ++s) {
        const float a = -b * std::exp(lc[t] - lc[s]) * kk[t * N + s];
        kt.axpy(a, u.data() + s * DV, ut, DV);
      }
    }
  }

  for (std::size_t t = 0; t < N; ++t) {
    float* ot = o + t * DV;
    const float ct = std::exp(lc[t]);
    for (std::size_t i = 0; i < DV; ++i) ot[i] = ct * s0q[t * DV + i];
    for (std::size_t s = 0; s <= t; ++s)
      kt.axpy(std::exp(lc[t] - lc[s]) * kq[t * N + s], u.data() + s * DV, ot,
              DV);
  }

  const float cn = std::exp(lc[N - 1]);
  kt.scal(cn, S, DK * DV);
  for (std::size_t s = 0; s < N; ++s)
    kt.ger(dv, dk, std::exp(lc[N - 1] - lc[s]), u.data() + s * DV, k + s * DK,
           S, dk);
}

Tensor linear_scan(WriteRule rule, const Tensor& q, const Tensor& k,
                   const Tensor& v, const Tensor& decay, const Tensor& beta) {
  if (q.rank() != 4 || k.shape() != q.shape() || v.rank() != 4 ||
      v.dim(0) != q.dim(0) || v.dim(1) != q.dim(1) || v.dim(2) != q.dim(2))
    fail(ErrorKind::Shape, "linear_scan: q " + shape_str(q.shape()) + ", k " +
                               shape_str(k.shape()) + ", v " +
                               shape_str(v.shape()));
  const std::int64_t B = q.dim(0), T = q.dim(1), H = q.dim(2);
  const int dk = static_cast<int>(q.dim(3));
  const int dv = static_cast<int>(v.dim(3));
  const Shape bth{B, T, H};
  DecayShape shape = DecayShape::None;
  if (decay.defined()) {
    if (decay.shape() == bth)
      shape = DecayShape::Scalar;
    else if (decay.shape() == q.shape())
      shape = DecayShape::PerKey;
    else
      fail(ErrorKind::Shape, "linear_scan: decay " + shape_str(decay.shape()) +
                                 " does not match q " + shape_str(q.shape()));
  }
  if (rule == WriteRule::Delta && (!beta.defined() || beta.shape() != bth))
    fail(ErrorKind::Shape,
         "linear_scan: delta write needs beta of shape " + shape_str(bth));

  std::vector<Tensor> parents{q, k, v};
  const int decay_idx = decay.defined() ? static_cast<int>(parents.size()) : -1;
  if (decay.defined()) parents.push_back(decay);
  const int beta_idx =
      rule == WriteRule::Delta ? static_cast<int>(parents.size()) : -1;
  if (rule == WriteRule::Delta) parents.push_back(beta);

  bool record = false;
  if (grad_enabled())
    for (const auto& p : parents) record = record || p.requires_grad();

  const CellDims dims{dk, dv};
  const std::size_t n = static_cast<std::size_t>(dk) * dv;
  const std::size_t steps = static_cast<std::size_t>(T) + 1;
  const std::size_t dstride = shape == DecayShape::PerKey ? dk : 1;
  auto states = std::make_shared<std::vector<float>>(
      record ? static_cast<std::size_t>(B * H) * steps * n : n);
  std::vector<float> out(static_cast<std::size_t>(B * T * H * dv));
  const float* qd = q.data().data();
  const float* kd = k.data().data();
  const float* vd = v.data().data();
  const float* ad = decay.defined() ? decay.data().data() : nullptr;
  const float* bd = beta_idx >= 0 ? beta.data().data() : nullptr;

  for (std::int64_t b = 0; b < B; ++b) {
    for (std::int64_t h = 0; h < H; ++h) {
      float* S = states->data() +
                 (record ? static_cast<std::size_t>(b * H + h) * steps * n : 0);
      std::fill(S, S + n, 0.0f);
      for (std::int64_t t = 0; t < T; ++t) {
        const std::size_t row = static_cast<std::size_t>((b * T + t) * H + h);
        if (record) {
          std::memcpy(S + n, S, n * sizeof(float));
          S += n;
        }
        cell_step(rule, shape, dims, ad ? ad + row * dstride : nullptr,
                  bd ? bd[row] : 0.0f, qd + row * dk, kd + row * dk,
                  vd + row * dv, S, out.data() + row * dv);
      }
    }
  }

  return make_op(
      "linear_scan", v.shape(), std::move(out), std::move(parents),
      [=, states = std::move(states)](Node& self) {
        const auto& kt = simd::active();
        float* gq = self.parent_grad(0);
        float* gk = self.parent_grad(1);
        float* gv = self.parent_grad(2);
        float* ga = decay_idx >= 0 ? self.parent_grad(decay_idx) : nullptr;
        float* gb = beta_idx >= 0 ? self.parent_grad(beta_idx) : nullptr;
        const float* Q = self.parents[0]->value.data();
        const float* K = self.parents[1]->value.data();
        const float* V = self.parents[2]->value.data();
        const float* A =
            decay_idx >= 0 ? self.parents[decay_idx]->value.data() : nullptr;
        const float* Bt =
            beta_idx >= 0 ? self.parents[beta_idx]->value.data() : nullptr;
        std::vector<float> dS(n), P(n), u(dv), r(dv), du(dv), tmp(dv),
            colsum(dk);
        for (std::int64_t b = 0; b < B; ++b) {
          for (std::int64_t h = 0; h < H; ++h) {
            const float* base =
                states->data() + static_cast<std::size_t>(b * H + h) * steps * n;
            std::fill(dS.begin(), dS.end(), 0.0f);
            for (std::int64_t t = T - 1; t >= 0; --t) {
              const std::size_t row =
                  static_cast<std::size_t>((b * T + t) * H + h);
              const float* Sprev = base + static_cast<std::size_t>(t) * n;
              const float* Scur = Sprev + n;
              const float* go = self.grad.data() + row * dv;
              const float* qt = Q + row * dk;
              const float* key = K + row * dk;
              const float* vt = V + row * dv;
              const float* at = A ? A + row * dstride : nullptr;
              if (gq) kt.gemv_t(dv, dk, Scur, dk, go, gq + row * dk, true);
              kt.ger(dv, dk, 1.0f, go, qt, dS.data(), dk);

              std::memcpy(P.data(), Sprev, n * sizeof(float));
              apply_decay(shape, at, P.data(), dk, dv);
              const float bt = Bt ? Bt[row] : 0.0f;
              if (rule == WriteRule::Delta) {
                kt.gemv(dv, dk, P.data(), dk, key, r.data(), false);
                for (int i = 0; i < dv; ++i) {
                  r[i] = vt[i] - r[i];
                  u[i] = bt * r[i];
                }
              } else {
                std::memcpy(u.data(), vt, dv * sizeof(float));
              }
              kt.gemv(dv, dk, dS.data(), dk, key, du.data(), false);
              if (gk) kt.gemv_t(dv, dk, dS.data(), dk, u.data(), gk + row * dk, true);
              if (rule == WriteRule::Delta) {
                if (gb) gb[row] += kt.dot(r.data(), du.data(), dv);
                if (gv) kt.axpy(bt, du.data(), gv + row * dv, dv);
                for (int i = 0; i < dv; ++i) tmp[i] = -bt * du[i];
                if (gk) kt.gemv_t(dv, dk, P.data(), dk, tmp.data(), gk + row * dk, true);
                kt.ger(dv, dk, 1.0f, tmp.data(), key, dS.data(), dk);
              } else if (gv) {
                kt.axpy(1.0f, du.data(), gv + row * dv, dv);
              }
              // dS now holds the gradient w.r.t. P = Sprev G.
              if (shape == DecayShape::Scalar) {
                if (ga) ga[row] += kt.dot(dS.data(), Sprev, n);
              } else if (shape == DecayShape::PerKey && ga) {
                std::fill(colsum.begin(), colsum.end(), 0.0f);
                for (int i = 0; i < dv; ++i) {
                  const float* dr = dS.data() + static_cast<std::size_t>(i) * dk;
                  const float* sr = Sprev + static_cast<std::size_t>(i) * dk;
                  for (int j = 0; j < dk; ++j) colsum[j] += dr[j] * sr[j];
                }
                for (int j = 0; j < dk; ++j) ga[row * dk + j] += colsum[j];
              }
              apply_decay(shape, at, dS.data(), dk, dv);
            }
          }
        }
      });
}

}  // namespace postnas::blocks
