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

#include "postnas/perf/perf_model.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "postnas/core/error.hpp"

namespace postnas::perf {
namespace {

using model::MixerKind;

int width_of(const model::ModelConfig& c, int width) {
  return width > 0 ? width : c.dtype_width;
}

std::int64_t kv_per_token(const model::ModelConfig& c, int w) {
  return 2LL * c.attention.n_kv_heads * c.attention.head_dim * w;
}

std::int64_t state_entries(const model::ModelConfig& c) {
  return std::int64_t{c.linear.n_head} * c.linear.d_k * c.linear.d_v;
}

std::int64_t tail_entries(const model::ModelConfig& c, const model::LayerSpec& l) {
  const std::int64_t H = c.linear.n_head;
  if (l.mixer == MixerKind::Jet) return H * c.linear.d_v * (c.linear.kernel_size - 1);
  if (l.mixer == MixerKind::Linear && c.linear.short_conv)
    return H * (2 * c.linear.d_k + c.linear.d_v) * (c.linear.conv_size - 1);
  return 0;
}

// sum_{j=1..n} min(j, w)
double clipped_sum(double n, double w) {
  if (n <= w) return n * (n + 1.0) / 2.0;
  return w * (w + 1.0) / 2.0 + (n - w) * w;
}

double dense_flops(const model::ModelConfig& c) {
  std::int64_t n = model::parameter_count(c) - std::int64_t{c.vocab_size} * c.d_model;
  if (!c.tie_embeddings) n -= std::int64_t{c.vocab_size} * c.d_model;
  return 2.0 * static_cast<double>(n);
}

double linear_token_flops(const model::ModelConfig& c, const model::LayerSpec& l) {
  const double H = c.linear.n_head;
  double f = 4.0 * H * c.linear.d_k * c.linear.d_v;
  if (l.mixer == MixerKind::Jet) f += 2.0 * H * c.linear.d_v * c.linear.kernel_size;
  return f;
}

std::string gib(double bytes) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(3) << bytes / double(1LL << 30) << " GiB";
  return s.str();
}

}  // namespace

void validate(const HardwareSpec& hw) {
  if (!(hw.memory_bytes > 0.0) || !(hw.bandwidth > 0.0) || !(hw.compute > 0.0))
    fail(ErrorKind::Config, "hardware '" + hw.name +
                                "': memory_bytes, bandwidth and compute must be > 0");
}

CacheReport cache_bytes(const model::ModelConfig& c, std::int64_t context, int width) {
  model::validate(c);
  if (context < 0) fail(ErrorKind::Config, "cache_bytes: context must be >= 0");
  const int w = width_of(c, width);
  CacheReport r;
  r.context = context;
  r.dtype_width = w;
  for (std::size_t i = 0; i < c.layers.size(); ++i) {
    const auto& l = c.layers[i];
    LayerCache lc;
    lc.layer = static_cast<int>(i);
    lc.kind = l.mixer;
    switch (l.mixer) {
      case MixerKind::Full:
        lc.kv_bytes = kv_per_token(c, w) * context;
        r.full_kv += lc.kv_bytes;
        break;
      case MixerKind::SlidingWindow:
        lc.kv_bytes = kv_per_token(c, w) * std::min<std::int64_t>(context, l.window);
        r.swa_kv += lc.kv_bytes;
        break;
      case MixerKind::Linear:
      case MixerKind::Jet:
        lc.state_bytes = state_entries(c) * w;
        lc.tail_bytes = tail_entries(c, l) * w;
        r.linear_state += lc.state_bytes;
        r.conv_tails += lc.tail_bytes;
        break;
    }
    r.total += lc.total();
    r.layers.push_back(lc);
  }
  return r;
}

std::int64_t full_kv_bytes_per_token(const model::ModelConfig& c, int width) {
  const auto n = static_cast<std::int64_t>(model::layers_of(c, MixerKind::Full).size());
  return n * kv_per_token(c, width_of(c, width));
}

std::int64_t weight_bytes(const model::ModelConfig& c, int width) {
  return model::parameter_count(c) * width_of(c, width);
}

std::int64_t activation_bytes(const model::ModelConfig& c, int chunk, int width) {
  return std::int64_t{chunk} * c.d_model * c.n_blocks * width_of(c, width);
}

std::int64_t max_batch(const model::ModelConfig& c, const HardwareSpec& hw,
                       std::int64_t context, int chunk) {
  validate(hw);
  const double free = hw.memory_bytes - static_cast<double>(weight_bytes(c));
  const double per_seq = static_cast<double>(cache_bytes(c, context).total +
                                             activation_bytes(c, chunk));
  if (free < per_seq) return 0;
  return static_cast<std::int64_t>(std::floor(free / per_seq));
}

double decode_throughput(const model::ModelConfig& c, const HardwareSpec& hw,
                         std::int64_t context, std::int64_t batch) {
  validate(hw);
  if (batch < 1) fail(ErrorKind::Config, "decode_throughput: batch must be >= 1");
  const double weights = static_cast<double>(weight_bytes(c));
  const double cache = static_cast<double>(cache_bytes(c, context).total);
  const double need = weights + static_cast<double>(batch) * cache;
  if (need > hw.memory_bytes)
    fail(ErrorKind::Capacity,
         "decode: memory capacity is binding: weights " + gib(weights) + " + batch " +
             std::to_string(batch) + " x cache " + gib(cache) + " = " + gib(need) +
             " > " + gib(hw.memory_bytes) + " on '" + hw.name + "'");
  return static_cast<double>(batch) * hw.bandwidth / need;
}

double token_flops(const model::ModelConfig& c, std::int64_t position) {
  double f = dense_flops(c);
  const double att = 4.0 * c.attention.n_q_heads * c.attention.head_dim;
  for (const auto& l : c.layers) {
    switch (l.mixer) {
      case MixerKind::Full: f += att * static_cast<double>(position + 1); break;
      case MixerKind::SlidingWindow:
        f += att * static_cast<double>(std::min<std::int64_t>(position + 1, l.window));
        break;
      default: f += linear_token_flops(c, l); break;
    }
  }
  return f;
}

double prefill_throughput(const model::ModelConfig& c, const HardwareSpec& hw,
                          std::int64_t context, int chunk, std::int64_t batch) {
  validate(hw);
  if (context < 1 || chunk < 1 || batch < 1)
    fail(ErrorKind::Config, "prefill_throughput: context, chunk and batch must be >= 1");
  const int w = c.dtype_width;
  const double weights = static_cast<double>(weight_bytes(c));
  const double dense = dense_flops(c);
  const double att = 4.0 * c.attention.n_q_heads * c.attention.head_dim;
  const double kv = static_cast<double>(kv_per_token(c, w));
  double lin_flops = 0.0, lin_bytes = 0.0;
  int n_full = 0;
  std::vector<int> windows;
  for (const auto& l : c.layers) {
    if (l.mixer == MixerKind::Full) {
      ++n_full;
    } else if (l.mixer == MixerKind::SlidingWindow) {
      windows.push_back(l.window);
    } else {
      lin_flops += linear_token_flops(c, l);
      lin_bytes += 2.0 * static_cast<double>((state_entries(c) + tail_entries(c, l)) * w);
    }
  }
  const double B = static_cast<double>(batch);
  double seconds = 0.0;
  for (std::int64_t s0 = 0; s0 < context; s0 += chunk) {
    const double n = static_cast<double>(std::min<std::int64_t>(chunk, context - s0));
    const double s = static_cast<double>(s0);
    double flops = n * (dense + lin_flops) + n_full * att * (n * s + n * (n + 1.0) / 2.0);
    double bytes = lin_bytes + n_full * kv * (s + n);
    for (int win : windows) {
      flops += att * (clipped_sum(s + n, win) - clipped_sum(s, win));
      bytes += kv * (std::min(s, double(win)) + n);
    }
    seconds += std::max(B * flops / hw.compute, (weights + B * bytes) / hw.bandwidth);
  }
  return B * static_cast<double>(context) / seconds;
}

ThroughputReport optimize_chunk_and_batch(const model::ModelConfig& c,
                                          const HardwareSpec& hw, std::int64_t context,
                                          const ChunkSweep& sweep) {
  if (context < 1) fail(ErrorKind::Config, "optimize_chunk_and_batch: context must be >= 1");
  if (sweep.min_chunk < 1 || sweep.max_chunk < sweep.min_chunk || sweep.delta < 0.0)
    fail(ErrorKind::Config, "optimize_chunk_and_batch: bad chunk sweep");
  std::vector<ThroughputReport> cands;
  for (std::int64_t ch = sweep.min_chunk; ch <= sweep.max_chunk; ch *= 2) {
    const int chunk = static_cast<int>(ch);
    const std::int64_t b = max_batch(c, hw, context, chunk);
    if (b >= 1) {
      ThroughputReport r;
      r.context = context;
      r.chunk = chunk;
      r.batch = b;
      r.prefill_tps = prefill_throughput(c, hw, context, chunk, b);
      r.decode_tps = decode_throughput(c, hw, context, b);
      cands.push_back(r);
    }
    if (ch >= context) break;  // larger chunks change nothing
  }
  if (cands.empty())
    fail(ErrorKind::Capacity,
         "optimize_chunk_and_batch: no batch >= 1 fits on '" + hw.name + "' at context " +
             std::to_string(context) + " (weights " + gib(double(weight_bytes(c))) +
             ", cache per sequence " + gib(double(cache_bytes(c, context).total)) + ")");
  double best_prefill = 0.0;
  for (const auto& r : cands) best_prefill = std::max(best_prefill, r.prefill_tps);
  const ThroughputReport* best = nullptr;
  for (const auto& r : cands) {
    if (r.prefill_tps < (1.0 - sweep.delta) * best_prefill) continue;
    if (!best || r.decode_tps >= best->decode_tps) best = &r;
  }
  return *best;
}

std::vector<SpeedupPoint> speedup_curve(const model::ModelConfig& a,
                                        const model::ModelConfig& b,
                                        const HardwareSpec& hw,
                                        const std::vector<std::int64_t>& contexts,
                                        const ChunkSweep& sweep) {
  std::vector<SpeedupPoint> out;
  for (auto L : contexts) {
    SpeedupPoint p;
    p.context = L;
    p.a = optimize_chunk_and_batch(a, hw, L, sweep);
    p.b = optimize_chunk_and_batch(b, hw, L, sweep);
    p.prefill_x = p.a.prefill_tps / p.b.prefill_tps;
    p.decode_x = p.a.decode_tps / p.b.decode_tps;
    out.push_back(p);
  }
  return out;
}

void write_cache_csv(std::ostream& out, const CacheReport& r) {
  out << "layer,kind,bytes\n";
  for (const auto& l : r.layers)
    out << l.layer << ',' << model::mixer_name(l.kind) << ',' << l.total() << '\n';
  out << "total,all," << r.total << '\n';
}

void write_speedup_csv(std::ostream& out, const std::vector<SpeedupPoint>& curve) {
  out << "context,prefill_x,decode_x\n";
  out << std::setprecision(9);
  for (const auto& p : curve)
    out << p.context << ',' << p.prefill_x << ',' << p.decode_x << '\n';
}

}  // namespace postnas::perf
