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

#include <cmath>
#include <iostream>
#include <mutex>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "postnas/core/diagnostics.hpp"
#include "postnas/core/error.hpp"
#include "postnas/core/rng.hpp"

namespace postnas {

int exit_code(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Usage:
    case ErrorKind::Config:
      return 2;
    case ErrorKind::Io:
      return 3;
    case ErrorKind::Numeric:
      return 4;
    case ErrorKind::Capacity:
      return 5;
    case ErrorKind::Shape:
    case ErrorKind::State:
      return 6;
  }
  return 1;
}

void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

namespace {
struct WarningLog {
  std::mutex mu;
  std::vector<std::string> messages;
  std::size_t total = 0;
  bool echo = false;
};
WarningLog& warning_log() {
  static WarningLog log;
  return log;
}
}  // namespace

void record_warning(std::string message) {
  auto& log = warning_log();
  std::lock_guard lock(log.mu);
  if (log.echo) std::cerr << "warning: " << message << '\n';
  ++log.total;
  // Bounded; a long training run can hit the same degenerate input often.
  if (log.messages.size() < 1024) log.messages.push_back(std::move(message));
}

std::vector<std::string> take_warnings() {
  auto& log = warning_log();
  std::lock_guard lock(log.mu);
  return std::exchange(log.messages, {});
}

std::size_t warning_count() {
  auto& log = warning_log();
  std::lock_guard lock(log.mu);
  return log.total;
}

void set_warning_echo(bool enabled) {
  auto& log = warning_log();
  std::lock_guard lock(log.mu);
  log.echo = enabled;
}

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t Rng::next() {
  state_ += 0x9e3779b97f4a7c15ULL;
  return mix64(state_);
}

double Rng::uniform() {
  return static_cast<double>(next() >> 11) * 0x1.0p-53;
}

float Rng::uniform(float lo, float hi) {
  return lo + static_cast<float>(uniform()) * (hi - lo);
}

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) return 0;
  // Rejection sampling keeps the distribution exactly uniform.
  const std::uint64_t limit = max() - max() % n;
  std::uint64_t x;
  do {
    x = next();
  } while (x >= limit);
  return x % n;
}

double Rng::normal() {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

Rng Rng::split(std::uint64_t stream) const {
  return Rng(mix64(state_ ^ mix64(stream + 0x632be59bd9b4e019ULL)));
}

}  // namespace postnas
