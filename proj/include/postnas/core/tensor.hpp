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

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "postnas/core/rng.hpp"

namespace postnas {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// One recorded value in the autodiff graph. Leaves (parameters, inputs) have
// no backward rule. An op node's backward reads `grad` and accumulates into
// its parents' grads; parents that do not require grad are skipped.
struct Node {
  Shape shape;
  std::vector<float> value;
  std::vector<float> grad;  // empty until something flows into it
  bool requires_grad = false;
  std::uint64_t seq = 0;  // recording order; backward runs in reverse
  std::string op;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  std::vector<float>& ensure_grad();
  // Grad buffer of parent i, or nullptr when that parent needs none.
  float* parent_grad(std::size_t i);
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, float value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<float> values,
                     bool requires_grad = false);
  static Tensor scalar(float value);
  static Tensor randn(Shape shape, Rng& rng, float stddev,
                      bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  // Negative axes count from the back.
  std::int64_t dim(int axis) const;
  std::int64_t numel() const {
    return static_cast<std::int64_t>(node_->value.size());
  }

  std::span<const float> data() const { return node_->value; }
  // Only parameter initialization and optimizer updates write through this.
  std::span<float> mutable_data() { return node_->value; }
  float item() const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool flag) { node_->requires_grad = flag; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const float> grad() const { return node_->grad; }
  std::span<float> mutable_grad() { return node_->ensure_grad(); }
  void clear_grad() { node_->grad.clear(); }

  // New leaf with copied values and no history.
  Tensor detach() const;
  Tensor clone(bool requires_grad) const;

  const std::string& op() const { return node_->op; }
  Node& node() const { return *node_; }
  const std::shared_ptr<Node>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// Graph recording is on by default; evaluation code disables it.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Builds an op result. The node records `parents` and `backward` only when
// grad mode is on and at least one parent requires grad.
Tensor make_op(std::string op, Shape shape, std::vector<float> value,
               std::vector<Tensor> parents, std::function<void(Node&)> backward);

// Reverse-mode sweep from a scalar. Leaf grads accumulate; intermediate grads
// and saved buffers are released afterwards.
void backward(const Tensor& loss);

// Throws Error(Numeric) naming `what` when any element is NaN or Inf.
void validate_finite(const Tensor& t, std::string_view what);
bool all_finite(std::span<const float> values);

}  // namespace postnas
