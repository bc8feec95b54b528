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

#include "postnas/core/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "postnas/core/error.hpp"

namespace postnas {
namespace {

std::atomic<std::uint64_t> g_seq{1};
thread_local bool t_grad_enabled = true;

std::shared_ptr<Node> new_node(Shape shape, std::vector<float> value,
                               bool requires_grad) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  node->seq = g_seq.fetch_add(1, std::memory_order_relaxed);
  return node;
}

}  // namespace

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::vector<float>& Node::ensure_grad() {
  if (grad.empty()) grad.assign(value.size(), 0.0f);
  return grad;
}

float* Node::parent_grad(std::size_t i) {
  Node& p = *parents[i];
  if (!p.requires_grad) return nullptr;
  return p.ensure_grad().data();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0f, requires_grad);
}

Tensor Tensor::full(Shape shape, float value, bool requires_grad) {
  for (auto d : shape)
    if (d < 0) fail(ErrorKind::Shape, "negative extent in " + shape_str(shape));
  const auto n = static_cast<std::size_t>(shape_numel(shape));
  return Tensor(new_node(std::move(shape), std::vector<float>(n, value),
                         requires_grad));
}

Tensor Tensor::from(Shape shape, std::vector<float> values,
                    bool requires_grad) {
  if (shape_numel(shape) != static_cast<std::int64_t>(values.size()))
    fail(ErrorKind::Shape, "Tensor::from: shape " + shape_str(shape) +
                               " does not hold " +
                               std::to_string(values.size()) + " values");
  return Tensor(new_node(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::scalar(float value) { return from({}, {value}); }

Tensor Tensor::randn(Shape shape, Rng& rng, float stddev, bool requires_grad) {
  const auto n = static_cast<std::size_t>(shape_numel(shape));
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.normal()) * stddev;
  return from(std::move(shape), std::move(v), requires_grad);
}

std::int64_t Tensor::dim(int axis) const {
  const int r = rank();
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r)
    fail(ErrorKind::Shape, "axis " + std::to_string(axis) +
                               " out of range for shape " + shape_str(shape()));
  return shape()[static_cast<std::size_t>(a)];
}

float Tensor::item() const {
  if (numel() != 1)
    fail(ErrorKind::Shape,
         "item() on tensor of shape " + shape_str(shape()));
  return node_->value[0];
}

Tensor Tensor::detach() const {
  return Tensor(new_node(shape(), node_->value, false));
}

Tensor Tensor::clone(bool requires_grad) const {
  return Tensor(new_node(shape(), node_->value, requires_grad));
}

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) {
  t_grad_enabled = false;
}
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

Tensor make_op(std::string op, Shape shape, std::vector<float> value,
               std::vector<Tensor> parents,
               std::function<void(Node&)> backward) {
  bool needs = false;
  if (t_grad_enabled) {
    for (const auto& p : parents) needs = needs || p.requires_grad();
  }
  auto node = new_node(std::move(shape), std::move(value), needs);
  node->op = std::move(op);
  if (needs) {
    node->parents.reserve(parents.size());
    for (auto& p : parents) node->parents.push_back(p.node_ptr());
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1)
    fail(ErrorKind::Shape,
         "backward: loss must be a scalar, got shape " +
             (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
  if (!loss.requires_grad()) return;

  // Owning references keep every node alive while parents lists are cleared.
  std::vector<std::shared_ptr<Node>> order;
  std::unordered_set<Node*> seen;
  std::vector<std::shared_ptr<Node>> stack{loss.node_ptr()};
  while (!stack.empty()) {
    auto n = std::move(stack.back());
    stack.pop_back();
    if (!seen.insert(n.get()).second) continue;
    for (auto& p : n->parents)
      if (p->requires_grad) stack.push_back(p);
    order.push_back(std::move(n));
  }
  // Recording order is a valid topological order.
  std::sort(order.begin(), order.end(),
            [](const auto& a, const auto& b) { return a->seq > b->seq; });

  loss.node().ensure_grad()[0] += 1.0f;
  for (auto& n : order) {
    if (!n->backward) continue;  // leaf
    if (!n->grad.empty()) n->backward(*n);
    n->backward = nullptr;
    n->parents.clear();
    n->grad.clear();
    n->grad.shrink_to_fit();
  }
}

bool all_finite(std::span<const float> values) {
  return std::all_of(values.begin(), values.end(),
                     [](float x) { return std::isfinite(x); });
}

void validate_finite(const Tensor& t, std::string_view what) {
  if (!all_finite(t.data()))
    fail(ErrorKind::Numeric,
         std::string(what) + ": non-finite value in tensor of shape " +
             shape_str(t.shape()));
}

}  // namespace postnas
