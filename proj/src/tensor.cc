// src/tensor.cc

// Copyright 2026  The mfa authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include "mfa/tensor.h"

#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "mfa/error.h"

namespace mfa {

namespace {

thread_local bool g_grad_enabled = true;
std::atomic<bool> g_finite_checks{false};
// Written only by tests before any backward pass runs.
std::string g_corrupted_op;

}  // namespace

Index NumElements(const Shape &shape) {
  Index n = 1;
  for (Index d : shape) n *= d;
  return n;
}

std::string ShapeString(const Shape &shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace internal {

double *Node::InputGrad(std::size_t i) {
  Node &in = *inputs[i];
  if (!in.requires_grad) return nullptr;
  if (in.grad.size() != in.data.size()) in.grad.assign(in.data.size(), 0.0);
  return in.grad.data();
}

}  // namespace internal

Tensor Tensor::Zeros(const Shape &shape, bool requires_grad) {
  return Full(shape, 0.0, requires_grad);
}

Tensor Tensor::Full(const Shape &shape, double value, bool requires_grad) {
  for (Index d : shape) {
    if (d <= 0)
      throw Error(ErrorCode::kShapeMismatch,
                  "non-positive dimension in " + ShapeString(shape));
  }
  auto node = std::make_shared<internal::Node>();
  node->shape = shape;
  node->data.assign(static_cast<std::size_t>(NumElements(shape)), value);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::FromData(const Shape &shape, std::vector<double> data,
                        bool requires_grad) {
  if (NumElements(shape) != static_cast<Index>(data.size()))
    throw Error(ErrorCode::kShapeMismatch,
                "data length " + std::to_string(data.size()) +
                    " does not match shape " + ShapeString(shape));
  auto node = std::make_shared<internal::Node>();
  node->shape = shape;
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::Scalar(double value) { return FromData({}, {value}); }

Index Tensor::dim(int axis) const {
  int r = rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r)
    throw Error(ErrorCode::kShapeMismatch,
                "axis out of range for shape " + ShapeString(shape()));
  return node_->shape[static_cast<std::size_t>(axis)];
}

std::span<double> Tensor::mutable_grad() {
  if (node_->grad.size() != node_->data.size())
    node_->grad.assign(node_->data.size(), 0.0);
  return node_->grad;
}

double Tensor::item() const {
  if (numel() != 1)
    throw Error(ErrorCode::kShapeMismatch,
                "item() on tensor of shape " + ShapeString(shape()));
  return node_->data[0];
}

double Tensor::at(std::initializer_list<Index> index) const {
  if (index.size() != node_->shape.size())
    throw Error(ErrorCode::kShapeMismatch, "index rank mismatch");
  Index offset = 0;
  std::size_t k = 0;
  for (Index i : index) {
    Index d = node_->shape[k++];
    if (i < 0 || i >= d) throw Error(ErrorCode::kShapeMismatch, "index out of range");
    offset = offset * d + i;
  }
  return node_->data[static_cast<std::size_t>(offset)];
}

void Tensor::ZeroGrad() {
  std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::Detach() const { return FromData(shape(), node_->data); }

void Tensor::Backward() const {
  if (numel() != 1)
    throw Error(ErrorCode::kNonScalarLoss,
                "backward needs a scalar, got " + ShapeString(shape()));
  if (node_->consumed)
    throw Error(ErrorCode::kGraphConsumed, "graph already differentiated");
  if (!node_->requires_grad) return;

  // Iterative post-order DFS gives a topological order of the subgraph.
  std::vector<internal::Node *> order;
  std::unordered_set<internal::Node *> visited;
  std::vector<std::pair<internal::Node *, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto &[node, next] = stack.back();
    if (node->consumed)
      throw Error(ErrorCode::kGraphConsumed,
                  std::string("node '") + node->op + "' already differentiated");
    if (next < node->inputs.size()) {
      internal::Node *child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second)
        stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  node_->grad.assign(1, 1.0);
  const std::string corrupted = g_corrupted_op;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    internal::Node *node = *it;
    if (node->is_leaf()) continue;
    if (node->grad.size() != node->data.size())
      node->grad.assign(node->data.size(), 0.0);
    if (!corrupted.empty() && corrupted == node->op)
      for (double &g : node->grad) g *= 1.5;
    node->backward(*node);
  }
  // Release the interior of the graph; leaves keep their gradients.
  for (internal::Node *node : order) {
    if (node->is_leaf()) continue;
    node->backward = nullptr;
    node->inputs.clear();
    node->grad.clear();
    node->grad.shrink_to_fit();
    node->consumed = true;
  }
}

Tensor MakeOpResult(const char *op, Shape shape, std::vector<double> data,
                    std::vector<Tensor> inputs,
                    std::function<void(internal::Node &)> backward) {
  auto node = std::make_shared<internal::Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->op = op;
  if (g_finite_checks.load(std::memory_order_relaxed)) {
    for (double v : node->data) {
      if (!std::isfinite(v))
        throw Error(ErrorCode::kNonFinite,
                    std::string("op '") + op + "' produced a non-finite value");
    }
  }
  bool needs_grad = false;
  if (g_grad_enabled) {
    for (const Tensor &t : inputs) needs_grad = needs_grad || t.requires_grad();
  }
  if (needs_grad) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (const Tensor &t : inputs) node->inputs.push_back(t.node());
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

bool GradEnabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) {
  g_grad_enabled = false;
}
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

void SetFiniteChecks(bool enabled) { g_finite_checks = enabled; }
bool FiniteChecksEnabled() { return g_finite_checks; }

void SetCorruptedOpForTesting(const std::string &op) { g_corrupted_op = op; }

}  // namespace mfa
