// include/mfa/tensor.h

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

#ifndef MFA_TENSOR_H_
#define MFA_TENSOR_H_

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace mfa {

using Index = std::int64_t;
using Shape = std::vector<Index>;

Index NumElements(const Shape &shape);
std::string ShapeString(const Shape &shape);

namespace internal {

// One vertex of the recorded computation graph. A node owns its forward
// value; interior nodes also keep their inputs alive and a closure that
// pushes the node's gradient into the inputs' gradients.
struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  bool consumed = false;
  const char *op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node &self)> backward;

  bool is_leaf() const { return !backward; }
  // Returns the gradient buffer of input i, allocating it on first use, or
  // nullptr when that input does not take part in differentiation.
  double *InputGrad(std::size_t i);
};

}  // namespace internal

/// Dense row-major array of doubles with reverse-mode differentiation.
///
/// Tensors are handles: copying a Tensor shares the underlying storage.
/// Values produced by ops are treated as immutable; only leaves (parameters,
/// inputs) may be written through mutable_data().
class Tensor {
 public:
  Tensor() = default;

  static Tensor Zeros(const Shape &shape, bool requires_grad = false);
  static Tensor Full(const Shape &shape, double value,
                     bool requires_grad = false);
  static Tensor FromData(const Shape &shape, std::vector<double> data,
                         bool requires_grad = false);
  static Tensor Scalar(double value);

  bool defined() const { return node_ != nullptr; }
  const Shape &shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  // Negative axes count from the back.
  Index dim(int axis) const;
  Index numel() const { return static_cast<Index>(node_->data.size()); }

  std::span<const double> data() const { return node_->data; }
  std::span<double> mutable_data() { return node_->data; }
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad();
  double item() const;
  double at(std::initializer_list<Index> index) const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool value) { node_->requires_grad = value; }
  bool is_leaf() const { return node_->is_leaf(); }
  const char *op_name() const { return node_->op; }
  void ZeroGrad();

  // Copy of the values with no graph history.
  Tensor Detach() const;

  /// Runs the reverse sweep from this scalar. Leaf gradients accumulate
  /// (callers zero them between steps); interior nodes are released
  /// afterwards, so a second call on the same graph throws GraphConsumed.
  void Backward() const;

  const std::shared_ptr<internal::Node> &node() const { return node_; }
  explicit Tensor(std::shared_ptr<internal::Node> node)
      : node_(std::move(node)) {}

 private:
  std::shared_ptr<internal::Node> node_;
};

/// Builds the output of an op. The backward closure is kept only when grad
/// recording is enabled and some input requires grad.
Tensor MakeOpResult(const char *op, Shape shape, std::vector<double> data,
                    std::vector<Tensor> inputs,
                    std::function<void(internal::Node &)> backward);

bool GradEnabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard &) = delete;
  NoGradGuard &operator=(const NoGradGuard &) = delete;

 private:
  bool previous_;
};

// When enabled every op checks its output for NaN/Inf and throws NonFinite.
void SetFiniteChecks(bool enabled);
bool FiniteChecksEnabled();

// Test hook: the backward of every node whose op name matches is fed a
// gradient scaled by 1.5. Empty string disables.
void SetCorruptedOpForTesting(const std::string &op);

}  // namespace mfa

#endif  // MFA_TENSOR_H_
