// include/mfa/ops.h

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

#ifndef MFA_OPS_H_
#define MFA_OPS_H_

#include <random>
#include <vector>

#include "mfa/tensor.h"

namespace mfa {

// Differentiable operations. Every op records an exact vector-Jacobian
// product when grad recording is on. Binary elementwise ops accept a second
// operand whose shape is a suffix of the first's (it is tiled over the
// leading dimensions); nothing else broadcasts.

Tensor Add(const Tensor &a, const Tensor &b);
Tensor Sub(const Tensor &a, const Tensor &b);
Tensor Mul(const Tensor &a, const Tensor &b);
Tensor Scale(const Tensor &a, double c);
Tensor AddScalar(const Tensor &a, double c);

Tensor Relu(const Tensor &x);
Tensor Tanh(const Tensor &x);
Tensor Sigmoid(const Tensor &x);
Tensor Swish(const Tensor &x);
Tensor Sqrt(const Tensor &x);
// max(x, floor); gradient passes only where x > floor.
Tensor ClampMin(const Tensor &x, double floor);
// Splits `axis` into halves a, b and returns a * sigmoid(b).
Tensor Glu(const Tensor &x, int axis);
// Inverted dropout: survivors are scaled by 1/(1-p). Identity when !train.
Tensor Dropout(const Tensor &x, double p, bool train, std::mt19937_64 &rng);

// Numerically stable softmax over the last axis.
Tensor Softmax(const Tensor &x);
// Mean over the batch of -log softmax(logits)[label]; logits is [batch, C].
Tensor CrossEntropy(const Tensor &logits, const std::vector<int> &labels);
// x / max(||x||, eps) over the last axis.
Tensor L2Normalize(const Tensor &x, double eps = 1e-12);

Tensor Sum(const Tensor &x);
Tensor Mean(const Tensor &x);
// Mean over one axis; the axis is removed from the shape.
Tensor MeanAxis(const Tensor &x, int axis);

/// a: [..., m, k]; b: [..., k, n] with identical leading dims, or a plain
/// [k, n] matrix shared across the batch. With transpose_b the last two dims
/// of b are read as [n, k].
Tensor Matmul(const Tensor &a, const Tensor &b, bool transpose_b = false);
// x: [..., in]; weight: [out, in]; bias: [out] or undefined.
Tensor Linear(const Tensor &x, const Tensor &weight, const Tensor &bias);

Tensor Reshape(const Tensor &x, const Shape &shape);
Tensor Permute(const Tensor &x, const std::vector<int> &perm);
Tensor Concat(const std::vector<Tensor> &parts, int axis);
Tensor Slice(const Tensor &x, int axis, Index start, Index length);

/// p: [..., T, 2T-1] scores indexed by relative offset j = (t - tau) + T - 1.
/// Returns out[..., t, tau] = p[..., t, t - tau + T - 1].
Tensor RelativeGather(const Tensor &p);

// Normalizes over the last axis. gamma/beta: [d].
Tensor LayerNorm(const Tensor &x, const Tensor &gamma, const Tensor &beta,
                 double eps = 1e-5);

struct BatchNormState {
  Tensor running_mean;
  Tensor running_var;
};

/// x: [batch, C] or [batch, C, T]. Train mode normalizes with the batch
/// statistics and folds them into `state` with the given momentum; eval mode
/// uses the running statistics.
Tensor BatchNorm1d(const Tensor &x, const Tensor &gamma, const Tensor &beta,
                   BatchNormState &state, bool train, double momentum = 0.1,
                   double eps = 1e-5);

/// Cross-correlation. x: [batch, C_in, T]; weight: [C_out, C_in/groups, K];
/// bias: [C_out] or undefined.
Tensor Conv1d(const Tensor &x, const Tensor &weight, const Tensor &bias,
              Index stride, Index padding, Index groups);

/// x: [batch, C_in, H, W]; weight: [C_out, C_in, KH, KW].
Tensor Conv2d(const Tensor &x, const Tensor &weight, const Tensor &bias,
              Index stride_h, Index stride_w, Index pad_h, Index pad_w);

}  // namespace mfa

#endif  // MFA_OPS_H_
