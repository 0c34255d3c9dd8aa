// src/aggregator.cc

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

#include "mfa/aggregator.h"

#include <cmath>

#include "mfa/error.h"

namespace mfa {

Tensor ConcatBlockOutputs(const std::vector<Tensor> &blocks, bool use_mfa) {
  if (blocks.empty())
    throw Error(ErrorCode::kShapeMismatch, "no block outputs to aggregate");
  for (const Tensor &b : blocks)
    if (b.shape() != blocks[0].shape())
      throw Error(ErrorCode::kShapeMismatch,
                  "block outputs differ: " + ShapeString(b.shape()) + " vs " +
                      ShapeString(blocks[0].shape()));
  if (!use_mfa || blocks.size() == 1) return blocks.back();
  return Concat(blocks, -1);
}

Tensor AttentiveStatsPool(const Tensor &h, const PoolingParams &params,
                          bool weighted_mean, double eps, Tensor *alpha) {
  if (h.rank() != 3)
    throw Error(ErrorCode::kShapeMismatch,
                "pooling expects [B, T, D], got " + ShapeString(h.shape()));
  const Index batch = h.dim(0), t_len = h.dim(1), width = h.dim(2);
  Tensor scores = Tanh(Linear(h, params.w, params.b));
  Tensor e = Linear(scores, Reshape(params.v, {1, width}), params.k);
  Tensor weights = Softmax(Reshape(e, {batch, t_len}));
  if (alpha) *alpha = weights;
  Tensor w3 = Reshape(weights, {batch, 1, t_len});
  Tensor mean = Reshape(Matmul(w3, h), {batch, width});
  Tensor second = Reshape(Matmul(w3, Mul(h, h)), {batch, width});
  Tensor center = weighted_mean ? mean : MeanAxis(h, 1);
  Tensor deviation = Sqrt(ClampMin(Sub(second, Mul(center, center)), eps));
  return Concat({mean, deviation}, -1);
}

void Aggregator::Init(const ModelConfig &config, std::mt19937_64 &rng) {
  use_mfa_ = config.use_mfa;
  weighted_mean_ = config.pool_weighted_mean;
  eps_ = config.pool_eps;
  width_ = static_cast<Index>(config.d_model) *
           (use_mfa_ ? config.num_blocks : 1);
  norm_.Init(width_);
  double bound = 1.0 / std::sqrt(static_cast<double>(width_));
  pool_.w = UniformTensor({width_, width_}, bound, rng);
  pool_.b = UniformTensor({width_}, bound, rng);
  pool_.v = UniformTensor({width_}, bound, rng);
  pool_.k = Tensor::Zeros({1}, true);
  proj_.Init(2 * width_, config.embedding_dim, true, rng);
  bn_.Init(config.embedding_dim);
}

Tensor Aggregator::Aggregate(const std::vector<Tensor> &blocks) const {
  return norm_.Forward(ConcatBlockOutputs(blocks, use_mfa_));
}

Tensor Aggregator::Pool(const Tensor &features, Tensor *alpha) const {
  return AttentiveStatsPool(features, pool_, weighted_mean_, eps_, alpha);
}

Tensor Aggregator::Embed(const Tensor &pooled, const ForwardContext &ctx,
                         Tensor *pre_bn) const {
  if (pooled.rank() != 2 || pooled.dim(1) != 2 * width_)
    throw Error(ErrorCode::kShapeMismatch,
                "embedding head expects [B, " + std::to_string(2 * width_) +
                    "], got " + ShapeString(pooled.shape()));
  Tensor x = proj_.Forward(pooled);
  if (pre_bn) *pre_bn = x;
  return bn_.Forward(x, ctx.train);
}

void Aggregator::Register(const std::string &prefix, ParameterList &out) const {
  norm_.Register(prefix + ".mfa_norm", out);
  out.push_back({prefix + ".pool.w", pool_.w, true});
  out.push_back({prefix + ".pool.b", pool_.b, true});
  out.push_back({prefix + ".pool.v", pool_.v, true});
  out.push_back({prefix + ".pool.k", pool_.k, true});
  proj_.Register(prefix + ".embed", out);
  bn_.Register(prefix + ".embed_bn", out);
}

}  // namespace mfa
