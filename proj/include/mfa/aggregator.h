// include/mfa/aggregator.h

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

#ifndef MFA_AGGREGATOR_H_
#define MFA_AGGREGATOR_H_

#include <random>
#include <vector>

#include "mfa/config.h"
#include "mfa/layers.h"

namespace mfa {

/// Concatenates h_1..h_L along the feature axis (D = d * L). With
/// use_mfa = false only the last block output is kept (D = d).
Tensor ConcatBlockOutputs(const std::vector<Tensor> &blocks, bool use_mfa);

// Frame-attention parameters: W [D, D], b [D], v [D], k [1].
struct PoolingParams {
  Tensor w, b, v, k;
};

/// Attentive statistics pooling over the frames of h: [B, T, D] -> [B, 2D].
///
///   e_t   = v . tanh(W h_t + b) + k
///   alpha = softmax_t(e)
///   mu    = sum_t alpha_t h_t
///   sigma = sqrt(max(sum_t alpha_t h_t*h_t - m*m, eps))
///
/// where m is the weighted mean mu, or the plain frame average when
/// weighted_mean is false. Output is [mu, sigma]. If `alpha` is non-null it
/// receives the [B, T] attention weights.
Tensor AttentiveStatsPool(const Tensor &h, const PoolingParams &params,
                          bool weighted_mean, double eps,
                          Tensor *alpha = nullptr);

class Aggregator {
 public:
  void Init(const ModelConfig &config, std::mt19937_64 &rng);

  // Concat + LayerNorm, [B, T', D].
  Tensor Aggregate(const std::vector<Tensor> &blocks) const;
  Tensor Pool(const Tensor &features, Tensor *alpha = nullptr) const;
  // Linear 2D -> embedding_dim, then batch norm. `pre_bn` receives the
  // linear output when non-null.
  Tensor Embed(const Tensor &pooled, const ForwardContext &ctx,
               Tensor *pre_bn = nullptr) const;

  void Register(const std::string &prefix, ParameterList &out) const;

  Index width() const { return width_; }
  PoolingParams &pooling() { return pool_; }
  LinearLayer &projection() { return proj_; }
  BatchNormLayer &batch_norm() { return bn_; }

 private:
  Index width_ = 0;
  bool use_mfa_ = true;
  bool weighted_mean_ = true;
  double eps_ = 1e-9;
  LayerNormLayer norm_;
  PoolingParams pool_;
  LinearLayer proj_;
  BatchNormLayer bn_;
};

}  // namespace mfa

#endif  // MFA_AGGREGATOR_H_
