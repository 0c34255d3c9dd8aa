// include/mfa/encoder.h

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

#ifndef MFA_ENCODER_H_
#define MFA_ENCODER_H_

#include <random>
#include <vector>

#include "mfa/config.h"
#include "mfa/layers.h"

namespace mfa {

// Frame count after the subsampling front-end: ceil(T / 2) per stage.
Index SubsampledLength(Index t_len, int subsampling_rate);

/// Sinusoidal encodings of the relative offsets -(T-1)..T-1; row j encodes
/// offset j - (T - 1). Shape [2T-1, d].
Tensor RelativeSinusoidalEncoding(Index t_len, Index d);
// Absolute encodings of positions 0..T-1, shape [T, d].
Tensor AbsoluteSinusoidalEncoding(Index t_len, Index d);

/// scores[b, t, tau] = query[b, t] . rel[(t - tau) + T - 1].
/// query: [B, T, dh]; rel: [2T-1, dh].
Tensor RelativePositionScores(const Tensor &query, const Tensor &rel);

class ConvSubsampling {
 public:
  void Init(const ModelConfig &config, std::mt19937_64 &rng);
  // [B, T, F] -> [B, T', d]
  Tensor Forward(const Tensor &fbank) const;
  void Register(const std::string &prefix, ParameterList &out) const;

 private:
  struct Stage {
    Tensor weight, bias;
  };
  std::vector<Stage> stages_;
  LinearLayer proj_;
};

/// Multi-head self-attention. With relative PE the logits are
/// [(q_t + u) . k_tau + (q_t + v) . r_(t-tau)] / sqrt(d_h), where r is a
/// learned projection of the sinusoidal offset encoding and u, v are the
/// global content and position biases.
class MultiHeadSelfAttention {
 public:
  void Init(const ModelConfig &config, bool pre_norm, std::mt19937_64 &rng);
  // When `weights` is non-null it receives one [B, T, T] tensor per head.
  Tensor Forward(const Tensor &x, const ForwardContext &ctx,
                 std::vector<Tensor> *weights = nullptr) const;
  void Register(const std::string &prefix, ParameterList &out) const;

  // Position-only logit term v_h . r_(t-tau) for one head, [T, T].
  Tensor PositionBias(Index t_len, int head) const;

  LinearLayer &output_projection() { return out_; }

 private:
  int num_heads_ = 1;
  Index d_model_ = 0;
  bool relative_ = true;
  bool pre_norm_ = true;
  double dropout_ = 0.0;
  LayerNormLayer norm_;
  LinearLayer query_, key_, value_, out_;
  LinearLayer pos_;  // no bias
  Tensor pos_bias_u_, pos_bias_v_;
};

class FeedForwardModule {
 public:
  // Conformer flavour: LayerNorm -> linear -> swish -> dropout -> linear ->
  // dropout. Without pre_norm the activation is ReLU (Transformer layer).
  void Init(const ModelConfig &config, bool pre_norm, std::mt19937_64 &rng);
  Tensor Forward(const Tensor &x, const ForwardContext &ctx) const;
  void Register(const std::string &prefix, ParameterList &out) const;
  LinearLayer &output_projection() { return w2_; }

 private:
  bool pre_norm_ = true;
  double dropout_ = 0.0;
  LayerNormLayer norm_;
  LinearLayer w1_, w2_;
};

class ConvolutionModule {
 public:
  void Init(const ModelConfig &config, std::mt19937_64 &rng);
  // [B, T, d] -> [B, T, d]
  Tensor Forward(const Tensor &x, const ForwardContext &ctx) const;
  void Register(const std::string &prefix, ParameterList &out) const;
  // Second pointwise convolution (weight [d, d, 1], bias [d]).
  Tensor &output_weight() { return pw2_weight_; }
  Tensor &output_bias() { return pw2_bias_; }

 private:
  Index padding_ = 0;
  double dropout_ = 0.0;
  LayerNormLayer norm_;
  Tensor pw1_weight_, pw1_bias_;
  Tensor dw_weight_, dw_bias_;
  BatchNormLayer bn_;
  Tensor pw2_weight_, pw2_bias_;
};

/// One encoder layer. Conformer:
///   h1 = x + 1/2 FFN(x); h2 = h1 + MHSA(h1); h3 = h2 + Conv(h2);
///   out = LayerNorm(h3 + 1/2 FFN(h3)).
/// Transformer (post-norm): h = LN(x + MHSA(x)); out = LN(h + FFN(h)).
class EncoderBlock {
 public:
  void Init(const ModelConfig &config, std::mt19937_64 &rng);
  Tensor Forward(const Tensor &x, const ForwardContext &ctx,
                 std::vector<Tensor> *attention = nullptr) const;
  void Register(const std::string &prefix, ParameterList &out) const;

  // Zeroes every residual branch's output projection (weights and biases).
  void ZeroBranchOutputs();
  MultiHeadSelfAttention &attention() { return mhsa_; }
  const LayerNormLayer &final_norm() const { return final_norm_; }

 private:
  BlockKind kind_ = BlockKind::kConformer;
  bool macaron_ = true;
  bool conv_enabled_ = true;
  FeedForwardModule ffn1_, ffn2_;
  MultiHeadSelfAttention mhsa_;
  ConvolutionModule conv_;
  LayerNormLayer mhsa_norm_;  // transformer post-norm after attention
  LayerNormLayer final_norm_;
};

/// Subsampling front-end followed by the block stack. Returns every block's
/// output, h_1..h_L, each [B, T', d].
class Encoder {
 public:
  void Init(const ModelConfig &config, std::mt19937_64 &rng);
  std::vector<Tensor> Forward(const Tensor &fbank, const ForwardContext &ctx) const;
  void Register(const std::string &prefix, ParameterList &out) const;

  const ConvSubsampling &subsampling() const { return subsampling_; }
  std::vector<EncoderBlock> &blocks() { return blocks_; }

 private:
  bool absolute_pe_ = false;
  ConvSubsampling subsampling_;
  std::vector<EncoderBlock> blocks_;
};

}  // namespace mfa

#endif  // MFA_ENCODER_H_
