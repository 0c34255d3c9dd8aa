// src/encoder.cc

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

#include "mfa/encoder.h"

#include <cmath>

#include "mfa/error.h"

namespace mfa {

Index SubsampledLength(Index t_len, int subsampling_rate) {
  for (int r = subsampling_rate; r > 1; r /= 2) t_len = (t_len + 1) / 2;
  return t_len;
}

namespace {

double SinusoidAngle(double position, Index pair, Index d) {
  return position / std::pow(10000.0, static_cast<double>(2 * pair) /
                                          static_cast<double>(d));
}

Tensor SinusoidTable(Index rows, Index d, Index first_position) {
  std::vector<double> data(static_cast<std::size_t>(rows * d));
  for (Index j = 0; j < rows; ++j) {
    double pos = static_cast<double>(first_position + j);
    for (Index i = 0; i < d / 2; ++i) {
      double a = SinusoidAngle(pos, i, d);
      data[j * d + 2 * i] = std::sin(a);
      data[j * d + 2 * i + 1] = std::cos(a);
    }
  }
  return Tensor::FromData({rows, d}, std::move(data));
}

}  // namespace

Tensor RelativeSinusoidalEncoding(Index t_len, Index d) {
  return SinusoidTable(2 * t_len - 1, d, -(t_len - 1));
}

Tensor AbsoluteSinusoidalEncoding(Index t_len, Index d) {
  return SinusoidTable(t_len, d, 0);
}

Tensor RelativePositionScores(const Tensor &query, const Tensor &rel) {
  return RelativeGather(Matmul(query, rel, /*transpose_b=*/true));
}

// ---------------------------------------------------------------------------

void ConvSubsampling::Init(const ModelConfig &config, std::mt19937_64 &rng) {
  stages_.clear();
  Index in_channels = 1;
  Index freq = config.num_mel_bins;
  for (int r = config.subsampling_rate; r > 1; r /= 2) {
    Index out_channels = config.subsampling_channels;
    double bound = 1.0 / std::sqrt(static_cast<double>(in_channels * 9));
    Stage s;
    s.weight = UniformTensor({out_channels, in_channels, 3, 3}, bound, rng);
    s.bias = UniformTensor({out_channels}, bound, rng);
    stages_.push_back(std::move(s));
    in_channels = out_channels;
    freq = (freq + 1) / 2;
  }
  Index flat = stages_.empty() ? config.num_mel_bins : in_channels * freq;
  proj_.Init(flat, config.d_model, true, rng);
}

Tensor ConvSubsampling::Forward(const Tensor &fbank) const {
  if (fbank.rank() != 3)
    throw Error(ErrorCode::kShapeMismatch,
                "subsampling expects [B, T, F], got " + ShapeString(fbank.shape()));
  if (stages_.empty()) return proj_.Forward(fbank);
  Index batch = fbank.dim(0);
  Tensor x = Reshape(fbank, {batch, 1, fbank.dim(1), fbank.dim(2)});
  for (const Stage &s : stages_) x = Relu(Conv2d(x, s.weight, s.bias, 2, 2, 1, 1));
  Index channels = x.dim(1), t_out = x.dim(2), freq = x.dim(3);
  x = Permute(x, {0, 2, 1, 3});
  x = Reshape(x, {batch, t_out, channels * freq});
  return proj_.Forward(x);
}

void ConvSubsampling::Register(const std::string &prefix,
                               ParameterList &out) const {
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    std::string p = prefix + ".conv" + std::to_string(i);
    out.push_back({p + ".weight", stages_[i].weight, true});
    out.push_back({p + ".bias", stages_[i].bias, true});
  }
  proj_.Register(prefix + ".proj", out);
}

// ---------------------------------------------------------------------------

void MultiHeadSelfAttention::Init(const ModelConfig &config, bool pre_norm,
                                  std::mt19937_64 &rng) {
  num_heads_ = config.num_heads;
  d_model_ = config.d_model;
  relative_ = config.use_relative_pe;
  pre_norm_ = pre_norm;
  dropout_ = config.dropout;
  if (pre_norm_) norm_.Init(d_model_);
  query_.Init(d_model_, d_model_, true, rng);
  key_.Init(d_model_, d_model_, true, rng);
  value_.Init(d_model_, d_model_, true, rng);
  out_.Init(d_model_, d_model_, true, rng);
  if (relative_) {
    pos_.Init(d_model_, d_model_, false, rng);
    Index dh = d_model_ / num_heads_;
    pos_bias_u_ = Tensor::Zeros({num_heads_, dh}, true);
    pos_bias_v_ = Tensor::Zeros({num_heads_, dh}, true);
  }
}

Tensor MultiHeadSelfAttention::Forward(const Tensor &x,
                                       const ForwardContext &ctx,
                                       std::vector<Tensor> *weights) const {
  if (x.rank() != 3 || x.dim(2) != d_model_)
    throw Error(ErrorCode::kShapeMismatch,
                "attention expects [B, T, " + std::to_string(d_model_) +
                    "], got " + ShapeString(x.shape()));
  const Index t_len = x.dim(1);
  const Index dh = d_model_ / num_heads_;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Tensor h = pre_norm_ ? norm_.Forward(x) : x;
  Tensor q = query_.Forward(h);
  Tensor k = key_.Forward(h);
  Tensor v = value_.Forward(h);
  Tensor rel;
  if (relative_) rel = pos_.Forward(RelativeSinusoidalEncoding(t_len, d_model_));

  std::vector<Tensor> heads;
  heads.reserve(static_cast<std::size_t>(num_heads_));
  for (int hd = 0; hd < num_heads_; ++hd) {
    Tensor qh = Slice(q, -1, hd * dh, dh);
    Tensor kh = Slice(k, -1, hd * dh, dh);
    Tensor vh = Slice(v, -1, hd * dh, dh);
    Tensor logits;
    if (relative_) {
      Tensor u = Reshape(Slice(pos_bias_u_, 0, hd, 1), {dh});
      Tensor pv = Reshape(Slice(pos_bias_v_, 0, hd, 1), {dh});
      Tensor content = Matmul(Add(qh, u), kh, true);
      Tensor position =
          RelativePositionScores(Add(qh, pv), Slice(rel, -1, hd * dh, dh));
      logits = Add(content, position);
    } else {
      logits = Matmul(qh, kh, true);
    }
    Tensor attn = Softmax(Scale(logits, scale));
    if (weights) weights->push_back(attn);
    heads.push_back(Matmul(attn, vh));
  }
  Tensor merged = num_heads_ == 1 ? heads[0] : Concat(heads, -1);
  return ApplyDropout(out_.Forward(merged), dropout_, ctx);
}

Tensor MultiHeadSelfAttention::PositionBias(Index t_len, int head) const {
  if (!relative_)
    throw Error(ErrorCode::kInvalidArgument, "attention has no relative term");
  const Index dh = d_model_ / num_heads_;
  Tensor rel = pos_.Forward(RelativeSinusoidalEncoding(t_len, d_model_));
  std::vector<double> rows;
  std::span<const double> vb = pos_bias_v_.data();
  for (Index t = 0; t < t_len; ++t)
    rows.insert(rows.end(), vb.begin() + head * dh, vb.begin() + (head + 1) * dh);
  Tensor query = Tensor::FromData({1, t_len, dh}, std::move(rows));
  Tensor scores = RelativePositionScores(query, Slice(rel, -1, head * dh, dh));
  return Reshape(scores, {t_len, t_len});
}

void MultiHeadSelfAttention::Register(const std::string &prefix,
                                      ParameterList &out) const {
  if (pre_norm_) norm_.Register(prefix + ".norm", out);
  query_.Register(prefix + ".query", out);
  key_.Register(prefix + ".key", out);
  value_.Register(prefix + ".value", out);
  out_.Register(prefix + ".out", out);
  if (relative_) {
    pos_.Register(prefix + ".pos", out);
    out.push_back({prefix + ".pos_bias_u", pos_bias_u_, true});
    out.push_back({prefix + ".pos_bias_v", pos_bias_v_, true});
  }
}

// ---------------------------------------------------------------------------

void FeedForwardModule::Init(const ModelConfig &config, bool pre_norm,
                             std::mt19937_64 &rng) {
  pre_norm_ = pre_norm;
  dropout_ = config.dropout;
  if (pre_norm_) norm_.Init(config.d_model);
  w1_.Init(config.d_model, config.ffn_hidden, true, rng);
  w2_.Init(config.ffn_hidden, config.d_model, true, rng);
}

Tensor FeedForwardModule::Forward(const Tensor &x,
                                  const ForwardContext &ctx) const {
  Tensor h = pre_norm_ ? norm_.Forward(x) : x;
  h = w1_.Forward(h);
  h = pre_norm_ ? Swish(h) : Relu(h);
  h = ApplyDropout(h, dropout_, ctx);
  return ApplyDropout(w2_.Forward(h), dropout_, ctx);
}

void FeedForwardModule::Register(const std::string &prefix,
                                 ParameterList &out) const {
  if (pre_norm_) norm_.Register(prefix + ".norm", out);
  w1_.Register(prefix + ".w1", out);
  w2_.Register(prefix + ".w2", out);
}

// ---------------------------------------------------------------------------

void ConvolutionModule::Init(const ModelConfig &config, std::mt19937_64 &rng) {
  const Index d = config.d_model;
  const Index kernel = config.conv_kernel;
  padding_ = kernel / 2;
  dropout_ = config.dropout;
  norm_.Init(d);
  double b1 = 1.0 / std::sqrt(static_cast<double>(d));
  pw1_weight_ = UniformTensor({2 * d, d, 1}, b1, rng);
  pw1_bias_ = UniformTensor({2 * d}, b1, rng);
  double bd = 1.0 / std::sqrt(static_cast<double>(kernel));
  dw_weight_ = UniformTensor({d, 1, kernel}, bd, rng);
  dw_bias_ = UniformTensor({d}, bd, rng);
  bn_.Init(d);
  pw2_weight_ = UniformTensor({d, d, 1}, b1, rng);
  pw2_bias_ = UniformTensor({d}, b1, rng);
}

Tensor ConvolutionModule::Forward(const Tensor &x,
                                  const ForwardContext &ctx) const {
  const Index d = x.dim(2);
  Tensor h = Permute(norm_.Forward(x), {0, 2, 1});  // [B, d, T]
  h = Conv1d(h, pw1_weight_, pw1_bias_, 1, 0, 1);
  h = Glu(h, 1);
  h = Conv1d(h, dw_weight_, dw_bias_, 1, padding_, d);
  h = bn_.Forward(h, ctx.train);
  h = Swish(h);
  h = Conv1d(h, pw2_weight_, pw2_bias_, 1, 0, 1);
  return ApplyDropout(Permute(h, {0, 2, 1}), dropout_, ctx);
}

void ConvolutionModule::Register(const std::string &prefix,
                                 ParameterList &out) const {
  norm_.Register(prefix + ".norm", out);
  out.push_back({prefix + ".pw1.weight", pw1_weight_, true});
  out.push_back({prefix + ".pw1.bias", pw1_bias_, true});
  out.push_back({prefix + ".dw.weight", dw_weight_, true});
  out.push_back({prefix + ".dw.bias", dw_bias_, true});
  bn_.Register(prefix + ".bn", out);
  out.push_back({prefix + ".pw2.weight", pw2_weight_, true});
  out.push_back({prefix + ".pw2.bias", pw2_bias_, true});
}

// ---------------------------------------------------------------------------

void EncoderBlock::Init(const ModelConfig &config, std::mt19937_64 &rng) {
  kind_ = config.block_kind;
  macaron_ = config.use_macaron;
  conv_enabled_ = config.use_conv_module;
  if (kind_ == BlockKind::kTransformer) {
    mhsa_.Init(config, /*pre_norm=*/false, rng);
    mhsa_norm_.Init(config.d_model);
    ffn2_.Init(config, /*pre_norm=*/false, rng);
    final_norm_.Init(config.d_model);
    return;
  }
  if (macaron_) ffn1_.Init(config, true, rng);
  mhsa_.Init(config, true, rng);
  if (conv_enabled_) conv_.Init(config, rng);
  ffn2_.Init(config, true, rng);
  final_norm_.Init(config.d_model);
}

Tensor EncoderBlock::Forward(const Tensor &x, const ForwardContext &ctx,
                             std::vector<Tensor> *attention) const {
  if (kind_ == BlockKind::kTransformer) {
    Tensor h = mhsa_norm_.Forward(Add(x, mhsa_.Forward(x, ctx, attention)));
    return final_norm_.Forward(Add(h, ffn2_.Forward(h, ctx)));
  }
  Tensor h = x;
  if (macaron_) h = Add(h, Scale(ffn1_.Forward(h, ctx), 0.5));
  h = Add(h, mhsa_.Forward(h, ctx, attention));
  if (conv_enabled_) h = Add(h, conv_.Forward(h, ctx));
  Tensor tail = ffn2_.Forward(h, ctx);
  if (macaron_) tail = Scale(tail, 0.5);
  return final_norm_.Forward(Add(h, tail));
}

void EncoderBlock::ZeroBranchOutputs() {
  auto zero = [](Tensor &t) {
    if (t.defined()) std::fill(t.mutable_data().begin(), t.mutable_data().end(), 0.0);
  };
  if (kind_ == BlockKind::kConformer && macaron_) {
    zero(ffn1_.output_projection().weight);
    zero(ffn1_.output_projection().bias);
  }
  zero(ffn2_.output_projection().weight);
  zero(ffn2_.output_projection().bias);
  zero(mhsa_.output_projection().weight);
  zero(mhsa_.output_projection().bias);
  if (kind_ == BlockKind::kConformer && conv_enabled_) {
    zero(conv_.output_weight());
    zero(conv_.output_bias());
  }
}

void EncoderBlock::Register(const std::string &prefix, ParameterList &out) const {
  if (kind_ == BlockKind::kTransformer) {
    mhsa_.Register(prefix + ".mhsa", out);
    mhsa_norm_.Register(prefix + ".mhsa_norm", out);
    ffn2_.Register(prefix + ".ffn", out);
    final_norm_.Register(prefix + ".final_norm", out);
    return;
  }
  if (macaron_) ffn1_.Register(prefix + ".ffn1", out);
  mhsa_.Register(prefix + ".mhsa", out);
  if (conv_enabled_) conv_.Register(prefix + ".conv", out);
  ffn2_.Register(prefix + ".ffn2", out);
  final_norm_.Register(prefix + ".final_norm", out);
}

// ---------------------------------------------------------------------------

void Encoder::Init(const ModelConfig &config, std::mt19937_64 &rng) {
  config.Validate();
  absolute_pe_ = !config.use_relative_pe;
  subsampling_.Init(config, rng);
  blocks_.assign(static_cast<std::size_t>(config.num_blocks), EncoderBlock());
  for (EncoderBlock &b : blocks_) b.Init(config, rng);
}

std::vector<Tensor> Encoder::Forward(const Tensor &fbank,
                                     const ForwardContext &ctx) const {
  Tensor x;
  {
    ScopedStage stage(ctx.timer, "subsampling");
    x = subsampling_.Forward(fbank);
    if (absolute_pe_) x = Add(x, AbsoluteSinusoidalEncoding(x.dim(1), x.dim(2)));
  }
  ScopedStage stage(ctx.timer, "blocks");
  std::vector<Tensor> outputs;
  outputs.reserve(blocks_.size());
  for (const EncoderBlock &b : blocks_) {
    x = b.Forward(x, ctx);
    outputs.push_back(x);
  }
  return outputs;
}

void Encoder::Register(const std::string &prefix, ParameterList &out) const {
  subsampling_.Register(prefix + ".subsampling", out);
  for (std::size_t i = 0; i < blocks_.size(); ++i)
    blocks_[i].Register(prefix + ".block" + std::to_string(i), out);
}

}  // namespace mfa
