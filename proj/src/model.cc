// src/model.cc

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

#include "mfa/model.h"

#include <cmath>

#include "mfa/error.h"

namespace mfa {

void AmSoftmaxHead::Init(Index num_classes, Index embedding_dim,
                         std::mt19937_64 &rng) {
  weight = UniformTensor({num_classes, embedding_dim},
                         1.0 / std::sqrt(static_cast<double>(embedding_dim)),
                         rng);
}

Tensor AmSoftmaxLoss(const Tensor &embeddings, const std::vector<int> &labels,
                     const AmSoftmaxHead &head, Tensor *cosines) {
  if (embeddings.rank() != 2 || embeddings.dim(1) != head.weight.dim(1))
    throw Error(ErrorCode::kShapeMismatch,
                "embeddings " + ShapeString(embeddings.shape()) +
                    " vs classifier " + ShapeString(head.weight.shape()));
  const Index batch = embeddings.dim(0), classes = head.weight.dim(0);
  if (static_cast<Index>(labels.size()) != batch)
    throw Error(ErrorCode::kShapeMismatch, "one label per embedding required");
  for (int y : labels)
    if (y < 0 || y >= classes)
      throw Error(ErrorCode::kLabelOutOfRange,
                  "label " + std::to_string(y) + " with " +
                      std::to_string(classes) + " classes");
  Tensor cos = Matmul(L2Normalize(embeddings), L2Normalize(head.weight), true);
  if (cosines) *cosines = cos;
  std::vector<double> margin(static_cast<std::size_t>(batch * classes), 0.0);
  for (Index b = 0; b < batch; ++b) margin[b * classes + labels[b]] = head.margin;
  Tensor logits = Scale(Sub(cos, Tensor::FromData({batch, classes}, std::move(margin))),
                        head.scale);
  return CrossEntropy(logits, labels);
}

SpeakerModel::SpeakerModel(const ModelConfig &config, std::uint64_t seed)
    : config_(config) {
  config_.Validate();
  std::mt19937_64 rng(seed);
  encoder_.Init(config_, rng);
  aggregator_.Init(config_, rng);
  head_.margin = config_.am_margin;
  head_.scale = config_.am_scale;
  if (config_.num_classes > 0)
    head_.Init(config_.num_classes, config_.embedding_dim, rng);
}

SpeakerModel::Outputs SpeakerModel::Forward(const Tensor &fbank,
                                            const ForwardContext &ctx) const {
  if (fbank.rank() != 3 || fbank.dim(2) != config_.num_mel_bins)
    throw Error(ErrorCode::kShapeMismatch,
                "model expects [B, T, " + std::to_string(config_.num_mel_bins) +
                    "], got " + ShapeString(fbank.shape()));
  Outputs out;
  out.blocks = encoder_.Forward(fbank, ctx);
  ScopedStage stage(ctx.timer, "pooling");
  out.aggregated = aggregator_.Aggregate(out.blocks);
  out.pooled = aggregator_.Pool(out.aggregated);
  out.embedding = aggregator_.Embed(out.pooled, ctx, &out.pre_bn);
  return out;
}

Tensor SpeakerModel::Embed(const Tensor &fbank, const ForwardContext &ctx) const {
  return Forward(fbank, ctx).embedding;
}

Tensor SpeakerModel::Loss(const Tensor &fbank, const std::vector<int> &labels,
                          const ForwardContext &ctx, Tensor *cosines) const {
  if (!head_.weight.defined())
    throw Error(ErrorCode::kInvalidConfig, "model has no classifier (num_classes=0)");
  Outputs out = Forward(fbank, ctx);
  return AmSoftmaxLoss(config_.loss_after_bn ? out.embedding : out.pre_bn,
                       labels, head_, cosines);
}

ParameterList SpeakerModel::Parameters() const {
  ParameterList out;
  encoder_.Register("encoder", out);
  aggregator_.Register("aggregator", out);
  if (head_.weight.defined()) out.push_back({"classifier.weight", head_.weight, true});
  return out;
}

Index SpeakerModel::NumEmbeddingParameters() const {
  ParameterList out;
  encoder_.Register("encoder", out);
  aggregator_.Register("aggregator", out);
  return CountTrainable(out);
}

}  // namespace mfa
