// include/mfa/model.h

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

#ifndef MFA_MODEL_H_
#define MFA_MODEL_H_

#include <cstdint>
#include <random>
#include <vector>

#include "mfa/aggregator.h"
#include "mfa/config.h"
#include "mfa/encoder.h"
#include "mfa/layers.h"

namespace mfa {

/// Cosine classifier trained with the additive-margin softmax loss.
struct AmSoftmaxHead {
  Tensor weight;  // [C, embedding_dim]; rows are normalized inside the loss
  double margin = 0.2;
  double scale = 30.0;

  void Init(Index num_classes, Index embedding_dim, std::mt19937_64 &rng);
};

/// Per-sample loss -log(exp(s(cos_y - m)) / (exp(s(cos_y - m)) +
/// sum_{j != y} exp(s cos_j))), averaged over the batch. `cosines`
/// receives the [B, C] cosine matrix when non-null.
Tensor AmSoftmaxLoss(const Tensor &embeddings, const std::vector<int> &labels,
                     const AmSoftmaxHead &head, Tensor *cosines = nullptr);

/// Fbank -> subsampling -> L blocks -> MFA + attentive pooling -> embedding,
/// with an optional AM-Softmax classifier on top.
class SpeakerModel {
 public:
  SpeakerModel() = default;
  SpeakerModel(const ModelConfig &config, std::uint64_t seed);

  const ModelConfig &config() const { return config_; }

  struct Outputs {
    std::vector<Tensor> blocks;  // h_1..h_L
    Tensor aggregated;           // [B, T', D]
    Tensor pooled;               // [B, 2D]
    Tensor pre_bn;               // [B, E]
    Tensor embedding;            // [B, E]
  };
  Outputs Forward(const Tensor &fbank, const ForwardContext &ctx) const;
  Tensor Embed(const Tensor &fbank, const ForwardContext &ctx) const;

  // Classification loss for a batch; requires num_classes > 0.
  // `cosines` receives the [B, C] cosine matrix when non-null.
  Tensor Loss(const Tensor &fbank, const std::vector<int> &labels,
              const ForwardContext &ctx, Tensor *cosines = nullptr) const;

  // Every tensor (embedding network, classifier, buffers) in a fixed order.
  ParameterList Parameters() const;
  // Trainable parameters of the embedding network only (no classifier).
  Index NumEmbeddingParameters() const;

  Encoder &encoder() { return encoder_; }
  Aggregator &aggregator() { return aggregator_; }
  AmSoftmaxHead &head() { return head_; }
  const AmSoftmaxHead &head() const { return head_; }

 private:
  ModelConfig config_;
  Encoder encoder_;
  Aggregator aggregator_;
  AmSoftmaxHead head_;
};

}  // namespace mfa

#endif  // MFA_MODEL_H_
