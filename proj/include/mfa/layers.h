// include/mfa/layers.h

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

#ifndef MFA_LAYERS_H_
#define MFA_LAYERS_H_

#include <chrono>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "mfa/ops.h"
#include "mfa/tensor.h"

namespace mfa {

/// A named tensor owned by some module. Buffers (batch-norm running
/// statistics) are serialized but not trained.
struct NamedTensor {
  std::string name;
  Tensor tensor;
  bool trainable = true;
};

using ParameterList = std::vector<NamedTensor>;

Index CountTrainable(const ParameterList &params);

// Wall-clock accumulator keyed by pipeline stage.
class StageTimer {
 public:
  void Add(const std::string &stage, double seconds) { seconds_[stage] += seconds; }
  const std::map<std::string, double> &seconds() const { return seconds_; }
  void Clear() { seconds_.clear(); }

 private:
  std::map<std::string, double> seconds_;
};

class ScopedStage {
 public:
  ScopedStage(StageTimer *timer, const char *stage)
      : timer_(timer), stage_(stage), start_(std::chrono::steady_clock::now()) {}
  ~ScopedStage() {
    if (timer_)
      timer_->Add(stage_, std::chrono::duration<double>(
                              std::chrono::steady_clock::now() - start_).count());
  }

 private:
  StageTimer *timer_;
  const char *stage_;
  std::chrono::steady_clock::time_point start_;
};

struct ForwardContext {
  bool train = false;
  std::mt19937_64 *rng = nullptr;  // required when train and dropout > 0
  StageTimer *timer = nullptr;
};

// Uniform in [-bound, bound) from the top 53 bits of the generator.
double UniformSample(std::mt19937_64 &rng, double bound);
Tensor UniformTensor(const Shape &shape, double bound, std::mt19937_64 &rng);

Tensor ApplyDropout(const Tensor &x, double p, const ForwardContext &ctx);

struct LinearLayer {
  Tensor weight;  // [out, in]
  Tensor bias;    // [out] or undefined

  void Init(Index in, Index out, bool with_bias, std::mt19937_64 &rng);
  Tensor Forward(const Tensor &x) const { return Linear(x, weight, bias); }
  void Register(const std::string &prefix, ParameterList &out) const;
};

struct LayerNormLayer {
  Tensor gamma, beta;

  void Init(Index dim);
  Tensor Forward(const Tensor &x) const { return LayerNorm(x, gamma, beta); }
  void Register(const std::string &prefix, ParameterList &out) const;
};

struct BatchNormLayer {
  Tensor gamma, beta;
  // Mutable through the tensor handles; Forward in train mode updates them.
  mutable BatchNormState state;

  void Init(Index channels);
  Tensor Forward(const Tensor &x, bool train) const {
    return BatchNorm1d(x, gamma, beta, state, train);
  }
  void Register(const std::string &prefix, ParameterList &out) const;
};

}  // namespace mfa

#endif  // MFA_LAYERS_H_
