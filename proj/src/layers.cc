// src/layers.cc

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

#include "mfa/layers.h"

#include <cmath>

#include "mfa/error.h"

namespace mfa {

Index CountTrainable(const ParameterList &params) {
  Index n = 0;
  for (const NamedTensor &p : params)
    if (p.trainable) n += p.tensor.numel();
  return n;
}

double UniformSample(std::mt19937_64 &rng, double bound) {
  double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return (2.0 * u - 1.0) * bound;
}

Tensor UniformTensor(const Shape &shape, double bound, std::mt19937_64 &rng) {
  std::vector<double> data(static_cast<std::size_t>(NumElements(shape)));
  for (double &v : data) v = UniformSample(rng, bound);
  return Tensor::FromData(shape, std::move(data), true);
}

Tensor ApplyDropout(const Tensor &x, double p, const ForwardContext &ctx) {
  if (!ctx.train || p == 0.0) return x;
  if (!ctx.rng)
    throw Error(ErrorCode::kInvalidArgument, "train-mode dropout needs an rng");
  return Dropout(x, p, true, *ctx.rng);
}

void LinearLayer::Init(Index in, Index out, bool with_bias,
                       std::mt19937_64 &rng) {
  double bound = 1.0 / std::sqrt(static_cast<double>(in));
  weight = UniformTensor({out, in}, bound, rng);
  bias = with_bias ? UniformTensor({out}, bound, rng) : Tensor();
}

void LinearLayer::Register(const std::string &prefix, ParameterList &out) const {
  out.push_back({prefix + ".weight", weight, true});
  if (bias.defined()) out.push_back({prefix + ".bias", bias, true});
}

void LayerNormLayer::Init(Index dim) {
  gamma = Tensor::Full({dim}, 1.0, true);
  beta = Tensor::Zeros({dim}, true);
}

void LayerNormLayer::Register(const std::string &prefix,
                              ParameterList &out) const {
  out.push_back({prefix + ".gamma", gamma, true});
  out.push_back({prefix + ".beta", beta, true});
}

void BatchNormLayer::Init(Index channels) {
  gamma = Tensor::Full({channels}, 1.0, true);
  beta = Tensor::Zeros({channels}, true);
  state.running_mean = Tensor::Zeros({channels});
  state.running_var = Tensor::Full({channels}, 1.0);
}

void BatchNormLayer::Register(const std::string &prefix,
                              ParameterList &out) const {
  out.push_back({prefix + ".gamma", gamma, true});
  out.push_back({prefix + ".beta", beta, true});
  out.push_back({prefix + ".running_mean", state.running_mean, false});
  out.push_back({prefix + ".running_var", state.running_var, false});
}

}  // namespace mfa
