// tests/test_util.h

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

#ifndef MFA_TESTS_TEST_UTIL_H_
#define MFA_TESTS_TEST_UTIL_H_

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "mfa/ops.h"
#include "mfa/tensor.h"

namespace mfa::testing {

inline Tensor RandomTensor(const Shape &shape, std::mt19937_64 &rng,
                           double scale = 1.0, bool requires_grad = true) {
  std::uniform_real_distribution<double> dist(-scale, scale);
  std::vector<double> data(static_cast<std::size_t>(NumElements(shape)));
  for (double &v : data) v = dist(rng);
  return Tensor::FromData(shape, std::move(data), requires_grad);
}

// Central-difference check of d f() / d input for every input. Returns the
// largest |analytic - numeric|_2 / max(|analytic|_2, |numeric|_2, 1e-12)
// over the inputs. f must build a fresh scalar graph on every call.
inline double MaxGradError(const std::function<Tensor()> &f,
                           std::vector<Tensor> inputs, double h = 1e-6) {
  for (Tensor &x : inputs) x.ZeroGrad();
  f().Backward();
  double worst = 0.0;
  for (Tensor &x : inputs) {
    std::vector<double> analytic(x.grad().begin(), x.grad().end());
    analytic.resize(static_cast<std::size_t>(x.numel()), 0.0);
    std::span<double> d = x.mutable_data();
    double diff = 0.0, na = 0.0, nn = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) {
      const double saved = d[i];
      double up, down;
      {
        NoGradGuard g;
        d[i] = saved + h;
        up = f().item();
        d[i] = saved - h;
        down = f().item();
      }
      d[i] = saved;
      const double num = (up - down) / (2.0 * h);
      diff += (num - analytic[i]) * (num - analytic[i]);
      na += analytic[i] * analytic[i];
      nn += num * num;
    }
    double err = std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nn), 1e-12});
    worst = std::max(worst, err);
  }
  return worst;
}

// Weighted scalar reduction so every output element gets a distinct
// upstream gradient.
inline Tensor WeightedSum(const Tensor &y, std::uint64_t seed = 99) {
  std::mt19937_64 rng(seed);
  Tensor w = RandomTensor(y.shape(), rng, 1.0, false);
  return Sum(Mul(y, w));
}

inline double MaxAbsDiff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline std::string TempPath(const std::string &name) {
  auto dir = std::filesystem::temp_directory_path() / "mfa_tests";
  std::filesystem::create_directories(dir);
  return (dir / name).string();
}

}  // namespace mfa::testing

#endif  // MFA_TESTS_TEST_UTIL_H_
