// include/mfa/gradcheck.h

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

#ifndef MFA_GRADCHECK_H_
#define MFA_GRADCHECK_H_

#include <cstdint>
#include <string>
#include <vector>

#include "mfa/config.h"

namespace mfa {

struct GradCheckOptions {
  int num_frames = 10;
  int batch = 2;  // train-mode batch norm needs two items
  double step = 1e-6;
  double tolerance = 1e-4;
  // Lower bound on the error denominator. Some gradients are exactly zero
  // by construction (key bias, biases ahead of batch norm, the pooling
  // offset k); for those the difference quotient is pure roundoff, around
  // 1e-8, and is judged against this floor instead.
  double norm_floor = 1e-3;
  std::uint64_t seed = 0;
};

struct GradCheckEntry {
  std::string name;
  std::int64_t numel = 0;
  double analytic_norm = 0.0;
  double numeric_norm = 0.0;
  double rel_error = 0.0;  // |analytic - numeric|_2 / max(norms, norm_floor)
  bool pass = false;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;  // one per trainable tensor
  double loss = 0.0;
  bool pass() const;
};

/// Compares the backward pass of the full model plus AM-Softmax loss with
/// central differences for every element of every trainable tensor. Runs in
/// train mode with dropout forced to 0, on a seeded random fbank batch.
GradCheckReport RunGradCheck(ModelConfig config, const GradCheckOptions &options);

// One "PASS|FAIL <name> numel=<n> rel_err=<e>" line per tensor, then a
// summary line.
std::string FormatGradCheckReport(const GradCheckReport &report);

}  // namespace mfa

#endif  // MFA_GRADCHECK_H_
