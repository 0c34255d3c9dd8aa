// src/gradcheck.cc

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

#include "mfa/gradcheck.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "mfa/model.h"

namespace mfa {

bool GradCheckReport::pass() const {
  return std::all_of(entries.begin(), entries.end(),
                     [](const GradCheckEntry &e) { return e.pass; });
}

GradCheckReport RunGradCheck(ModelConfig config, const GradCheckOptions &options) {
  config.dropout = 0.0;
  SpeakerModel model(config, options.seed);
  std::mt19937_64 rng(options.seed ^ 0x9e3779b97f4a7c15ULL);
  Tensor input = UniformTensor({options.batch, options.num_frames, config.num_mel_bins},
                               1.0, rng);
  input.set_requires_grad(false);
  std::vector<int> labels(static_cast<std::size_t>(options.batch));
  for (int b = 0; b < options.batch; ++b) labels[b] = b % config.num_classes;
  ForwardContext ctx{true, &rng, nullptr};

  ParameterList params = model.Parameters();
  for (NamedTensor &p : params) p.tensor.ZeroGrad();
  GradCheckReport report;
  Tensor loss = model.Loss(input, labels, ctx);
  report.loss = loss.item();
  loss.Backward();

  NoGradGuard no_grad;
  auto eval = [&] { return model.Loss(input, labels, ctx).item(); };
  for (NamedTensor &p : params) {
    if (!p.trainable) continue;
    Tensor t = p.tensor;
    std::vector<double> analytic(t.grad().begin(), t.grad().end());
    analytic.resize(static_cast<std::size_t>(t.numel()), 0.0);
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    std::span<double> data = t.mutable_data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double saved = data[i];
      data[i] = saved + options.step;
      const double up = eval();
      data[i] = saved - options.step;
      const double down = eval();
      data[i] = saved;
      const double numeric = (up - down) / (2.0 * options.step);
      diff2 += (analytic[i] - numeric) * (analytic[i] - numeric);
      a2 += analytic[i] * analytic[i];
      n2 += numeric * numeric;
    }
    GradCheckEntry e;
    e.name = p.name;
    e.numel = t.numel();
    e.analytic_norm = std::sqrt(a2);
    e.numeric_norm = std::sqrt(n2);
    e.rel_error = std::sqrt(diff2) / std::max({e.analytic_norm, e.numeric_norm, options.norm_floor});
    e.pass = e.rel_error < options.tolerance;
    report.entries.push_back(e);
  }
  return report;
}

std::string FormatGradCheckReport(const GradCheckReport &report) {
  std::string out;
  char line[256];
  int failed = 0;
  for (const GradCheckEntry &e : report.entries) {
    std::snprintf(line, sizeof(line), "%s %s numel=%lld rel_err=%.3e\n",
                  e.pass ? "PASS" : "FAIL", e.name.c_str(),
                  static_cast<long long>(e.numel), e.rel_error);
    out += line;
    failed += !e.pass;
  }
  std::snprintf(line, sizeof(line), "gradcheck: %zu tensors, %d failed\n",
                report.entries.size(), failed);
  return out + line;
}

}  // namespace mfa
