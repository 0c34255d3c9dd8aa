// tests/oracles.h

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

#ifndef MFA_TESTS_ORACLES_H_
#define MFA_TESTS_ORACLES_H_

// Loop-level reference implementations shared by the unit tests and the
// acceptance binary. None of them calls into the library's math.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "mfa/aggregator.h"
#include "mfa/layers.h"
#include "mfa/scoring.h"
#include "mfa/tensor.h"

namespace mfa::testing {

using Mat = std::vector<std::vector<double>>;

inline std::map<std::string, Tensor> ByName(const ParameterList &params) {
  std::map<std::string, Tensor> m;
  for (const auto &p : params) m[p.name] = p.tensor;
  return m;
}

inline Mat Rows(const Tensor &x, Index b) {
  const Index t = x.dim(1), d = x.dim(2);
  Mat out(static_cast<std::size_t>(t), std::vector<double>(static_cast<std::size_t>(d)));
  for (Index i = 0; i < t; ++i)
    for (Index j = 0; j < d; ++j) out[i][j] = x.data()[(b * t + i) * d + j];
  return out;
}

inline Mat LinearRows(const Mat &x, const Tensor &w, const Tensor *bias) {
  const Index out = w.dim(0), in = w.dim(1);
  Mat y(x.size(), std::vector<double>(static_cast<std::size_t>(out), 0.0));
  for (std::size_t r = 0; r < x.size(); ++r)
    for (Index o = 0; o < out; ++o) {
      double s = bias ? bias->data()[o] : 0.0;
      for (Index i = 0; i < in; ++i) s += w.data()[o * in + i] * x[r][i];
      y[r][o] = s;
    }
  return y;
}

inline Mat LayerNormRows(const Mat &x, const Tensor &g, const Tensor &b) {
  Mat y = x;
  for (auto &row : y) {
    double mean = 0.0, var = 0.0;
    for (double v : row) mean += v;
    mean /= row.size();
    for (double v : row) var += (v - mean) * (v - mean);
    var /= row.size();
    for (std::size_t j = 0; j < row.size(); ++j)
      row[j] = (row[j] - mean) / std::sqrt(var + 1e-5) * g.data()[j] + b.data()[j];
  }
  return y;
}

// Sinusoid of a signed offset: even columns sin, odd columns cos, with
// frequency 10000^(-2i/d) for pair i.
inline std::vector<double> Sinusoid(double offset, Index d) {
  std::vector<double> e(static_cast<std::size_t>(d));
  for (Index i = 0; i < d / 2; ++i) {
    double a = offset * std::exp(-std::log(10000.0) * 2.0 * i / d);
    e[2 * i] = std::sin(a);
    e[2 * i + 1] = std::cos(a);
  }
  return e;
}

// Textbook relative-position attention, one batch item, written with
// explicit loops from the registered parameters.
inline Mat NaiveAttention(const Mat &x, std::map<std::string, Tensor> &p, int heads,
                   std::vector<Mat> *weights) {
  const Index t_len = static_cast<Index>(x.size());
  const Index d = static_cast<Index>(x[0].size()), dh = d / heads;
  Mat h = LayerNormRows(x, p["mhsa.norm.gamma"], p["mhsa.norm.beta"]);
  Mat q = LinearRows(h, p["mhsa.query.weight"], &p["mhsa.query.bias"]);
  Mat k = LinearRows(h, p["mhsa.key.weight"], &p["mhsa.key.bias"]);
  Mat v = LinearRows(h, p["mhsa.value.weight"], &p["mhsa.value.bias"]);
  const Tensor &u = p["mhsa.pos_bias_u"], &pv = p["mhsa.pos_bias_v"];
  Mat merged(x.size(), std::vector<double>(static_cast<std::size_t>(d), 0.0));
  for (int hd = 0; hd < heads; ++hd) {
    Mat w(x.size(), std::vector<double>(x.size()));
    for (Index t = 0; t < t_len; ++t) {
      std::vector<double> logits(static_cast<std::size_t>(t_len));
      for (Index tau = 0; tau < t_len; ++tau) {
        Mat enc = {Sinusoid(static_cast<double>(t - tau), d)};
        std::vector<double> r = LinearRows(enc, p["mhsa.pos.weight"], nullptr)[0];
        double s = 0.0;
        for (Index j = 0; j < dh; ++j) {
          const Index c = hd * dh + j;
          s += (q[t][c] + u.data()[c]) * k[tau][c] + (q[t][c] + pv.data()[c]) * r[c];
        }
        logits[tau] = s / std::sqrt(static_cast<double>(dh));
      }
      double mx = *std::max_element(logits.begin(), logits.end()), z = 0.0;
      for (double &l : logits) z += (l = std::exp(l - mx));
      for (Index tau = 0; tau < t_len; ++tau) w[t][tau] = logits[tau] / z;
      for (Index j = 0; j < dh; ++j) {
        double s = 0.0;
        for (Index tau = 0; tau < t_len; ++tau) s += w[t][tau] * v[tau][hd * dh + j];
        merged[t][hd * dh + j] = s;
      }
    }
    if (weights) weights->push_back(w);
  }
  return LinearRows(merged, p["mhsa.out.weight"], &p["mhsa.out.bias"]);
}

// Per-element sums written out directly from the pooling definition.
inline void DirectPool(const Tensor &h, const PoolingParams &p, Index b, bool weighted,
                std::vector<double> &mu, std::vector<double> &sigma,
                std::vector<double> &alpha) {
  const Index t_len = h.dim(1), d = h.dim(2);
  std::vector<double> e(static_cast<std::size_t>(t_len));
  for (Index t = 0; t < t_len; ++t) {
    double s = p.k.data()[0];
    for (Index i = 0; i < d; ++i) {
      double a = p.b.data()[i];
      for (Index j = 0; j < d; ++j) a += p.w.at({i, j}) * h.at({b, t, j});
      s += p.v.data()[i] * std::tanh(a);
    }
    e[t] = s;
  }
  const double mx = *std::max_element(e.begin(), e.end());
  double z = 0.0;
  for (double x : e) z += std::exp(x - mx);
  alpha.assign(e.size(), 0.0);
  for (Index t = 0; t < t_len; ++t) alpha[t] = std::exp(e[t] - mx) / z;
  mu.assign(static_cast<std::size_t>(d), 0.0);
  sigma.assign(static_cast<std::size_t>(d), 0.0);
  for (Index j = 0; j < d; ++j) {
    double m = 0.0, sq = 0.0, plain = 0.0;
    for (Index t = 0; t < t_len; ++t) {
      m += alpha[t] * h.at({b, t, j});
      sq += alpha[t] * h.at({b, t, j}) * h.at({b, t, j});
      plain += h.at({b, t, j}) / t_len;
    }
    const double c = weighted ? m : plain;
    mu[j] = m;
    sigma[j] = std::sqrt(std::max(sq - c * c, 1e-9));
  }
}

constexpr double kOracleInf = std::numeric_limits<double>::infinity();

// Quadratic-time counting at one threshold.
inline std::pair<double, double> CountRates(const std::vector<double> &tar,
                                     const std::vector<double> &non, double th) {
  int fa = 0, miss = 0;
  for (double s : non) fa += s >= th;
  for (double s : tar) miss += s < th;
  return {static_cast<double>(fa) / non.size(), static_cast<double>(miss) / tar.size()};
}

// Every candidate threshold: each score, every pairwise midpoint of sorted
// neighbours, and both infinities.
inline std::vector<double> AllThresholds(const std::vector<double> &tar,
                                  const std::vector<double> &non) {
  std::vector<double> all(tar);
  all.insert(all.end(), non.begin(), non.end());
  std::sort(all.begin(), all.end());
  std::vector<double> th{-kOracleInf, kOracleInf};
  for (std::size_t i = 0; i < all.size(); ++i) {
    th.push_back(all[i]);
    if (i + 1 < all.size() && all[i] != all[i + 1]) th.push_back(0.5 * (all[i] + all[i + 1]));
  }
  std::sort(th.begin(), th.end());
  return th;
}

inline double BruteMinDcf(const std::vector<double> &tar, const std::vector<double> &non,
                   const DcfParams &p) {
  double best = kOracleInf;
  const double norm = std::min(p.c_miss * p.p_target, p.c_fa * (1 - p.p_target));
  for (double th : AllThresholds(tar, non)) {
    auto [far, frr] = CountRates(tar, non, th);
    best = std::min(best, (p.c_miss * p.p_target * frr + p.c_fa * (1 - p.p_target) * far) / norm);
  }
  return best;
}

// Walks the midpoint sweep, finds the first sign change of far - frr and
// interpolates there.
inline double BruteEer(const std::vector<double> &tar, const std::vector<double> &non) {
  std::vector<double> all(tar);
  all.insert(all.end(), non.begin(), non.end());
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());
  std::vector<double> th{-kOracleInf};
  for (std::size_t i = 0; i + 1 < all.size(); ++i) th.push_back((all[i] + all[i + 1]) / 2);
  th.push_back(kOracleInf);
  double prev_far = 1.0, prev_frr = 0.0;
  for (std::size_t i = 1; i < th.size(); ++i) {
    auto [far, frr] = CountRates(tar, non, th[i]);
    if (far - frr <= 0.0) {
      const double d0 = prev_far - prev_frr, d1 = far - frr;
      if (d0 == 0.0) return prev_far;
      return prev_far + d0 / (d0 - d1) * (far - prev_far);
    }
    prev_far = far;
    prev_frr = frr;
  }
  return prev_far;
}

inline void RandomScores(std::mt19937_64 &rng, int n, double shift, std::vector<double> &tar,
                  std::vector<double> &non) {
  std::normal_distribution<double> d(0.0, 1.0);
  tar.clear();
  non.clear();
  for (int i = 0; i < n; ++i) {
    if (i % 4 == 0) tar.push_back(d(rng) + shift);
    else non.push_back(d(rng));
  }
}

}  // namespace mfa::testing

#endif  // MFA_TESTS_ORACLES_H_
