// src/scoring.cc

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

#include "mfa/scoring.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>
#include <sstream>

#include "mfa/binary_io.h"
#include "mfa/error.h"
#include "mfa/features.h"

namespace mfa {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void RequireBothClasses(std::span<const double> target,
                        std::span<const double> nontarget) {
  if (target.empty() || nontarget.empty())
    throw Error(ErrorCode::kEmptyClass,
                "need at least one target and one nontarget trial (got " +
                    std::to_string(target.size()) + " and " +
                    std::to_string(nontarget.size()) + ")");
}

std::vector<double> Sorted(std::span<const double> v) {
  std::vector<double> out(v.begin(), v.end());
  std::sort(out.begin(), out.end());
  return out;
}

// Fraction of sorted scores >= threshold.
double FractionAtLeast(const std::vector<double> &sorted, double threshold) {
  auto it = std::lower_bound(sorted.begin(), sorted.end(), threshold);
  return static_cast<double>(sorted.end() - it) / sorted.size();
}

std::vector<double> DistinctScores(const std::vector<double> &a,
                                   const std::vector<double> &b) {
  std::vector<double> all;
  all.reserve(a.size() + b.size());
  std::merge(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(all));
  all.erase(std::unique(all.begin(), all.end()), all.end());
  return all;
}

std::pair<double, double> TopKMoments(std::span<const double> scores, int k) {
  std::vector<double> v(scores.begin(), scores.end());
  std::partial_sort(v.begin(), v.begin() + k, v.end(), std::greater<double>());
  double mean = 0.0;
  for (int i = 0; i < k; ++i) mean += v[i];
  mean /= k;
  double var = 0.0;
  for (int i = 0; i < k; ++i) var += (v[i] - mean) * (v[i] - mean);
  return {mean, std::sqrt(var / k)};
}

std::vector<std::string> SplitFields(const std::string &line) {
  std::istringstream in(line);
  std::vector<std::string> out;
  for (std::string f; in >> f;) out.push_back(f);
  return out;
}

bool ParseLabel(const std::string &s, int line_no) {
  if (s == "1") return true;
  if (s == "0") return false;
  throw Error(ErrorCode::kInvalidArgument,
              "line " + std::to_string(line_no) + ": label must be 1 or 0, got '" +
                  s + "'");
}

double ParseNumber(const std::string &s, int line_no) {
  try {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (used == s.size() && std::isfinite(v)) return v;
  } catch (const std::exception &) {
  }
  throw Error(ErrorCode::kInvalidArgument,
              "line " + std::to_string(line_no) + ": bad number '" + s + "'");
}

template <typename Fn>
void ForEachLine(const std::string &text, Fn fn) {
  std::istringstream in(text);
  int line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    std::vector<std::string> fields = SplitFields(line);
    if (fields.empty() || fields[0][0] == '#') continue;
    fn(fields, line_no);
  }
}

double Median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

double CosineScore(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw Error(ErrorCode::kShapeMismatch,
                "embedding lengths " + std::to_string(a.size()) + " and " +
                    std::to_string(b.size()));
  double sa = 0.0, sb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sa = std::max(sa, std::abs(a[i]));
    sb = std::max(sb, std::abs(b[i]));
  }
  if (sa == 0.0 || sb == 0.0)
    throw Error(ErrorCode::kZeroVector, "cosine score of a zero vector");
  // Pre-scaled by the largest magnitude so the squares neither overflow nor
  // underflow.
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = a[i] / sa, y = b[i] / sb;
    dot += x * y;
    na += x * x;
    nb += y * y;
  }
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

NormalizedScore AdaptiveSnorm(double raw, std::span<const double> enroll_cohort,
                              std::span<const double> test_cohort, int top_k) {
  if (top_k < 2 || static_cast<std::size_t>(top_k) > enroll_cohort.size() ||
      static_cast<std::size_t>(top_k) > test_cohort.size())
    throw Error(ErrorCode::kDegenerateCohort,
                "top_k " + std::to_string(top_k) + " with cohort of " +
                    std::to_string(std::min(enroll_cohort.size(), test_cohort.size())));
  auto [mu_e, sd_e] = TopKMoments(enroll_cohort, top_k);
  auto [mu_t, sd_t] = TopKMoments(test_cohort, top_k);
  if (sd_e < 1e-12 || sd_t < 1e-12) return {raw, true};
  return {0.5 * ((raw - mu_e) / sd_e + (raw - mu_t) / sd_t), false};
}

std::vector<double> CohortScores(std::span<const double> e,
                                 const std::vector<Embedding> &cohort) {
  std::vector<double> out;
  out.reserve(cohort.size());
  for (const Embedding &c : cohort) out.push_back(CosineScore(e, c));
  return out;
}

int DefaultTopK(std::size_t cohort_size) {
  return static_cast<int>(std::min<std::size_t>(300, cohort_size));
}

RocCurve ComputeRoc(std::span<const double> target,
                    std::span<const double> nontarget) {
  RequireBothClasses(target, nontarget);
  const std::vector<double> tar = Sorted(target), non = Sorted(nontarget);
  const std::vector<double> distinct = DistinctScores(tar, non);
  RocCurve roc;
  roc.threshold.push_back(-kInf);
  for (std::size_t i = 0; i + 1 < distinct.size(); ++i)
    roc.threshold.push_back(0.5 * (distinct[i] + distinct[i + 1]));
  roc.threshold.push_back(kInf);
  for (double th : roc.threshold) {
    roc.far.push_back(FractionAtLeast(non, th));
    roc.frr.push_back(1.0 - FractionAtLeast(tar, th));
  }
  return roc;
}

OperatingPoint ComputeEer(std::span<const double> target,
                          std::span<const double> nontarget) {
  const RocCurve roc = ComputeRoc(target, nontarget);
  // far - frr starts at 1 (-inf) and ends at -1 (+inf), non-increasing.
  const std::size_t n = roc.threshold.size();
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double d0 = roc.far[i] - roc.frr[i];
    const double d1 = roc.far[i + 1] - roc.frr[i + 1];
    if (d0 == 0.0) return {roc.far[i], roc.threshold[i]};
    if (d1 > 0.0) continue;
    if (d1 == 0.0) return {roc.far[i + 1], roc.threshold[i + 1]};
    const double a = d0 / (d0 - d1);
    OperatingPoint p;
    p.value = roc.far[i] + a * (roc.far[i + 1] - roc.far[i]);
    const double t0 = roc.threshold[i], t1 = roc.threshold[i + 1];
    if (std::isfinite(t0) && std::isfinite(t1)) p.threshold = t0 + a * (t1 - t0);
    else if (std::isfinite(t0)) p.threshold = t0;
    else if (std::isfinite(t1)) p.threshold = t1;
    else p.threshold = target[0];  // every score is identical
    return p;
  }
  return {roc.far.back(), roc.threshold.back()};
}

void DcfParams::Validate() const {
  if (!(p_target > 0.0 && p_target < 1.0))
    throw Error(ErrorCode::kInvalidConfig, "p_target must be in (0, 1)");
  if (!(c_fa > 0.0)) throw Error(ErrorCode::kInvalidConfig, "c_fa must be positive");
  if (!(c_miss > 0.0)) throw Error(ErrorCode::kInvalidConfig, "c_miss must be positive");
}

OperatingPoint ComputeMinDcf(std::span<const double> target,
                             std::span<const double> nontarget,
                             const DcfParams &params) {
  RequireBothClasses(target, nontarget);
  params.Validate();
  const std::vector<double> tar = Sorted(target), non = Sorted(nontarget);
  std::vector<double> thresholds = {-kInf};
  for (double s : DistinctScores(tar, non)) thresholds.push_back(s);
  thresholds.push_back(kInf);
  const double w_miss = params.c_miss * params.p_target;
  const double w_fa = params.c_fa * (1.0 - params.p_target);
  const double norm = std::min(w_miss, w_fa);
  OperatingPoint best{kInf, 0.0};
  for (double th : thresholds) {
    const double frr = 1.0 - FractionAtLeast(tar, th);
    const double far = FractionAtLeast(non, th);
    const double cost = (w_miss * frr + w_fa * far) / norm;
    if (cost < best.value) best = {cost, th};
  }
  return best;
}

std::vector<Trial> ParseTrials(const std::string &text) {
  std::vector<Trial> out;
  ForEachLine(text, [&](const std::vector<std::string> &f, int line_no) {
    if (f.size() != 3)
      throw Error(ErrorCode::kInvalidArgument,
                  "trial line " + std::to_string(line_no) +
                      ": expected '<label> <enroll_id> <test_id>'");
    out.push_back({ParseLabel(f[0], line_no), f[1], f[2]});
  });
  return out;
}

std::vector<Trial> ReadTrials(const std::string &path) {
  return ParseTrials(ReadFile(path));
}

void WriteTrials(const std::string &path, const std::vector<Trial> &trials) {
  std::string text;
  for (const Trial &t : trials)
    text += std::string(t.target ? "1" : "0") + " " + t.enroll_id + " " +
            t.test_id + "\n";
  WriteFile(path, text);
}

std::string FormatScores(const std::vector<ScoredTrial> &scores) {
  std::string text;
  char num[64];
  for (const ScoredTrial &s : scores) {
    text += std::string(s.trial.target ? "1" : "0") + " " + s.trial.enroll_id +
            " " + s.trial.test_id;
    std::snprintf(num, sizeof(num), " %.6f", s.raw);
    text += num;
    if (s.has_normalized) {
      std::snprintf(num, sizeof(num), " %.6f", s.normalized);
      text += num;
    }
    text += "\n";
  }
  return text;
}

std::vector<ScoredTrial> ParseScores(const std::string &text) {
  std::vector<ScoredTrial> out;
  ForEachLine(text, [&](const std::vector<std::string> &f, int line_no) {
    if (f.size() != 4 && f.size() != 5)
      throw Error(ErrorCode::kInvalidArgument,
                  "score line " + std::to_string(line_no) +
                      ": expected '<label> <enroll_id> <test_id> <raw> [<normalized>]'");
    ScoredTrial s;
    s.trial = {ParseLabel(f[0], line_no), f[1], f[2]};
    s.raw = ParseNumber(f[3], line_no);
    if (f.size() == 5) {
      s.has_normalized = true;
      s.normalized = ParseNumber(f[4], line_no);
    }
    out.push_back(std::move(s));
  });
  return out;
}

void WriteScores(const std::string &path, const std::vector<ScoredTrial> &scores) {
  WriteFile(path, FormatScores(scores));
}

std::vector<ScoredTrial> ReadScores(const std::string &path) {
  return ParseScores(ReadFile(path));
}

std::string FormatEmbeddingLine(const std::string &id, const Embedding &e) {
  std::string line = id;
  char num[32];
  for (double v : e) {
    std::snprintf(num, sizeof(num), " %.9g", v);
    line += num;
  }
  return line + "\n";
}

EmbeddingTable ParseEmbeddingTable(const std::string &text) {
  EmbeddingTable table;
  std::size_t dim = 0;
  ForEachLine(text, [&](const std::vector<std::string> &f, int line_no) {
    if (f.size() < 2)
      throw Error(ErrorCode::kInvalidArgument,
                  "embedding line " + std::to_string(line_no) + " has no values");
    Embedding e;
    for (std::size_t i = 1; i < f.size(); ++i) e.push_back(ParseNumber(f[i], line_no));
    if (dim == 0) dim = e.size();
    if (e.size() != dim)
      throw Error(ErrorCode::kShapeMismatch,
                  "embedding '" + f[0] + "' has " + std::to_string(e.size()) +
                      " values, expected " + std::to_string(dim));
    if (!table.emplace(f[0], std::move(e)).second)
      throw Error(ErrorCode::kInvalidArgument, "duplicate embedding id '" + f[0] + "'");
  });
  return table;
}

EmbeddingTable ReadEmbeddingTable(const std::string &path) {
  return ParseEmbeddingTable(ReadFile(path));
}

Metrics Evaluate(const std::vector<ScoredTrial> &scores, const DcfParams &params) {
  std::vector<double> tar, non;
  for (const ScoredTrial &s : scores)
    (s.trial.target ? tar : non).push_back(s.final_score());
  Metrics m;
  m.params = params;
  m.num_target = tar.size();
  m.num_nontarget = non.size();
  m.eer = ComputeEer(tar, non);
  m.min_dcf = ComputeMinDcf(tar, non, params);
  return m;
}

std::string FormatMetrics(const Metrics &m) {
  return FormatKeyValues({
      {"eer", FormatDouble(m.eer.value)},
      {"eer_threshold", FormatDouble(m.eer.threshold)},
      {"min_dcf", FormatDouble(m.min_dcf.value)},
      {"min_dcf_threshold", FormatDouble(m.min_dcf.threshold)},
      {"num_target", std::to_string(m.num_target)},
      {"num_nontarget", std::to_string(m.num_nontarget)},
      {"p_target", FormatDouble(m.params.p_target)},
      {"c_fa", FormatDouble(m.params.c_fa)},
      {"c_miss", FormatDouble(m.params.c_miss)},
  });
}

RtfReport BenchmarkRtf(const SpeakerModel &model, double seconds, int repeats,
                       std::uint64_t seed) {
  if (repeats < 3)
    throw Error(ErrorCode::kInvalidArgument, "benchmark needs at least 3 repeats");
  if (!(seconds > 0.0))
    throw Error(ErrorCode::kInvalidArgument, "benchmark duration must be positive");
  AudioBuffer audio;
  audio.samples.resize(static_cast<std::size_t>(std::llround(seconds * audio.sample_rate)));
  std::mt19937_64 rng(seed);
  for (float &s : audio.samples)
    s = static_cast<float>(0.1 * UniformSample(rng, 1.0));

  RtfReport report;
  report.seconds = audio.duration();
  std::map<std::string, std::vector<double>> stages;
  NoGradGuard no_grad;
  for (int run = 0; run <= repeats; ++run) {
    StageTimer timer;
    auto start = std::chrono::steady_clock::now();
    Tensor input;
    {
      ScopedStage stage(&timer, "fbank");
      input = FbankToTensor(ComputeFbank(audio, FbankOptions{}));
    }
    ForwardContext ctx{false, nullptr, &timer};
    Tensor e = model.Embed(input, ctx);
    double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    ++report.forward_passes;
    if (run == 0) continue;
    report.run_seconds.push_back(wall);
    for (const auto &[name, t] : timer.seconds()) stages[name].push_back(t);
  }
  report.rtf = Median(report.run_seconds) / report.seconds;
  for (auto &[name, v] : stages) report.stage_seconds[name] = Median(v);
  return report;
}

std::string FormatRtfReport(const RtfReport &r) {
  KeyValues kv = {
      {"seconds", FormatDouble(r.seconds)},
      {"repeats", std::to_string(r.run_seconds.size())},
      {"forward_passes", std::to_string(r.forward_passes)},
      {"median_wall", FormatDouble(Median(r.run_seconds))},
      {"rtf", FormatDouble(r.rtf)},
  };
  for (const auto &[name, t] : r.stage_seconds)
    kv.push_back({"stage." + name, FormatDouble(t)});
  return FormatKeyValues(kv);
}

}  // namespace mfa
