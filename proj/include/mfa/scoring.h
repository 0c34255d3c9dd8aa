// include/mfa/scoring.h

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

#ifndef MFA_SCORING_H_
#define MFA_SCORING_H_

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mfa/model.h"

namespace mfa {

using Embedding = std::vector<double>;

/// dot(a, b) / (|a| |b|). Throws ShapeMismatch on a length mismatch and
/// ZeroVector when either input has zero norm.
double CosineScore(std::span<const double> a, std::span<const double> b);

struct NormalizedScore {
  double score = 0.0;
  // Set when the top-k cohort scores on either side have a standard
  // deviation below 1e-12; `score` then holds the raw score unchanged.
  bool degenerate = false;
};

/// Adaptive s-norm of one raw score. Each side uses the mean and
/// (population) standard deviation of its top_k highest cohort scores:
///   s' = ((s - mu_e) / sigma_e + (s - mu_t) / sigma_t) / 2.
/// Throws DegenerateCohort unless 2 <= top_k <= cohort size.
NormalizedScore AdaptiveSnorm(double raw, std::span<const double> enroll_cohort,
                              std::span<const double> test_cohort, int top_k);

// Cosine scores of one embedding against every cohort member.
std::vector<double> CohortScores(std::span<const double> e,
                                 const std::vector<Embedding> &cohort);

// min(300, cohort size).
int DefaultTopK(std::size_t cohort_size);

/// Detection performance at every sweep threshold: a trial is accepted when
/// its score is >= threshold. far = P(accept | nontarget), frr =
/// P(reject | target).
struct RocCurve {
  std::vector<double> threshold;
  std::vector<double> far;
  std::vector<double> frr;
};

/// Thresholds are -inf, the midpoints between adjacent distinct scores in
/// ascending order, then +inf. Throws EmptyClass if either class is empty.
RocCurve ComputeRoc(std::span<const double> target,
                    std::span<const double> nontarget);

struct OperatingPoint {
  double value = 0.0;
  double threshold = 0.0;
};

/// Equal error rate, linearly interpolated between the two adjacent sweep
/// points that bracket far == frr. Throws EmptyClass.
OperatingPoint ComputeEer(std::span<const double> target,
                          std::span<const double> nontarget);

struct DcfParams {
  double p_target = 0.01;
  double c_fa = 1.0;
  double c_miss = 1.0;

  void Validate() const;
};

/// min over thresholds in {-inf, each distinct score, +inf} of
/// c_miss p_target frr + c_fa (1 - p_target) far, divided by
/// min(c_miss p_target, c_fa (1 - p_target)). Throws EmptyClass.
OperatingPoint ComputeMinDcf(std::span<const double> target,
                             std::span<const double> nontarget,
                             const DcfParams &params = {});

struct Trial {
  bool target = false;
  std::string enroll_id;
  std::string test_id;
};

struct ScoredTrial {
  Trial trial;
  double raw = 0.0;
  bool has_normalized = false;
  double normalized = 0.0;

  double final_score() const { return has_normalized ? normalized : raw; }
};

// "<label> <enroll_id> <test_id>" per line, label 1 or 0.
std::vector<Trial> ParseTrials(const std::string &text);
std::vector<Trial> ReadTrials(const std::string &path);
void WriteTrials(const std::string &path, const std::vector<Trial> &trials);

// "<label> <enroll_id> <test_id> <raw> [<normalized>]", 6 decimals.
std::string FormatScores(const std::vector<ScoredTrial> &scores);
std::vector<ScoredTrial> ParseScores(const std::string &text);
void WriteScores(const std::string &path, const std::vector<ScoredTrial> &scores);
std::vector<ScoredTrial> ReadScores(const std::string &path);

// "<id> <v0> <v1> ..." per line.
using EmbeddingTable = std::map<std::string, Embedding>;
std::string FormatEmbeddingLine(const std::string &id, const Embedding &e);
EmbeddingTable ParseEmbeddingTable(const std::string &text);
EmbeddingTable ReadEmbeddingTable(const std::string &path);

struct Metrics {
  OperatingPoint eer;
  OperatingPoint min_dcf;
  std::size_t num_target = 0;
  std::size_t num_nontarget = 0;
  DcfParams params;
};

Metrics Evaluate(const std::vector<ScoredTrial> &scores, const DcfParams &params);
// key=value report: eer, eer_threshold, min_dcf, min_dcf_threshold,
// num_target, num_nontarget, p_target, c_fa, c_miss.
std::string FormatMetrics(const Metrics &m);

struct RtfReport {
  double seconds = 0.0;                // audio duration per run
  double rtf = 0.0;                    // median wall time / seconds
  std::vector<double> run_seconds;     // timed runs, warmup excluded
  std::map<std::string, double> stage_seconds;  // median per stage
  int forward_passes = 0;              // including the warmup
};

/// Times fbank -> embedding on `seconds` of seeded white noise in eval mode,
/// one warmup run followed by `repeats` timed runs. Throws InvalidArgument
/// when repeats < 3.
RtfReport BenchmarkRtf(const SpeakerModel &model, double seconds, int repeats,
                       std::uint64_t seed = 0);
std::string FormatRtfReport(const RtfReport &r);

}  // namespace mfa

#endif  // MFA_SCORING_H_
