// include/mfa/training.h

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

#ifndef MFA_TRAINING_H_
#define MFA_TRAINING_H_

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mfa/config.h"
#include "mfa/features.h"
#include "mfa/model.h"

namespace mfa {

struct TrainConfig {
  double lr0 = 0.001;
  int lr_halving_epochs = 4;
  double weight_decay = 1e-7;
  int warmup_steps = 2000;
  int batch_size = 32;
  int crop_frames = 298;
  int epochs = 30;
  std::uint64_t seed = 0;
  // Stop once an epoch's training accuracy reaches this value; 0 disables.
  double stop_accuracy = 0.0;

  void Validate() const;
  bool Set(const std::string &key, const std::string &value);
  KeyValues ToKeyValues() const;

  // Desk-scale schedule for the synthetic-speaker runs.
  static TrainConfig Toy();
};

/// lr0 * min(step / warmup_steps, 1) * 0.5^floor(epoch / lr_halving_epochs).
/// `step` counts optimizer steps from 1; `epoch` counts from 0.
double LearningRate(const TrainConfig &config, std::int64_t step, int epoch);

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One Adam update of a single tensor with bias correction and decoupled
/// weight decay (param -= lr * weight_decay * param). `step` is 1-based.
void AdamStep(std::span<double> param, std::span<const double> grad,
              std::span<double> first_moment, std::span<double> second_moment,
              std::int64_t step, double lr, double weight_decay,
              const AdamHyper &hyper = {});

class AdamOptimizer {
 public:
  explicit AdamOptimizer(ParameterList params, AdamHyper hyper = {});
  // Applies one update to every trainable tensor that has a gradient.
  void Step(double lr, double weight_decay);
  void ZeroGrad();
  std::int64_t steps() const { return step_; }

 private:
  ParameterList params_;
  AdamHyper hyper_;
  std::vector<std::vector<double>> m_, v_;
  std::int64_t step_ = 0;
};

struct LabeledUtterance {
  std::string id;
  int label = 0;
  FbankMatrix fbank;
};

/// Synthetic speakers: each speaker is a fixed 80-bin log-spectral profile
/// (a smooth random tilt plus formant-like bumps); an utterance adds a slow
/// per-utterance loudness/spectral modulation and white noise at snr_db
/// relative to the profile's RMS.
struct ToyDataOptions {
  int num_speakers = 20;
  int utts_per_speaker = 20;
  // Utterance indices start here, so held-out data for the same speakers
  // can be drawn from a disjoint index range.
  int first_utterance = 0;
  int min_frames = 300;
  int max_frames = 400;
  int num_bins = 80;
  double snr_db = 10.0;
  double modulation = 0.3;
  std::uint64_t seed = 0;
};

std::vector<LabeledUtterance> MakeToyDataset(const ToyDataOptions &options);

struct EpochMetrics {
  int epoch = 0;
  double loss = 0.0;      // mean over the epoch's batches
  double accuracy = 0.0;  // fraction of training crops classified correctly
  double lr = 0.0;        // learning rate of the epoch's last step
  int steps = 0;
};

std::string FormatEpochLine(const EpochMetrics &m);

/// Epoch loop: shuffle, random crops of crop_frames, AM-Softmax loss, Adam
/// with the warmup/halving schedule. A trailing batch of one item is
/// dropped (train-mode batch norm needs two). On return the parameters are
/// rounded to 32-bit storage precision so the model equals its checkpoint.
std::vector<EpochMetrics> Train(
    SpeakerModel &model, const std::vector<LabeledUtterance> &data,
    const TrainConfig &config,
    const std::function<void(const EpochMetrics &)> &on_epoch = {});

void RoundToStoragePrecision(const ParameterList &params);

// "MFAC" checkpoint: magic, u32 version, u32 config length + key=value
// text, u32 tensor count, then per tensor u16 name length + name, u8 rank,
// u32 dims, f32 data. Little-endian throughout.
std::string EncodeCheckpoint(const SpeakerModel &model);
SpeakerModel DecodeCheckpoint(const std::string &bytes);
void SaveCheckpoint(const std::string &path, const SpeakerModel &model);
SpeakerModel LoadCheckpoint(const std::string &path);

}  // namespace mfa

#endif  // MFA_TRAINING_H_
