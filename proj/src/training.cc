// src/training.cc

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

#include "mfa/training.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "mfa/binary_io.h"
#include "mfa/error.h"

namespace mfa {

namespace {

constexpr char kCheckpointMagic[4] = {'M', 'F', 'A', 'C'};
constexpr std::uint32_t kCheckpointVersion = 1;

std::mt19937_64 SeededRng(std::initializer_list<std::uint64_t> words) {
  std::vector<std::uint32_t> v;
  for (std::uint64_t w : words) {
    v.push_back(static_cast<std::uint32_t>(w));
    v.push_back(static_cast<std::uint32_t>(w >> 32));
  }
  std::seed_seq seq(v.begin(), v.end());
  return std::mt19937_64(seq);
}

double Uniform01(std::mt19937_64 &rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Box-Muller on the portable uniform so the data does not depend on the
// standard library's normal_distribution.
double Gaussian(std::mt19937_64 &rng) {
  double u1 = Uniform01(rng), u2 = Uniform01(rng);
  return std::sqrt(-2.0 * std::log(1.0 - u1)) * std::cos(2.0 * M_PI * u2);
}

std::vector<double> SpeakerProfile(std::uint64_t seed, int speaker, int bins) {
  std::mt19937_64 rng = SeededRng({seed, 0x5eedULL, static_cast<std::uint64_t>(speaker)});
  std::vector<double> profile(bins);
  for (double &p : profile) p = Gaussian(rng);
  // Light smoothing keeps neighbouring bins correlated like a real envelope.
  std::vector<double> smooth(bins);
  for (int f = 0; f < bins; ++f) {
    double acc = 0.0, norm = 0.0;
    for (int k = -1; k <= 1; ++k) {
      int g = f + k;
      if (g < 0 || g >= bins) continue;
      double w = k == 0 ? 2.0 : 1.0;
      acc += w * profile[g];
      norm += w;
    }
    smooth[f] = acc / norm * 1.5;
  }
  const int num_bumps = 3;
  for (int b = 0; b < num_bumps; ++b) {
    double center = 4.0 + Uniform01(rng) * (bins - 8);
    double width = 1.5 + 3.0 * Uniform01(rng);
    double height = 1.0 + 2.0 * Uniform01(rng);
    for (int f = 0; f < bins; ++f) {
      double z = (f - center) / width;
      smooth[f] += height * std::exp(-0.5 * z * z);
    }
  }
  return smooth;
}

}  // namespace

void TrainConfig::Validate() const {
  auto fail = [](const std::string &what) {
    throw Error(ErrorCode::kInvalidConfig, what);
  };
  if (!(lr0 > 0.0)) fail("lr0 must be positive");
  if (lr_halving_epochs < 1) fail("lr_halving_epochs must be positive");
  if (weight_decay < 0.0) fail("weight_decay must be non-negative");
  if (warmup_steps < 1) fail("warmup_steps must be positive");
  if (batch_size < 2) fail("batch_size must be at least 2");
  if (crop_frames < 1) fail("crop_frames must be positive");
  if (epochs < 1) fail("epochs must be positive");
  if (stop_accuracy < 0.0 || stop_accuracy > 1.0)
    fail("stop_accuracy must be in [0, 1]");
}

bool TrainConfig::Set(const std::string &key, const std::string &value) {
  if (key == "lr0") lr0 = ParseDouble(key, value);
  else if (key == "lr_halving_epochs") lr_halving_epochs = ParseInt(key, value);
  else if (key == "weight_decay") weight_decay = ParseDouble(key, value);
  else if (key == "warmup_steps") warmup_steps = ParseInt(key, value);
  else if (key == "batch_size") batch_size = ParseInt(key, value);
  else if (key == "crop_frames") crop_frames = ParseInt(key, value);
  else if (key == "epochs") epochs = ParseInt(key, value);
  else if (key == "seed") {
    int s = ParseInt(key, value);
    if (s < 0) throw Error(ErrorCode::kInvalidConfig, "seed must be non-negative");
    seed = static_cast<std::uint64_t>(s);
  }
  else if (key == "stop_accuracy") stop_accuracy = ParseDouble(key, value);
  else return false;
  return true;
}

KeyValues TrainConfig::ToKeyValues() const {
  return {
      {"lr0", FormatDouble(lr0)},
      {"lr_halving_epochs", std::to_string(lr_halving_epochs)},
      {"weight_decay", FormatDouble(weight_decay)},
      {"warmup_steps", std::to_string(warmup_steps)},
      {"batch_size", std::to_string(batch_size)},
      {"crop_frames", std::to_string(crop_frames)},
      {"epochs", std::to_string(epochs)},
      {"seed", std::to_string(seed)},
      {"stop_accuracy", FormatDouble(stop_accuracy)},
  };
}

TrainConfig TrainConfig::Toy() {
  TrainConfig c;
  c.warmup_steps = 20;
  c.crop_frames = 200;
  c.batch_size = 32;
  c.epochs = 30;
  return c;
}

double LearningRate(const TrainConfig &config, std::int64_t step, int epoch) {
  double warm = std::min(static_cast<double>(step) / config.warmup_steps, 1.0);
  return config.lr0 * warm *
         std::ldexp(1.0, -(epoch / config.lr_halving_epochs));
}

void AdamStep(std::span<double> param, std::span<const double> grad,
              std::span<double> m, std::span<double> v, std::int64_t step,
              double lr, double weight_decay, const AdamHyper &hyper) {
  if (grad.size() != param.size() || m.size() != param.size() ||
      v.size() != param.size())
    throw Error(ErrorCode::kShapeMismatch, "adam state does not match parameter");
  if (step < 1) throw Error(ErrorCode::kInvalidArgument, "adam step counts from 1");
  const double c1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * g;
    v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * g * g;
    const double update = (m[i] / c1) / (std::sqrt(v[i] / c2) + hyper.eps);
    param[i] -= lr * update + lr * weight_decay * param[i];
  }
}

AdamOptimizer::AdamOptimizer(ParameterList params, AdamHyper hyper)
    : hyper_(hyper) {
  for (NamedTensor &p : params)
    if (p.trainable) params_.push_back(p);
  for (const NamedTensor &p : params_) {
    m_.emplace_back(static_cast<std::size_t>(p.tensor.numel()), 0.0);
    v_.emplace_back(static_cast<std::size_t>(p.tensor.numel()), 0.0);
  }
}

void AdamOptimizer::Step(double lr, double weight_decay) {
  ++step_;
  std::vector<double> zeros;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor &t = params_[i].tensor;
    std::span<const double> g = t.grad();
    // A parameter untouched by the loss still decays.
    if (g.empty()) {
      zeros.assign(static_cast<std::size_t>(t.numel()), 0.0);
      g = zeros;
    }
    AdamStep(t.mutable_data(), g, m_[i], v_[i], step_, lr, weight_decay, hyper_);
  }
}

void AdamOptimizer::ZeroGrad() {
  for (NamedTensor &p : params_) p.tensor.ZeroGrad();
}

std::vector<LabeledUtterance> MakeToyDataset(const ToyDataOptions &o) {
  if (o.num_speakers < 2)
    throw Error(ErrorCode::kInvalidArgument, "toy data needs at least 2 speakers");
  if (o.utts_per_speaker < 1 || o.min_frames < 1 || o.max_frames < o.min_frames ||
      o.num_bins < 1 || o.first_utterance < 0)
    throw Error(ErrorCode::kInvalidArgument, "bad toy data options");
  std::vector<LabeledUtterance> out(
      static_cast<std::size_t>(o.num_speakers) * o.utts_per_speaker);
  for (int s = 0; s < o.num_speakers; ++s) {
    const std::vector<double> profile = SpeakerProfile(o.seed, s, o.num_bins);
    double power = 0.0;
    for (double p : profile) power += p * p;
    const double rms = std::sqrt(power / o.num_bins);
    const double noise_std = std::isinf(o.snr_db) && o.snr_db > 0
                                 ? 0.0
                                 : rms * std::pow(10.0, -o.snr_db / 20.0);
    for (int j = 0; j < o.utts_per_speaker; ++j) {
      const int u = o.first_utterance + j;
      std::mt19937_64 rng = SeededRng({o.seed, 0x07735ULL,
                                       static_cast<std::uint64_t>(s),
                                       static_cast<std::uint64_t>(u)});
      const int frames =
          o.min_frames +
          static_cast<int>(Uniform01(rng) * (o.max_frames - o.min_frames + 1));
      // Slow loudness and spectral-tilt drift.
      const double gain_amp = o.modulation * (0.5 + 0.5 * Uniform01(rng));
      const double gain_period = 40.0 + 160.0 * Uniform01(rng);
      const double gain_phase = 2.0 * M_PI * Uniform01(rng);
      const double tilt_amp = o.modulation * (0.5 + 0.5 * Uniform01(rng));
      const double tilt_period = 40.0 + 160.0 * Uniform01(rng);
      const double tilt_phase = 2.0 * M_PI * Uniform01(rng);

      LabeledUtterance &item = out[static_cast<std::size_t>(s) * o.utts_per_speaker + j];
      item.label = s;
      char id[48];
      std::snprintf(id, sizeof(id), "spk%03d-utt%04d", s, u);
      item.id = id;
      FbankMatrix &m = item.fbank;
      m.num_frames = frames;
      m.num_bins = o.num_bins;
      m.data.resize(static_cast<std::size_t>(frames) * o.num_bins);
      for (int t = 0; t < frames; ++t) {
        const double gain = gain_amp * std::sin(2.0 * M_PI * t / gain_period + gain_phase);
        const double tilt = tilt_amp * std::sin(2.0 * M_PI * t / tilt_period + tilt_phase);
        for (int f = 0; f < o.num_bins; ++f) {
          double x = profile[f] + gain +
                     tilt * (static_cast<double>(f) / o.num_bins - 0.5);
          if (noise_std > 0.0) x += noise_std * Gaussian(rng);
          m.at(t, f) = static_cast<float>(x);
        }
      }
    }
  }
  return out;
}

std::string FormatEpochLine(const EpochMetrics &m) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "epoch=%d loss=%.6f acc=%.4f lr=%.6g", m.epoch,
                m.loss, m.accuracy, m.lr);
  return buf;
}

void RoundToStoragePrecision(const ParameterList &params) {
  for (const NamedTensor &p : params) {
    Tensor t = p.tensor;
    for (double &v : t.mutable_data()) v = static_cast<float>(v);
  }
}

std::vector<EpochMetrics> Train(
    SpeakerModel &model, const std::vector<LabeledUtterance> &data,
    const TrainConfig &config,
    const std::function<void(const EpochMetrics &)> &on_epoch) {
  config.Validate();
  if (data.size() < 2)
    throw Error(ErrorCode::kInvalidArgument, "training needs at least 2 items");
  const int classes = model.config().num_classes;
  for (const LabeledUtterance &u : data)
    if (u.label < 0 || u.label >= classes)
      throw Error(ErrorCode::kLabelOutOfRange,
                  "item " + u.id + " has label " + std::to_string(u.label));

  ParameterList params = model.Parameters();
  AdamOptimizer opt(params);
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<EpochMetrics> log;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    EpochMetrics em;
    em.epoch = epoch;
    double loss_sum = 0.0;
    std::size_t correct = 0, seen = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      if (end - start < 2) break;
      std::vector<FbankMatrix> crops;
      std::vector<int> labels;
      for (std::size_t i = start; i < end; ++i) {
        const LabeledUtterance &u = data[order[i]];
        crops.push_back(CropRandom(u.fbank, config.crop_frames, rng));
        labels.push_back(u.label);
      }
      ForwardContext ctx{true, &rng, nullptr};
      Tensor cosines;
      Tensor loss = model.Loss(StackFbanks(crops), labels, ctx, &cosines);
      opt.ZeroGrad();
      loss.Backward();
      em.lr = LearningRate(config, opt.steps() + 1, epoch);
      opt.Step(em.lr, config.weight_decay);
      loss_sum += loss.item();
      ++em.steps;
      std::span<const double> c = cosines.data();
      for (std::size_t b = 0; b < labels.size(); ++b) {
        const double *row = c.data() + b * classes;
        int best = static_cast<int>(std::max_element(row, row + classes) - row);
        correct += best == labels[b];
      }
      seen += labels.size();
    }
    em.loss = em.steps ? loss_sum / em.steps : 0.0;
    em.accuracy = seen ? static_cast<double>(correct) / seen : 0.0;
    log.push_back(em);
    if (on_epoch) on_epoch(em);
    if (config.stop_accuracy > 0.0 && em.accuracy >= config.stop_accuracy) break;
  }
  opt.ZeroGrad();
  RoundToStoragePrecision(params);
  return log;
}

std::string EncodeCheckpoint(const SpeakerModel &model) {
  ByteWriter w;
  w.PutBytes(std::string_view(kCheckpointMagic, 4));
  w.PutU32(kCheckpointVersion);
  const std::string blob = FormatKeyValues(model.config().ToKeyValues());
  w.PutU32(static_cast<std::uint32_t>(blob.size()));
  w.PutBytes(blob);
  const ParameterList params = model.Parameters();
  w.PutU32(static_cast<std::uint32_t>(params.size()));
  for (const NamedTensor &p : params) {
    w.PutU16(static_cast<std::uint16_t>(p.name.size()));
    w.PutBytes(p.name);
    w.PutU8(static_cast<std::uint8_t>(p.tensor.rank()));
    for (Index d : p.tensor.shape()) w.PutU32(static_cast<std::uint32_t>(d));
    for (double v : p.tensor.data()) w.PutF32(static_cast<float>(v));
  }
  return w.buffer();
}

SpeakerModel DecodeCheckpoint(const std::string &bytes) {
  ByteReader r(bytes);
  if (r.GetBytes(4) != std::string_view(kCheckpointMagic, 4))
    throw Error(ErrorCode::kUnsupportedFormat, "not an MFAC checkpoint");
  const std::uint32_t version = r.GetU32();
  if (version != kCheckpointVersion)
    throw Error(ErrorCode::kUnsupportedFormat,
                "checkpoint version " + std::to_string(version));
  const std::uint32_t blob_len = r.GetU32();
  ModelConfig config;
  for (const auto &[key, value] : ParseKeyValueText(std::string(r.GetBytes(blob_len))))
    if (!config.Set(key, value))
      throw Error(ErrorCode::kInvalidConfig, "unknown checkpoint config key '" + key + "'");
  SpeakerModel model(config, 0);

  std::map<std::string, Tensor> slots;
  for (const NamedTensor &p : model.Parameters()) slots[p.name] = p.tensor;
  std::set<std::string> loaded;
  const std::uint32_t count = r.GetU32();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name(r.GetBytes(r.GetU16()));
    auto it = slots.find(name);
    if (it == slots.end())
      throw Error(ErrorCode::kShapeMismatch, "unknown tensor '" + name + "'");
    if (!loaded.insert(name).second)
      throw Error(ErrorCode::kShapeMismatch, "duplicate tensor '" + name + "'");
    Shape shape(r.GetU8());
    for (Index &d : shape) d = r.GetU32();
    Tensor &t = it->second;
    if (shape != t.shape())
      throw Error(ErrorCode::kShapeMismatch,
                  name + ": stored " + ShapeString(shape) + ", model " +
                      ShapeString(t.shape()));
    for (double &v : t.mutable_data()) v = r.GetF32();
  }
  if (loaded.size() != slots.size()) {
    for (const auto &[name, t] : slots)
      if (!loaded.count(name))
        throw Error(ErrorCode::kShapeMismatch, "checkpoint lacks tensor '" + name + "'");
  }
  if (r.remaining() != 0)
    throw Error(ErrorCode::kUnsupportedFormat, "trailing bytes after checkpoint");
  return model;
}

void SaveCheckpoint(const std::string &path, const SpeakerModel &model) {
  WriteFile(path, EncodeCheckpoint(model));
}

SpeakerModel LoadCheckpoint(const std::string &path) {
  return DecodeCheckpoint(ReadFile(path));
}

}  // namespace mfa
