// src/features.cc

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

#include "mfa/features.h"

#include <cmath>
#include <complex>
#include <numbers>

#include <unsupported/Eigen/FFT>

#include "mfa/binary_io.h"
#include "mfa/error.h"

namespace mfa {

int FbankOptions::window_samples() const {
  return static_cast<int>(std::lround(frame_length * sample_rate));
}

int FbankOptions::shift_samples() const {
  return static_cast<int>(std::lround(frame_shift * sample_rate));
}

double HzToMel(double hz) { return 1127.0 * std::log(1.0 + hz / 700.0); }

double MelToHz(double mel) { return 700.0 * (std::exp(mel / 1127.0) - 1.0); }

std::vector<std::vector<double>> MelFilterBank(const FbankOptions &opts) {
  const int num_fft_bins = opts.fft_size / 2 + 1;
  const double mel_low = HzToMel(opts.low_freq);
  const double mel_high = HzToMel(opts.high_freq);
  const double delta = (mel_high - mel_low) / (opts.num_bins + 1);
  const double hz_per_bin =
      static_cast<double>(opts.sample_rate) / opts.fft_size;
  std::vector<std::vector<double>> banks(
      static_cast<std::size_t>(opts.num_bins),
      std::vector<double>(static_cast<std::size_t>(num_fft_bins), 0.0));
  for (int m = 0; m < opts.num_bins; ++m) {
    double left = mel_low + m * delta;
    double center = left + delta;
    double right = center + delta;
    for (int k = 0; k < num_fft_bins; ++k) {
      double mel = HzToMel(k * hz_per_bin);
      double w = 0.0;
      if (mel > left && mel <= center)
        w = (mel - left) / (center - left);
      else if (mel > center && mel < right)
        w = (right - mel) / (right - center);
      banks[m][k] = w;
    }
  }
  return banks;
}

std::vector<double> MelCenterFrequencies(const FbankOptions &opts) {
  const double mel_low = HzToMel(opts.low_freq);
  const double delta = (HzToMel(opts.high_freq) - mel_low) / (opts.num_bins + 1);
  std::vector<double> centers;
  for (int m = 0; m < opts.num_bins; ++m)
    centers.push_back(MelToHz(mel_low + (m + 1) * delta));
  return centers;
}

Index NumFrames(Index num_samples, const FbankOptions &opts) {
  const Index w = opts.window_samples(), h = opts.shift_samples();
  if (num_samples < w) return 0;
  return 1 + (num_samples - w) / h;
}

FbankMatrix ComputeFbank(const AudioBuffer &audio, const FbankOptions &opts) {
  const int window = opts.window_samples();
  const int shift = opts.shift_samples();
  if (window > opts.fft_size)
    throw Error(ErrorCode::kInvalidConfig, "window longer than the FFT size");
  const Index num_samples = static_cast<Index>(audio.samples.size());
  if (num_samples < window)
    throw Error(ErrorCode::kTooShort,
                std::to_string(num_samples) + " samples, need at least " +
                    std::to_string(window));

  const auto banks = MelFilterBank(opts);
  std::vector<double> hamming(static_cast<std::size_t>(window));
  for (int i = 0; i < window; ++i)
    hamming[i] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * i / (window - 1));

  FbankMatrix out;
  out.num_frames = NumFrames(num_samples, opts);
  out.num_bins = opts.num_bins;
  out.frame_shift = opts.frame_shift;
  out.frame_length = opts.frame_length;
  out.data.resize(static_cast<std::size_t>(out.num_frames * out.num_bins));

  Eigen::FFT<double> fft;
  std::vector<double> frame(static_cast<std::size_t>(opts.fft_size));
  std::vector<std::complex<double>> spectrum;
  std::vector<double> power(static_cast<std::size_t>(opts.fft_size / 2 + 1));
  std::vector<double> log_energy(static_cast<std::size_t>(out.num_frames * out.num_bins));
  for (Index t = 0; t < out.num_frames; ++t) {
    std::fill(frame.begin(), frame.end(), 0.0);
    const float *src = audio.samples.data() + t * shift;
    for (int i = 0; i < window; ++i) frame[i] = src[i];
    for (int i = window - 1; i > 0; --i) frame[i] -= opts.preemph * frame[i - 1];
    frame[0] -= opts.preemph * frame[0];
    for (int i = 0; i < window; ++i) frame[i] *= hamming[i];
    fft.fwd(spectrum, frame);
    for (std::size_t k = 0; k < power.size(); ++k) power[k] = std::norm(spectrum[k]);
    for (int m = 0; m < opts.num_bins; ++m) {
      double e = 0.0;
      for (std::size_t k = 0; k < power.size(); ++k) e += banks[m][k] * power[k];
      log_energy[t * out.num_bins + m] = std::log(e + opts.log_floor);
    }
  }
  if (opts.mean_norm) {
    for (Index m = 0; m < out.num_bins; ++m) {
      // Shifted by the first frame so constant bins come out exactly zero.
      const double ref = log_energy[m];
      double offset = 0.0;
      for (Index t = 0; t < out.num_frames; ++t) offset += log_energy[t * out.num_bins + m] - ref;
      offset /= static_cast<double>(out.num_frames);
      for (Index t = 0; t < out.num_frames; ++t)
        log_energy[t * out.num_bins + m] = (log_energy[t * out.num_bins + m] - ref) - offset;
    }
  }
  for (std::size_t i = 0; i < log_energy.size(); ++i)
    out.data[i] = static_cast<float>(log_energy[i]);
  return out;
}

FbankMatrix CropRandom(const FbankMatrix &fbank, Index num_frames,
                       std::mt19937_64 &rng) {
  if (num_frames < 1)
    throw Error(ErrorCode::kInvalidArgument, "crop length must be positive");
  FbankMatrix out = fbank;
  out.num_frames = num_frames;
  out.data.resize(static_cast<std::size_t>(num_frames * fbank.num_bins));
  Index offset = 0;
  if (fbank.num_frames > num_frames) {
    std::uniform_int_distribution<Index> pick(0, fbank.num_frames - num_frames);
    offset = pick(rng);
  }
  for (Index t = 0; t < num_frames; ++t) {
    Index src = fbank.num_frames >= num_frames ? offset + t : t % fbank.num_frames;
    std::copy_n(fbank.data.data() + src * fbank.num_bins, fbank.num_bins,
                out.data.data() + t * fbank.num_bins);
  }
  return out;
}

Tensor FbankToTensor(const FbankMatrix &fbank) { return StackFbanks({fbank}); }

Tensor StackFbanks(const std::vector<FbankMatrix> &batch) {
  if (batch.empty()) throw Error(ErrorCode::kInvalidArgument, "empty batch");
  const Index t_len = batch[0].num_frames, bins = batch[0].num_bins;
  std::vector<double> data;
  data.reserve(batch.size() * static_cast<std::size_t>(t_len * bins));
  for (const FbankMatrix &f : batch) {
    if (f.num_frames != t_len || f.num_bins != bins)
      throw Error(ErrorCode::kShapeMismatch, "batch items differ in size");
    data.insert(data.end(), f.data.begin(), f.data.end());
  }
  return Tensor::FromData({static_cast<Index>(batch.size()), t_len, bins},
                          std::move(data));
}

std::string EncodeFeatureFile(const FbankMatrix &fbank) {
  ByteWriter w;
  w.PutBytes("MFAF");
  w.PutU32(1);
  w.PutU32(static_cast<std::uint32_t>(fbank.num_frames));
  w.PutU32(static_cast<std::uint32_t>(fbank.num_bins));
  for (float v : fbank.data) w.PutF32(v);
  return w.buffer();
}

FbankMatrix DecodeFeatureFile(const std::string &bytes) {
  ByteReader r(bytes);
  if (bytes.size() < 4 || r.GetBytes(4) != "MFAF")
    throw Error(ErrorCode::kUnsupportedFormat, "missing MFAF magic");
  std::uint32_t version = r.GetU32();
  if (version != 1)
    throw Error(ErrorCode::kUnsupportedFormat,
                "feature file version " + std::to_string(version));
  FbankMatrix out;
  out.num_frames = r.GetU32();
  out.num_bins = r.GetU32();
  if (out.num_frames < 1 || out.num_bins < 1)
    throw Error(ErrorCode::kUnsupportedFormat, "empty feature matrix");
  out.data.resize(static_cast<std::size_t>(out.num_frames * out.num_bins));
  for (float &v : out.data) v = r.GetF32();
  if (r.remaining() != 0)
    throw Error(ErrorCode::kUnsupportedFormat, "trailing bytes after features");
  return out;
}

void WriteFeatureFile(const std::string &path, const FbankMatrix &fbank) {
  WriteFile(path, EncodeFeatureFile(fbank));
}

FbankMatrix ReadFeatureFile(const std::string &path) {
  return DecodeFeatureFile(ReadFile(path));
}

}  // namespace mfa
