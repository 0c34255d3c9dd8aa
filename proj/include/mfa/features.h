// include/mfa/features.h

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

#ifndef MFA_FEATURES_H_
#define MFA_FEATURES_H_

#include <random>
#include <string>
#include <vector>

#include "mfa/tensor.h"

namespace mfa {

struct AudioBuffer {
  std::vector<float> samples;  // in [-1, 1]
  int sample_rate = 16000;

  double duration() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

// Reads a RIFF/WAVE file holding 16-bit little-endian mono PCM at 16 kHz.
// Throws NotFound, UnsupportedFormat or TruncatedFile.
AudioBuffer LoadWav(const std::string &path);
// Writes 16-bit PCM (samples clipped to [-1, 1) and scaled by 32768); the
// channel count is a parameter so tests can produce stereo files.
void WriteWav(const std::string &path, const AudioBuffer &audio,
              int num_channels = 1);

struct FbankOptions {
  int sample_rate = 16000;
  double frame_length = 0.025;  // seconds
  double frame_shift = 0.010;   // seconds
  int num_bins = 80;
  int fft_size = 512;
  double preemph = 0.97;
  double low_freq = 20.0;
  double high_freq = 7600.0;
  double log_floor = 1e-10;  // added to the mel energy before the log
  bool mean_norm = true;     // per-utterance mean subtraction over time

  int window_samples() const;
  int shift_samples() const;
};

/// T x F log-Mel energies, frame-major.
struct FbankMatrix {
  Index num_frames = 0;
  Index num_bins = 0;
  std::vector<float> data;
  double frame_shift = 0.010;
  double frame_length = 0.025;

  float at(Index t, Index f) const { return data[t * num_bins + f]; }
  float &at(Index t, Index f) { return data[t * num_bins + f]; }
};

// HTK mel scale.
double HzToMel(double hz);
double MelToHz(double mel);

/// Triangular filters laid out on the mel axis, one row per mel bin and one
/// column per non-negative FFT bin (fft_size / 2 + 1 columns).
std::vector<std::vector<double>> MelFilterBank(const FbankOptions &opts);
// Center frequency in Hz of each mel filter.
std::vector<double> MelCenterFrequencies(const FbankOptions &opts);

Index NumFrames(Index num_samples, const FbankOptions &opts);

/// Framing, pre-emphasis, Hamming window, power spectrum, mel filters,
/// log(energy + floor), then optional per-bin mean normalization.
/// Throws TooShort when the audio holds less than one window.
FbankMatrix ComputeFbank(const AudioBuffer &audio, const FbankOptions &opts);

/// A contiguous random window of num_frames frames; inputs shorter than
/// that are tiled (frame i is input frame i mod T).
FbankMatrix CropRandom(const FbankMatrix &fbank, Index num_frames,
                       std::mt19937_64 &rng);

// [1, T, F] model input.
Tensor FbankToTensor(const FbankMatrix &fbank);
Tensor StackFbanks(const std::vector<FbankMatrix> &batch);

// "MFAF" feature file: magic, u32 version, u32 T, u32 F, T*F f32 values.
std::string EncodeFeatureFile(const FbankMatrix &fbank);
FbankMatrix DecodeFeatureFile(const std::string &bytes);
void WriteFeatureFile(const std::string &path, const FbankMatrix &fbank);
FbankMatrix ReadFeatureFile(const std::string &path);

}  // namespace mfa

#endif  // MFA_FEATURES_H_
