// tests/test_features.cc

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

#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <set>
#include <numbers>
#include <random>
#include <string>

#include "doctest.h"
#include "mfa/binary_io.h"
#include "mfa/error.h"
#include "mfa/features.h"
#include "test_util.h"

using namespace mfa;
using mfa::testing::TempPath;

namespace {

// Hand-rolled RIFF writer so malformed headers can be produced.
std::string WavBytes(int format, int channels, int rate, int bits,
                     const std::vector<std::int16_t> &samples,
                     std::int64_t declared_data_bytes = -1) {
  ByteWriter w;
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
  w.PutBytes("RIFF");
  w.PutU32(36 + data_bytes);
  w.PutBytes("WAVE");
  w.PutBytes("fmt ");
  w.PutU32(16);
  w.PutU16(static_cast<std::uint16_t>(format));
  w.PutU16(static_cast<std::uint16_t>(channels));
  w.PutU32(static_cast<std::uint32_t>(rate));
  w.PutU32(static_cast<std::uint32_t>(rate * channels * bits / 8));
  w.PutU16(static_cast<std::uint16_t>(channels * bits / 8));
  w.PutU16(static_cast<std::uint16_t>(bits));
  w.PutBytes("data");
  w.PutU32(declared_data_bytes < 0 ? data_bytes
                                   : static_cast<std::uint32_t>(declared_data_bytes));
  for (std::int16_t s : samples) w.PutU16(static_cast<std::uint16_t>(s));
  return w.buffer();
}

ErrorCode CodeOf(const std::function<void()> &f) {
  try {
    f();
  } catch (const Error &e) {
    return e.code();
  }
  FAIL("no error thrown");
  return ErrorCode::kInvalidArgument;
}

AudioBuffer Sine(double hz, Index n, double amp = 0.5) {
  AudioBuffer a;
  a.samples.resize(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i)
    a.samples[i] = static_cast<float>(amp * std::sin(2.0 * std::numbers::pi * hz * i / 16000.0));
  return a;
}

AudioBuffer Noise(Index n, std::uint64_t seed, double amp = 0.3) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(-amp, amp);
  AudioBuffer a;
  for (Index i = 0; i < n; ++i) a.samples.push_back(static_cast<float>(d(rng)));
  return a;
}

// Independent front end: direct O(N^2) DFT and a filter table built from
// the natural-log form of the HTK mel formula.
struct OracleFbank {
  std::vector<std::vector<double>> filters;

  OracleFbank() {
    auto mel = [](double f) { return 1127.0 * std::log1p(f / 700.0); };
    const double lo = mel(20.0), hi = mel(7600.0), step = (hi - lo) / 81.0;
    filters.assign(80, std::vector<double>(257, 0.0));
    for (int m = 0; m < 80; ++m) {
      const double l = lo + m * step, c = l + step, r = c + step;
      for (int k = 0; k < 257; ++k) {
        const double f = mel(k * 16000.0 / 512.0);
        if (f > l && f <= c) filters[m][k] = (f - l) / step;
        else if (f > c && f < r) filters[m][k] = (r - f) / step;
      }
    }
  }

  std::vector<double> Power(const float *src) const {
    std::vector<double> frame(512, 0.0);
    for (int i = 0; i < 400; ++i) frame[i] = src[i];
    std::vector<double> emph(400);
    emph[0] = frame[0] - 0.97 * frame[0];
    for (int i = 1; i < 400; ++i) emph[i] = frame[i] - 0.97 * frame[i - 1];
    for (int i = 0; i < 400; ++i)
      frame[i] = emph[i] * (0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * i / 399.0));
    std::vector<double> power(257);
    for (int k = 0; k < 257; ++k) {
      double re = 0.0, im = 0.0;
      for (int n = 0; n < 512; ++n) {
        const double ang = -2.0 * std::numbers::pi * k * n / 512.0;
        re += frame[n] * std::cos(ang);
        im += frame[n] * std::sin(ang);
      }
      power[k] = re * re + im * im;
    }
    return power;
  }

  std::vector<double> MelEnergies(const float *src) const {
    std::vector<double> p = Power(src), e(80, 0.0);
    for (int m = 0; m < 80; ++m)
      for (int k = 0; k < 257; ++k) e[m] += filters[m][k] * p[k];
    return e;
  }
};

}  // namespace

TEST_SUITE("wav") {
  TEST_CASE("round trip preserves length and values") {
    AudioBuffer a = Noise(48000, 1);
    const std::string path = TempPath("noise.wav");
    WriteWav(path, a);
    AudioBuffer b = LoadWav(path);
    CHECK(b.samples.size() == 48000);
    CHECK(b.duration() == doctest::Approx(3.0));
    for (std::size_t i = 0; i < a.samples.size(); i += 997)
      CHECK(std::abs(b.samples[i] - a.samples[i]) <= 1.0 / 32768.0);
  }

  TEST_CASE("all-zero file loads as zeros") {
    const std::string path = TempPath("zeros.wav");
    WriteFile(path, WavBytes(1, 1, 16000, 16, std::vector<std::int16_t>(800, 0)));
    AudioBuffer a = LoadWav(path);
    REQUIRE(a.samples.size() == 800);
    for (float s : a.samples) CHECK(s == 0.0f);
  }

  TEST_CASE("sample scaling is 1/32768") {
    const std::string path = TempPath("scale.wav");
    WriteFile(path, WavBytes(1, 1, 16000, 16, {-32768, 16384, 32767}));
    AudioBuffer a = LoadWav(path);
    CHECK(a.samples[0] == -1.0f);
    CHECK(a.samples[1] == 0.5f);
    CHECK(a.samples[2] == doctest::Approx(32767.0 / 32768.0));
  }

  TEST_CASE("error contract") {
    const std::string p = TempPath("bad.wav");
    CHECK(CodeOf([] { LoadWav(TempPath("does-not-exist.wav")); }) == ErrorCode::kNotFound);
    WriteFile(p, WavBytes(1, 2, 16000, 16, std::vector<std::int16_t>(100, 0)));
    CHECK(CodeOf([&] { LoadWav(p); }) == ErrorCode::kUnsupportedFormat);
    WriteFile(p, WavBytes(3, 1, 16000, 16, std::vector<std::int16_t>(100, 0)));
    CHECK(CodeOf([&] { LoadWav(p); }) == ErrorCode::kUnsupportedFormat);
    WriteFile(p, WavBytes(1, 1, 16000, 8, std::vector<std::int16_t>(100, 0)));
    CHECK(CodeOf([&] { LoadWav(p); }) == ErrorCode::kUnsupportedFormat);
    WriteFile(p, WavBytes(1, 1, 44100, 16, std::vector<std::int16_t>(100, 0)));
    CHECK(CodeOf([&] { LoadWav(p); }) == ErrorCode::kUnsupportedFormat);
    std::string bytes = WavBytes(1, 1, 16000, 16, std::vector<std::int16_t>(100, 0));
    bytes[0] = 'X';
    WriteFile(p, bytes);
    CHECK(CodeOf([&] { LoadWav(p); }) == ErrorCode::kUnsupportedFormat);
    WriteFile(p, WavBytes(1, 1, 16000, 16, std::vector<std::int16_t>(100, 0), 1000));
    CHECK(CodeOf([&] { LoadWav(p); }) == ErrorCode::kTruncatedFile);
    WriteFile(p, WavBytes(1, 1, 16000, 16, {}).substr(0, 30));
    CHECK(CodeOf([&] { LoadWav(p); }) == ErrorCode::kTruncatedFile);
  }

  TEST_CASE("stereo writer output is rejected on load") {
    AudioBuffer a = Noise(1000, 2);
    const std::string path = TempPath("stereo.wav");
    WriteWav(path, a, 2);
    CHECK(CodeOf([&] { LoadWav(path); }) == ErrorCode::kUnsupportedFormat);
  }
}

TEST_SUITE("fbank") {
  TEST_CASE("mel scale") {
    CHECK(HzToMel(0.0) == 0.0);
    CHECK(HzToMel(700.0) == doctest::Approx(1127.0 * std::log(2.0)));
    for (double hz : {20.0, 1000.0, 7600.0}) CHECK(MelToHz(HzToMel(hz)) == doctest::Approx(hz).epsilon(1e-12));
  }

  TEST_CASE("framing arithmetic") {
    FbankOptions o;
    CHECK(o.window_samples() == 400);
    CHECK(o.shift_samples() == 160);
    CHECK(NumFrames(48000, o) == 298);
    for (Index n = 400; n < 5000; n += 37) CHECK(NumFrames(n, o) == 1 + (n - 400) / 160);
    CHECK(NumFrames(399, o) == 0);
    FbankMatrix m = ComputeFbank(Noise(48000, 3), o);
    CHECK(m.num_frames == 298);
    CHECK(m.num_bins == 80);
    CHECK(m.frame_shift == 0.010);
    CHECK(m.frame_length == 0.025);
  }

  TEST_CASE("too short") {
    CHECK(CodeOf([] { ComputeFbank(Noise(399, 4), FbankOptions{}); }) == ErrorCode::kTooShort);
    CHECK(ComputeFbank(Noise(400, 4), FbankOptions{}).num_frames == 1);
  }

  TEST_CASE("filter table matches an independent construction") {
    OracleFbank oracle;
    auto banks = MelFilterBank(FbankOptions{});
    REQUIRE(banks.size() == 80);
    double worst = 0.0;
    for (int m = 0; m < 80; ++m)
      for (int k = 0; k < 257; ++k)
        worst = std::max(worst, std::abs(banks[m][k] - oracle.filters[m][k]));
    CHECK(worst < 1e-9);
  }

  TEST_CASE("log energies match a naive DFT pipeline") {
    OracleFbank oracle;
    AudioBuffer a = Noise(2000, 5);
    FbankOptions o;
    o.mean_norm = false;
    FbankMatrix m = ComputeFbank(a, o);
    for (Index t = 0; t < m.num_frames; ++t) {
      std::vector<double> e = oracle.MelEnergies(a.samples.data() + t * 160);
      for (int b = 0; b < 80; ++b)
        CHECK(m.at(t, b) == doctest::Approx(std::log(e[b] + 1e-10)).epsilon(1e-6));
    }
  }

  TEST_CASE("1 kHz sine peaks in the bin centred nearest 1 kHz") {
    OracleFbank oracle;
    AudioBuffer a = Sine(1000.0, 4000);
    FbankOptions o;
    o.mean_norm = false;
    FbankMatrix m = ComputeFbank(a, o);
    std::vector<double> e = oracle.MelEnergies(a.samples.data() + 5 * 160);
    int oracle_arg = static_cast<int>(std::max_element(e.begin(), e.end()) - e.begin());
    std::vector<double> centers = MelCenterFrequencies(o);
    int nearest = 0;
    for (int b = 1; b < 80; ++b)
      if (std::abs(centers[b] - 1000.0) < std::abs(centers[nearest] - 1000.0)) nearest = b;
    int arg = 0;
    for (int b = 1; b < 80; ++b)
      if (m.at(5, b) > m.at(5, arg)) arg = b;
    CHECK(arg == oracle_arg);
    CHECK(arg == nearest);
  }

  TEST_CASE("zero audio normalizes to zeros") {
    AudioBuffer a;
    a.samples.assign(8000, 0.0f);
    FbankMatrix m = ComputeFbank(a, FbankOptions{});
    for (float v : m.data) CHECK(v == 0.0f);
    FbankOptions raw;
    raw.mean_norm = false;
    FbankMatrix r = ComputeFbank(a, raw);
    for (float v : r.data) CHECK(v == static_cast<float>(std::log(1e-10)));
  }

  TEST_CASE("mean normalization zeroes every bin's mean") {
    FbankMatrix m = ComputeFbank(Noise(16000, 6), FbankOptions{});
    for (Index b = 0; b < 80; ++b) {
      double mean = 0.0;
      for (Index t = 0; t < m.num_frames; ++t) mean += m.at(t, b);
      CHECK(std::abs(mean / m.num_frames) < 1e-6);
    }
  }

  TEST_CASE("gain changes vanish after mean normalization") {
    // Samples sit on the 16-bit PCM grid so that scaling them is exact in
    // float. At amplitude 0.1 the lowest bins dip to energies near 1e-6 on
    // some frames, where the 1e-10 floor alone moves entries by ~3e-5.
    AudioBuffer a = Noise(16000, 7, 0.5);
    for (float &s : a.samples) s = std::round(s * 32768.0f) / 32768.0f;
    FbankMatrix fa = ComputeFbank(a, FbankOptions{});
    for (float c : {3.0f, 0.5f, 7.0f}) {
      AudioBuffer b = a;
      for (float &s : b.samples) s *= c;
      FbankMatrix fb = ComputeFbank(b, FbankOptions{});
      double worst = 0.0;
      for (std::size_t i = 0; i < fa.data.size(); ++i)
        worst = std::max(worst, static_cast<double>(std::abs(fa.data[i] - fb.data[i])));
      CHECK(worst < 1e-5);
    }
  }

  TEST_CASE("deterministic") {
    AudioBuffer a = Noise(9000, 8);
    FbankMatrix x = ComputeFbank(a, FbankOptions{}), y = ComputeFbank(a, FbankOptions{});
    CHECK(x.data == y.data);
  }
}

TEST_SUITE("crop") {
  FbankMatrix Ramp(Index frames) {
    FbankMatrix m;
    m.num_frames = frames;
    m.num_bins = 2;
    for (Index t = 0; t < frames; ++t) {
      m.data.push_back(static_cast<float>(t));
      m.data.push_back(static_cast<float>(-t));
    }
    return m;
  }

  TEST_CASE("full-length crop is the identity") {
    std::mt19937_64 rng(1);
    FbankMatrix m = Ramp(298);
    CHECK(CropRandom(m, 298, rng).data == m.data);
  }

  TEST_CASE("short inputs wrap") {
    std::mt19937_64 rng(2);
    FbankMatrix c = CropRandom(Ramp(100), 300, rng);
    REQUIRE(c.num_frames == 300);
    for (Index t = 0; t < 300; ++t) CHECK(c.at(t, 0) == static_cast<float>(t % 100));
  }

  TEST_CASE("seeded crops repeat and are contiguous") {
    FbankMatrix m = Ramp(298);
    std::mt19937_64 r1(3), r2(3);
    FbankMatrix a = CropRandom(m, 150, r1), b = CropRandom(m, 150, r2);
    CHECK(a.data == b.data);
    const float start = a.at(0, 0);
    CHECK(start >= 0.0f);
    CHECK(start <= 148.0f);
    for (Index t = 0; t < 150; ++t) CHECK(a.at(t, 0) == start + t);
  }

  TEST_CASE("offsets cover the whole range") {
    FbankMatrix m = Ramp(20);
    std::mt19937_64 rng(4);
    std::set<float> starts;
    for (int i = 0; i < 500; ++i) starts.insert(CropRandom(m, 15, rng).at(0, 0));
    CHECK(starts.size() == 6);
  }
}

TEST_SUITE("feature file") {
  TEST_CASE("round trip is bit-exact") {
    FbankMatrix m = ComputeFbank(Noise(48000, 9), FbankOptions{});
    const std::string path = TempPath("feat.mfaf");
    WriteFeatureFile(path, m);
    FbankMatrix r = ReadFeatureFile(path);
    CHECK(r.num_frames == 298);
    CHECK(r.num_bins == 80);
    CHECK(std::memcmp(r.data.data(), m.data.data(), m.data.size() * sizeof(float)) == 0);
    std::string bytes = ReadFile(path);
    CHECK(bytes.substr(0, 4) == "MFAF");
    CHECK(bytes.size() == 16 + 298 * 80 * 4);
  }

  TEST_CASE("malformed files") {
    FbankMatrix m;
    m.num_frames = 2;
    m.num_bins = 3;
    m.data = {1, 2, 3, 4, 5, 6};
    std::string good = EncodeFeatureFile(m);
    CHECK(DecodeFeatureFile(good).data == m.data);
    CHECK(CodeOf([&] { DecodeFeatureFile(good.substr(0, good.size() - 1)); }) == ErrorCode::kTruncatedFile);
    CHECK(CodeOf([&] { DecodeFeatureFile(good + "x"); }) == ErrorCode::kUnsupportedFormat);
    CHECK(CodeOf([&] { DecodeFeatureFile("MFAX" + good.substr(4)); }) == ErrorCode::kUnsupportedFormat);
  }

  TEST_CASE("stacking checks sizes") {
    FbankMatrix a, b;
    a.num_frames = 2; a.num_bins = 1; a.data = {1, 2};
    b.num_frames = 3; b.num_bins = 1; b.data = {1, 2, 3};
    CHECK(StackFbanks({a, a}).shape() == Shape{2, 2, 1});
    CHECK_THROWS_AS(StackFbanks({a, b}), Error);
  }
}
