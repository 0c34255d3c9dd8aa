// src/wav.cc

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

#include <algorithm>
#include <cmath>

#include "mfa/binary_io.h"
#include "mfa/error.h"
#include "mfa/features.h"

namespace mfa {

AudioBuffer LoadWav(const std::string &path) {
  const std::string bytes = ReadFile(path);
  ByteReader reader(bytes);
  if (bytes.size() < 12)
    throw Error(ErrorCode::kTruncatedFile, path + ": shorter than a RIFF header");
  if (reader.GetBytes(4) != "RIFF")
    throw Error(ErrorCode::kUnsupportedFormat, path + ": missing RIFF magic");
  reader.GetU32();  // riff size; not trusted
  if (reader.GetBytes(4) != "WAVE")
    throw Error(ErrorCode::kUnsupportedFormat, path + ": missing WAVE magic");

  bool have_fmt = false;
  std::uint16_t channels = 0, bits = 0;
  std::uint32_t rate = 0;
  while (true) {
    if (reader.remaining() == 0)
      throw Error(ErrorCode::kTruncatedFile, path + ": no data chunk");
    std::string_view id = reader.GetBytes(4);
    std::uint32_t size = reader.GetU32();
    if (id == "fmt ") {
      if (size < 16)
        throw Error(ErrorCode::kUnsupportedFormat, path + ": short fmt chunk");
      ByteReader fmt(reader.GetBytes(size));
      std::uint16_t format = fmt.GetU16();
      channels = fmt.GetU16();
      rate = fmt.GetU32();
      fmt.GetU32();  // byte rate
      fmt.GetU16();  // block align
      bits = fmt.GetU16();
      if (format != 1)
        throw Error(ErrorCode::kUnsupportedFormat,
                    path + ": only PCM (format 1) is supported");
      have_fmt = true;
      if (size % 2) reader.GetBytes(1);
    } else if (id == "data") {
      if (!have_fmt)
        throw Error(ErrorCode::kUnsupportedFormat, path + ": data before fmt");
      if (channels != 1)
        throw Error(ErrorCode::kUnsupportedFormat,
                    path + ": " + std::to_string(channels) +
                        " channels; only mono is supported");
      if (bits != 16)
        throw Error(ErrorCode::kUnsupportedFormat,
                    path + ": " + std::to_string(bits) +
                        "-bit samples; only 16-bit is supported");
      if (rate != 16000)
        throw Error(ErrorCode::kUnsupportedFormat,
                    path + ": sample rate " + std::to_string(rate) +
                        "; only 16000 Hz is supported");
      if (size > reader.remaining())
        throw Error(ErrorCode::kTruncatedFile,
                    path + ": data chunk declares " + std::to_string(size) +
                        " bytes, " + std::to_string(reader.remaining()) +
                        " present");
      if (size % 2)
        throw Error(ErrorCode::kTruncatedFile, path + ": odd data chunk size");
      AudioBuffer audio;
      audio.sample_rate = static_cast<int>(rate);
      audio.samples.resize(size / 2);
      for (float &s : audio.samples)
        s = static_cast<float>(static_cast<std::int16_t>(reader.GetU16())) /
            32768.0f;
      if (audio.samples.empty())
        throw Error(ErrorCode::kUnsupportedFormat, path + ": empty data chunk");
      return audio;
    } else {
      reader.GetBytes(size + (size % 2));
    }
  }
}

void WriteWav(const std::string &path, const AudioBuffer &audio,
              int num_channels) {
  const auto frames = static_cast<std::uint32_t>(audio.samples.size());
  const std::uint32_t data_bytes = frames * 2u * static_cast<std::uint32_t>(num_channels);
  ByteWriter w;
  w.PutBytes("RIFF");
  w.PutU32(36 + data_bytes);
  w.PutBytes("WAVE");
  w.PutBytes("fmt ");
  w.PutU32(16);
  w.PutU16(1);
  w.PutU16(static_cast<std::uint16_t>(num_channels));
  w.PutU32(static_cast<std::uint32_t>(audio.sample_rate));
  w.PutU32(static_cast<std::uint32_t>(audio.sample_rate) * 2u *
           static_cast<std::uint32_t>(num_channels));
  w.PutU16(static_cast<std::uint16_t>(2 * num_channels));
  w.PutU16(16);
  w.PutBytes("data");
  w.PutU32(data_bytes);
  for (float s : audio.samples) {
    double scaled = std::round(static_cast<double>(s) * 32768.0);
    auto v = static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0));
    for (int c = 0; c < num_channels; ++c) w.PutU16(static_cast<std::uint16_t>(v));
  }
  WriteFile(path, w.buffer());
}

}  // namespace mfa
