// include/mfa/binary_io.h

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

#ifndef MFA_BINARY_IO_H_
#define MFA_BINARY_IO_H_

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace mfa {

// Little-endian encoders/decoders over byte buffers, independent of host
// byte order.
class ByteWriter {
 public:
  void PutBytes(std::string_view bytes);
  void PutU8(std::uint8_t v);
  void PutU16(std::uint16_t v);
  void PutU32(std::uint32_t v);
  void PutF32(float v);
  const std::string &buffer() const { return buf_; }

 private:
  std::string buf_;
};

// Every getter throws TruncatedFile when the buffer runs out.
class ByteReader {
 public:
  explicit ByteReader(std::string_view bytes) : bytes_(bytes) {}
  std::string_view GetBytes(std::size_t n);
  std::uint8_t GetU8();
  std::uint16_t GetU16();
  std::uint32_t GetU32();
  float GetF32();
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

// Whole-file helpers. ReadFile throws NotFound/Io; WriteFile throws Io.
std::string ReadFile(const std::string &path);
void WriteFile(const std::string &path, std::string_view bytes);

}  // namespace mfa

#endif  // MFA_BINARY_IO_H_
