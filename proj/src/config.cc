// src/config.cc

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

#include "mfa/config.h"

#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <sstream>

#include "mfa/error.h"

namespace mfa {

namespace {

std::string Trim(const std::string &s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

KeyValues ParseKeyValueText(const std::string &text) {
  KeyValues out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = Trim(line);
    if (t.empty() || t[0] == '#') continue;
    std::size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorCode::kInvalidConfig,
                  "line " + std::to_string(lineno) + " is not key=value: " + t);
    out.emplace_back(Trim(t.substr(0, eq)), Trim(t.substr(eq + 1)));
  }
  return out;
}

std::string FormatKeyValues(const KeyValues &kv) {
  std::string out;
  for (const auto &[k, v] : kv) out += k + "=" + v + "\n";
  return out;
}

const char *BlockKindName(BlockKind kind) {
  return kind == BlockKind::kConformer ? "conformer" : "transformer";
}

int ParseInt(const std::string &key, const std::string &value) {
  char *end = nullptr;
  long v = std::strtol(value.c_str(), &end, 10);
  if (value.empty() || *end != '\0')
    throw Error(ErrorCode::kInvalidConfig, key + ": not an integer: '" + value + "'");
  return static_cast<int>(v);
}

double ParseDouble(const std::string &key, const std::string &value) {
  char *end = nullptr;
  double v = std::strtod(value.c_str(), &end);
  if (value.empty() || *end != '\0')
    throw Error(ErrorCode::kInvalidConfig, key + ": not a number: '" + value + "'");
  return v;
}

bool ParseBool(const std::string &key, const std::string &value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw Error(ErrorCode::kInvalidConfig, key + ": not a boolean: '" + value + "'");
}

// Shortest text that parses back to the same double.
std::string FormatDouble(double v) {
  char buf[40];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void ModelConfig::Validate() const {
  auto fail = [](const std::string &what) {
    throw Error(ErrorCode::kInvalidConfig, what);
  };
  if (num_mel_bins < 1) fail("num_mel_bins must be positive");
  if (d_model < 2 || d_model % 2) fail("d_model must be even and positive");
  if (num_heads < 1 || d_model % num_heads)
    fail("d_model must be divisible by num_heads");
  if (conv_kernel < 1 || conv_kernel % 2 == 0) fail("conv_kernel must be odd");
  if (ffn_hidden < 1) fail("ffn_hidden must be positive");
  if (num_blocks < 1) fail("num_blocks must be positive");
  if (subsampling_rate != 1 && subsampling_rate != 2 && subsampling_rate != 4 &&
      subsampling_rate != 8)
    fail("subsampling_rate must be one of 1, 2, 4, 8");
  if (subsampling_channels < 1) fail("subsampling_channels must be positive");
  if (dropout < 0.0 || dropout >= 1.0) fail("dropout must be in [0, 1)");
  if (pool_eps <= 0.0) fail("pool_eps must be positive");
  if (embedding_dim < 1) fail("embedding_dim must be positive");
  if (num_classes < 0) fail("num_classes must be non-negative");
  if (am_margin < 0.0 || am_margin >= 1.0) fail("am_margin must be in [0, 1)");
  if (am_scale <= 0.0) fail("am_scale must be positive");
}

bool ModelConfig::Set(const std::string &key, const std::string &value) {
  if (key == "num_mel_bins") num_mel_bins = ParseInt(key, value);
  else if (key == "d_model") d_model = ParseInt(key, value);
  else if (key == "num_heads") num_heads = ParseInt(key, value);
  else if (key == "conv_kernel") conv_kernel = ParseInt(key, value);
  else if (key == "ffn_hidden") ffn_hidden = ParseInt(key, value);
  else if (key == "num_blocks") num_blocks = ParseInt(key, value);
  else if (key == "subsampling_rate") subsampling_rate = ParseInt(key, value);
  else if (key == "subsampling_channels") subsampling_channels = ParseInt(key, value);
  else if (key == "dropout") dropout = ParseDouble(key, value);
  else if (key == "use_relative_pe") use_relative_pe = ParseBool(key, value);
  else if (key == "use_macaron") use_macaron = ParseBool(key, value);
  else if (key == "use_conv_module") use_conv_module = ParseBool(key, value);
  else if (key == "block_kind") {
    if (value == "conformer") block_kind = BlockKind::kConformer;
    else if (value == "transformer") block_kind = BlockKind::kTransformer;
    else throw Error(ErrorCode::kInvalidConfig, key + ": unknown block kind '" + value + "'");
  }
  else if (key == "use_mfa") use_mfa = ParseBool(key, value);
  else if (key == "pool_weighted_mean") pool_weighted_mean = ParseBool(key, value);
  else if (key == "pool_eps") pool_eps = ParseDouble(key, value);
  else if (key == "embedding_dim") embedding_dim = ParseInt(key, value);
  else if (key == "num_classes") num_classes = ParseInt(key, value);
  else if (key == "am_margin") am_margin = ParseDouble(key, value);
  else if (key == "am_scale") am_scale = ParseDouble(key, value);
  else if (key == "loss_after_bn") loss_after_bn = ParseBool(key, value);
  else return false;
  return true;
}

KeyValues ModelConfig::ToKeyValues() const {
  auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  return {
      {"num_mel_bins", std::to_string(num_mel_bins)},
      {"d_model", std::to_string(d_model)},
      {"num_heads", std::to_string(num_heads)},
      {"conv_kernel", std::to_string(conv_kernel)},
      {"ffn_hidden", std::to_string(ffn_hidden)},
      {"num_blocks", std::to_string(num_blocks)},
      {"subsampling_rate", std::to_string(subsampling_rate)},
      {"subsampling_channels", std::to_string(subsampling_channels)},
      {"dropout", FormatDouble(dropout)},
      {"use_relative_pe", b(use_relative_pe)},
      {"use_macaron", b(use_macaron)},
      {"use_conv_module", b(use_conv_module)},
      {"block_kind", BlockKindName(block_kind)},
      {"use_mfa", b(use_mfa)},
      {"pool_weighted_mean", b(pool_weighted_mean)},
      {"pool_eps", FormatDouble(pool_eps)},
      {"embedding_dim", std::to_string(embedding_dim)},
      {"num_classes", std::to_string(num_classes)},
      {"am_margin", FormatDouble(am_margin)},
      {"am_scale", FormatDouble(am_scale)},
      {"loss_after_bn", b(loss_after_bn)},
  };
}

ModelConfig ModelConfig::Default() { return ModelConfig{}; }

ModelConfig ModelConfig::Toy() {
  ModelConfig c;
  c.d_model = 64;
  c.num_heads = 2;
  c.ffn_hidden = 256;
  c.num_blocks = 2;
  c.num_classes = 20;
  return c;
}

ModelConfig ModelConfig::Tiny() {
  ModelConfig c;
  c.d_model = 8;
  c.num_heads = 2;
  c.conv_kernel = 3;
  c.ffn_hidden = 16;
  c.num_blocks = 2;
  c.subsampling_channels = 4;
  c.num_classes = 3;
  return c;
}

ModelConfig ModelConfig::Preset(const std::string &name) {
  if (name == "default") return Default();
  if (name == "toy") return Toy();
  if (name == "tiny") return Tiny();
  throw Error(ErrorCode::kInvalidConfig, "unknown preset '" + name + "'");
}

}  // namespace mfa
