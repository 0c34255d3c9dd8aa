// include/mfa/config.h

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

#ifndef MFA_CONFIG_H_
#define MFA_CONFIG_H_

#include <map>
#include <string>
#include <utility>
#include <vector>

namespace mfa {

using KeyValues = std::vector<std::pair<std::string, std::string>>;

// Parses "key=value" lines. Blank lines and lines starting with '#' are
// skipped; whitespace around keys and values is trimmed. Throws
// InvalidConfig on a line without '='.
KeyValues ParseKeyValueText(const std::string &text);
std::string FormatKeyValues(const KeyValues &kv);

enum class BlockKind { kConformer, kTransformer };

const char *BlockKindName(BlockKind kind);

/// Architecture hyper-parameters of the embedding network and its
/// classification head.
struct ModelConfig {
  int num_mel_bins = 80;

  int d_model = 256;
  int num_heads = 4;
  int conv_kernel = 15;
  int ffn_hidden = 2048;
  int num_blocks = 6;
  int subsampling_rate = 2;  // denominator: 1, 2, 4 or 8
  int subsampling_channels = 32;
  double dropout = 0.1;
  bool use_relative_pe = true;
  bool use_macaron = true;
  bool use_conv_module = true;
  BlockKind block_kind = BlockKind::kConformer;

  bool use_mfa = true;
  // false selects the literal unweighted-mean variance term in pooling.
  bool pool_weighted_mean = true;
  double pool_eps = 1e-9;
  int embedding_dim = 192;

  int num_classes = 0;  // AM-Softmax classes; 0 when no head is attached
  double am_margin = 0.2;
  double am_scale = 30.0;
  bool loss_after_bn = true;

  // Throws InvalidConfig naming the offending field.
  void Validate() const;
  // Returns false when the key is not a model key; throws InvalidConfig on
  // a malformed value.
  bool Set(const std::string &key, const std::string &value);
  KeyValues ToKeyValues() const;

  static ModelConfig Default();
  // Desk-scale encoder used for the synthetic-speaker experiments.
  static ModelConfig Toy();
  // The smallest configuration, used by gradient checking.
  static ModelConfig Tiny();
  // Throws InvalidConfig for an unknown preset name.
  static ModelConfig Preset(const std::string &name);
};

// Value parsing shared by the config structs. All throw InvalidConfig
// naming the key.
int ParseInt(const std::string &key, const std::string &value);
double ParseDouble(const std::string &key, const std::string &value);
bool ParseBool(const std::string &key, const std::string &value);
std::string FormatDouble(double v);

}  // namespace mfa

#endif  // MFA_CONFIG_H_
