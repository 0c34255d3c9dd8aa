// tests/test_encoder.cc

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
#include <map>
#include <random>
#include <set>

#include "doctest.h"
#include "mfa/encoder.h"
#include "mfa/error.h"
#include "mfa/model.h"
#include "oracles.h"
#include "test_util.h"

using namespace mfa;
using namespace mfa::testing;
using mfa::testing::MaxAbsDiff;
using mfa::testing::MaxGradError;
using mfa::testing::RandomTensor;
using mfa::testing::WeightedSum;

namespace {

void Randomize(const ParameterList &params, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-0.5, 0.5);
  for (const auto &p : params) {
    if (!p.trainable) continue;
    Tensor t = p.tensor;
    for (double &v : t.mutable_data()) v += dist(rng);
  }
}

ModelConfig SmallConfig() {
  ModelConfig c = ModelConfig::Tiny();
  c.dropout = 0.0;
  return c;
}

}  // namespace

TEST_SUITE("positional encoding") {
  TEST_CASE("subsampled lengths") {
    CHECK(SubsampledLength(298, 1) == 298);
    CHECK(SubsampledLength(298, 2) == 149);
    CHECK(SubsampledLength(298, 4) == 75);
    CHECK(SubsampledLength(298, 8) == 38);
    CHECK(SubsampledLength(1, 8) == 1);
    CHECK(SubsampledLength(3001, 8) == 376);
  }

  TEST_CASE("relative table rows are offsets") {
    Tensor rel = RelativeSinusoidalEncoding(5, 8);
    CHECK(rel.shape() == Shape{9, 8});
    for (Index j = 0; j < 9; ++j) {
      std::vector<double> e = Sinusoid(static_cast<double>(j - 4), 8);
      CHECK(MaxAbsDiff(rel.data().subspan(j * 8, 8), e) < 1e-14);
    }
    Tensor abs = AbsoluteSinusoidalEncoding(4, 6);
    for (Index j = 0; j < 4; ++j)
      CHECK(MaxAbsDiff(abs.data().subspan(j * 6, 6), Sinusoid(static_cast<double>(j), 6)) < 1e-14);
  }

  TEST_CASE("relative scores gather by offset") {
    std::mt19937_64 rng(1);
    Tensor q = RandomTensor({2, 4, 3}, rng, 1.0, false);
    Tensor rel = RandomTensor({7, 3}, rng, 1.0, false);
    Tensor s = RelativePositionScores(q, rel);
    REQUIRE(s.shape() == Shape{2, 4, 4});
    for (Index b = 0; b < 2; ++b)
      for (Index t = 0; t < 4; ++t)
        for (Index tau = 0; tau < 4; ++tau) {
          double ref = 0.0;
          for (Index j = 0; j < 3; ++j) ref += q.at({b, t, j}) * rel.at({t - tau + 3, j});
          CHECK(s.at({b, t, tau}) == doctest::Approx(ref).epsilon(1e-14));
        }
  }
}

TEST_SUITE("attention") {
  TEST_CASE("matches a loop-level oracle") {
    for (int heads : {1, 2, 4}) {
      ModelConfig c = SmallConfig();
      c.num_heads = heads;
      std::mt19937_64 rng(10 + heads);
      MultiHeadSelfAttention mhsa;
      mhsa.Init(c, true, rng);
      ParameterList params;
      mhsa.Register("mhsa", params);
      Randomize(params, 20 + heads);
      auto p = ByName(params);
      Tensor x = RandomTensor({2, 6, 8}, rng, 1.0, false);
      std::vector<Tensor> weights;
      Tensor y = mhsa.Forward(x, ForwardContext{}, &weights);
      REQUIRE(weights.size() == static_cast<std::size_t>(heads));
      for (Index b = 0; b < 2; ++b) {
        std::vector<Mat> ref_w;
        Mat ref = NaiveAttention(Rows(x, b), p, heads, &ref_w);
        Mat got = Rows(y, b);
        double worst = 0.0;
        for (std::size_t t = 0; t < ref.size(); ++t)
          worst = std::max(worst, MaxAbsDiff(got[t], ref[t]));
        CHECK(worst < 1e-10);
        for (int hd = 0; hd < heads; ++hd)
          for (Index t = 0; t < 6; ++t)
            for (Index tau = 0; tau < 6; ++tau)
              CHECK(weights[hd].at({b, t, tau}) == doctest::Approx(ref_w[hd][t][tau]).epsilon(1e-10));
      }
    }
  }

  TEST_CASE("attention rows are distributions") {
    ModelConfig c = SmallConfig();
    std::mt19937_64 rng(3);
    MultiHeadSelfAttention mhsa;
    mhsa.Init(c, true, rng);
    Tensor x = RandomTensor({3, 7, 8}, rng, 2.0, false);
    std::vector<Tensor> weights;
    mhsa.Forward(x, ForwardContext{}, &weights);
    for (const Tensor &w : weights)
      for (Index b = 0; b < 3; ++b)
        for (Index t = 0; t < 7; ++t) {
          double s = 0.0;
          for (Index tau = 0; tau < 7; ++tau) {
            CHECK(w.at({b, t, tau}) >= 0.0);
            s += w.at({b, t, tau});
          }
          CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
        }
  }

  TEST_CASE("single frame attends to itself") {
    ModelConfig c = SmallConfig();
    std::mt19937_64 rng(4);
    MultiHeadSelfAttention mhsa;
    mhsa.Init(c, true, rng);
    Tensor x = RandomTensor({2, 1, 8}, rng, 1.0, false);
    std::vector<Tensor> weights;
    Tensor y = mhsa.Forward(x, ForwardContext{}, &weights);
    CHECK(y.shape() == Shape{2, 1, 8});
    for (const Tensor &w : weights) CHECK(w.at({0, 0, 0}) == 1.0);
  }

  TEST_CASE("position term depends only on the offset") {
    ModelConfig c = SmallConfig();
    std::mt19937_64 rng(5);
    MultiHeadSelfAttention mhsa;
    mhsa.Init(c, true, rng);
    ParameterList params;
    mhsa.Register("mhsa", params);
    Randomize(params, 6);
    for (int hd = 0; hd < 2; ++hd) {
      Tensor bias = mhsa.PositionBias(9, hd);
      REQUIRE(bias.shape() == Shape{9, 9});
      for (Index t = 1; t < 9; ++t)
        for (Index tau = 1; tau < 9; ++tau)
          CHECK(bias.at({t, tau}) == doctest::Approx(bias.at({t - 1, tau - 1})).epsilon(1e-12));
      // Not a constant: the relative term actually carries information.
      CHECK(std::abs(bias.at({0, 8}) - bias.at({8, 0})) > 1e-6);
    }
  }

  TEST_CASE("absolute variant has no position term") {
    ModelConfig c = SmallConfig();
    c.use_relative_pe = false;
    std::mt19937_64 rng(7);
    MultiHeadSelfAttention mhsa;
    mhsa.Init(c, true, rng);
    ParameterList params;
    mhsa.Register("mhsa", params);
    for (const auto &p : params) CHECK(p.name.find("pos") == std::string::npos);
    CHECK_THROWS_AS(mhsa.PositionBias(4, 0), Error);
  }

  TEST_CASE("wrong width is rejected") {
    ModelConfig c = SmallConfig();
    std::mt19937_64 rng(8);
    MultiHeadSelfAttention mhsa;
    mhsa.Init(c, true, rng);
    Tensor x = Tensor::Zeros({1, 3, 6});
    CHECK_THROWS_AS(mhsa.Forward(x, ForwardContext{}), Error);
  }
}

TEST_SUITE("encoder block") {
  TEST_CASE("zeroed branches reduce to the final LayerNorm") {
    ModelConfig c = SmallConfig();
    std::mt19937_64 rng(11);
    EncoderBlock block;
    block.Init(c, rng);
    block.ZeroBranchOutputs();
    Tensor x = RandomTensor({2, 5, 8}, rng, 1.5, false);
    Tensor y = block.Forward(x, ForwardContext{});
    Tensor ref = block.final_norm().Forward(x);
    CHECK(MaxAbsDiff(y.data(), ref.data()) < 1e-9);
    // Independent LayerNorm oracle for the same identity.
    for (Index b = 0; b < 2; ++b) {
      Mat want = LayerNormRows(Rows(x, b), Tensor::Full({8}, 1.0), Tensor::Zeros({8}));
      Mat got = Rows(y, b);
      for (std::size_t t = 0; t < want.size(); ++t) CHECK(MaxAbsDiff(got[t], want[t]) < 1e-9);
    }
  }

  TEST_CASE("gradient check through one block") {
    for (bool train : {false, true}) {
      ModelConfig c = SmallConfig();
      std::mt19937_64 rng(12);
      EncoderBlock block;
      block.Init(c, rng);
      ParameterList params;
      block.Register("b", params);
      Randomize(params, 13);
      Tensor x = RandomTensor({2, 5, 8}, rng, 1.0, true);
      ForwardContext ctx;
      ctx.train = train;
      auto f = [&] { return WeightedSum(block.Forward(x, ctx)); };
      // Key biases shift every logit of a row equally and cancel in the
      // softmax; in train mode the depthwise bias is removed by the batch
      // mean. Their gradients are zero, so a relative error is meaningless.
      std::vector<Tensor> inputs{x}, null_grad;
      for (const auto &p : params) {
        if (!p.trainable) continue;
        const bool zero = p.name.ends_with("key.bias") ||
                          (train && p.name.ends_with("dw.bias"));
        (zero ? null_grad : inputs).push_back(p.tensor);
      }
      CHECK(null_grad.size() == (train ? 2u : 1u));
      CHECK(MaxGradError(f, inputs) < 1e-5);
      for (Tensor &t : null_grad)
        for (double g : t.grad()) CHECK(std::abs(g) < 1e-12);
    }
  }

  TEST_CASE("transformer block gradient check") {
    ModelConfig c = SmallConfig();
    c.block_kind = BlockKind::kTransformer;
    c.use_relative_pe = false;
    std::mt19937_64 rng(14);
    EncoderBlock block;
    block.Init(c, rng);
    ParameterList params;
    block.Register("b", params);
    Tensor x = RandomTensor({2, 4, 8}, rng, 1.0, true);
    std::vector<Tensor> inputs{x};
    for (const auto &p : params)
      if (!p.name.ends_with("key.bias")) inputs.push_back(p.tensor);
    auto f = [&] { return WeightedSum(block.Forward(x, ForwardContext{})); };
    CHECK(MaxGradError(f, inputs) < 1e-5);
  }

  TEST_CASE("shape is preserved for every variant") {
    for (int variant = 0; variant < 5; ++variant) {
      ModelConfig c = SmallConfig();
      if (variant == 1) c.use_relative_pe = false;
      if (variant == 2) c.use_macaron = false;
      if (variant == 3) c.use_conv_module = false;
      if (variant == 4) c.block_kind = BlockKind::kTransformer;
      std::mt19937_64 rng(15);
      EncoderBlock block;
      block.Init(c, rng);
      for (Index t : {1, 2, 9}) {
        Tensor x = Tensor::Full({3, t, 8}, 0.25);
        CHECK(block.Forward(x, ForwardContext{}).shape() == Shape{3, t, 8});
      }
    }
  }
}

TEST_SUITE("encoder") {
  TEST_CASE("output shapes follow the subsampling rate") {
    for (int rate : {1, 2, 4, 8}) {
      ModelConfig c = SmallConfig();
      c.subsampling_rate = rate;
      std::mt19937_64 rng(16);
      Encoder enc;
      enc.Init(c, rng);
      std::mt19937_64 data_rng(17);
      Tensor fbank = RandomTensor({2, 37, 80}, data_rng, 1.0, false);
      auto hs = enc.Forward(fbank, ForwardContext{});
      REQUIRE(hs.size() == 2);
      for (const Tensor &h : hs) CHECK(h.shape() == Shape{2, SubsampledLength(37, rate), 8});
    }
  }

  TEST_CASE("eval forward is deterministic and batch independent") {
    ModelConfig c = SmallConfig();
    c.dropout = 0.1;
    std::mt19937_64 rng(18);
    Encoder enc;
    enc.Init(c, rng);
    std::mt19937_64 data_rng(19);
    Tensor a = RandomTensor({1, 20, 80}, data_rng, 1.0, false);
    Tensor b = RandomTensor({1, 20, 80}, data_rng, 1.0, false);
    std::vector<double> both(a.data().begin(), a.data().end());
    both.insert(both.end(), b.data().begin(), b.data().end());
    Tensor ab = Tensor::FromData({2, 20, 80}, both);
    auto h1 = enc.Forward(a, ForwardContext{});
    auto h2 = enc.Forward(a, ForwardContext{});
    auto h12 = enc.Forward(ab, ForwardContext{});
    CHECK(MaxAbsDiff(h1.back().data(), h2.back().data()) == 0.0);
    CHECK(MaxAbsDiff(h1.back().data(), h12.back().data().subspan(0, h1.back().numel())) < 1e-12);
  }

  TEST_CASE("block outputs compose") {
    ModelConfig c = SmallConfig();
    c.num_blocks = 3;
    std::mt19937_64 rng(20);
    Encoder enc;
    enc.Init(c, rng);
    std::mt19937_64 data_rng(21);
    Tensor fbank = RandomTensor({1, 16, 80}, data_rng, 1.0, false);
    auto hs = enc.Forward(fbank, ForwardContext{});
    REQUIRE(hs.size() == 3);
    Tensor next = enc.blocks()[1].Forward(hs[0], ForwardContext{});
    CHECK(MaxAbsDiff(next.data(), hs[1].data()) < 1e-12);
    next = enc.blocks()[2].Forward(hs[1], ForwardContext{});
    CHECK(MaxAbsDiff(next.data(), hs[2].data()) < 1e-12);
  }

  TEST_CASE("seeded initialization is reproducible") {
    ModelConfig c = SmallConfig();
    SpeakerModel a(c, 5), b(c, 5), other(c, 6);
    auto pa = a.Parameters(), pb = b.Parameters(), po = other.Parameters();
    REQUIRE(pa.size() == pb.size());
    bool differs = false;
    for (std::size_t i = 0; i < pa.size(); ++i) {
      CHECK(pa[i].name == pb[i].name);
      CHECK(MaxAbsDiff(pa[i].tensor.data(), pb[i].tensor.data()) == 0.0);
      if (MaxAbsDiff(pa[i].tensor.data(), po[i].tensor.data()) > 0.0) differs = true;
    }
    CHECK(differs);
  }

  TEST_CASE("ablations change the parameter count") {
    std::set<Index> counts;
    for (int variant = 0; variant < 6; ++variant) {
      ModelConfig c = ModelConfig::Toy();
      if (variant == 1) c.use_relative_pe = false;
      if (variant == 2) c.use_macaron = false;
      if (variant == 3) c.use_conv_module = false;
      if (variant == 4) c.block_kind = BlockKind::kTransformer;
      if (variant == 5) c.use_mfa = false;
      counts.insert(SpeakerModel(c, 1).NumEmbeddingParameters());
    }
    CHECK(counts.size() == 6);
  }
}
