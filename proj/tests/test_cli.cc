// tests/test_cli.cc

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

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <random>
#include <sstream>
#include <string>

#include "doctest.h"
#include "mfa/binary_io.h"
#include "mfa/features.h"
#include "test_util.h"

#ifndef MFA_CLI_PATH
#error "MFA_CLI_PATH must name the mfa executable"
#endif

using namespace mfa;
using mfa::testing::TempPath;

namespace {

struct RunResult {
  int code = -1;
  std::string out;
  std::string err;
};

RunResult Run(const std::string &args) {
  const std::string out = TempPath("cli_stdout.txt"), err = TempPath("cli_stderr.txt");
  const std::string cmd =
      std::string(MFA_CLI_PATH) + " " + args + " >" + out + " 2>" + err;
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = ReadFile(out);
  r.err = ReadFile(err);
  return r;
}

std::string Wav(const std::string &name, double seconds, std::uint64_t seed, int channels = 1) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(-0.3, 0.3);
  AudioBuffer a;
  const auto n = static_cast<std::size_t>(seconds * 16000);
  for (std::size_t i = 0; i < n; ++i)
    a.samples.push_back(static_cast<float>(d(rng) + 0.2 * std::sin(0.05 * i * (1 + seed % 5))));
  const std::string path = TempPath(name);
  WriteWav(path, a, channels);
  return path;
}

std::vector<std::string> Lines(const std::string &text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);)
    if (!l.empty()) out.push_back(l);
  return out;
}

std::size_t FieldCount(const std::string &line) {
  std::istringstream in(line);
  std::size_t n = 0;
  for (std::string f; in >> f;) ++n;
  return n;
}

// A small checkpoint shared by the consumer tests.
const std::string &TinyCheckpoint() {
  static const std::string path = [] {
    const std::string p = TempPath("cli_tiny.mfac");
    RunResult r = Run("train-toy --preset tiny --seed 7 --epochs 2 --speakers 3 --utts 4 --out " + p);
    REQUIRE(r.code == 0);
    return p;
  }();
  return path;
}

}  // namespace

TEST_SUITE("cli usage") {
  TEST_CASE("unknown flags and missing subcommands are usage errors") {
    CHECK(Run("").code == 1);
    CHECK(Run("featurize --bogus 1").code == 1);
    CHECK(Run("nosuchcommand").code == 1);
    CHECK(Run("--help").code == 0);
  }

  TEST_CASE("invalid config key names the key") {
    const std::string cfg = TempPath("cli_bad.cfg");
    WriteFile(cfg, "d_model=8\nwibble=3\n");
    RunResult r = Run("train-toy --config " + cfg + " --out " + TempPath("x.mfac"));
    CHECK(r.code == 3);
    CHECK(r.err.find("wibble") != std::string::npos);
  }
}

TEST_SUITE("cli featurize") {
  TEST_CASE("three seconds make 298 frames") {
    const std::string out = TempPath("cli_feat.mfaf");
    RunResult r = Run("featurize --wav " + Wav("cli3s.wav", 3.0, 1) + " --out " + out);
    REQUIRE(r.code == 0);
    FbankMatrix m = ReadFeatureFile(out);
    CHECK(m.num_frames == 298);
    CHECK(m.num_bins == 80);
  }

  TEST_CASE("missing input is an I/O error") {
    RunResult r = Run("featurize --wav " + TempPath("nope.wav") + " --out " + TempPath("n.mfaf"));
    CHECK(r.code == 2);
    CHECK_FALSE(r.err.empty());
  }

  TEST_CASE("stereo input is a validation error") {
    RunResult r = Run("featurize --wav " + Wav("cli_stereo.wav", 0.5, 2, 2) + " --out " +
                      TempPath("s.mfaf"));
    CHECK(r.code == 3);
    CHECK(r.err.find("unsupported format") != std::string::npos);
  }
}

TEST_SUITE("cli train") {
  TEST_CASE("seeded runs repeat exactly") {
    const std::string a = TempPath("cli_a.log"), b = TempPath("cli_b.log");
    const std::string common = "train-toy --preset tiny --seed 7 --epochs 2 --speakers 3 --utts 4";
    REQUIRE(Run(common + " --out " + TempPath("cli_a.mfac") + " --log " + a).code == 0);
    REQUIRE(Run(common + " --out " + TempPath("cli_b.mfac") + " --log " + b).code == 0);
    auto lines = Lines(ReadFile(a));
    REQUIRE(lines.size() == 2);
    CHECK(lines[0].rfind("epoch=0 loss=", 0) == 0);
    CHECK(lines[1].find(" acc=") != std::string::npos);
    CHECK(ReadFile(a) == ReadFile(b));
    CHECK(ReadFile(TempPath("cli_a.mfac")) == ReadFile(TempPath("cli_b.mfac")));
  }

  TEST_CASE("dumped configuration reproduces the run") {
    const std::string flags =
        "train-toy --preset tiny --seed 3 --epochs 1 --speakers 3 --utts 4 --no-macaron --out " +
        TempPath("cli_d1.mfac");
    RunResult dump = Run(flags + " --dump-config");
    REQUIRE(dump.code == 0);
    CHECK(dump.out.find("use_macaron=false") != std::string::npos);
    const std::string cfg = TempPath("cli_dump.cfg");
    std::string text = dump.out;
    const auto pos = text.find("cli_d1.mfac");
    REQUIRE(pos != std::string::npos);
    text.replace(pos, 11, "cli_d2.mfac");
    WriteFile(cfg, text);
    REQUIRE(Run(flags).code == 0);
    REQUIRE(Run("train-toy --config " + cfg).code == 0);
    CHECK(ReadFile(TempPath("cli_d1.mfac")) == ReadFile(TempPath("cli_d2.mfac")));
    // Flags override the file.
    RunResult over = Run("train-toy --config " + cfg + " --epochs 4 --dump-config");
    CHECK(over.out.find("epochs=4") != std::string::npos);
  }
}

TEST_SUITE("cli embed and score") {
  TEST_CASE("one wav gives one 192-d line, deterministically") {
    const std::string wav = Wav("cli_e1.wav", 1.0, 3);
    RunResult a = Run("embed --model " + TinyCheckpoint() + " --wav " + wav);
    RunResult b = Run("embed --model " + TinyCheckpoint() + " --wav " + wav);
    REQUIRE(a.code == 0);
    auto lines = Lines(a.out);
    REQUIRE(lines.size() == 1);
    CHECK(FieldCount(lines[0]) == 193);
    CHECK(lines[0].rfind("cli_e1 ", 0) == 0);
    CHECK(a.out == b.out);
  }

  TEST_CASE("lists and parallel jobs agree") {
    const std::string list = TempPath("cli_list.txt");
    std::string text;
    for (int i = 0; i < 4; ++i)
      text += "u" + std::to_string(i) + " " + Wav("cli_l" + std::to_string(i) + ".wav", 0.8, 10 + i) + "\n";
    WriteFile(list, text);
    RunResult one = Run("embed --model " + TinyCheckpoint() + " --wav-list " + list);
    RunResult four = Run("embed --model " + TinyCheckpoint() + " --wav-list " + list + " --jobs 4");
    REQUIRE(one.code == 0);
    CHECK(Lines(one.out).size() == 4);
    CHECK(one.out == four.out);
  }

  TEST_CASE("too-short audio") {
    RunResult r = Run("embed --model " + TinyCheckpoint() + " --wav " + Wav("cli_short.wav", 0.02, 4));
    CHECK(r.code == 3);
    CHECK(r.err.find("too short") != std::string::npos);
  }

  TEST_CASE("scoring from tables and from audio") {
    const std::string table = TempPath("cli_emb.txt"), cohort = TempPath("cli_cohort.txt");
    const std::string list = TempPath("cli_slist.txt");
    std::string text;
    for (int i = 0; i < 3; ++i)
      text += "s" + std::to_string(i) + " " + Wav("cli_s" + std::to_string(i) + ".wav", 0.8, 20 + i) + "\n";
    WriteFile(list, text);
    REQUIRE(Run("embed --model " + TinyCheckpoint() + " --wav-list " + list + " --out " + table).code == 0);
    text.clear();
    for (int i = 0; i < 5; ++i)
      text += "c" + std::to_string(i) + " " + Wav("cli_c" + std::to_string(i) + ".wav", 0.8, 40 + i) + "\n";
    WriteFile(list, text);
    REQUIRE(Run("embed --model " + TinyCheckpoint() + " --wav-list " + list + " --out " + cohort).code == 0);

    const std::string trials = TempPath("cli_trials.txt");
    WriteFile(trials, "1 s0 s1\n0 s0 s2\n1 s1 s2\n");
    RunResult raw = Run("score --embeddings " + table + " --trials " + trials);
    REQUIRE(raw.code == 0);
    auto lines = Lines(raw.out);
    REQUIRE(lines.size() == 3);
    for (const auto &l : lines) CHECK(FieldCount(l) == 4);

    RunResult norm = Run("score --embeddings " + table + " --trials " + trials + " --cohort " +
                         cohort + " --snorm-topk 3");
    REQUIRE(norm.code == 0);
    for (const auto &l : Lines(norm.out)) CHECK(FieldCount(l) == 5);

    WriteFile(trials, "1 s0 ghost\n");
    RunResult bad = Run("score --embeddings " + table + " --trials " + trials);
    CHECK(bad.code == 3);
    CHECK(bad.err.find("ghost") != std::string::npos);

    // With --model the ids are paths; the scores equal the table route.
    const std::string w0 = TempPath("cli_s0.wav"), w1 = TempPath("cli_s1.wav");
    WriteFile(trials, "1 " + w0 + " " + w1 + "\n");
    RunResult direct = Run("score --model " + TinyCheckpoint() + " --trials " + trials);
    REQUIRE(direct.code == 0);
    const std::string via_table = Lines(raw.out)[0].substr(Lines(raw.out)[0].rfind(' '));
    CHECK(direct.out.substr(direct.out.rfind(' ', direct.out.size() - 2)) == via_table + "\n");
  }
}

TEST_SUITE("cli eval") {
  TEST_CASE("separable scores and defaults") {
    const std::string scores = TempPath("cli_scores.txt");
    WriteFile(scores, "1 a b 0.900000\n1 a c 0.800000\n0 a d 0.100000\n0 a e 0.200000\n");
    RunResult r = Run("eval --scores " + scores);
    REQUIRE(r.code == 0);
    for (const char *want : {"eer=0\n", "min_dcf=0\n", "p_target=0.01\n", "c_fa=1\n", "c_miss=1\n",
                             "num_target=2\n", "num_nontarget=2\n"})
      CHECK(r.out.find(want) != std::string::npos);
  }

  TEST_CASE("one class only") {
    const std::string scores = TempPath("cli_targets.txt");
    WriteFile(scores, "1 a b 0.900000\n1 a c 0.800000\n");
    RunResult r = Run("eval --scores " + scores);
    CHECK(r.code == 3);
    CHECK(r.err.find("empty class") != std::string::npos);
  }
}

TEST_SUITE("cli benchmark and gradcheck") {
  TEST_CASE("one warmup plus the timed runs") {
    RunResult r = Run("benchmark-rtf --model " + TinyCheckpoint() + " --seconds 2 --repeats 5");
    REQUIRE(r.code == 0);
    CHECK(r.out.find("forward_passes=6\n") != std::string::npos);
    CHECK(r.out.find("repeats=5\n") != std::string::npos);
    for (const char *stage : {"stage.fbank=", "stage.subsampling=", "stage.blocks=", "stage.pooling="})
      CHECK(r.out.find(stage) != std::string::npos);
    CHECK(Run("benchmark-rtf --preset tiny --seconds 1 --repeats 2").code == 3);
  }

  TEST_CASE("tiny gradcheck passes and a corrupted op is named") {
    RunResult ok = Run("gradcheck --preset tiny --seed 0");
    CHECK(ok.code == 0);
    auto lines = Lines(ok.out);
    int pass_lines = 0;
    for (const auto &l : lines) pass_lines += l.rfind("PASS ", 0) == 0;
    CHECK(pass_lines + 1 == static_cast<int>(lines.size()));
    CHECK(pass_lines > 40);

    RunResult bad = Run("gradcheck --preset tiny --seed 0 --corrupt-op swish");
    CHECK(bad.code == 3);
    CHECK(bad.out.find("FAIL encoder.block0.ffn1.w1.weight") != std::string::npos);
  }
}
