// tools/mfa.cc

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

// mfa: command-line front end for feature extraction, toy training,
// embedding extraction, scoring, evaluation, benchmarking and gradient
// checking.
//
// Every flag has a config-file key (the flag name without dashes, '-'
// replaced by '_'). Values from --config are applied first, then flags.

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "mfa/binary_io.h"
#include "mfa/config.h"
#include "mfa/error.h"
#include "mfa/features.h"
#include "mfa/gradcheck.h"
#include "mfa/model.h"
#include "mfa/scoring.h"
#include "mfa/training.h"

namespace {

using mfa::Error;
using mfa::ErrorCode;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitIo = 2;
constexpr int kExitValidation = 3;

// "UnsupportedFormat" -> "unsupported format".
std::string HumanCodeName(ErrorCode code) {
  std::string out;
  for (const char *p = mfa::ErrorCodeName(code); *p; ++p) {
    if (std::isupper(static_cast<unsigned char>(*p)) && !out.empty()) out += ' ';
    out += static_cast<char>(std::tolower(static_cast<unsigned char>(*p)));
  }
  return out;
}

// One subcommand's settings: model and training hyper-parameters plus
// command-local keys, fed from the config file and then from flags.
struct Command {
  std::string name;
  CLI::App *app = nullptr;
  bool uses_model_config = false;
  bool uses_train_config = false;
  std::string default_preset = "default";

  std::string config_path;
  bool dump_config = false;
  std::string preset_flag;

  std::map<std::string, std::string> local;  // key -> resolved value
  // Flag storage, keyed like the config file.
  std::map<std::string, std::string> flag_values;
  std::vector<std::pair<std::string, CLI::Option *>> valued;
  struct Switch {
    std::string key, value;
    CLI::Option *opt;
  };
  std::vector<Switch> switches;

  mfa::ModelConfig model;
  mfa::TrainConfig train;

  void Option(const std::string &flag, const std::string &key,
              const std::string &default_value, const std::string &help) {
    local[key] = default_value;
    CLI::Option *o = app->add_option(flag, flag_values[key], help);
    valued.push_back({key, o});
  }
  // A value that lives in the model or training config.
  void ConfigOption(const std::string &flag, const std::string &key,
                    const std::string &help) {
    CLI::Option *o = app->add_option(flag, flag_values[key], help);
    valued.push_back({key, o});
  }
  void SwitchOption(const std::string &flag, const std::string &key,
                    const std::string &value, const std::string &help) {
    switches.push_back({key, value, app->add_flag(flag, help)});
  }

  void Apply(const std::string &key, const std::string &value) {
    if (key == "preset") return;  // consumed before anything else
    if (uses_model_config && model.Set(key, value)) return;
    if (uses_train_config && train.Set(key, value)) return;
    auto it = local.find(key);
    if (it == local.end())
      throw Error(ErrorCode::kInvalidConfig,
                  "unknown config key '" + key + "' for " + name);
    it->second = value;
  }

  void Resolve() {
    mfa::KeyValues file;
    if (!config_path.empty())
      file = mfa::ParseKeyValueText(mfa::ReadFile(config_path));
    std::string preset = default_preset;
    for (const auto &[k, v] : file)
      if (k == "preset") preset = v;
    if (!preset_flag.empty()) preset = preset_flag;
    if (uses_model_config) model = mfa::ModelConfig::Preset(preset);
    if (uses_train_config) train = mfa::TrainConfig::Toy();
    for (const auto &[k, v] : file) Apply(k, v);
    for (const auto &[k, o] : valued)
      if (o->count() > 0) Apply(k, flag_values[k]);
    for (const Switch &s : switches)
      if (s.opt->count() > 0) Apply(s.key, s.value);
    if (uses_model_config) model.Validate();
    if (uses_train_config) train.Validate();
  }

  std::string Dump() const {
    mfa::KeyValues kv;
    if (uses_model_config)
      for (auto &p : model.ToKeyValues()) kv.push_back(p);
    if (uses_train_config)
      for (auto &p : train.ToKeyValues()) kv.push_back(p);
    for (const auto &[k, v] : local) kv.push_back({k, v});
    return mfa::FormatKeyValues(kv);
  }

  const std::string &Get(const std::string &key) const { return local.at(key); }
  int GetInt(const std::string &key) const { return mfa::ParseInt(key, Get(key)); }
  double GetDouble(const std::string &key) const {
    return mfa::ParseDouble(key, Get(key));
  }
  const std::string &Require(const std::string &key) const {
    const std::string &v = Get(key);
    if (v.empty()) {
      std::string flag = key;
      std::replace(flag.begin(), flag.end(), '_', '-');
      throw Error(ErrorCode::kInvalidConfig, name + " needs --" + flag);
    }
    return v;
  }
};

void AddCommon(Command &c) {
  c.app->add_option("--config", c.config_path, "key=value config file");
  c.app->add_flag("--dump-config", c.dump_config,
                  "print the resolved configuration and exit");
}

void AddModelFlags(Command &c) {
  c.app->add_option("--preset", c.preset_flag, "default, toy or tiny");
  c.SwitchOption("--no-relative-pe", "use_relative_pe", "false",
                 "absolute sinusoidal positions instead of relative");
  c.SwitchOption("--no-macaron", "use_macaron", "false",
                 "single full-residual feed-forward module");
  c.SwitchOption("--no-conv", "use_conv_module", "false",
                 "drop the convolution module");
  c.SwitchOption("--no-mfa", "use_mfa", "false",
                 "pool the last block output only");
  c.ConfigOption("--block-kind", "block_kind", "conformer or transformer");
  c.ConfigOption("--subsampling", "subsampling_rate", "1, 2, 4 or 8");
}

// Feature-file bytes start with "MFAF"; anything else is read as WAV.
mfa::FbankMatrix LoadInput(const std::string &path) {
  std::string head = mfa::ReadFile(path).substr(0, 4);
  if (head == "MFAF") return mfa::ReadFeatureFile(path);
  return mfa::ComputeFbank(mfa::LoadWav(path), mfa::FbankOptions{});
}

mfa::Embedding EmbedInput(const mfa::SpeakerModel &model, const std::string &path) {
  mfa::NoGradGuard no_grad;
  mfa::ForwardContext ctx;
  mfa::Tensor e = model.Embed(mfa::FbankToTensor(LoadInput(path)), ctx);
  return mfa::Embedding(e.data().begin(), e.data().end());
}

std::string StemOf(const std::string &path) {
  return std::filesystem::path(path).stem().string();
}

void WriteOrPrint(const std::string &out, const std::string &text) {
  if (out.empty() || out == "-") std::cout << text << std::flush;
  else mfa::WriteFile(out, text);
}

int RunFeaturize(Command &c) {
  mfa::FbankOptions opts;
  opts.mean_norm = c.Get("mean_norm") == "true";
  mfa::FbankMatrix m = mfa::ComputeFbank(mfa::LoadWav(c.Require("wav")), opts);
  mfa::WriteFeatureFile(c.Require("out"), m);
  std::cout << "frames=" << m.num_frames << " bins=" << m.num_bins << "\n";
  return kExitOk;
}

int RunTrainToy(Command &c) {
  mfa::ToyDataOptions data_opts;
  data_opts.num_speakers = c.model.num_classes;
  data_opts.utts_per_speaker = c.GetInt("toy_utts");
  data_opts.snr_db = c.GetDouble("toy_snr_db");
  data_opts.seed = c.train.seed;
  std::vector<mfa::LabeledUtterance> data = mfa::MakeToyDataset(data_opts);
  mfa::SpeakerModel model(c.model, c.train.seed);
  std::string log;
  mfa::Train(model, data, c.train, [&](const mfa::EpochMetrics &m) {
    std::string line = mfa::FormatEpochLine(m);
    std::cout << line << "\n" << std::flush;
    log += line + "\n";
  });
  mfa::SaveCheckpoint(c.Require("out"), model);
  if (!c.Get("log").empty()) mfa::WriteFile(c.Get("log"), log);
  return kExitOk;
}

// "<id> <path>" or "<path>" per line.
std::vector<std::pair<std::string, std::string>> ReadWavList(const std::string &path) {
  std::vector<std::pair<std::string, std::string>> out;
  std::istringstream in(mfa::ReadFile(path));
  for (std::string line; std::getline(in, line);) {
    std::istringstream fields(line);
    std::string a, b;
    if (!(fields >> a) || a[0] == '#') continue;
    if (fields >> b) out.push_back({a, b});
    else out.push_back({StemOf(a), a});
  }
  return out;
}

int RunEmbed(Command &c) {
  const mfa::SpeakerModel model = mfa::LoadCheckpoint(c.Require("model"));
  std::vector<std::pair<std::string, std::string>> items;
  if (!c.Get("wav").empty()) items.push_back({StemOf(c.Get("wav")), c.Get("wav")});
  if (!c.Get("wav_list").empty())
    for (auto &p : ReadWavList(c.Get("wav_list"))) items.push_back(p);
  if (items.empty())
    throw Error(ErrorCode::kInvalidConfig, "embed needs --wav or --wav-list");
  const int jobs = std::max(1, c.GetInt("jobs"));

  std::vector<mfa::Embedding> embeddings(items.size());
  std::vector<std::exception_ptr> errors(items.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next++) < items.size();) {
      try {
        embeddings[i] = EmbedInput(model, items[i].second);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  for (std::thread &t : pool) t.join();
  for (const std::exception_ptr &e : errors)
    if (e) std::rethrow_exception(e);

  std::string text;
  for (std::size_t i = 0; i < items.size(); ++i)
    text += mfa::FormatEmbeddingLine(items[i].first, embeddings[i]);
  WriteOrPrint(c.Get("out"), text);
  return kExitOk;
}

int RunScore(Command &c) {
  const std::vector<mfa::Trial> trials = mfa::ReadTrials(c.Require("trials"));
  mfa::EmbeddingTable table;
  if (!c.Get("embeddings").empty()) {
    table = mfa::ReadEmbeddingTable(c.Get("embeddings"));
  } else if (!c.Get("model").empty()) {
    // Trial ids are audio or feature paths, embedded on the fly.
    const mfa::SpeakerModel model = mfa::LoadCheckpoint(c.Get("model"));
    for (const mfa::Trial &t : trials)
      for (const std::string &id : {t.enroll_id, t.test_id}) {
        if (table.count(id)) continue;
        if (!std::filesystem::exists(id))
          throw Error(ErrorCode::kInvalidArgument, "unknown id '" + id + "'");
        table[id] = EmbedInput(model, id);
      }
  } else {
    throw Error(ErrorCode::kInvalidConfig, "score needs --model or --embeddings");
  }
  auto lookup = [&](const std::string &id) -> const mfa::Embedding & {
    auto it = table.find(id);
    if (it == table.end())
      throw Error(ErrorCode::kInvalidArgument, "unknown id '" + id + "'");
    return it->second;
  };

  std::vector<mfa::Embedding> cohort;
  if (!c.Get("cohort").empty())
    for (auto &[id, e] : mfa::ReadEmbeddingTable(c.Get("cohort"))) cohort.push_back(e);
  int top_k = c.GetInt("snorm_topk");
  if (!cohort.empty() && top_k <= 0) top_k = mfa::DefaultTopK(cohort.size());

  std::map<std::string, std::vector<double>> cohort_cache;
  auto cohort_scores = [&](const std::string &id) -> const std::vector<double> & {
    auto it = cohort_cache.find(id);
    if (it == cohort_cache.end())
      it = cohort_cache.emplace(id, mfa::CohortScores(lookup(id), cohort)).first;
    return it->second;
  };

  std::vector<mfa::ScoredTrial> scores;
  int degenerate = 0;
  for (const mfa::Trial &t : trials) {
    mfa::ScoredTrial s;
    s.trial = t;
    s.raw = mfa::CosineScore(lookup(t.enroll_id), lookup(t.test_id));
    if (!cohort.empty()) {
      mfa::NormalizedScore n = mfa::AdaptiveSnorm(
          s.raw, cohort_scores(t.enroll_id), cohort_scores(t.test_id), top_k);
      s.has_normalized = true;
      s.normalized = n.score;
      if (n.degenerate) {
        ++degenerate;
        std::cerr << "mfa score: degenerate cohort for trial " << t.enroll_id
                  << " " << t.test_id << "; raw score kept\n";
      }
    }
    scores.push_back(s);
  }
  WriteOrPrint(c.Get("out"), mfa::FormatScores(scores));
  if (degenerate) std::cerr << "mfa score: " << degenerate << " degenerate trials\n";
  return kExitOk;
}

int RunEval(Command &c) {
  mfa::DcfParams params;
  params.p_target = c.GetDouble("p_target");
  params.c_fa = c.GetDouble("c_fa");
  params.c_miss = c.GetDouble("c_miss");
  mfa::Metrics m = mfa::Evaluate(mfa::ReadScores(c.Require("scores")), params);
  WriteOrPrint(c.Get("out"), mfa::FormatMetrics(m));
  return kExitOk;
}

int RunBenchmark(Command &c) {
  mfa::SpeakerModel model = c.Get("model").empty()
                                ? mfa::SpeakerModel(c.model, 0)
                                : mfa::LoadCheckpoint(c.Get("model"));
  mfa::RtfReport r = mfa::BenchmarkRtf(model, c.GetDouble("seconds"),
                                       c.GetInt("repeats"),
                                       static_cast<std::uint64_t>(c.GetInt("seed")));
  std::string text = mfa::FormatRtfReport(r);
  text += "subsampling_rate=" + std::to_string(model.config().subsampling_rate) + "\n";
  text += "threads=1\n";
  WriteOrPrint(c.Get("out"), text);
  return kExitOk;
}

int RunGradCheck(Command &c) {
  mfa::GradCheckOptions opts;
  opts.seed = static_cast<std::uint64_t>(c.GetInt("seed"));
  opts.num_frames = c.GetInt("frames");
  mfa::SetCorruptedOpForTesting(c.Get("corrupt_op"));
  mfa::GradCheckReport r = mfa::RunGradCheck(c.model, opts);
  mfa::SetCorruptedOpForTesting("");
  std::cout << mfa::FormatGradCheckReport(r);
  return r.pass() ? kExitOk : kExitValidation;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"Conformer speaker embeddings with multi-scale feature aggregation"};
  app.require_subcommand(1);
  std::vector<std::unique_ptr<Command>> commands;
  auto make = [&](const std::string &name, const std::string &help) -> Command & {
    commands.push_back(std::make_unique<Command>());
    Command &c = *commands.back();
    c.name = name;
    c.app = app.add_subcommand(name, help);
    AddCommon(c);
    return c;
  };

  Command &featurize = make("featurize", "wav -> MFAF log-Mel feature file");
  featurize.Option("--wav", "wav", "", "16 kHz mono 16-bit PCM input");
  featurize.Option("--out", "out", "", "feature file to write");
  featurize.Option("--mean-norm", "mean_norm", "true", "per-bin mean normalization");

  Command &train = make("train-toy", "train on synthetic speakers and save a checkpoint");
  train.uses_model_config = train.uses_train_config = true;
  train.default_preset = "toy";
  AddModelFlags(train);
  train.ConfigOption("--seed", "seed", "seed for data, init and batching");
  train.ConfigOption("--epochs", "epochs", "training epochs");
  train.ConfigOption("--speakers", "num_classes", "number of synthetic speakers");
  train.Option("--utts", "toy_utts", "20", "utterances per speaker");
  train.Option("--snr-db", "toy_snr_db", "10", "noise level of the synthetic data");
  train.Option("--out", "out", "", "checkpoint to write");
  train.Option("--log", "log", "", "also write the epoch lines here");

  Command &embed = make("embed", "extract embeddings with a checkpoint");
  embed.Option("--model", "model", "", "MFAC checkpoint");
  embed.Option("--wav", "wav", "", "one wav or MFAF feature file");
  embed.Option("--wav-list", "wav_list", "", "file of '<id> <path>' or '<path>' lines");
  embed.Option("--out", "out", "", "embedding table (default stdout)");
  embed.Option("--jobs", "jobs", "1", "parallel utterances");

  Command &score = make("score", "cosine scoring with optional adaptive s-norm");
  score.Option("--model", "model", "", "checkpoint; trial ids are then audio paths");
  score.Option("--embeddings", "embeddings", "", "embedding table");
  score.Option("--trials", "trials", "", "'<label> <enroll_id> <test_id>' lines");
  score.Option("--cohort", "cohort", "", "cohort embedding table");
  score.Option("--snorm-topk", "snorm_topk", "0", "top-k cohort size (0: min(300, cohort))");
  score.Option("--out", "out", "", "score file (default stdout)");

  Command &eval = make("eval", "EER and minDCF of a score file");
  eval.Option("--scores", "scores", "", "score file");
  eval.Option("--p-target", "p_target", "0.01", "target prior");
  eval.Option("--c-fa", "c_fa", "1", "false-alarm cost");
  eval.Option("--c-miss", "c_miss", "1", "miss cost");
  eval.Option("--out", "out", "", "metrics report (default stdout)");

  Command &bench = make("benchmark-rtf", "single-threaded real-time factor");
  bench.uses_model_config = true;
  AddModelFlags(bench);
  bench.Option("--model", "model", "", "checkpoint (default: fresh model from the preset)");
  bench.Option("--seconds", "seconds", "30", "audio duration");
  bench.Option("--repeats", "repeats", "5", "timed runs after one warmup");
  bench.Option("--seed", "seed", "0", "seed of the synthetic audio");
  bench.Option("--out", "out", "", "report (default stdout)");

  Command &grad = make("gradcheck", "finite-difference check of every parameter gradient");
  grad.uses_model_config = true;
  grad.default_preset = "tiny";
  AddModelFlags(grad);
  grad.Option("--seed", "seed", "0", "seed of the model and input");
  grad.Option("--frames", "frames", "10", "input frames");
  grad.Option("--corrupt-op", "corrupt_op", "", "test hook: scale this op's backward by 1.5");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  for (auto &cp : commands) {
    Command &c = *cp;
    if (!c.app->parsed()) continue;
    try {
      c.Resolve();
      if (c.dump_config) {
        std::cout << c.Dump();
        return kExitOk;
      }
      if (c.name == "featurize") return RunFeaturize(c);
      if (c.name == "train-toy") return RunTrainToy(c);
      if (c.name == "embed") return RunEmbed(c);
      if (c.name == "score") return RunScore(c);
      if (c.name == "eval") return RunEval(c);
      if (c.name == "benchmark-rtf") return RunBenchmark(c);
      if (c.name == "gradcheck") return RunGradCheck(c);
    } catch (const Error &e) {
      std::string what = e.what();
      what = what.substr(what.find(": ") + 2);
      std::cerr << "mfa " << c.name << ": " << HumanCodeName(e.code()) << ": "
                << what << "\n";
      return mfa::IsIoError(e.code()) ? kExitIo : kExitValidation;
    } catch (const std::exception &e) {
      std::cerr << "mfa " << c.name << ": " << e.what() << "\n";
      return kExitValidation;
    }
  }
  return kExitUsage;
}
