// laud/pipeline.h

// Copyright 2026  The laud authors

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

// A probing run driven by one INI file. Every stage reads its inputs from
// and writes its outputs to a run directory, so stages can be re-run one at
// a time; see README.md for the directory layout and the config grammar.

#ifndef LAUD_PIPELINE_H_
#define LAUD_PIPELINE_H_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "laud/asr.h"
#include "laud/audio.h"
#include "laud/common.h"
#include "laud/probe.h"

namespace laud {

/// "clean", or an SNR written as e.g. "10dB".
struct Condition {
  std::string label;
  bool clean = true;
  double snr_db = 0.0;

  static Condition Parse(const std::string &text);
};

struct RunConfig {
  std::string output_dir;
  std::uint64_t seed = 0;

  // [corpus]
  std::string corpus_source = "synth";  // synth | manifest
  int speakers = 4;
  int train_per_speaker = 10;
  int test_per_speaker = 5;
  int tokens_per_utterance = 10;
  int vocabulary_size = 6;
  std::string train_manifest, test_manifest;

  // [noise]
  std::string noise_source = "synth";  // synth | files
  std::vector<std::string> train_noise = {"babble", "music", "pink"};
  std::vector<std::string> test_noise = {"music", "babble"};
  double noise_seconds = 6.0;

  // [asr] and [train]
  EncoderArch arch;  // tokens are filled in from the corpus
  std::vector<std::string> models = {"baseline", "robust"};
  AsrTrainConfig train;

  // [probe]
  std::vector<std::string> layers;  // empty means every encoder layer
  ProbeConfig probe;

  // [eval]
  std::vector<Condition> conditions;
  int pairs_per_class = 40;
  int griffin_lim_iters = 60;

  /// Relative paths are resolved against `base_dir`. Throws kConfig listing
  /// every problem found.
  static RunConfig Parse(const std::string &text, const std::string &base_dir);
  static RunConfig Load(const std::string &path);
  /// Canonical INI text of the effective configuration.
  std::string ToIni() const;

  /// Probed layers in network order.
  std::vector<std::string> ProbeLayers() const;
};

struct ReportRow {
  std::string layer, metric, condition;
  double value = 0.0;
};

/// Spearman correlation of a metric against encoder depth.
struct TrendStat {
  std::string model, condition, metric;
  double spearman = 0.0;
  int layers = 0;
};

struct RunReport {
  std::map<std::string, std::vector<ReportRow>> rows;  // by model
  std::vector<TrendStat> trends;

  /// Throws kIncompleteRun when absent.
  double Value(const std::string &model, const std::string &layer,
               const std::string &metric, const std::string &condition) const;
  const TrendStat &Trend(const std::string &model, const std::string &condition,
                         const std::string &metric) const;
};

/// Exclusive use of a run directory for the lifetime of the object.
class RunLock {
 public:
  explicit RunLock(const std::string &dir);
  ~RunLock();
  RunLock(const RunLock &) = delete;
  RunLock &operator=(const RunLock &) = delete;

 private:
  std::string path_;
};

class Run {
 public:
  explicit Run(RunConfig cfg);

  const RunConfig &config() const { return cfg_; }
  std::string Path(const std::string &relative) const;

  void SynthCorpus();
  void MixNoise();
  void TrainAsr();
  void ExtractHidden();
  void TrainProbe();
  void Reconstruct();
  void EvalStoi();
  void EvalEer();
  RunReport Report();
  void ExportSpectrogram();
  RunReport RunAll();

  /// Runs one stage by its command-line name.
  void Stage(const std::string &name);
  static const std::vector<std::string> &StageNames();

  /// SHA-256 of every artifact, written to manifest.sha256.
  void WriteArtifactManifest() const;
  /// Recomputes the hashes; returns one line per difference.
  std::vector<std::string> VerifyArtifactManifest() const;

 private:
  struct Corpus {
    std::vector<Utterance> train, test;
    std::vector<std::string> tokens;
  };
  Corpus LoadCorpus() const;
  std::vector<Utterance> TestSet(const Corpus &corpus, const Condition &cond) const;
  EncoderArch Arch(const Corpus &corpus) const;
  std::string HiddenPath(const std::string &model, const std::string &split,
                         const std::string &cond, const std::string &layer,
                         const std::string &utt) const;
  std::string ReconPath(const std::string &model, const std::string &cond,
                        const std::string &layer, const std::string &utt,
                        const std::string &ext) const;
  std::string EvalDir(const std::string &model, const std::string &cond,
                      const std::string &layer) const;
  void Require(const std::string &relative, const std::string &producer) const;
  void Snapshot() const;

  RunConfig cfg_;
};

/// 0 success, 2 config, 3 missing artifact or incomplete run, 4 numeric,
/// 1 anything else.
int ExitCode(ErrorKind kind);

}  // namespace laud

#endif  // LAUD_PIPELINE_H_
