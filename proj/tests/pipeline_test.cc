// tests/pipeline_test.cc

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

#include <catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sys/wait.h>

#include "laud/io.h"
#include "laud/pipeline.h"
#include "test_util.h"

using namespace laud;
namespace fs = std::filesystem;

namespace {

const std::string kConfigs = LAUD_CONFIG_DIR;

RunConfig Smoke(const std::string &out) {
  RunConfig c = RunConfig::Load(kConfigs + "/smoke.ini");
  c.output_dir = out;
  return c;
}

std::map<std::string, std::string> Hashes(const std::string &dir) {
  std::map<std::string, std::string> h;
  for (const auto &e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) h[fs::relative(e.path(), dir).string()] = Sha256File(e.path().string());
  return h;
}

template <typename F>
Error Caught(F &&f) {
  try {
    f();
  } catch (const Error &e) {
    return e;
  }
  FAIL("expected an error");
  throw;
}

int Shell(const std::string &cmd) {
  const int status = std::system((cmd + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("bundled configs parse and round-trip", "[pipeline][config]") {
  for (const std::string name : {"synthetic.ini", "smoke.ini"}) {
    const RunConfig c = RunConfig::Load(kConfigs + "/" + name);
    const RunConfig again = RunConfig::Parse("[run]\noutput_dir = x\n" + c.ToIni().substr(6), "/");
    CHECK(again.ToIni() == c.ToIni());
  }
  const RunConfig c = RunConfig::Load(kConfigs + "/synthetic.ini");
  CHECK(c.seed == 1);
  CHECK(c.ProbeLayers() == std::vector<std::string>{"blstm1", "blstm2", "blstm3", "blstm4", "blstm5"});
  CHECK(c.conditions.size() == 4);
  CHECK(c.conditions[3].snr_db == 0.0);
  CHECK(Smoke("/x").ProbeLayers() == std::vector<std::string>{"features", "blstm1", "blstm3", "blstm5"});
}

TEST_CASE("config validation lists every problem", "[pipeline][config]") {
  const Error e = Caught([] {
    RunConfig::Parse(
        "[run]\noutput_dir = out\n"
        "[corpus]\nspeakers = one\nbogus = 1\n"
        "[train]\nlr = -1\n"
        "[probe]\nlayers = blstm9\n"
        "[eval]\nconditions = clean, loud\n"
        "[extra]\nx = 1\n",
        "/tmp");
  });
  CHECK(e.kind() == ErrorKind::kConfig);
  const std::string msg = e.what();
  INFO(msg);
  CHECK(msg.find("seed") != std::string::npos);
  CHECK(msg.find("speakers") != std::string::npos);
  CHECK(msg.find("bogus") != std::string::npos);
  CHECK(msg.find("[train] lr") != std::string::npos);
  CHECK(msg.find("blstm9") != std::string::npos);
  CHECK(msg.find("loud") != std::string::npos);
  CHECK(msg.find("[extra]") != std::string::npos);
  CHECK(msg.find("7 problem") != std::string::npos);

  CHECK(Caught([] { RunConfig::Parse("[run]\noutput_dir = o\nseed = 1\n[corpus]\nsource = manifest\n", "/tmp"); })
            .kind() == ErrorKind::kConfig);
  CHECK(Caught([] { RunConfig::Parse("[run\nseed = 1\n", "/tmp"); }).kind() == ErrorKind::kConfig);
  CHECK_NOTHROW(RunConfig::Parse("[run]\noutput_dir = o\nseed = 0\n", "/tmp"));
}

TEST_CASE("condition labels", "[pipeline][config]") {
  CHECK(Condition::Parse("clean").clean);
  const Condition c = Condition::Parse("10dB");
  CHECK_FALSE(c.clean);
  CHECK(c.snr_db == 10.0);
  CHECK(Condition::Parse("-5").label == "-5dB");
  CHECK(Caught([] { Condition::Parse("noisy"); }).kind() == ErrorKind::kConfig);
}

TEST_CASE("exit codes", "[pipeline]") {
  CHECK(ExitCode(ErrorKind::kConfig) == 2);
  CHECK(ExitCode(ErrorKind::kMissingArtifact) == 3);
  CHECK(ExitCode(ErrorKind::kIncompleteRun) == 3);
  CHECK(ExitCode(ErrorKind::kNumeric) == 4);
  CHECK(ExitCode(ErrorKind::kIo) == 1);
}

TEST_CASE("run directory lock", "[pipeline]") {
  const std::string dir = laud::testing::ScratchDir("lock");
  {
    RunLock a(dir);
    CHECK_THROWS_AS(RunLock(dir), Error);
  }
  CHECK_NOTHROW(RunLock(dir));
}

TEST_CASE("stages check their inputs and are idempotent", "[pipeline]") {
  const std::string dir = laud::testing::ScratchDir("stages");
  Run run(Smoke(dir));

  const Error no_corpus = Caught([&] { run.MixNoise(); });
  CHECK(no_corpus.kind() == ErrorKind::kMissingArtifact);
  CHECK(std::string(no_corpus.what()).find("laud synth-corpus") != std::string::npos);

  run.Stage("synth-corpus");
  run.Stage("mix-noise");
  CHECK(std::string(Caught([&] { run.ExtractHidden(); }).what()).find("laud train-asr") != std::string::npos);
  run.Stage("train-asr");
  run.Stage("extract-hidden");
  run.Stage("train-probe");

  const Error early = Caught([&] { run.EvalEer(); });
  CHECK(early.kind() == ErrorKind::kMissingArtifact);
  CHECK(std::string(early.what()).find("`laud reconstruct`") != std::string::npos);
  const Error incomplete = Caught([&] { run.Report(); });
  CHECK(incomplete.kind() == ErrorKind::kIncompleteRun);
  CHECK(std::string(incomplete.what()).find("baseline/blstm3") != std::string::npos);

  // Re-running a stage rewrites identical bytes.
  const auto hidden = Hashes(dir + "/hidden");
  const auto models = Hashes(dir + "/models");
  run.Stage("extract-hidden");
  CHECK(Hashes(dir + "/hidden") == hidden);
  CHECK(Hashes(dir + "/models") == models);
  CHECK(hidden.count("baseline/manifest.tsv") == 1);

  for (const std::string stage : {"reconstruct", "eval-stoi", "eval-eer", "report", "export-spectrogram"})
    run.Stage(stage);
  CHECK(fs::exists(dir + "/report/baseline.csv"));
  CHECK(fs::exists(dir + "/export/robust/0dB/blstm5/test-spk01-001.pgm"));
  CHECK(run.VerifyArtifactManifest().empty());

  // Extraction and probing never touch the recognizer checkpoints.
  CHECK(Hashes(dir + "/models") == models);

  for (const auto &e : fs::recursive_directory_iterator(dir))
    CHECK(e.path().extension() != ".partial");

  {
    std::ofstream f(dir + "/report/baseline.csv", std::ios::app);
    f << "tampered\n";
  }
  const auto diffs = run.VerifyArtifactManifest();
  REQUIRE(diffs.size() == 1);
  CHECK(diffs[0] == "changed report/baseline.csv");
}

TEST_CASE("run-all report contents", "[pipeline]") {
  const std::string dir = laud::testing::ScratchDir("runall");
  Run run(Smoke(dir));
  const RunReport report = run.RunAll();
  CHECK(report.rows.size() == 2);
  CHECK(report.Value("baseline", "input", "stoi", "clean") == Catch::Approx(1.0));
  CHECK(report.Value("robust", "output", "wer", "0dB") >= 0.0);
  // Only encoder layers enter the trends.
  CHECK(report.Trend("baseline", "clean", "l1").layers == 3);
  CHECK_THROWS_AS(report.Value("baseline", "blstm2", "l1", "clean"), Error);

  std::ifstream csv(dir + "/report/robust.csv");
  std::string header;
  std::getline(csv, header);
  CHECK(header == "layer,metric,condition,value");
  int lines = 0;
  for (std::string line; std::getline(csv, line);) ++lines;
  // 2 input rows and 3 metrics per layer for each condition, plus WER.
  CHECK(lines == 2 * 2 + 4 * 3 * 2 + 2);
}

TEST_CASE("command-line exit codes", "[pipeline][cli]") {
  const std::string cli = LAUD_CLI;
  const std::string dir = laud::testing::ScratchDir("cli");
  const std::string smoke = kConfigs + "/smoke.ini";
  CHECK(Shell(cli + " eval-eer -c " + smoke + " -o " + dir) == 3);
  CHECK(Shell(cli + " run-all -c " + smoke + " -o " + dir + " --verify") == 3);

  const std::string bad = dir + "/bad.ini";
  {
    std::ofstream f(bad);
    f << "[run]\noutput_dir = x\n";
  }
  CHECK(Shell(cli + " validate -c " + bad) == 2);
  CHECK(Shell(cli + " frobnicate") == 2);

  CHECK(Shell(cli + " run-all -q -c " + smoke + " -o " + dir + "/run") == 0);
  CHECK(fs::exists(dir + "/run/report/baseline.csv"));
  CHECK(fs::exists(dir + "/run/report/summary.txt"));
  CHECK_FALSE(fs::exists(dir + "/run/.lock"));
  CHECK(Shell(cli + " run-all -c " + smoke + " -o " + dir + "/run --verify") == 0);

  RunLock held(dir + "/run");
  CHECK(Shell(cli + " report -c " + smoke + " -o " + dir + "/run") == 1);
}
