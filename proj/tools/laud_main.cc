// laud_main.cc

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

// Command-line driver: one subcommand per pipeline stage, plus run-all.
//
//   laud <stage> --config run.ini [--out DIR] [--seed N]
//   laud run-all --config run.ini [--verify]
//   laud validate --config run.ini

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "laud/pipeline.h"

namespace {

struct Options {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  bool verify = false;
  bool quiet = false;
};

int Execute(const std::string &command, const Options &opt) {
  using namespace laud;
  RunConfig cfg = RunConfig::Load(opt.config);
  if (!opt.out.empty()) cfg.output_dir = opt.out;
  if (opt.seed) cfg.seed = *opt.seed;
  if (command == "validate") {
    std::cout << cfg.ToIni();
    return 0;
  }
  Run run(cfg);
  RunLock lock(cfg.output_dir);
  if (command == "run-all" && opt.verify) {
    const auto diffs = run.VerifyArtifactManifest();
    for (const std::string &d : diffs) std::cout << d << "\n";
    if (!diffs.empty()) {
      std::cerr << "laud: " << diffs.size() << " artifact(s) differ from manifest.sha256\n";
      return 1;
    }
    std::cout << "all artifacts match manifest.sha256\n";
    return 0;
  }
  if (command == "run-all") {
    run.RunAll();
    std::cout << run.Path("report/summary.txt") << "\n";
  } else {
    run.Stage(command);
  }
  return 0;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"laud: probe what each layer of a CTC speech recognizer keeps of its input"};
  app.require_subcommand(1);
  Options opt;

  auto add = [&](const std::string &name, const std::string &help) {
    CLI::App *sub = app.add_subcommand(name, help);
    sub->add_option("-c,--config", opt.config, "run configuration (INI)")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("-o,--out", opt.out, "override [run] output_dir");
    sub->add_option("--seed", opt.seed, "override [run] seed");
    sub->add_flag("-q,--quiet", opt.quiet, "only report warnings and errors");
    return sub;
  };
  add("synth-corpus", "write the corpus (synthesized or imported from manifests)");
  add("mix-noise", "write the noise library and the noisy test conditions");
  add("train-asr", "train the baseline and/or noise-robust recognizers");
  add("extract-hidden", "dump per-layer hidden representations (HREP)");
  add("train-probe", "train one reconstruction probe per model and layer");
  add("reconstruct", "decode test representations to log-mel and audio");
  add("eval-stoi", "intelligibility of reconstructions against clean speech");
  add("eval-eer", "speaker verification scores on reconstructions");
  add("report", "per-layer metrics and depth trends");
  add("export-spectrogram", "PGM images of reference and reconstructed log-mel");
  add("run-all", "every stage in order")
      ->add_flag("--verify", opt.verify, "recompute artifact hashes and compare with manifest.sha256");
  add("validate", "check the config and print its effective form");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  spdlog::set_level(opt.quiet ? spdlog::level::warn : spdlog::level::info);
  const std::string command = app.get_subcommands().front()->get_name();

  try {
    return Execute(command, opt);
  } catch (const laud::Error &e) {
    std::cerr << "laud " << command << ": " << e.what() << "\n";
    return laud::ExitCode(e.kind());
  } catch (const std::exception &e) {
    std::cerr << "laud " << command << ": " << e.what() << "\n";
    return 1;
  }
}
