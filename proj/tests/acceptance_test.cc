// tests/acceptance_test.cc

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

// Acceptance run. Prints one PASS/FAIL line per criterion and exits
// nonzero if any fails. Criteria to run can be listed on the command line
// (e.g. `acceptance_test 1 2 7`); the default is all ten.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "laud/audio.h"
#include "laud/ctc.h"
#include "laud/eval.h"
#include "laud/features.h"
#include "laud/pipeline.h"
#include "oracles.h"
#include "test_util.h"

using namespace laud;
namespace fs = std::filesystem;
using laud::testing::MaxRelError;
using laud::testing::NumericGrad;

namespace {

const std::string kConfigs = LAUD_CONFIG_DIR;
const std::string kRunRoot = LAUD_ACCEPT_DIR;

struct Outcome {
  bool pass = true;
  std::string detail;
};

std::vector<Utterance> Corpus(int speakers, int per_speaker, std::uint64_t seed) {
  CorpusSpec spec;
  spec.num_speakers = speakers;
  spec.utterances_per_speaker = per_speaker;
  spec.seed = seed;
  return SynthCorpus(spec);
}

std::string Fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

// Every target over every vocabulary and length up to 3, every feasible T
// up to 6, 30 logit draws each.
Outcome CheckCtcOracle() {
  Outcome o;
  double worst_loss = 0.0, worst_grad = 0.0;
  int cases = 0;
  for (int vocab = 1; vocab <= 3; ++vocab) {
    for (int length = 0; length <= 3; ++length) {
      int count = 1;
      for (int i = 0; i < length; ++i) count *= vocab;
      for (int code = 0; code < count; ++code) {
        std::vector<int> target;
        for (int i = 0, c = code; i < length; ++i, c /= vocab) target.push_back(1 + c % vocab);
        for (int steps = std::max(1, CtcMinFrames(target)); steps <= 6; ++steps) {
          for (int seed = 0; seed < 30; ++seed) {
            Rng rng = MakeRng(seed, "ctc/" + std::to_string(vocab) + "/" + std::to_string(code) + "/" +
                                        std::to_string(steps) + "/" + std::to_string(length));
            Matrix logits(steps, vocab + 1);
            for (Eigen::Index i = 0; i < logits.size(); ++i) logits.data()[i] = 2.0 * Gaussian(rng);
            const CtcResult r = CtcLoss(logits, target);
            worst_loss = std::max(worst_loss, std::abs(r.loss - laud::testing::BruteForceCtcLoss(logits, target)));
            const Matrix numeric = NumericGrad(&logits, [&] { return CtcLoss(logits, target).loss; });
            worst_grad = std::max(worst_grad, MaxRelError(r.grad, numeric));
            ++cases;
          }
        }
      }
    }
  }
  o.pass = worst_loss <= 1e-6 && worst_grad <= 1e-4;
  o.detail = std::to_string(cases) + " cases, max |loss - brute| " + Fmt(worst_loss) + ", max grad rel err " +
             Fmt(worst_grad);
  return o;
}

Outcome CheckGradientSuite() {
  struct Layer {
    const char *name;
    double (*error)(int);
    double tol;
  };
  const Layer layers[] = {{"dense", laud::testing::DenseReluGradError, 1e-4},
                          {"conv", laud::testing::ConvGradError, 1e-4},
                          {"maxpool", laud::testing::MaxPoolGradError, 1e-4},
                          {"highway", laud::testing::HighwayGradError, 1e-4},
                          {"bilstm", laud::testing::BiLstmGradError, 1e-3}};
  Outcome o;
  for (const Layer &l : layers) {
    double worst = 0.0;
    for (int seed = 0; seed < 20; ++seed) worst = std::max(worst, l.error(seed));
    o.pass = o.pass && worst <= l.tol;
    o.detail += std::string(o.detail.empty() ? "" : ", ") + l.name + " " + Fmt(worst);
  }
  return o;
}

Outcome CheckGriffinLim() {
  const Frontend &fe = Frontend::Default();
  Outcome o;
  double worst_sc = 0.0;
  int rises = 0;
  for (const Utterance &u : Corpus(2, 5, 21)) {
    const GriffinLimResult r = fe.GriffinLim(StftMagnitude(u.wave, fe.config().stft));
    if (r.objective.size() != 60) o.pass = false;
    for (std::size_t i = 1; i < r.objective.size(); ++i) rises += r.objective[i] > r.objective[i - 1];
    worst_sc = std::max(worst_sc, r.objective.back());
  }
  o.pass = o.pass && rises == 0 && worst_sc <= 0.15;
  o.detail = "10 utterances, " + std::to_string(rises) + " increasing steps, max final SC " + Fmt(worst_sc);
  return o;
}

Outcome CheckAudify() {
  const Frontend &fe = Frontend::Default();
  double worst = 1.0;
  for (const Utterance &u : Corpus(2, 5, 4)) {
    const Matrix logmel = fe.LogMel(u.wave, false).frames;
    const GriffinLimResult r = fe.GriffinLim(fe.MelPinv(logmel.array().exp().matrix()).cwiseSqrt());
    worst = std::min(worst, laud::testing::PearsonFlat(logmel, fe.LogMel(r.wave, false).frames));
  }
  return {worst >= 0.9, "10 utterances, min log-mel rho " + Fmt(worst)};
}

Outcome CheckStoiProperties() {
  const std::vector<Utterance> corpus = Corpus(4, 5, 5);
  const Waveform babble = SynthNoise(NoiseKind::kBabble, 4.0, 9);
  const Waveform pink = SynthNoise(NoiseKind::kPink, 2.0, 1);
  double self_err = 0.0, gain_err = 0.0;
  int monotone = 0;
  for (const Utterance &u : corpus) {
    self_err = std::max(self_err, std::abs(Stoi(u.wave, u.wave) - 1.0));
    Rng rng = MakeRng(1, u.id);
    const Waveform noisy = MixAtSnr(u.wave, pink, 5.0, rng).mixed;
    Waveform quiet = noisy;
    for (double &s : quiet.samples) s *= 0.013;
    gain_err = std::max(gain_err, std::abs(Stoi(u.wave, noisy) - Stoi(u.wave, quiet)));
    std::vector<double> s;
    for (double snr : {20.0, 10.0, 0.0}) {
      Rng crop = MakeRng(3, u.id);
      s.push_back(Stoi(u.wave, MixAtSnr(u.wave, babble, snr, crop).mixed));
    }
    monotone += s[0] > s[1] && s[1] > s[2];
  }
  const bool pass = self_err <= 1e-9 && gain_err <= 1e-6 && monotone * 10 >= 9 * static_cast<int>(corpus.size());
  return {pass, "|stoi(x,x)-1| " + Fmt(self_err) + ", gain " + Fmt(gain_err) + ", monotone " +
                    std::to_string(monotone) + "/" + std::to_string(corpus.size())};
}

Outcome CheckEerOracle() {
  double worst = 0.0;
  for (int seed = 0; seed < 50; ++seed) {
    Rng rng = MakeRng(seed, "eer");
    const int total = 2 + static_cast<int>(UniformIndex(rng, 19));
    const int np = 1 + static_cast<int>(UniformIndex(rng, static_cast<std::uint64_t>(total - 1)));
    std::vector<double> pos, neg;
    const double sep = UniformIn(rng, -1.0, 2.0);
    for (int i = 0; i < total; ++i) {
      const double s = std::round(4.0 * (Gaussian(rng) + (i < np ? sep : 0.0))) / 4.0;
      (i < np ? pos : neg).push_back(s);
    }
    worst = std::max(worst, std::abs(ComputeEer(pos, neg).eer - laud::testing::EerOracle(pos, neg)));
  }
  const double perfect = ComputeEer({0.9, 0.8}, {0.1, 0.2}).eer;
  const double chance = ComputeEer({0.5, 0.5, 0.5}, {0.5, 0.5}).eer;
  const double crossed = ComputeEer({0.8, 0.2}, {0.7, 0.1}).eer;
  return {worst <= 1e-12 && perfect == 0.0 && chance == 0.5 && crossed == 0.25,
          "50 score sets, max |eer - oracle| " + Fmt(worst) + "; hand cases " + Fmt(perfect) + " " +
              Fmt(chance) + " " + Fmt(crossed)};
}

Outcome CheckSnrExact() {
  Rng gen = MakeRng(1234, "snr");
  double worst = 0.0;
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 50 + UniformIndex(gen, 2000), m = 10 + UniformIndex(gen, 3000);
    Waveform s, v;
    for (std::size_t i = 0; i < n; ++i) s.samples.push_back(UniformIn(gen, -1, 1));
    for (std::size_t i = 0; i < m; ++i) v.samples.push_back(Gaussian(gen));
    const double snr = UniformIn(gen, -20.0, 60.0);
    const MixResult r = MixAtSnr(s, v, snr, gen);
    worst = std::max(worst, std::abs(20.0 * std::log10(Rms(s.samples) / Rms(r.scaled_noise)) - snr));
  }
  return {worst <= 1e-9, "500 mixes, max |measured - requested| " + Fmt(worst) + " dB"};
}

// Pipeline criteria share the runs.

const int kSeeds[] = {1, 2, 3};
const char *kFirstRecurrent = "blstm1";

std::string SeedDir(int seed) { return kRunRoot + "/seed" + std::to_string(seed); }

RunReport RunSeed(int seed, const std::string &dir) {
  RunConfig cfg = RunConfig::Load(kConfigs + "/synthetic.ini");
  cfg.seed = static_cast<std::uint64_t>(seed);
  cfg.output_dir = dir;
  fs::remove_all(dir);
  Run run(cfg);
  return run.RunAll();
}

std::vector<RunReport> &Reports() {
  static std::vector<RunReport> reports;
  return reports;
}

Outcome CheckDepthTrend() {
  Outcome o;
  for (int seed : kSeeds) {
    Reports().push_back(RunSeed(seed, SeedDir(seed)));
    const RunReport &r = Reports().back();
    for (const char *model : {"baseline", "robust"}) {
      const double eer = r.Trend(model, "clean", "eer").spearman;
      const double stoi = r.Trend(model, "clean", "stoi").spearman;
      const double l1 = r.Trend(model, "clean", "l1").spearman;
      const bool ok = eer > 0.0 && stoi < 0.0 && l1 >= 0.6;
      o.pass = o.pass && ok;
      o.detail += std::string(o.detail.empty() ? "" : "; ") + "seed " + std::to_string(seed) + " " + model +
                  " rho(eer) " + Fmt(eer) + " rho(stoi) " + Fmt(stoi) + " rho(l1) " + Fmt(l1) +
                  (ok ? "" : " [miss]");
    }
  }
  return o;
}

Outcome CheckRobustness() {
  Outcome o;
  if (Reports().size() != std::size(kSeeds)) return {false, "needs the criterion 8 runs"};
  int wins = 0;
  for (std::size_t i = 0; i < Reports().size(); ++i) {
    const double base = Reports()[i].Value("baseline", kFirstRecurrent, "stoi", "0dB");
    const double robust = Reports()[i].Value("robust", kFirstRecurrent, "stoi", "0dB");
    wins += robust > base;
    o.detail += std::string(o.detail.empty() ? "" : "; ") + "seed " + std::to_string(kSeeds[i]) + " " +
                kFirstRecurrent + " 0dB stoi robust " + Fmt(robust) + " baseline " + Fmt(base);
  }
  o.pass = wins >= 2;
  o.detail = std::to_string(wins) + "/3 seeds; " + o.detail;
  return o;
}

bool Compared(const fs::path &rel) {
  const std::string top = *rel.begin(), ext = rel.extension().string();
  if (ext == ".hrep") return top == "hidden" || top == "recon";
  if (ext == ".ckpt") return top == "models" || top == "probes";
  return ext == ".csv" && top == "report";
}

std::string Bytes(const fs::path &p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

Outcome CheckDeterminism() {
  const std::string first = SeedDir(1), second = kRunRoot + "/seed1_again";
  if (!fs::exists(first + "/report/trends.csv")) RunSeed(1, first);
  RunSeed(1, second);
  std::set<fs::path> files;
  for (const std::string &dir : {first, second})
    for (const auto &e : fs::recursive_directory_iterator(dir))
      if (e.is_regular_file() && Compared(fs::relative(e.path(), dir))) files.insert(fs::relative(e.path(), dir));
  int differ = 0;
  std::string example;
  for (const fs::path &rel : files) {
    const fs::path a = first / rel, b = second / rel;
    if (!fs::exists(a) || !fs::exists(b) || Bytes(a) != Bytes(b)) {
      if (differ++ == 0) example = rel.string();
    }
  }
  return {differ == 0 && !files.empty(), std::to_string(files.size()) + " files compared, " +
                                             std::to_string(differ) + " differ" +
                                             (example.empty() ? "" : " (e.g. " + example + ")")};
}

struct Criterion {
  int id;
  const char *name;
  double budget_s;  // 0: no stated budget
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char **argv) {
  spdlog::set_level(spdlog::level::warn);
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));

  const std::vector<Criterion> criteria = {
      {1, "ctc oracle equivalence", 60, CheckCtcOracle},
      {2, "layer gradient suite", 120, CheckGradientSuite},
      {3, "griffin-lim monotone and converged", 60, CheckGriffinLim},
      {4, "audify round trip", 60, CheckAudify},
      {5, "stoi properties", 60, CheckStoiProperties},
      {6, "eer oracle", 60, CheckEerOracle},
      {7, "snr mixing exactness", 10, CheckSnrExact},
      {8, "layer-depth trend, 3 seeds", 1800, CheckDepthTrend},
      {9, "robustness direction", 0, CheckRobustness},
      {10, "determinism of run-all", 0, CheckDeterminism},
  };
  // Criterion 9 reads the criterion 8 runs.
  if (wanted.count(9)) wanted.insert(8);

  int failed = 0;
  for (const Criterion &c : criteria) {
    if (!wanted.empty() && !wanted.count(c.id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception &e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_budget = c.budget_s == 0 || secs <= c.budget_s;
    const bool pass = o.pass && in_budget;
    failed += !pass;
    std::printf("%s  criterion %2d  %-36s %8.1fs%s  %s\n", pass ? "PASS" : "FAIL", c.id, c.name, secs,
                in_budget ? "" : " (over budget)", o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
