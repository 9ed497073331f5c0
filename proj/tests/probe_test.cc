// tests/probe_test.cc

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

#include <cmath>

#include "laud/io.h"
#include "laud/probe.h"
#include "test_util.h"

using namespace laud;
using laud::testing::MaxRelError;
using laud::testing::NumericGrad;
using laud::testing::PearsonFlat;

namespace {

Matrix RandomMatrix(Eigen::Index rows, Eigen::Index cols, Rng &rng, double scale = 1.0) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * Gaussian(rng);
  return m;
}

HiddenReps Record(const std::string &tag, int factor, Matrix frames, const std::string &id = "u") {
  HiddenReps h;
  h.layer_tag = tag;
  h.factor = factor;
  h.utterance_id = id;
  h.speaker_id = "s";
  h.frames = std::move(frames);
  return h;
}

std::vector<Utterance> Corpus(int speakers, int per_speaker, std::uint64_t seed) {
  CorpusSpec spec;
  spec.num_speakers = speakers;
  spec.utterances_per_speaker = per_speaker;
  spec.seed = seed;
  return SynthCorpus(spec);
}

// Identity-layer records and static log-mel targets for a corpus.
void FeatureData(const std::vector<Utterance> &corpus, std::vector<HiddenReps> *hidden,
                 std::map<std::string, Matrix> *targets) {
  EncoderArch arch;
  arch.tokens = SynthTokenNames(6);
  const AsrModel model(arch);
  for (const Utterance &u : corpus) {
    hidden->push_back(ExtractHidden(model, u, {kFeaturesTag})[0]);
    (*targets)[u.id] = Frontend::Default().LogMel(u.wave, false).frames;
  }
}

}  // namespace

TEST_CASE("upsampling projection geometry", "[probe]") {
  Rng rng = MakeRng(1, "test");
  ProbeDecoder one("blstm1", 6, 1, 5);
  one.Init(rng);
  CHECK(one.Upsample(RandomMatrix(7, 6, rng)).rows() == 7);

  ProbeDecoder eight("blstm5", 6, 8, 5);
  eight.Init(rng);
  const Matrix up = eight.Upsample(RandomMatrix(16, 6, rng));
  CHECK(up.rows() == 128);
  CHECK(up.cols() == 5);

  for (Parameter *p : eight.Params()) p->value.setZero();
  CHECK(eight.Upsample(RandomMatrix(4, 6, rng)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("upsampling splits each projected frame into consecutive sub-frames", "[probe]") {
  Rng rng = MakeRng(2, "test");
  ProbeDecoder d("blstm2", 3, 2, 4);
  d.Init(rng);
  const Matrix h = RandomMatrix(3, 3, rng);
  const Matrix up = d.Upsample(h);
  const Parameter &w = *d.Params()[0];
  const Parameter &b = *d.Params()[1];
  for (int t = 0; t < 3; ++t)
    for (int j = 0; j < 2; ++j)
      for (int c = 0; c < 4; ++c) {
        const int row = j * 4 + c;
        const double expect = w.value.row(row).dot(h.row(t)) + b.value(0, row);
        CHECK(up(2 * t + j, c) == Catch::Approx(expect).epsilon(1e-12));
      }
}

TEST_CASE("reconstruction geometry and tag checks", "[probe]") {
  Rng rng = MakeRng(3, "test");
  ProbeDecoder d("blstm3", 10, 4, 8);
  d.Init(rng);
  const Matrix y = d.Reconstruct(Record("blstm3", 4, RandomMatrix(9, 10, rng)));
  CHECK(y.rows() == 36);
  CHECK(y.cols() == 80);
  try {
    d.Reconstruct(Record("blstm2", 4, RandomMatrix(9, 10, rng)));
    FAIL("expected an error");
  } catch (const Error &e) {
    CHECK(e.kind() == ErrorKind::kConfig);
  }
  try {
    d.Reconstruct(Record("blstm3", 2, RandomMatrix(9, 10, rng)));
    FAIL("expected an error");
  } catch (const Error &e) {
    CHECK(e.kind() == ErrorKind::kConfig);
  }
  CHECK_THROWS_AS(d.Reconstruct(Record("blstm3", 4, RandomMatrix(9, 11, rng))), Error);
}

TEST_CASE("probe output depends only on the current hidden frame", "[probe][property]") {
  Rng rng = MakeRng(4, "test");
  for (int factor : {1, 2, 8}) {
    ProbeDecoder d("layer", 6, factor, 8);
    d.Init(rng);
    const Matrix h = RandomMatrix(5, 6, rng);
    Matrix dup(6, 6);
    dup << h.topRows(3), h.row(2), h.bottomRows(2);
    const Matrix a = d.Reconstruct(Record("layer", factor, h));
    const Matrix b = d.Reconstruct(Record("layer", factor, dup));
    // Frame 2 duplicated: its sub-frames appear twice, everything else shifts.
    CHECK(b.topRows(3 * factor) == a.topRows(3 * factor));
    CHECK(b.middleRows(3 * factor, factor) == a.middleRows(2 * factor, factor));
    CHECK(b.bottomRows(2 * factor) == a.bottomRows(2 * factor));
    // Any single frame decodes the same in isolation.
    const Matrix single = d.Reconstruct(Record("layer", factor, h.row(4)));
    CHECK(single == a.bottomRows(factor));
  }
}

TEST_CASE("probe reconstruction does not depend on call order", "[probe]") {
  Rng rng = MakeRng(5, "test");
  ProbeDecoder d("layer", 4, 2, 6);
  d.Init(rng);
  const HiddenReps x = Record("layer", 2, RandomMatrix(5, 4, rng), "x");
  const HiddenReps y = Record("layer", 2, RandomMatrix(7, 4, rng), "y");
  const Matrix x1 = d.Reconstruct(x), y1 = d.Reconstruct(y);
  const Matrix y2 = d.Reconstruct(y), x2 = d.Reconstruct(x);
  CHECK(x1 == x2);
  CHECK(y1 == y2);
}

TEST_CASE("probe gradients match finite differences", "[probe][property]") {
  for (int seed = 0; seed < 5; ++seed) {
    Rng rng = MakeRng(10 + seed, "test");
    const int factor = 1 + static_cast<int>(UniformIndex(rng, 3));
    ProbeDecoder d("layer", 5, factor, 6);
    d.Init(rng);
    FeatureStats in{Vector::Constant(5, 0.3), Vector::Constant(5, 1.5)};
    FeatureStats out{Vector::Constant(80, -2.0), Vector::Constant(80, 3.0)};
    d.SetStats(in, out);
    Matrix h = RandomMatrix(3, 5, rng);
    const Matrix target = RandomMatrix(3 * factor, 80, rng, 10.0);
    std::vector<bool> mask(static_cast<std::size_t>(3 * factor), true);
    mask.back() = false;
    ParamList params = d.Params();
    ZeroGrads(params);
    d.Accumulate(h, target, mask);
    auto loss = [&] {
      const Matrix y = d.Reconstruct(Record("layer", factor, h));
      double s = 0.0;
      for (Eigen::Index r = 0; r < y.rows(); ++r)
        if (mask[static_cast<std::size_t>(r)]) s += (y.row(r) - target.row(r)).cwiseAbs().sum();
      return s;
    };
    // The summed L1 loss is O(1e3), so central differences carry ~1e-8
    // absolute round-off; entries below 1e-4 are compared against that floor.
    double worst = 0.0;
    for (Parameter *p : params) {
      const Matrix analytic = p->grad;
      const double err = MaxRelError(analytic, NumericGrad(&p->value, loss), 1e-4);
      UNSCOPED_INFO(p->name << " " << err);
      worst = std::max(worst, err);
    }
    INFO("seed " << seed);
    CHECK(worst <= 1e-4);
  }
}

TEST_CASE("probe checkpoints round-trip", "[probe]") {
  const std::string dir = laud::testing::ScratchDir("probe_ckpt");
  Rng rng = MakeRng(6, "test");
  ProbeDecoder d("blstm4", 12, 8, 16);
  d.Init(rng);
  d.SetStats({Vector::Constant(12, 0.5), Vector::Constant(12, 2.0)},
             {Vector::Constant(80, -4.0), Vector::Constant(80, 1.5)});
  d.Save(dir + "/p.ckpt");
  CHECK(LoadCheckpoint(dir + "/p.ckpt").descriptor == "probe/v1/blstm4");
  const ProbeDecoder e = ProbeDecoder::Load(dir + "/p.ckpt");
  CHECK(e.layer_tag() == "blstm4");
  CHECK(e.factor() == 8);
  CHECK(e.input_dim() == 12);
  CHECK(e.d_proj() == 16);
  const HiddenReps h = Record("blstm4", 8, RandomMatrix(4, 12, rng));
  CHECK(d.Reconstruct(h) == e.Reconstruct(h));
  e.Save(dir + "/q.ckpt");
  CHECK(ReadFileBytes(dir + "/p.ckpt") == ReadFileBytes(dir + "/q.ckpt"));
}

TEST_CASE("probe training reports misaligned utterances", "[probe]") {
  Rng rng = MakeRng(7, "test");
  ProbeDecoder d("blstm2", 4, 2, 8);
  d.Init(rng);
  std::vector<HiddenReps> hidden = {Record("blstm2", 2, RandomMatrix(5, 4, rng), "good"),
                                    Record("blstm2", 2, RandomMatrix(5, 4, rng), "short"),
                                    Record("blstm2", 2, RandomMatrix(5, 4, rng), "absent")};
  std::map<std::string, Matrix> targets;
  targets["good"] = RandomMatrix(9, 80, rng);   // within one factor of 10
  targets["short"] = RandomMatrix(8, 80, rng);  // two frames short
  ProbeConfig cfg;
  cfg.epochs = 1;
  try {
    TrainProbe(&d, hidden, targets, cfg);
    FAIL("expected an error");
  } catch (const Error &e) {
    CHECK(e.kind() == ErrorKind::kAlignment);
    const std::string msg = e.what();
    CHECK(msg.find("short") != std::string::npos);
    CHECK(msg.find("absent") != std::string::npos);
    CHECK(msg.find("good") == std::string::npos);
  }
  hidden.resize(1);
  CHECK(TrainProbe(&d, hidden, targets, cfg).loss_history.size() == 1);
}

TEST_CASE("probe training is deterministic", "[probe]") {
  std::vector<HiddenReps> hidden;
  std::map<std::string, Matrix> targets;
  FeatureData(Corpus(1, 2, 8), &hidden, &targets);
  auto run = [&] {
    ProbeDecoder d(kFeaturesTag, 240, 1, 32);
    Rng rng = MakeRng(8, "init");
    d.Init(rng);
    ProbeConfig cfg;
    cfg.epochs = 2;
    cfg.seed = 8;
    TrainProbe(&d, hidden, targets, cfg);
    return EncodeCheckpoint(d.Descriptor(), std::as_const(d).AllParams());
  };
  CHECK(run() == run());
}

TEST_CASE("identity-layer probe reaches a small reconstruction error", "[probe][slow]") {
  std::vector<HiddenReps> hidden;
  std::map<std::string, Matrix> targets;
  FeatureData(Corpus(4, 5, 1), &hidden, &targets);
  ProbeDecoder d(kFeaturesTag, 240, 1, 256);
  Rng rng = MakeRng(1, "init");
  d.Init(rng);
  ProbeConfig cfg;
  cfg.epochs = 150;
  cfg.batch_frames = 32;
  cfg.lr = 3e-3;
  cfg.lr_decay = 0.98;
  cfg.seed = 1;
  const ProbeTrainResult r = TrainProbe(&d, hidden, targets, cfg);
  INFO("final L1 " << r.loss_history.back());
  CHECK(r.loss_history.back() <= 0.05);

  // 10-epoch moving average never rises.
  std::vector<double> ma;
  for (std::size_t i = 10; i <= r.loss_history.size(); ++i) {
    double s = 0.0;
    for (std::size_t j = i - 10; j < i; ++j) s += r.loss_history[j];
    ma.push_back(s / 10.0);
  }
  for (std::size_t i = 1; i < ma.size(); ++i) CHECK(ma[i] <= ma[i - 1]);

  // Held-in reconstruction error agrees with the training loss.
  double l1 = 0.0;
  for (const HiddenReps &h : hidden) l1 += MeanL1(d.Reconstruct(h), targets.at(h.utterance_id));
  CHECK(l1 / static_cast<double>(hidden.size()) <= 0.06);
}

TEST_CASE("audify round-trips log-mel", "[probe]") {
  const std::vector<Utterance> corpus = Corpus(2, 2, 9);
  const Frontend &fe = Frontend::Default();
  for (const Utterance &u : corpus) {
    const Matrix mel = fe.LogMel(u.wave, false).frames;
    const Waveform w = Audify(mel);
    const Waveform again = Audify(mel);
    CHECK(w.samples == again.samples);
    const Matrix back = fe.LogMel(w, false).frames;
    CHECK(PearsonFlat(mel, back) >= 0.9);
  }
  const Matrix floor = Matrix::Constant(50, 80, std::log(kLogFloor));
  CHECK(Rms(Audify(floor).samples) <= 1e-4);
}

TEST_CASE("mean L1 over common frames", "[probe]") {
  Matrix a = Matrix::Zero(3, 80), b = Matrix::Constant(2, 80, 0.5);
  CHECK(MeanL1(a, b) == 0.5);
}
