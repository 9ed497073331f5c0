// tests/asr_test.cc

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

#include "laud/asr.h"
#include "laud/features.h"
#include "laud/io.h"
#include "test_util.h"

using namespace laud;
using laud::testing::MaxRelError;

namespace {

EncoderArch TinyArch(EncoderKind kind, int tokens = 3) {
  EncoderArch a;
  a.kind = kind;
  a.hidden = 3;
  a.conv_channels = {2, 2, 3, 2};
  a.tokens = SynthTokenNames(tokens);
  return a;
}

Matrix RandomInput(int frames, Rng &rng) {
  Matrix m(frames, 240);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = Gaussian(rng);
  return m;
}

std::vector<Utterance> Corpus(int speakers, int per_speaker, std::uint64_t seed) {
  CorpusSpec spec;
  spec.num_speakers = speakers;
  spec.utterances_per_speaker = per_speaker;
  spec.seed = seed;
  return SynthCorpus(spec);
}

}  // namespace

TEST_CASE("architecture descriptors round-trip", "[asr]") {
  for (EncoderKind kind : {EncoderKind::kRecurrent, EncoderKind::kConvFront}) {
    EncoderArch a = TinyArch(kind, 5);
    const EncoderArch b = EncoderArch::FromDescriptor(a.Descriptor());
    CHECK(b.Descriptor() == a.Descriptor());
    CHECK(b.kind == kind);
    CHECK(b.tokens == a.tokens);
  }
  EncoderArch def;
  def.tokens = {"a", "b"};
  CHECK(def.Descriptor() == "asr/v1/kind=blstm;hidden=64;conv=16,16,32,32;tokens=a,b");
  CHECK_THROWS_AS(EncoderArch::FromDescriptor("probe/v1/blstm1"), Error);
  CHECK_THROWS_AS(EncoderArch::FromDescriptor("asr/v1/kind=blstm;hidden=x"), Error);
  def.tokens = {"a,b"};
  try {
    def.Validate();
    FAIL("expected an error");
  } catch (const Error &e) {
    CHECK(e.kind() == ErrorKind::kConfig);
  }
}

TEST_CASE("layer tags, factors and widths", "[asr]") {
  EncoderArch rec;
  rec.tokens = {"a"};
  CHECK(rec.LayerTags() == std::vector<std::string>{"blstm1", "blstm2", "blstm3", "blstm4", "blstm5"});
  CHECK(rec.Factor("blstm1") == 1);
  CHECK(rec.Factor("blstm2") == 2);
  CHECK(rec.Factor("blstm3") == 4);
  CHECK(rec.Factor("blstm4") == 8);
  CHECK(rec.Factor("blstm5") == 8);
  CHECK(rec.Dim("blstm3") == 128);
  CHECK(rec.Factor(kFeaturesTag) == 1);
  CHECK(rec.Dim(kFeaturesTag) == 240);

  EncoderArch conv = rec;
  conv.kind = EncoderKind::kConvFront;
  CHECK(conv.LayerTags().size() == 9);
  CHECK(conv.Factor("cnn1") == 1);
  CHECK(conv.Factor("cnn2") == 2);
  CHECK(conv.Factor("cnn3") == 2);
  CHECK(conv.Factor("cnn4") == 4);
  CHECK(conv.Factor("blstm5") == 4);
  CHECK(conv.Dim("cnn1") == 16 * 80);
  CHECK(conv.Dim("cnn4") == 32 * 20);
  try {
    rec.Factor("cnn1");
    FAIL("expected an error");
  } catch (const Error &e) {
    CHECK(e.kind() == ErrorKind::kConfig);
  }
}

TEST_CASE("hidden frame counts follow the downsampling schedule", "[asr]") {
  Rng rng = MakeRng(1, "test");
  for (EncoderKind kind : {EncoderKind::kRecurrent, EncoderKind::kConvFront}) {
    AsrModel model(TinyArch(kind));
    model.Init(rng);
    const auto tags = model.arch().LayerTags();
    const std::vector<Matrix> h = model.Hidden(RandomInput(128, rng), tags);
    if (kind == EncoderKind::kRecurrent) {
      CHECK(h.back().rows() == 16);
    } else {
      CHECK(h[3].rows() == 32);
    }
    for (int frames : {1, 2, 3, 7, 8, 9, 31, 50}) {
      const std::vector<Matrix> hs = model.Hidden(RandomInput(frames, rng), tags);
      for (std::size_t i = 0; i < tags.size(); ++i) {
        const int f = model.arch().Factor(tags[i]);
        const auto tk = hs[i].rows();
        INFO(tags[i] << " T=" << frames);
        CHECK(f * tk >= frames);
        CHECK(f * tk < frames + f);
        CHECK(tk == DownsampledLength(frames, f));
        CHECK(hs[i].cols() == model.arch().Dim(tags[i]));
      }
      CHECK(model.Logits(RandomInput(frames, rng)).rows() ==
            DownsampledLength(frames, model.arch().OutputFactor()));
    }
  }
}

TEST_CASE("full-model CTC gradients match finite differences", "[asr][property]") {
  for (EncoderKind kind : {EncoderKind::kRecurrent, EncoderKind::kConvFront}) {
    Rng rng = MakeRng(kind == EncoderKind::kRecurrent ? 2 : 3, "test");
    AsrModel model(TinyArch(kind));
    model.Init(rng);
    const Matrix x = RandomInput(kind == EncoderKind::kRecurrent ? 19 : 10, rng);
    const std::vector<int> target = {1, 2};
    ParamList params = model.Params();
    ZeroGrads(params);
    model.Accumulate(x, target);
    auto loss = [&] { return CtcLoss(model.Logits(x), target).loss; };
    double worst = 0.0;
    for (Parameter *p : params) {
      // A random subset of entries keeps the check fast.
      const Eigen::Index n = p->value.size();
      Matrix analytic(1, 12), numeric(1, 12);
      for (int j = 0; j < 12; ++j) {
        const auto idx = static_cast<Eigen::Index>(UniformIndex(rng, static_cast<std::uint64_t>(n)));
        double &v = p->value.data()[idx];
        const double saved = v;
        v = saved + 1e-4;
        const double up = loss();
        v = saved - 1e-4;
        const double down = loss();
        v = saved;
        numeric(0, j) = (up - down) / 2e-4;
        analytic(0, j) = p->grad.data()[idx];
      }
      const double err = MaxRelError(analytic, numeric);
      INFO(p->name << " err " << err);
      CHECK(err <= 1e-3);
      worst = std::max(worst, err);
    }
    CHECK(worst <= 1e-3);
  }
}

TEST_CASE("checkpoints reproduce logits exactly", "[asr]") {
  const std::string dir = laud::testing::ScratchDir("asr_ckpt");
  Rng rng = MakeRng(4, "test");
  AsrModel model(TinyArch(EncoderKind::kConvFront));
  model.Init(rng);
  model.Save(dir + "/m.ckpt");
  const AsrModel back = AsrModel::Load(dir + "/m.ckpt");
  CHECK(back.arch().Descriptor() == model.arch().Descriptor());
  const Matrix x = RandomInput(20, rng);
  CHECK(back.Logits(x) == model.Logits(x));
}

TEST_CASE("training skips infeasible utterances", "[asr]") {
  std::vector<Utterance> corpus = Corpus(1, 2, 5);
  AsrModel model(TinyArch(EncoderKind::kRecurrent, 6));
  Rng rng = MakeRng(5, "init");
  model.Init(rng);
  AsrTrainConfig cfg;
  cfg.epochs = 1;
  corpus[1].transcript.assign(200, 1);
  const AsrTrainResult r = TrainAsr(&model, corpus, cfg);
  CHECK(r.skipped == 1);
  CHECK(r.loss_history.size() == 1);

  corpus[0].transcript.assign(200, 2);
  try {
    TrainAsr(&model, corpus, cfg);
    FAIL("expected an error");
  } catch (const Error &e) {
    CHECK(e.kind() == ErrorKind::kConfig);
  }
}

TEST_CASE("training is deterministic under a fixed seed", "[asr]") {
  const std::vector<Utterance> corpus = Corpus(2, 3, 6);
  const std::vector<Waveform> noises = {SynthNoise(NoiseKind::kPink, 2.0, 1)};
  auto run = [&](bool augment) {
    EncoderArch arch;
    arch.hidden = 16;
    arch.tokens = SynthTokenNames(6);
    AsrModel model(arch);
    Rng rng = MakeRng(6, "init");
    model.Init(rng);
    AsrTrainConfig cfg;
    cfg.epochs = 3;
    cfg.seed = 6;
    cfg.augment = augment;
    return TrainAsr(&model, corpus, cfg, noises).loss_history;
  };
  const auto a = run(false), b = run(false);
  CHECK(a == b);
  const auto c = run(true), d = run(true);
  CHECK(c == d);
  CHECK(c != a);
}

TEST_CASE("asr overfits a small synthetic corpus", "[asr][slow]") {
  const std::vector<Utterance> corpus = Corpus(4, 5, 3);
  EncoderArch arch;
  arch.tokens = SynthTokenNames(6);
  AsrModel model(arch);
  Rng rng = MakeRng(3, "init");
  model.Init(rng);
  AsrTrainConfig cfg;
  cfg.epochs = 90;
  cfg.seed = 3;
  const AsrTrainResult r = TrainAsr(&model, corpus, cfg);
  const double wer = EvalWer(model, corpus).aggregate();
  INFO("final loss " << r.loss_history.back() << " wer " << wer);
  CHECK(r.loss_history.back() < r.loss_history.front());
  CHECK(wer <= 0.05);
}

TEST_CASE("word error rate aggregation", "[asr]") {
  AsrModel model(TinyArch(EncoderKind::kRecurrent, 2));
  for (Parameter *p : model.Params()) p->value.setZero();
  Parameter *bias = model.Params().back();

  std::vector<Utterance> corpus = Corpus(1, 2, 7);
  corpus[0].transcript = {1, 2};
  corpus[1].transcript = {2, 2, 1};

  // Blank everywhere: every reference token is a deletion.
  bias->value(0, 0) = 10.0;
  WerReport r = EvalWer(model, corpus);
  CHECK(r.aggregate() == 1.0);
  CHECK(r.per_utterance[0].deletions == 2);

  // Token 1 everywhere decodes to "a": lengths 1 and 9 give per-utterance
  // rates 1 and 8/9 but an aggregate of 9/10.
  bias->value.setZero();
  bias->value(0, 1) = 10.0;
  corpus[0].transcript = {2};
  corpus[1].transcript = {1, 2, 2, 2, 2, 2, 2, 2, 2};
  r = EvalWer(model, corpus);
  CHECK(r.per_utterance[0].wer() == 1.0);
  CHECK(r.per_utterance[1].wer() == Catch::Approx(8.0 / 9.0));
  CHECK(r.aggregate() == Catch::Approx(0.9));
}

TEST_CASE("hidden extraction is deterministic and read-only", "[asr]") {
  const std::string dir = laud::testing::ScratchDir("asr_extract");
  const std::vector<Utterance> corpus = Corpus(1, 1, 8);
  AsrModel model(TinyArch(EncoderKind::kConvFront, 6));
  Rng rng = MakeRng(8, "init");
  model.Init(rng);
  model.Save(dir + "/m.ckpt");
  const std::string before = Sha256File(dir + "/m.ckpt");
  const AsrModel loaded = AsrModel::Load(dir + "/m.ckpt");
  const std::vector<std::string> tags = {kFeaturesTag, "cnn2", "blstm5"};
  const auto a = ExtractHidden(loaded, corpus[0], tags);
  const auto b = ExtractHidden(loaded, corpus[0], tags);
  REQUIRE(a.size() == 3);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(EncodeHrep(a[i]) == EncodeHrep(b[i]));
  CHECK(Sha256File(dir + "/m.ckpt") == before);

  CHECK(a[0].factor == 1);
  CHECK(a[0].frames.cols() == 240);
  CHECK(a[0].frames.leftCols(80) == Frontend::Default().LogMel(corpus[0].wave, false).frames.cast<float>().cast<double>());
  CHECK(a[1].factor == 2);
  CHECK(a[2].factor == 4);
  CHECK(a[2].speaker_id == corpus[0].speaker_id);
  try {
    ExtractHidden(loaded, corpus[0], {"blstm9"});
    FAIL("expected an error");
  } catch (const Error &e) {
    CHECK(e.kind() == ErrorKind::kConfig);
  }
}

TEST_CASE("hidden representation files round-trip", "[asr]") {
  const std::string dir = laud::testing::ScratchDir("asr_hrep");
  HiddenReps h;
  h.layer_tag = "blstm2";
  h.utterance_id = "utt-spk00-000";
  h.speaker_id = "spk00";
  h.factor = 2;
  h.frames = Matrix(3, 2);
  h.frames << 0.5, -1.25, 3, 4, 5, 6;
  WriteHrep(h, dir + "/x.hrep");
  const HiddenReps g = ReadHrep(dir + "/x.hrep");
  CHECK(g.layer_tag == h.layer_tag);
  CHECK(g.utterance_id == h.utterance_id);
  CHECK(g.speaker_id == h.speaker_id);
  CHECK(g.factor == 2);
  CHECK(g.frames == h.frames);

  std::vector<std::uint8_t> bytes = EncodeHrep(h);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "HREP");
  std::vector<std::uint8_t> bad = bytes;
  bad[1] = 'X';
  CHECK_THROWS_AS(DecodeHrep(bad), Error);
  bad.assign(bytes.begin(), bytes.end() - 3);
  try {
    DecodeHrep(bad);
    FAIL("expected an error");
  } catch (const Error &e) {
    CHECK(e.kind() == ErrorKind::kFormat);
  }
}
