// src/asr.cc

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

#include "laud/asr.h"

#include <map>
#include <sstream>

#include <spdlog/spdlog.h>

#include "laud/features.h"
#include "laud/io.h"

namespace laud {

namespace {

constexpr int kRecurrentLayers = 5;
constexpr int kInputChannels = 3;

std::vector<std::string> SplitOn(const std::string &s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  return out;
}

std::string Join(const std::vector<std::string> &parts, char sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

bool IsConvTag(const std::string &tag) { return tag.rfind("cnn", 0) == 0; }

// Keeps rows 0, 2, 4, ...
Matrix Decimate(const Matrix &x) {
  const Eigen::Index n = (x.rows() + 1) / 2;
  Matrix y(n, x.cols());
  for (Eigen::Index i = 0; i < n; ++i) y.row(i) = x.row(2 * i);
  return y;
}

Matrix DecimateBackward(const Matrix &dy, Eigen::Index rows) {
  Matrix dx = Matrix::Zero(rows, dy.cols());
  for (Eigen::Index i = 0; i < dy.rows(); ++i) dx.row(2 * i) = dy.row(i);
  return dx;
}

// Channel-major flattening: frame t holds [c0 w0..wW-1, c1 w0.., ...].
Matrix Flatten(const FeatureMap &m) {
  Matrix out(m.height, m.channels * m.width);
  for (int c = 0; c < m.channels; ++c)
    for (int t = 0; t < m.height; ++t)
      for (int w = 0; w < m.width; ++w)
        out(t, c * m.width + w) = m.data(c, t * m.width + w);
  return out;
}

FeatureMap Unflatten(const Matrix &x, int channels, int width) {
  FeatureMap m(channels, static_cast<int>(x.rows()), width);
  for (int c = 0; c < channels; ++c)
    for (int t = 0; t < m.height; ++t)
      for (int w = 0; w < width; ++w)
        m.data(c, t * width + w) = x(t, c * width + w);
  return m;
}

bool ConvPools(int k) { return k == 1 || k == 3; }
bool RecurrentDecimates(int k) { return k >= 1 && k <= 3; }

}  // namespace

// ---------------------------------------------------------------------------

std::string EncoderArch::Descriptor() const {
  std::vector<std::string> ch;
  for (int c : conv_channels) ch.push_back(std::to_string(c));
  return std::string("asr/v1/kind=") + (kind == EncoderKind::kRecurrent ? "blstm" : "cnn") +
         ";hidden=" + std::to_string(hidden) + ";conv=" + Join(ch, ',') +
         ";tokens=" + Join(tokens, ',');
}

EncoderArch EncoderArch::FromDescriptor(const std::string &descriptor) {
  const std::string prefix = "asr/v1/";
  if (descriptor.rfind(prefix, 0) != 0)
    Fail(ErrorKind::kIncompatibleCheckpoint, "not an ASR checkpoint: " + descriptor);
  EncoderArch arch;
  std::map<std::string, std::string> kv;
  for (const std::string &field : SplitOn(descriptor.substr(prefix.size()), ';')) {
    const auto eq = field.find('=');
    if (eq == std::string::npos)
      Fail(ErrorKind::kIncompatibleCheckpoint, "bad descriptor field: " + field);
    kv[field.substr(0, eq)] = field.substr(eq + 1);
  }
  try {
    const std::string kind = kv.at("kind");
    if (kind == "blstm") {
      arch.kind = EncoderKind::kRecurrent;
    } else if (kind == "cnn") {
      arch.kind = EncoderKind::kConvFront;
    } else {
      Fail(ErrorKind::kIncompatibleCheckpoint, "unknown encoder kind " + kind);
    }
    arch.hidden = std::stoi(kv.at("hidden"));
    arch.conv_channels.clear();
    for (const std::string &c : SplitOn(kv.at("conv"), ',')) arch.conv_channels.push_back(std::stoi(c));
    arch.tokens = SplitOn(kv.at("tokens"), ',');
  } catch (const std::out_of_range &) {
    Fail(ErrorKind::kIncompatibleCheckpoint, "incomplete descriptor: " + descriptor);
  } catch (const std::invalid_argument &) {
    Fail(ErrorKind::kIncompatibleCheckpoint, "malformed descriptor: " + descriptor);
  }
  arch.Validate();
  return arch;
}

void EncoderArch::Validate() const {
  if (hidden < 1) Fail(ErrorKind::kConfig, "asr: hidden size must be positive");
  if (conv_channels.size() != 4) Fail(ErrorKind::kConfig, "asr: need exactly 4 conv layer widths");
  for (int c : conv_channels)
    if (c < 1) Fail(ErrorKind::kConfig, "asr: conv widths must be positive");
  if (tokens.empty()) Fail(ErrorKind::kConfig, "asr: empty token inventory");
  for (const std::string &t : tokens)
    if (t.empty() || t.find_first_of(",;= \t\n") != std::string::npos)
      Fail(ErrorKind::kConfig, "asr: unusable token name '" + t + "'");
}

std::vector<std::string> EncoderArch::LayerTags() const {
  std::vector<std::string> tags;
  if (kind == EncoderKind::kConvFront)
    for (int k = 1; k <= 4; ++k) tags.push_back("cnn" + std::to_string(k));
  for (int k = 1; k <= kRecurrentLayers; ++k) tags.push_back("blstm" + std::to_string(k));
  return tags;
}

bool EncoderArch::HasLayer(const std::string &tag) const {
  for (const std::string &t : LayerTags())
    if (t == tag) return true;
  return false;
}

int EncoderArch::Factor(const std::string &tag) const {
  if (tag == kFeaturesTag) return 1;
  if (!HasLayer(tag)) Fail(ErrorKind::kConfig, "unknown layer '" + tag + "'");
  const int k = std::stoi(tag.substr(IsConvTag(tag) ? 3 : 5));
  if (kind == EncoderKind::kConvFront) {
    if (!IsConvTag(tag)) return 4;
    return k == 1 ? 1 : k <= 3 ? 2 : 4;
  }
  return k == 1 ? 1 : k == 2 ? 2 : k == 3 ? 4 : 8;
}

int EncoderArch::Dim(const std::string &tag) const {
  if (tag == kFeaturesTag) return kInputChannels * kNumMelBins;
  if (!HasLayer(tag)) Fail(ErrorKind::kConfig, "unknown layer '" + tag + "'");
  if (!IsConvTag(tag)) return 2 * hidden;
  const int k = std::stoi(tag.substr(3));
  return conv_channels[static_cast<std::size_t>(k - 1)] * kNumMelBins / Factor(tag);
}

int EncoderArch::OutputFactor() const { return kind == EncoderKind::kRecurrent ? 8 : 4; }

// ---------------------------------------------------------------------------

Matrix AsrInput(const Waveform &w) {
  const Matrix feats = Frontend::Default().LogMel(w, true).frames;
  return Normalize(feats, ComputeStats(feats));
}

int DownsampledLength(int frames, int factor) { return (frames + factor - 1) / factor; }

struct AsrModel::Trace {
  std::vector<FeatureMap> conv_in;
  std::vector<Matrix> conv_cols;
  std::vector<FeatureMap> conv_act;  // post-ReLU, before pooling
  std::vector<std::vector<int>> pool_arg;
  std::vector<Matrix> rnn_in;
  std::vector<Matrix> rnn_out;  // before decimation
  std::vector<BiLstm::Cache> rnn_cache;
  Matrix head_in;
};

AsrModel::AsrModel(const EncoderArch &arch) : arch_(arch) {
  arch_.Validate();
  int rnn_in = kInputChannels * kNumMelBins;
  if (arch_.kind == EncoderKind::kConvFront) {
    int in = kInputChannels;
    for (int k = 0; k < 4; ++k) {
      const int out = arch_.conv_channels[static_cast<std::size_t>(k)];
      convs_.emplace_back("asr.cnn" + std::to_string(k + 1), in, out);
      in = out;
    }
    rnn_in = arch_.Dim("cnn4");
  }
  for (int k = 0; k < kRecurrentLayers; ++k) {
    blstms_.emplace_back("asr.blstm" + std::to_string(k + 1), rnn_in, arch_.hidden);
    rnn_in = 2 * arch_.hidden;
  }
  output_ = Dense("asr.output", rnn_in, static_cast<int>(arch_.tokens.size()) + 1);
}

void AsrModel::Init(Rng &rng) {
  for (Conv2d &c : convs_) c.Init(rng);
  for (BiLstm &b : blstms_) b.Init(rng);
  output_.Init(rng);
}

ParamList AsrModel::Params() {
  ParamList p;
  for (Conv2d &c : convs_)
    for (Parameter *q : c.Params()) p.push_back(q);
  for (BiLstm &b : blstms_)
    for (Parameter *q : b.Params()) p.push_back(q);
  for (Parameter *q : output_.Params()) p.push_back(q);
  return p;
}

ConstParamList AsrModel::Params() const {
  ConstParamList p;
  for (const Conv2d &c : convs_)
    for (const Parameter *q : c.Params()) p.push_back(q);
  for (const BiLstm &b : blstms_)
    for (const Parameter *q : b.Params()) p.push_back(q);
  for (const Parameter *q : output_.Params()) p.push_back(q);
  return p;
}

Matrix AsrModel::Run(const Matrix &input, Trace *trace, const std::vector<std::string> *tags,
                     std::vector<Matrix> *hidden) const {
  if (input.cols() != kInputChannels * kNumMelBins)
    Fail(ErrorKind::kShape, "asr: expected 240-dim input frames");
  if (input.rows() < 1) Fail(ErrorKind::kTooShort, "asr: empty input");
  auto record = [&](const std::string &tag, const Matrix &m) {
    if (!tags) return;
    for (std::size_t i = 0; i < tags->size(); ++i)
      if ((*tags)[i] == tag) (*hidden)[i] = m;
  };

  Matrix x = input;
  if (arch_.kind == EncoderKind::kConvFront) {
    FeatureMap img(kInputChannels, static_cast<int>(input.rows()), kNumMelBins);
    img = Unflatten(input, kInputChannels, kNumMelBins);
    for (int k = 0; k < 4; ++k) {
      Matrix cols;
      FeatureMap act = ReluForward(convs_[static_cast<std::size_t>(k)].Forward(img, &cols));
      FeatureMap out;
      std::vector<int> arg;
      if (ConvPools(k)) {
        out = MaxPoolForward(act, &arg);
      } else {
        out = act;
      }
      record("cnn" + std::to_string(k + 1), Flatten(out));
      if (trace) {
        trace->conv_in.push_back(std::move(img));
        trace->conv_cols.push_back(std::move(cols));
        trace->conv_act.push_back(std::move(act));
        trace->pool_arg.push_back(std::move(arg));
      }
      img = std::move(out);
    }
    x = Flatten(img);
  }
  for (int k = 0; k < kRecurrentLayers; ++k) {
    BiLstm::Cache cache;
    Matrix y = blstms_[static_cast<std::size_t>(k)].Forward(x, trace ? &cache : nullptr);
    Matrix out = arch_.kind == EncoderKind::kRecurrent && RecurrentDecimates(k) ? Decimate(y) : y;
    record("blstm" + std::to_string(k + 1), out);
    if (trace) {
      trace->rnn_in.push_back(std::move(x));
      trace->rnn_out.push_back(std::move(y));
      trace->rnn_cache.push_back(std::move(cache));
    }
    x = std::move(out);
  }
  Matrix logits = output_.Forward(x);
  if (trace) trace->head_in = std::move(x);
  return logits;
}

Matrix AsrModel::Logits(const Matrix &input) const { return Run(input, nullptr, nullptr, nullptr); }

std::vector<Matrix> AsrModel::Hidden(const Matrix &input,
                                     const std::vector<std::string> &tags) const {
  for (const std::string &t : tags)
    if (!arch_.HasLayer(t)) Fail(ErrorKind::kConfig, "unknown layer '" + t + "'");
  std::vector<Matrix> hidden(tags.size());
  Run(input, nullptr, &tags, &hidden);
  return hidden;
}

double AsrModel::Accumulate(const Matrix &input, const std::vector<int> &target) {
  Trace trace;
  const Matrix logits = Run(input, &trace, nullptr, nullptr);
  const CtcResult ctc = CtcLoss(logits, target);
  Matrix dx = output_.Backward(trace.head_in, ctc.grad);
  for (int k = kRecurrentLayers - 1; k >= 0; --k) {
    const auto i = static_cast<std::size_t>(k);
    const Matrix dy = arch_.kind == EncoderKind::kRecurrent && RecurrentDecimates(k)
                          ? DecimateBackward(dx, trace.rnn_out[i].rows())
                          : dx;
    dx = blstms_[i].Backward(trace.rnn_in[i], trace.rnn_cache[i], dy);
  }
  if (arch_.kind == EncoderKind::kConvFront) {
    FeatureMap dimg = Unflatten(dx, arch_.conv_channels[3], arch_.Dim("cnn4") / arch_.conv_channels[3]);
    for (int k = 3; k >= 0; --k) {
      const auto i = static_cast<std::size_t>(k);
      const FeatureMap dact =
          ConvPools(k) ? MaxPoolBackward(trace.conv_act[i], trace.pool_arg[i], dimg) : dimg;
      dimg = convs_[i].Backward(trace.conv_in[i], trace.conv_cols[i],
                                ReluBackward(trace.conv_act[i], dact));
    }
  }
  return ctc.loss;
}

void AsrModel::Save(const std::string &path) const {
  SaveCheckpoint(path, arch_.Descriptor(), Params());
}

AsrModel AsrModel::Load(const std::string &path) {
  const Checkpoint ckpt = LoadCheckpoint(path);
  AsrModel model(EncoderArch::FromDescriptor(ckpt.descriptor));
  AssignParameters(ckpt, model.Params());
  return model;
}

// ---------------------------------------------------------------------------

AsrTrainResult TrainAsr(AsrModel *model, const std::vector<Utterance> &corpus,
                        const AsrTrainConfig &cfg, const std::vector<Waveform> &noises) {
  if (cfg.epochs < 1 || cfg.batch_size < 1 || !(cfg.lr > 0.0))
    Fail(ErrorKind::kConfig, "asr training: epochs, batch size and lr must be positive");
  if (cfg.augment && noises.empty())
    Fail(ErrorKind::kConfig, "asr training: augmentation needs at least one noise");
  if (cfg.augment && !(cfg.snr_min_db <= cfg.snr_max_db))
    Fail(ErrorKind::kConfig, "asr training: snr range is empty");

  const int factor = model->arch().OutputFactor();
  AsrTrainResult result;
  std::vector<std::size_t> usable;
  std::vector<Matrix> clean_inputs(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    clean_inputs[i] = AsrInput(corpus[i].wave);
    const int frames = DownsampledLength(static_cast<int>(clean_inputs[i].rows()), factor);
    if (frames < CtcMinFrames(corpus[i].transcript)) {
      spdlog::warn("skipping {}: {} output frames cannot align {} tokens", corpus[i].id, frames,
                   corpus[i].transcript.size());
      ++result.skipped;
      continue;
    }
    usable.push_back(i);
  }
  if (usable.empty()) Fail(ErrorKind::kConfig, "asr training: no utterance has a feasible alignment");

  ParamList params = model->Params();
  AdamConfig adam_cfg;
  adam_cfg.lr = cfg.lr;
  Adam adam(params, adam_cfg);
  Rng shuffle_rng = MakeRng(cfg.seed, "asr/shuffle");
  Rng augment_rng = MakeRng(cfg.seed, "asr/augment");

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> order = usable;
    Shuffle(&order, shuffle_rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      ZeroGrads(params);
      for (std::size_t b = start; b < end; ++b) {
        const Utterance &utt = corpus[order[b]];
        double loss;
        if (cfg.augment && Uniform01(augment_rng) < cfg.augment_prob) {
          const Waveform &noise = noises[UniformIndex(augment_rng, noises.size())];
          const double snr = UniformIn(augment_rng, cfg.snr_min_db, cfg.snr_max_db);
          const MixResult mix = MixAtSnr(utt.wave, noise, snr, augment_rng);
          loss = model->Accumulate(AsrInput(mix.mixed), utt.transcript);
        } else {
          loss = model->Accumulate(clean_inputs[order[b]], utt.transcript);
        }
        epoch_loss += loss;
      }
      const double scale = 1.0 / static_cast<double>(end - start);
      for (Parameter *p : params) p->grad *= scale;
      ClipGradNorm(params, cfg.clip_norm);
      adam.Step();
    }
    result.loss_history.push_back(epoch_loss / static_cast<double>(order.size()));
    spdlog::debug("asr epoch {} loss {:.4f}", epoch + 1, result.loss_history.back());
  }
  return result;
}

double WerReport::aggregate() const {
  if (ref_tokens == 0) Fail(ErrorKind::kUndefinedReference, "word error rate over no reference tokens");
  return static_cast<double>(errors) / ref_tokens;
}

WerReport EvalWer(const AsrModel &model, const std::vector<Utterance> &corpus) {
  WerReport report;
  for (const Utterance &utt : corpus) {
    const std::vector<int> hyp = GreedyDecode(model.Logits(AsrInput(utt.wave)));
    EditStats s = EditDistance(utt.transcript, hyp);
    report.errors += s.errors();
    report.ref_tokens += s.ref_length;
    report.per_utterance.push_back(s);
  }
  return report;
}

std::vector<HiddenReps> ExtractHidden(const AsrModel &model, const Utterance &utt,
                                      const std::vector<std::string> &tags) {
  std::vector<std::string> layer_tags;
  for (const std::string &t : tags) {
    if (t == kFeaturesTag) continue;
    if (!model.arch().HasLayer(t)) Fail(ErrorKind::kConfig, "unknown layer '" + t + "'");
    layer_tags.push_back(t);
  }
  std::vector<Matrix> hidden;
  if (!layer_tags.empty()) hidden = model.Hidden(AsrInput(utt.wave), layer_tags);
  std::vector<HiddenReps> out;
  std::size_t next = 0;
  for (const std::string &t : tags) {
    HiddenReps h;
    h.layer_tag = t;
    h.utterance_id = utt.id;
    h.speaker_id = utt.speaker_id;
    h.factor = model.arch().Factor(t);
    if (t == kFeaturesTag) {
      h.frames = Frontend::Default().LogMel(utt.wave, true).frames;
    } else {
      h.frames = std::move(hidden[next++]);
    }
    RoundToFloat(&h.frames);
    out.push_back(std::move(h));
  }
  return out;
}

// ---------------------------------------------------------------------------

std::vector<std::uint8_t> EncodeHrep(const HiddenReps &h) {
  ByteWriter out;
  out.Tag("HREP");
  out.U32(kHrepVersion);
  out.String(h.layer_tag);
  out.String(h.utterance_id);
  out.String(h.speaker_id);
  out.U32(static_cast<std::uint32_t>(h.factor));
  out.U32(static_cast<std::uint32_t>(h.frames.rows()));
  out.U32(static_cast<std::uint32_t>(h.frames.cols()));
  for (Eigen::Index i = 0; i < h.frames.size(); ++i)
    out.F32(static_cast<float>(h.frames.data()[i]));
  return std::move(out.buffer());
}

HiddenReps DecodeHrep(const std::vector<std::uint8_t> &bytes) {
  ByteReader in(bytes, "hidden representation");
  if (in.Tag() != "HREP") Fail(ErrorKind::kFormat, "hidden representation: bad magic");
  const std::uint32_t version = in.U32();
  if (version != kHrepVersion)
    Fail(ErrorKind::kFormat, "hidden representation: unsupported version " + std::to_string(version));
  HiddenReps h;
  h.layer_tag = in.String();
  h.utterance_id = in.String();
  h.speaker_id = in.String();
  h.factor = static_cast<int>(in.U32());
  const std::uint32_t rows = in.U32(), cols = in.U32();
  if (h.factor < 1) Fail(ErrorKind::kFormat, "hidden representation: zero factor");
  if (static_cast<std::uint64_t>(rows) * cols * 4 != in.remaining())
    Fail(ErrorKind::kFormat, "hidden representation: payload size mismatch");
  h.frames.resize(rows, cols);
  for (Eigen::Index i = 0; i < h.frames.size(); ++i) h.frames.data()[i] = in.F32();
  return h;
}

void WriteHrep(const HiddenReps &h, const std::string &path) {
  WriteFileAtomic(path, EncodeHrep(h));
}

HiddenReps ReadHrep(const std::string &path) {
  try {
    return DecodeHrep(ReadFileBytes(path));
  } catch (const Error &e) {
    throw Error(e.kind(), std::string(e.what()) + " (" + path + ")");
  }
}

}  // namespace laud
