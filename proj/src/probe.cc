// src/probe.cc

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

#include "laud/probe.h"

#include <cmath>

#include <spdlog/spdlog.h>

namespace laud {

namespace {

Matrix Reshape(const Matrix &m, Eigen::Index rows, Eigen::Index cols) {
  return Eigen::Map<const Matrix>(m.data(), rows, cols);
}

}  // namespace

ProbeDecoder::ProbeDecoder(const std::string &layer_tag, int input_dim, int factor, int d_proj)
    : tag_(layer_tag),
      input_dim_(input_dim),
      factor_(factor),
      d_proj_(d_proj),
      proj_("probe.proj", input_dim, factor * d_proj),
      out_("probe.out", d_proj, kNumMelBins),
      in_mean_("probe.input_mean", {input_dim}),
      in_std_("probe.input_std", {input_dim}),
      out_mean_("probe.target_mean", {kNumMelBins}),
      out_std_("probe.target_std", {kNumMelBins}) {
  if (input_dim < 1 || factor < 1 || d_proj < 1)
    Fail(ErrorKind::kConfig, "probe: dimensions and factor must be positive");
  for (int k = 0; k < kProbeHighwayLayers; ++k)
    highways_.emplace_back("probe.hw" + std::to_string(k + 1), d_proj);
  in_std_.value.setOnes();
  out_std_.value.setOnes();
}

void ProbeDecoder::Init(Rng &rng) {
  proj_.Init(rng);
  for (Highway &h : highways_) h.Init(rng);
  out_.Init(rng);
}

void ProbeDecoder::SetStats(const FeatureStats &input, const FeatureStats &target) {
  if (input.mean.size() != input_dim_ || target.mean.size() != kNumMelBins)
    Fail(ErrorKind::kShape, "probe: statistics have the wrong width");
  in_mean_.value.row(0) = input.mean.transpose();
  in_std_.value.row(0) = input.stddev.transpose();
  out_mean_.value.row(0) = target.mean.transpose();
  out_std_.value.row(0) = target.stddev.transpose();
  for (Parameter *p : {&in_mean_, &in_std_, &out_mean_, &out_std_}) RoundToFloat(&p->value);
}

ParamList ProbeDecoder::Params() {
  ParamList p = proj_.Params();
  for (Highway &h : highways_)
    for (Parameter *q : h.Params()) p.push_back(q);
  for (Parameter *q : out_.Params()) p.push_back(q);
  return p;
}

ParamList ProbeDecoder::AllParams() {
  ParamList p = {&in_mean_, &in_std_, &out_mean_, &out_std_};
  for (Parameter *q : Params()) p.push_back(q);
  return p;
}

ConstParamList ProbeDecoder::AllParams() const {
  ConstParamList p = {&in_mean_, &in_std_, &out_mean_, &out_std_};
  for (const Parameter *q : proj_.Params()) p.push_back(q);
  for (const Highway &h : highways_)
    for (const Parameter *q : h.Params()) p.push_back(q);
  for (const Parameter *q : out_.Params()) p.push_back(q);
  return p;
}

Matrix ProbeDecoder::Standardize(const Matrix &hidden) const {
  if (hidden.cols() != input_dim_)
    Fail(ErrorKind::kShape, "probe " + tag_ + ": expected " + std::to_string(input_dim_) +
                                "-dim frames, got " + std::to_string(hidden.cols()));
  Matrix z = hidden.rowwise() - in_mean_.value.row(0);
  return z.array().rowwise() / in_std_.value.row(0).array();
}

Matrix ProbeDecoder::Upsample(const Matrix &hidden) const {
  const Matrix p = proj_.Forward(Standardize(hidden));
  return Reshape(p, hidden.rows() * factor_, d_proj_);
}

Matrix ProbeDecoder::Reconstruct(const HiddenReps &h) const {
  if (h.layer_tag != tag_)
    Fail(ErrorKind::kConfig, "probe for " + tag_ + " given layer " + h.layer_tag);
  if (h.factor != factor_)
    Fail(ErrorKind::kConfig, "probe for " + tag_ + " has factor " + std::to_string(factor_) +
                                 ", record has " + std::to_string(h.factor));
  // One hidden frame at a time: every frame passes through products of the
  // same shape, so its output is bit-identical wherever it occurs.
  const Eigen::Index steps = h.frames.rows();
  Matrix y(steps * factor_, kNumMelBins);
  for (Eigen::Index t = 0; t < steps; ++t) {
    Matrix x = Upsample(h.frames.row(t));
    for (const Highway &hw : highways_) x = hw.Forward(x, nullptr);
    y.middleRows(t * factor_, factor_) = out_.Forward(x);
  }
  y.array().rowwise() *= out_std_.value.row(0).array();
  y.rowwise() += out_mean_.value.row(0);
  return y;
}

std::pair<double, double> ProbeDecoder::Accumulate(const Matrix &hidden, const Matrix &target,
                                                   const std::vector<bool> &row_mask) {
  const Eigen::Index rows = hidden.rows() * factor_;
  if (target.rows() != rows || target.cols() != kNumMelBins ||
      static_cast<Eigen::Index>(row_mask.size()) != rows)
    Fail(ErrorKind::kShape, "probe: target does not match the upsampled frames");
  const Matrix z = Standardize(hidden);
  const Matrix p = proj_.Forward(z);
  std::vector<Matrix> inputs;
  std::vector<Highway::Cache> caches(highways_.size());
  Matrix x = Reshape(p, rows, d_proj_);
  for (std::size_t k = 0; k < highways_.size(); ++k) {
    inputs.push_back(x);
    x = highways_[k].Forward(inputs.back(), &caches[k]);
  }
  const Matrix yn = out_.Forward(x);
  Matrix y = yn.array().rowwise() * out_std_.value.row(0).array();
  y.rowwise() += out_mean_.value.row(0);

  double loss = 0.0, count = 0.0;
  Matrix dy = Matrix::Zero(rows, kNumMelBins);
  for (Eigen::Index r = 0; r < rows; ++r) {
    if (!row_mask[static_cast<std::size_t>(r)]) continue;
    for (int c = 0; c < kNumMelBins; ++c) {
      const double d = y(r, c) - target(r, c);
      loss += std::abs(d);
      dy(r, c) = d > 0.0 ? 1.0 : d < 0.0 ? -1.0 : 0.0;
    }
    count += kNumMelBins;
  }
  const Matrix dyn = dy.array().rowwise() * out_std_.value.row(0).array();
  Matrix dx = out_.Backward(x, dyn);
  for (std::size_t k = highways_.size(); k-- > 0;) dx = highways_[k].Backward(inputs[k], caches[k], dx);
  proj_.Backward(z, Reshape(dx, hidden.rows(), static_cast<Eigen::Index>(factor_) * d_proj_));
  return {loss, count};
}

void ProbeDecoder::Save(const std::string &path) const {
  SaveCheckpoint(path, Descriptor(), AllParams());
}

ProbeDecoder ProbeDecoder::Load(const std::string &path) {
  const Checkpoint ckpt = LoadCheckpoint(path);
  const std::string prefix = "probe/v1/";
  if (ckpt.descriptor.rfind(prefix, 0) != 0 || ckpt.descriptor.size() == prefix.size())
    Fail(ErrorKind::kIncompatibleCheckpoint, path + " is not a probe checkpoint");
  const NamedTensor *proj = nullptr, *hw = nullptr;
  for (const NamedTensor &t : ckpt.tensors) {
    if (t.name == "probe.proj.weight") proj = &t;
    if (t.name == "probe.hw1.transform.weight") hw = &t;
  }
  if (!proj || !hw || proj->shape.size() != 2 || hw->shape.size() != 2 || hw->shape[0] < 1 ||
      proj->shape[0] % hw->shape[0] != 0)
    Fail(ErrorKind::kIncompatibleCheckpoint, path + ": malformed probe checkpoint");
  const int d_proj = hw->shape[0];
  ProbeDecoder decoder(ckpt.descriptor.substr(prefix.size()), proj->shape[1],
                       proj->shape[0] / d_proj, d_proj);
  AssignParameters(ckpt, decoder.AllParams());
  return decoder;
}

// ---------------------------------------------------------------------------

ProbeTrainResult TrainProbe(ProbeDecoder *decoder, const std::vector<HiddenReps> &hidden,
                            const std::map<std::string, Matrix> &targets,
                            const ProbeConfig &cfg) {
  if (cfg.epochs < 1 || cfg.batch_frames < 1 || !(cfg.lr > 0.0))
    Fail(ErrorKind::kConfig, "probe training: epochs, batch size and lr must be positive");
  if (hidden.empty()) Fail(ErrorKind::kConfig, "probe training: no hidden representations");
  const int f = decoder->factor();

  std::vector<const Matrix *> aligned;
  std::string misaligned;
  for (const HiddenReps &h : hidden) {
    if (h.layer_tag != decoder->layer_tag() || h.factor != f)
      Fail(ErrorKind::kConfig, "probe training: record " + h.utterance_id + " is layer " +
                                   h.layer_tag + " with factor " + std::to_string(h.factor));
    const auto it = targets.find(h.utterance_id);
    const Eigen::Index out_rows = h.frames.rows() * f;
    if (it == targets.end() || it->second.cols() != kNumMelBins ||
        it->second.rows() > out_rows || it->second.rows() <= out_rows - f) {
      misaligned += (misaligned.empty() ? "" : ", ") + h.utterance_id;
      continue;
    }
    aligned.push_back(&it->second);
  }
  if (!misaligned.empty()) Fail(ErrorKind::kAlignment, "probe training: misaligned utterances: " + misaligned);

  // Standardization statistics over all training frames.
  Eigen::Index total_hidden = 0, total_target = 0;
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    total_hidden += hidden[i].frames.rows();
    total_target += aligned[i]->rows();
  }
  Matrix all_h(total_hidden, decoder->input_dim()), all_t(total_target, kNumMelBins);
  for (std::size_t i = 0, rh = 0, rt = 0; i < hidden.size(); ++i) {
    all_h.middleRows(static_cast<Eigen::Index>(rh), hidden[i].frames.rows()) = hidden[i].frames;
    all_t.middleRows(static_cast<Eigen::Index>(rt), aligned[i]->rows()) = *aligned[i];
    rh += static_cast<std::size_t>(hidden[i].frames.rows());
    rt += static_cast<std::size_t>(aligned[i]->rows());
  }
  decoder->SetStats(ComputeStats(all_h), ComputeStats(all_t));

  // Every hidden frame is an independent sample.
  std::vector<std::pair<std::uint32_t, std::uint32_t>> samples;
  for (std::size_t i = 0; i < hidden.size(); ++i)
    for (Eigen::Index t = 0; t < hidden[i].frames.rows(); ++t)
      samples.emplace_back(static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(t));

  ParamList params = decoder->Params();
  AdamConfig adam_cfg;
  adam_cfg.lr = cfg.lr;
  Adam adam(params, adam_cfg);
  Rng rng = MakeRng(cfg.seed, "probe/shuffle/" + decoder->layer_tag());
  const std::size_t batch = std::max<std::size_t>(1, static_cast<std::size_t>(cfg.batch_frames / f));

  ProbeTrainResult result;
  double lr = cfg.lr;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Shuffle(&samples, rng);
    double epoch_loss = 0.0, epoch_count = 0.0;
    for (std::size_t start = 0; start < samples.size(); start += batch) {
      const std::size_t n = std::min(batch, samples.size() - start);
      Matrix h(static_cast<Eigen::Index>(n), decoder->input_dim());
      Matrix tgt = Matrix::Zero(static_cast<Eigen::Index>(n) * f, kNumMelBins);
      std::vector<bool> mask(n * static_cast<std::size_t>(f), false);
      for (std::size_t b = 0; b < n; ++b) {
        const auto [rec, t] = samples[start + b];
        h.row(static_cast<Eigen::Index>(b)) = hidden[rec].frames.row(t);
        const Matrix &target = *aligned[rec];
        for (int j = 0; j < f; ++j) {
          const Eigen::Index src = static_cast<Eigen::Index>(t) * f + j;
          if (src >= target.rows()) continue;
          tgt.row(static_cast<Eigen::Index>(b) * f + j) = target.row(src);
          mask[b * static_cast<std::size_t>(f) + static_cast<std::size_t>(j)] = true;
        }
      }
      ZeroGrads(params);
      const auto [loss, count] = decoder->Accumulate(h, tgt, mask);
      if (count == 0.0) continue;
      for (Parameter *p : params) p->grad /= count;
      adam.Step();
      epoch_loss += loss;
      epoch_count += count;
    }
    result.loss_history.push_back(epoch_loss / epoch_count);
    spdlog::debug("probe {} epoch {} L1 {:.4f}", decoder->layer_tag(), epoch + 1,
                  result.loss_history.back());
    lr *= cfg.lr_decay;
    adam.set_lr(lr);
  }
  return result;
}

double MeanL1(const Matrix &a, const Matrix &b) {
  const Eigen::Index rows = std::min(a.rows(), b.rows());
  if (rows == 0 || a.cols() != b.cols()) Fail(ErrorKind::kShape, "l1: no common frames");
  return (a.topRows(rows) - b.topRows(rows)).cwiseAbs().mean();
}

Waveform Audify(const Matrix &log_mel, const GriffinLimConfig &gl) {
  if (log_mel.cols() != kNumMelBins) Fail(ErrorKind::kShape, "audify: expected 80 static log-mel bins");
  const Frontend &fe = Frontend::Default();
  const Matrix power = fe.MelPinv(log_mel.array().exp().matrix());
  return fe.GriffinLim(power.cwiseSqrt(), gl).wave;
}

}  // namespace laud
