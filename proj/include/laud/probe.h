// laud/probe.h

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

// Frame-wise probing decoders that map one layer's hidden representations
// back to static log-mel frames, and the mel-to-waveform path used to
// listen to and score their output.
//
// A decoder sees a single hidden frame at a time. A linear projection turns
// it into `factor` consecutive d_proj-wide frames (undoing the layer's
// downsampling), four Highway layers refine each one, and a linear layer
// emits 80 log-mel values. Inputs and targets are standardized with
// statistics fitted on the training set and stored in the checkpoint.

#ifndef LAUD_PROBE_H_
#define LAUD_PROBE_H_

#include <map>
#include <string>
#include <vector>

#include "laud/asr.h"
#include "laud/common.h"
#include "laud/features.h"
#include "laud/nn.h"

namespace laud {

constexpr int kProbeHighwayLayers = 4;

struct ProbeConfig {
  int d_proj = 256;
  int epochs = 30;
  int batch_frames = 256;  // output frames per minibatch
  double lr = 1e-3;
  double lr_decay = 1.0;   // multiplier applied after every epoch
  std::uint64_t seed = 0;
};

class ProbeDecoder {
 public:
  ProbeDecoder(const std::string &layer_tag, int input_dim, int factor, int d_proj);

  void Init(Rng &rng);

  const std::string &layer_tag() const { return tag_; }
  int input_dim() const { return input_dim_; }
  int factor() const { return factor_; }
  int d_proj() const { return d_proj_; }
  std::string Descriptor() const { return "probe/v1/" + tag_; }

  /// (factor * T_k) x d_proj: each hidden frame becomes `factor` consecutive
  /// projected frames. Input is standardized first.
  Matrix Upsample(const Matrix &hidden) const;
  /// (factor * T_k) x 80 predicted log-mel. Throws kConfig when the record's
  /// layer or factor does not match the decoder.
  Matrix Reconstruct(const HiddenReps &h) const;

  /// Fits the standardization statistics.
  void SetStats(const FeatureStats &input, const FeatureStats &target);

  /// Adds gradients of mean |prediction - target| over the unmasked rows and
  /// returns the loss sum and the number of counted entries.
  std::pair<double, double> Accumulate(const Matrix &hidden, const Matrix &target,
                                       const std::vector<bool> &row_mask);

  /// Trainable parameters (excludes the standardization statistics).
  ParamList Params();
  /// Everything stored in a checkpoint, statistics included.
  ParamList AllParams();
  ConstParamList AllParams() const;

  void Save(const std::string &path) const;
  static ProbeDecoder Load(const std::string &path);

 private:
  Matrix Standardize(const Matrix &hidden) const;

  std::string tag_;
  int input_dim_, factor_, d_proj_;
  Dense proj_;
  std::vector<Highway> highways_;
  Dense out_;
  Parameter in_mean_, in_std_, out_mean_, out_std_;
};

struct ProbeTrainResult {
  std::vector<double> loss_history;  // mean L1 (nats per bin) per epoch
};

/// Trains on every frame of every record; targets are T x 80 static log-mel
/// keyed by utterance id and truncated to factor * T_k frames. Throws
/// kAlignment naming the utterances that have no target or whose frame
/// count is off by a downsampling factor or more.
ProbeTrainResult TrainProbe(ProbeDecoder *decoder, const std::vector<HiddenReps> &hidden,
                            const std::map<std::string, Matrix> &targets,
                            const ProbeConfig &cfg);

/// Mean absolute error over the common leading frames.
double MeanL1(const Matrix &a, const Matrix &b);

/// exp, mel pseudo-inverse, square root, Griffin-Lim.
Waveform Audify(const Matrix &log_mel, const GriffinLimConfig &gl = GriffinLimConfig());

}  // namespace laud

#endif  // LAUD_PROBE_H_
