// laud/asr.h

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

// CTC acoustic models over 80-bin log-mel features with dynamics, and the
// per-layer hidden representation records that probes are trained on.
//
// Two encoders are provided. The recurrent one stacks five BLSTM layers and
// keeps every other frame after layers 2, 3 and 4. The convolutional one runs
// four 3x3 conv layers over the (static, delta, acceleration) x time x
// frequency image, max-pooling 2x2 after conv 2 and 4, and then five BLSTM
// layers. Layer outputs are recorded after any downsampling.

#ifndef LAUD_ASR_H_
#define LAUD_ASR_H_

#include <string>
#include <vector>

#include "laud/audio.h"
#include "laud/common.h"
#include "laud/ctc.h"
#include "laud/nn.h"

namespace laud {

enum class EncoderKind { kRecurrent, kConvFront };

/// Pseudo-layer holding the unnormalized 240-dim input features.
inline constexpr const char *kFeaturesTag = "features";

struct EncoderArch {
  EncoderKind kind = EncoderKind::kRecurrent;
  int hidden = 64;  // per direction
  std::vector<int> conv_channels = {16, 16, 32, 32};
  std::vector<std::string> tokens;  // output vocabulary, id = index + 1

  /// "asr/v1/kind=blstm;hidden=64;conv=16,16,32,32;tokens=a,b".
  std::string Descriptor() const;
  static EncoderArch FromDescriptor(const std::string &descriptor);

  /// Extractable layers in network order, not including kFeaturesTag.
  std::vector<std::string> LayerTags() const;
  bool HasLayer(const std::string &tag) const;
  /// Cumulative frame-rate reduction of a layer's output.
  int Factor(const std::string &tag) const;
  int Dim(const std::string &tag) const;
  /// Reduction of the final encoder output.
  int OutputFactor() const;
  void Validate() const;
};

/// Input frames for an utterance: log-mel with deltas, normalized to zero
/// mean and unit variance per utterance.
Matrix AsrInput(const Waveform &w);

/// ceil(n / factor): frames surviving repeated keep-even decimation.
int DownsampledLength(int frames, int factor);

struct HiddenReps {
  std::string layer_tag;
  std::string utterance_id;
  std::string speaker_id;
  int factor = 1;
  Matrix frames;  // T_k x d_k
};

class AsrModel {
 public:
  explicit AsrModel(const EncoderArch &arch);

  void Init(Rng &rng);
  const EncoderArch &arch() const { return arch_; }

  /// T' x (|V|+1) logits for AsrInput frames.
  Matrix Logits(const Matrix &input) const;
  /// Adds gradients of the CTC loss to the parameters and returns the loss.
  /// Throws kNoAlignment when the output is too short for the target.
  double Accumulate(const Matrix &input, const std::vector<int> &target);
  /// Post-activation outputs of the requested layers, in request order.
  std::vector<Matrix> Hidden(const Matrix &input, const std::vector<std::string> &tags) const;

  ParamList Params();
  ConstParamList Params() const;

  void Save(const std::string &path) const;
  static AsrModel Load(const std::string &path);

 private:
  struct Trace;
  Matrix Run(const Matrix &input, Trace *trace, const std::vector<std::string> *tags,
             std::vector<Matrix> *hidden) const;

  EncoderArch arch_;
  std::vector<Conv2d> convs_;
  std::vector<BiLstm> blstms_;
  Dense output_;
};

struct AsrTrainConfig {
  int epochs = 60;
  int batch_size = 4;
  double lr = 5e-3;
  double clip_norm = 5.0;
  std::uint64_t seed = 0;
  bool augment = false;
  double snr_min_db = 0.0;
  double snr_max_db = 20.0;
  /// Chance that a training utterance is mixed with noise when augmenting.
  double augment_prob = 1.0;
};

struct AsrTrainResult {
  std::vector<double> loss_history;  // mean CTC loss per epoch
  int skipped = 0;                   // utterances with no feasible alignment
};

/// Trains in place. `noises` is required when cfg.augment is set.
AsrTrainResult TrainAsr(AsrModel *model, const std::vector<Utterance> &corpus,
                        const AsrTrainConfig &cfg,
                        const std::vector<Waveform> &noises = {});

struct WerReport {
  std::vector<EditStats> per_utterance;
  int errors = 0;
  int ref_tokens = 0;
  /// total errors / total reference tokens.
  double aggregate() const;
};

WerReport EvalWer(const AsrModel &model, const std::vector<Utterance> &corpus);

/// One record per requested layer. kFeaturesTag yields the unnormalized
/// input features at factor 1.
std::vector<HiddenReps> ExtractHidden(const AsrModel &model, const Utterance &utt,
                                      const std::vector<std::string> &tags);

constexpr std::uint32_t kHrepVersion = 1;

std::vector<std::uint8_t> EncodeHrep(const HiddenReps &h);
HiddenReps DecodeHrep(const std::vector<std::uint8_t> &bytes);
void WriteHrep(const HiddenReps &h, const std::string &path);
HiddenReps ReadHrep(const std::string &path);

}  // namespace laud

#endif  // LAUD_ASR_H_
