// laud/eval.h

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

// Measurements on reconstructed speech: a statistical speaker embedding with
// cosine scoring and equal error rate, short-time objective
// intelligibility, and rank statistics for trends across layers.

#ifndef LAUD_EVAL_H_
#define LAUD_EVAL_H_

#include <string>
#include <vector>

#include "laud/audio.h"
#include "laud/common.h"

namespace laud {

/// Per-bin mean and population standard deviation of T x 80 static log-mel
/// frames (160 values). Throws kTooShort for fewer than two frames.
Vector EmbedSpeaker(const Matrix &log_mel);

double CosineSimilarity(const Vector &a, const Vector &b);

/// Subtracts the mean embedding of the set from every member. Scores are
/// computed on centered embeddings.
void CenterEmbeddings(std::vector<Vector> *embeddings);

struct UtteranceInfo {
  std::string id;
  std::string speaker_id;
};

struct ScoredPair {
  std::string utt_a, utt_b;
  bool same_speaker = false;
  double score = 0.0;
};

/// Exactly n same-speaker and n different-speaker pairs, each drawn
/// uniformly without replacement from all unordered pairs of distinct
/// utterances. Positives come first. Throws kSampling when either class has
/// fewer than n candidates.
std::vector<ScoredPair> SamplePairs(const std::vector<UtteranceInfo> &utts, int n_per_class,
                                    std::uint64_t seed);

struct EerResult {
  double eer = 0.0;
  double threshold = 0.0;
};

/// Equal error rate of "accept when score >= threshold", read off the convex
/// hull of the ROC operating points (so every rate on a hull segment is
/// reachable) where false accepts equal false rejects. The threshold is
/// interpolated linearly between the two hull vertices. Throws
/// kUndefinedEer unless both classes are present.
EerResult ComputeEer(const std::vector<double> &target_scores,
                     const std::vector<double> &nontarget_scores);
EerResult ComputeEer(const std::vector<ScoredPair> &pairs);

void WriteScores(const std::vector<ScoredPair> &pairs, const std::string &path);
std::vector<ScoredPair> ReadScores(const std::string &path);

/// Short-time objective intelligibility of `degraded` against `clean`:
/// 10 kHz, silent-frame removal at 40 dB, 256-sample frames with 50%
/// overlap, 15 third-octave bands from 150 Hz, 30-frame segments, -15 dB
/// clipping. Inputs must share rate and length (kAlignment otherwise); too
/// few frames after silence removal give kTooShort.
double Stoi(const Waveform &clean, const Waveform &degraded);

double PearsonCorrelation(const std::vector<double> &x, const std::vector<double> &y);
/// Pearson correlation of average ranks; 0 when either input is constant.
double SpearmanCorrelation(const std::vector<double> &x, const std::vector<double> &y);

}  // namespace laud

#endif  // LAUD_EVAL_H_
