// laud/ctc.h

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

// Connectionist temporal classification: loss and gradient by log-space
// forward-backward, greedy decoding, and Levenshtein error counts.

#ifndef LAUD_CTC_H_
#define LAUD_CTC_H_

#include <string>
#include <vector>

#include "laud/common.h"

namespace laud {

constexpr int kBlank = 0;

struct CtcResult {
  double loss = 0.0;  // -log p(target | logits)
  Matrix grad;        // d loss / d logits, T x (|V|+1)
};

/// Minimum number of frames that can emit `target`: its length plus one
/// separating blank per adjacent repeat.
int CtcMinFrames(const std::vector<int> &target);

/// `logits` is T x (|V|+1) with column 0 the blank; target ids are in
/// [1, |V|]. Throws kNoAlignment when T < CtcMinFrames(target).
CtcResult CtcLoss(const Matrix &logits, const std::vector<int> &target);

/// Merges runs of equal ids, then drops blanks.
std::vector<int> CollapseFrames(const std::vector<int> &frame_ids);
std::vector<int> GreedyDecode(const Matrix &logits);

struct EditStats {
  int substitutions = 0, deletions = 0, insertions = 0;
  int ref_length = 0;
  int errors() const { return substitutions + deletions + insertions; }
  /// errors / ref_length; throws kUndefinedReference for an empty reference.
  double wer() const;
};

EditStats EditDistance(const std::vector<int> &ref, const std::vector<int> &hyp);
EditStats EditDistance(const std::vector<std::string> &ref,
                       const std::vector<std::string> &hyp);

/// Splits on runs of whitespace.
std::vector<std::string> SplitWords(const std::string &text);

}  // namespace laud

#endif  // LAUD_CTC_H_
