// src/ctc.cc

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

#include "laud/ctc.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace laud {

namespace {

constexpr double kLogZero = -std::numeric_limits<double>::infinity();

double LogAdd(double a, double b) {
  if (a == kLogZero) return b;
  if (b == kLogZero) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

template <typename T>
EditStats Levenshtein(const std::vector<T> &ref, const std::vector<T> &hyp) {
  const std::size_t n = ref.size(), m = hyp.size();
  std::vector<std::vector<int>> d(n + 1, std::vector<int>(m + 1));
  for (std::size_t i = 0; i <= n; ++i) d[i][0] = static_cast<int>(i);
  for (std::size_t j = 0; j <= m; ++j) d[0][j] = static_cast<int>(j);
  for (std::size_t i = 1; i <= n; ++i)
    for (std::size_t j = 1; j <= m; ++j)
      d[i][j] = std::min({d[i - 1][j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1),
                          d[i - 1][j] + 1, d[i][j - 1] + 1});
  EditStats stats;
  stats.ref_length = static_cast<int>(n);
  // Backtrace preferring match/substitution, then deletion, then insertion.
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 &&
        d[i][j] == d[i - 1][j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1)) {
      if (ref[i - 1] != hyp[j - 1]) ++stats.substitutions;
      --i, --j;
    } else if (i > 0 && d[i][j] == d[i - 1][j] + 1) {
      ++stats.deletions;
      --i;
    } else {
      ++stats.insertions;
      --j;
    }
  }
  return stats;
}

}  // namespace

int CtcMinFrames(const std::vector<int> &target) {
  int n = static_cast<int>(target.size());
  for (std::size_t i = 1; i < target.size(); ++i)
    if (target[i] == target[i - 1]) ++n;
  return n;
}

CtcResult CtcLoss(const Matrix &logits, const std::vector<int> &target) {
  const int steps = static_cast<int>(logits.rows());
  const int classes = static_cast<int>(logits.cols());
  if (classes < 2) Fail(ErrorKind::kShape, "ctc: need at least one non-blank class");
  for (int id : target)
    if (id < 1 || id >= classes)
      Fail(ErrorKind::kShape, "ctc: target id " + std::to_string(id) + " out of range");
  if (steps < CtcMinFrames(target))
    Fail(ErrorKind::kNoAlignment, "ctc: " + std::to_string(steps) +
                                      " frames cannot emit a target needing " +
                                      std::to_string(CtcMinFrames(target)));
  if (!logits.allFinite()) Fail(ErrorKind::kNumeric, "ctc: non-finite logits");

  // Log-softmax per frame.
  Matrix lp(steps, classes);
  for (int t = 0; t < steps; ++t) {
    const double mx = logits.row(t).maxCoeff();
    const double lse = mx + std::log((logits.row(t).array() - mx).exp().sum());
    lp.row(t) = logits.row(t).array() - lse;
  }

  const int s_len = 2 * static_cast<int>(target.size()) + 1;
  auto label = [&](int s) { return s % 2 == 0 ? kBlank : target[static_cast<std::size_t>(s / 2)]; };
  auto can_skip = [&](int s) { return s % 2 == 1 && s >= 2 && label(s) != label(s - 2); };

  Matrix alpha = Matrix::Constant(steps, s_len, kLogZero);
  alpha(0, 0) = lp(0, kBlank);
  if (s_len > 1) alpha(0, 1) = lp(0, label(1));
  for (int t = 1; t < steps; ++t) {
    for (int s = 0; s < s_len; ++s) {
      double a = alpha(t - 1, s);
      if (s >= 1) a = LogAdd(a, alpha(t - 1, s - 1));
      if (can_skip(s)) a = LogAdd(a, alpha(t - 1, s - 2));
      alpha(t, s) = a == kLogZero ? kLogZero : a + lp(t, label(s));
    }
  }

  // beta(t, s): log probability of completing from state s at t, excluding
  // the emission at t.
  Matrix beta = Matrix::Constant(steps, s_len, kLogZero);
  beta(steps - 1, s_len - 1) = 0.0;
  if (s_len > 1) beta(steps - 1, s_len - 2) = 0.0;
  for (int t = steps - 2; t >= 0; --t) {
    for (int s = 0; s < s_len; ++s) {
      double b = beta(t + 1, s) + lp(t + 1, label(s));
      if (s + 1 < s_len) b = LogAdd(b, beta(t + 1, s + 1) + lp(t + 1, label(s + 1)));
      if (s + 2 < s_len && can_skip(s + 2))
        b = LogAdd(b, beta(t + 1, s + 2) + lp(t + 1, label(s + 2)));
      beta(t, s) = b;
    }
  }

  double log_p = alpha(steps - 1, s_len - 1);
  if (s_len > 1) log_p = LogAdd(log_p, alpha(steps - 1, s_len - 2));
  if (!std::isfinite(log_p)) Fail(ErrorKind::kNumeric, "ctc: target has zero probability");

  CtcResult result;
  result.loss = -log_p;
  result.grad = lp.array().exp().matrix();
  for (int t = 0; t < steps; ++t) {
    for (int s = 0; s < s_len; ++s) {
      const double v = alpha(t, s) + beta(t, s);
      if (v == kLogZero) continue;
      result.grad(t, label(s)) -= std::exp(v - log_p);
    }
  }
  return result;
}

std::vector<int> CollapseFrames(const std::vector<int> &frame_ids) {
  std::vector<int> out;
  int prev = -1;
  for (int id : frame_ids) {
    if (id != prev && id != kBlank) out.push_back(id);
    prev = id;
  }
  return out;
}

std::vector<int> GreedyDecode(const Matrix &logits) {
  std::vector<int> frames(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index t = 0; t < logits.rows(); ++t) {
    Eigen::Index best;
    logits.row(t).maxCoeff(&best);
    frames[static_cast<std::size_t>(t)] = static_cast<int>(best);
  }
  return CollapseFrames(frames);
}

double EditStats::wer() const {
  if (ref_length == 0)
    Fail(ErrorKind::kUndefinedReference, "word error rate of an empty reference");
  return static_cast<double>(errors()) / ref_length;
}

EditStats EditDistance(const std::vector<int> &ref, const std::vector<int> &hyp) {
  return Levenshtein(ref, hyp);
}

EditStats EditDistance(const std::vector<std::string> &ref,
                       const std::vector<std::string> &hyp) {
  return Levenshtein(ref, hyp);
}

std::vector<std::string> SplitWords(const std::string &text) {
  std::istringstream in(text);
  std::vector<std::string> words;
  for (std::string w; in >> w;) words.push_back(w);
  return words;
}

}  // namespace laud
