// tests/ctc_test.cc

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

#include "laud/ctc.h"
#include "oracles.h"
#include "test_util.h"

using namespace laud;
using laud::testing::BruteForceCtcLoss;
using laud::testing::MaxRelError;
using laud::testing::NumericGrad;

namespace {

Matrix Uniform(int steps, int classes) { return Matrix::Zero(steps, classes); }

}  // namespace

TEST_CASE("ctc hand-computed losses", "[ctc]") {
  CHECK(CtcLoss(Uniform(1, 2), {1}).loss == Catch::Approx(-std::log(0.5)).margin(1e-12));
  CHECK(CtcLoss(Uniform(2, 2), {1}).loss == Catch::Approx(-std::log(0.75)).margin(1e-12));
  CHECK(CtcLoss(Uniform(3, 2), {1, 1}).loss == Catch::Approx(-std::log(1.0 / 8)).margin(1e-12));
  CHECK(CtcLoss(Uniform(1, 2), {1}).loss == Catch::Approx(0.6931).margin(1e-4));
  CHECK(CtcLoss(Uniform(2, 2), {1}).loss == Catch::Approx(0.2877).margin(1e-4));
  CHECK(CtcLoss(Uniform(3, 2), {1, 1}).loss == Catch::Approx(2.0794).margin(1e-4));
}

TEST_CASE("ctc rejects infeasible targets", "[ctc]") {
  CHECK(CtcMinFrames({1, 1}) == 3);
  CHECK(CtcMinFrames({1, 2, 2, 2}) == 6);
  try {
    CtcLoss(Uniform(2, 2), {1, 1});
    FAIL("expected an error");
  } catch (const Error &e) {
    CHECK(e.kind() == ErrorKind::kNoAlignment);
  }
  CHECK_THROWS_AS(CtcLoss(Uniform(3, 2), {2}), Error);
}

TEST_CASE("ctc empty target is the all-blank path", "[ctc]") {
  Matrix logits(3, 3);
  logits << 0.1, 0.5, -0.2, 1.0, 0.0, 0.3, -0.5, 0.2, 0.2;
  CHECK(CtcLoss(logits, {}).loss == Catch::Approx(BruteForceCtcLoss(logits, {})).epsilon(1e-12));
}

TEST_CASE("ctc matches brute-force enumeration and finite differences", "[ctc][property]") {
  int checked = 0;
  for (int seed = 0; seed < 30; ++seed) {
    Rng rng = MakeRng(seed, "ctc");
    const int vocab = 1 + static_cast<int>(UniformIndex(rng, 3));
    const int length = 1 + static_cast<int>(UniformIndex(rng, 3));
    std::vector<int> target;
    for (int i = 0; i < length; ++i) target.push_back(1 + static_cast<int>(UniformIndex(rng, vocab)));
    const int min_t = CtcMinFrames(target);
    if (min_t > 6) continue;
    const int steps = min_t + static_cast<int>(UniformIndex(rng, 7 - min_t));
    Matrix logits(steps, vocab + 1);
    for (Eigen::Index i = 0; i < logits.size(); ++i) logits.data()[i] = 2.0 * Gaussian(rng);

    const CtcResult r = CtcLoss(logits, target);
    INFO("seed " << seed << " T " << steps << " V " << vocab << " L " << length);
    CHECK(std::abs(r.loss - BruteForceCtcLoss(logits, target)) <= 1e-6);

    const Matrix numeric = NumericGrad(&logits, [&] { return CtcLoss(logits, target).loss; });
    CHECK(MaxRelError(r.grad, numeric) <= 1e-4);
    CHECK(r.grad.rowwise().sum().cwiseAbs().maxCoeff() <= 1e-6);

    Matrix shifted = logits;
    for (int t = 0; t < steps; ++t) shifted.row(t).array() += UniformIn(rng, -5.0, 5.0);
    CHECK(std::abs(CtcLoss(shifted, target).loss - r.loss) <= 1e-6);
    ++checked;
  }
  CHECK(checked >= 25);
}

TEST_CASE("ctc stays finite on long sharp sequences", "[ctc]") {
  Rng rng = MakeRng(1, "ctc");
  Matrix logits(400, 5);
  for (Eigen::Index i = 0; i < logits.size(); ++i) logits.data()[i] = 30.0 * Gaussian(rng);
  const CtcResult r = CtcLoss(logits, {1, 2, 3, 4, 1, 2});
  CHECK(std::isfinite(r.loss));
  CHECK(r.grad.allFinite());
}

TEST_CASE("greedy decoding", "[ctc]") {
  auto onehot = [](const std::vector<int> &ids) {
    Matrix m = Matrix::Zero(static_cast<Eigen::Index>(ids.size()), 3);
    for (std::size_t t = 0; t < ids.size(); ++t) m(static_cast<Eigen::Index>(t), ids[t]) = 1.0;
    return m;
  };
  CHECK(GreedyDecode(onehot({1, 1, 0, 2})) == std::vector<int>{1, 2});
  CHECK(GreedyDecode(onehot({0, 0, 0})).empty());
  CHECK(GreedyDecode(onehot({1, 0, 1})) == std::vector<int>{1, 1});

  Rng rng = MakeRng(3, "ctc");
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<int> frames;
    for (int t = 0; t < 12; ++t) frames.push_back(static_cast<int>(UniformIndex(rng, 3)));
    const std::vector<int> once = GreedyDecode(onehot(frames));
    CHECK(once == CollapseFrames(frames));
    // Re-emitting the decoded labels as blank-separated frames decodes back
    // to the same labels.
    std::vector<int> reemitted;
    for (int id : once) {
      reemitted.push_back(id);
      reemitted.push_back(0);
    }
    CHECK(GreedyDecode(onehot(reemitted)) == once);
  }
}

TEST_CASE("edit distance and word error rate", "[ctc]") {
  EditStats s = EditDistance(SplitWords("a b c"), SplitWords("a x c"));
  CHECK(s.substitutions == 1);
  CHECK(s.wer() == Catch::Approx(1.0 / 3));
  CHECK(EditDistance(SplitWords("a b c"), SplitWords("a b c")).wer() == 0.0);
  s = EditDistance(SplitWords("a"), SplitWords("a b c"));
  CHECK(s.insertions == 2);
  CHECK(s.wer() == 2.0);
  s = EditDistance(SplitWords("a b c d"), SplitWords(""));
  CHECK(s.deletions == 4);
  CHECK(s.wer() == 1.0);
  try {
    EditDistance(std::vector<int>{}, std::vector<int>{1}).wer();
    FAIL("expected an error");
  } catch (const Error &e) {
    CHECK(e.kind() == ErrorKind::kUndefinedReference);
  }
}
