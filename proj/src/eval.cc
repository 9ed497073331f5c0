// src/eval.cc

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

#include "laud/eval.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "fft.h"
#include "laud/features.h"
#include "laud/io.h"

namespace laud {

Vector EmbedSpeaker(const Matrix &log_mel) {
  if (log_mel.rows() < 2) Fail(ErrorKind::kTooShort, "speaker embedding needs at least 2 frames");
  if (log_mel.cols() != kNumMelBins) Fail(ErrorKind::kShape, "speaker embedding expects 80 bins");
  Vector e(2 * kNumMelBins);
  e.head(kNumMelBins) = log_mel.colwise().mean().transpose();
  const Matrix centered = log_mel.rowwise() - log_mel.colwise().mean();
  e.tail(kNumMelBins) =
      (centered.array().square().colwise().sum() / static_cast<double>(log_mel.rows()))
          .sqrt()
          .transpose();
  return e;
}

double CosineSimilarity(const Vector &a, const Vector &b) {
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

void CenterEmbeddings(std::vector<Vector> *embeddings) {
  if (embeddings->empty()) return;
  Vector mean = Vector::Zero((*embeddings)[0].size());
  for (const Vector &e : *embeddings) {
    if (e.size() != mean.size()) Fail(ErrorKind::kShape, "embeddings differ in size");
    mean += e;
  }
  mean /= static_cast<double>(embeddings->size());
  for (Vector &e : *embeddings) e -= mean;
}

// ---------------------------------------------------------------------------

std::vector<ScoredPair> SamplePairs(const std::vector<UtteranceInfo> &utts, int n_per_class,
                                    std::uint64_t seed) {
  if (n_per_class < 1) Fail(ErrorKind::kSampling, "pair sampling needs a positive count");
  std::vector<std::pair<std::size_t, std::size_t>> same, diff;
  for (std::size_t i = 0; i < utts.size(); ++i)
    for (std::size_t j = i + 1; j < utts.size(); ++j)
      (utts[i].speaker_id == utts[j].speaker_id ? same : diff).emplace_back(i, j);
  const auto n = static_cast<std::size_t>(n_per_class);
  if (same.size() < n || diff.size() < n)
    Fail(ErrorKind::kSampling, "cannot draw " + std::to_string(n) + " pairs per class: " +
                                   std::to_string(same.size()) + " same-speaker and " +
                                   std::to_string(diff.size()) + " different-speaker pairs exist");
  Rng rng = MakeRng(seed, "sampling/pairs");
  std::vector<ScoredPair> out;
  for (auto *pool : {&same, &diff}) {
    // Partial Fisher-Yates: the first n entries are a uniform sample.
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t pick = k + static_cast<std::size_t>(UniformIndex(rng, pool->size() - k));
      std::swap((*pool)[k], (*pool)[pick]);
      ScoredPair p;
      p.utt_a = utts[(*pool)[k].first].id;
      p.utt_b = utts[(*pool)[k].second].id;
      p.same_speaker = pool == &same;
      out.push_back(p);
    }
  }
  return out;
}

EerResult ComputeEer(const std::vector<double> &target_scores,
                     const std::vector<double> &nontarget_scores) {
  if (target_scores.empty() || nontarget_scores.empty())
    Fail(ErrorKind::kUndefinedEer, "equal error rate needs both same- and different-speaker scores");
  std::vector<double> pos = target_scores, neg = nontarget_scores;
  for (double s : pos)
    if (!std::isfinite(s)) Fail(ErrorKind::kNumeric, "non-finite verification score");
  for (double s : neg)
    if (!std::isfinite(s)) Fail(ErrorKind::kNumeric, "non-finite verification score");
  std::sort(pos.begin(), pos.end());
  std::sort(neg.begin(), neg.end());
  std::vector<double> thresholds(pos);
  thresholds.insert(thresholds.end(), neg.begin(), neg.end());
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

  struct Point {
    double far, frr, threshold;
  };
  const double np = static_cast<double>(pos.size()), nn = static_cast<double>(neg.size());
  std::vector<Point> points;
  // Rejecting everything; its threshold sits just above the top score.
  const double top = thresholds.front();
  points.push_back({0.0, 1.0, top + std::max(1.0, std::abs(top)) * 1e-9});
  for (double t : thresholds) {
    const auto accepted_neg = neg.end() - std::lower_bound(neg.begin(), neg.end(), t);
    const auto rejected_pos = std::lower_bound(pos.begin(), pos.end(), t) - pos.begin();
    points.push_back({static_cast<double>(accepted_neg) / nn, static_cast<double>(rejected_pos) / np, t});
  }

  // Lower convex hull; points arrive with FAR non-decreasing and FRR
  // non-increasing.
  std::vector<Point> hull;
  auto cross = [](const Point &o, const Point &a, const Point &b) {
    return (a.far - o.far) * (b.frr - o.frr) - (a.frr - o.frr) * (b.far - o.far);
  };
  for (const Point &p : points) {
    while (hull.size() >= 2 && cross(hull[hull.size() - 2], hull.back(), p) <= 0.0) hull.pop_back();
    hull.push_back(p);
  }

  for (std::size_t i = 0; i < hull.size(); ++i) {
    const double d = hull[i].far - hull[i].frr;
    if (d < 0.0) continue;
    if (d == 0.0 || i == 0) return {hull[i].far, hull[i].threshold};
    const Point &a = hull[i - 1], &b = hull[i];
    const double da = a.far - a.frr;
    const double lambda = -da / (d - da);
    return {a.far + lambda * (b.far - a.far), a.threshold + lambda * (b.threshold - a.threshold)};
  }
  return {hull.back().far, hull.back().threshold};  // unreachable: the last point is (1, 0)
}

EerResult ComputeEer(const std::vector<ScoredPair> &pairs) {
  std::vector<double> pos, neg;
  for (const ScoredPair &p : pairs) (p.same_speaker ? pos : neg).push_back(p.score);
  return ComputeEer(pos, neg);
}

void WriteScores(const std::vector<ScoredPair> &pairs, const std::string &path) {
  std::string text = "utt_a,utt_b,label,score\n";
  char buf[64];
  for (const ScoredPair &p : pairs) {
    std::snprintf(buf, sizeof(buf), "%.17g", p.score);
    text += p.utt_a + "," + p.utt_b + "," + (p.same_speaker ? "same" : "different") + "," + buf + "\n";
  }
  WriteFileAtomic(path, text);
}

std::vector<ScoredPair> ReadScores(const std::string &path) {
  const std::vector<std::uint8_t> bytes = ReadFileBytes(path);
  std::istringstream in(std::string(bytes.begin(), bytes.end()));
  std::string line;
  if (!std::getline(in, line) || line != "utt_a,utt_b,label,score")
    Fail(ErrorKind::kFormat, path + ": missing scores header");
  std::vector<ScoredPair> pairs;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::istringstream ls(line);
    for (std::string cell; std::getline(ls, cell, ',');) f.push_back(cell);
    if (f.size() != 4 || (f[2] != "same" && f[2] != "different"))
      Fail(ErrorKind::kFormat, path + ":" + std::to_string(line_no) + ": malformed score line");
    ScoredPair p;
    p.utt_a = f[0];
    p.utt_b = f[1];
    p.same_speaker = f[2] == "same";
    try {
      std::size_t used = 0;
      p.score = std::stod(f[3], &used);
      if (used != f[3].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception &) {
      Fail(ErrorKind::kFormat, path + ":" + std::to_string(line_no) + ": bad score");
    }
    pairs.push_back(p);
  }
  return pairs;
}

// ---------------------------------------------------------------------------

namespace {

constexpr int kStoiRate = 10000;
constexpr int kStoiFrame = 256;
constexpr int kStoiFft = 512;
constexpr int kStoiBands = 15;
constexpr double kStoiMinFreq = 150.0;
constexpr int kStoiSegment = 30;
constexpr double kStoiBeta = -15.0;
constexpr double kStoiDynRange = 40.0;
constexpr double kEps = std::numeric_limits<double>::epsilon();

// Symmetric Hann of length n without its zero endpoints.
std::vector<double> StoiWindow(int n) {
  std::vector<double> w(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) w[static_cast<std::size_t>(i)] = 0.5 - 0.5 * std::cos(2.0 * M_PI * (i + 1) / (n + 1));
  return w;
}

// Drops frames more than 40 dB below the loudest clean frame and
// overlap-adds the survivors back into signals.
void RemoveSilentFrames(std::vector<double> *x, std::vector<double> *y) {
  const int hop = kStoiFrame / 2;
  const std::vector<double> w = StoiWindow(kStoiFrame);
  const int n = static_cast<int>(x->size());
  std::vector<int> starts;
  for (int i = 0; i < n - kStoiFrame; i += hop) starts.push_back(i);
  std::vector<double> energy;
  for (int s : starts) {
    double e = 0.0;
    for (int k = 0; k < kStoiFrame; ++k) {
      const double v = w[static_cast<std::size_t>(k)] * (*x)[static_cast<std::size_t>(s + k)];
      e += v * v;
    }
    energy.push_back(20.0 * std::log10(std::sqrt(e) + kEps));
  }
  if (starts.empty()) {
    x->clear();
    y->clear();
    return;
  }
  const double top = *std::max_element(energy.begin(), energy.end());
  std::vector<int> kept;
  for (std::size_t i = 0; i < starts.size(); ++i)
    if (top - kStoiDynRange - energy[i] < 0.0) kept.push_back(starts[i]);
  const std::size_t len = (kept.size() - 1) * hop + kStoiFrame;
  std::vector<double> xo(len, 0.0), yo(len, 0.0);
  for (std::size_t f = 0; f < kept.size(); ++f) {
    for (int k = 0; k < kStoiFrame; ++k) {
      const auto src = static_cast<std::size_t>(kept[f] + k);
      const std::size_t dst = f * hop + static_cast<std::size_t>(k);
      xo[dst] += w[static_cast<std::size_t>(k)] * (*x)[src];
      yo[dst] += w[static_cast<std::size_t>(k)] * (*y)[src];
    }
  }
  *x = std::move(xo);
  *y = std::move(yo);
}

// Third-octave band envelopes, bands x frames.
Matrix BandEnvelopes(const std::vector<double> &x, const Matrix &bands) {
  const int hop = kStoiFrame / 2;
  const std::vector<double> w = StoiWindow(kStoiFrame);
  RealFft fft(kStoiFft);
  std::vector<int> starts;
  for (int i = 0; i < static_cast<int>(x.size()) - kStoiFrame; i += hop) starts.push_back(i);
  Matrix power(kStoiFft / 2 + 1, static_cast<Eigen::Index>(starts.size()));
  for (std::size_t f = 0; f < starts.size(); ++f) {
    double *in = fft.time();
    std::fill(in, in + kStoiFft, 0.0);
    for (int k = 0; k < kStoiFrame; ++k)
      in[k] = w[static_cast<std::size_t>(k)] * x[static_cast<std::size_t>(starts[f] + k)];
    fft.Forward();
    for (int b = 0; b <= kStoiFft / 2; ++b) power(b, static_cast<Eigen::Index>(f)) = std::norm(fft.freq()[b]);
  }
  return (bands * power).array().sqrt().matrix();
}

Matrix ThirdOctaveBands() {
  const int bins = kStoiFft / 2 + 1;
  Matrix obm = Matrix::Zero(kStoiBands, bins);
  auto nearest_bin = [&](double hz) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (int b = 0; b < bins; ++b) {
      const double f = static_cast<double>(b) * kStoiRate / kStoiFft;
      const double d = (f - hz) * (f - hz);
      if (d < best_d) best_d = d, best = b;
    }
    return best;
  };
  for (int k = 0; k < kStoiBands; ++k) {
    const int lo = nearest_bin(kStoiMinFreq * std::pow(2.0, (2.0 * k - 1.0) / 6.0));
    const int hi = nearest_bin(kStoiMinFreq * std::pow(2.0, (2.0 * k + 1.0) / 6.0));
    for (int b = lo; b < hi; ++b) obm(k, b) = 1.0;
  }
  return obm;
}

}  // namespace

double Stoi(const Waveform &clean, const Waveform &degraded) {
  if (clean.sample_rate_hz != degraded.sample_rate_hz)
    Fail(ErrorKind::kAlignment, "stoi: sample rates differ");
  if (clean.size() != degraded.size())
    Fail(ErrorKind::kAlignment, "stoi: lengths differ (" + std::to_string(clean.size()) + " vs " +
                                    std::to_string(degraded.size()) + ")");
  std::vector<double> x, y;
  if (clean.sample_rate_hz == kStoiRate) {
    x = clean.samples;
    y = degraded.samples;
  } else {
    x = Resample(clean, kStoiRate).samples;
    y = Resample(degraded, kStoiRate).samples;
  }
  RemoveSilentFrames(&x, &y);
  static const Matrix bands = ThirdOctaveBands();
  const Matrix xb = BandEnvelopes(x, bands), yb = BandEnvelopes(y, bands);
  const Eigen::Index frames = xb.cols();
  if (frames < kStoiSegment)
    Fail(ErrorKind::kTooShort, "stoi: " + std::to_string(frames) +
                                   " frames after silence removal, need " + std::to_string(kStoiSegment));

  const double clip = std::pow(10.0, -kStoiBeta / 20.0);
  double total = 0.0;
  long count = 0;
  for (Eigen::Index m = kStoiSegment; m <= frames; ++m) {
    for (int j = 0; j < kStoiBands; ++j) {
      const Eigen::RowVectorXd xs = xb.row(j).segment(m - kStoiSegment, kStoiSegment);
      const Eigen::RowVectorXd ys = yb.row(j).segment(m - kStoiSegment, kStoiSegment);
      const double scale = xs.norm() / (ys.norm() + kEps);
      Eigen::RowVectorXd yp = (ys * scale).cwiseMin(xs * (1.0 + clip));
      yp.array() -= yp.mean();
      Eigen::RowVectorXd xc = xs.array() - xs.mean();
      yp /= yp.norm() + kEps;
      xc /= xc.norm() + kEps;
      total += yp.dot(xc);
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

// ---------------------------------------------------------------------------

double PearsonCorrelation(const std::vector<double> &x, const std::vector<double> &y) {
  if (x.size() != y.size() || x.empty()) Fail(ErrorKind::kShape, "correlation needs equal, non-empty inputs");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

namespace {

std::vector<double> AverageRanks(const std::vector<double> &v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double SpearmanCorrelation(const std::vector<double> &x, const std::vector<double> &y) {
  return PearsonCorrelation(AverageRanks(x), AverageRanks(y));
}

}  // namespace laud
