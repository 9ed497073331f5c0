// src/common.cc

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

#include "laud/common.h"

#include <cmath>

namespace laud {

std::string_view ErrorKindName(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kFormat: return "format error";
    case ErrorKind::kUnsupportedEncoding: return "unsupported encoding";
    case ErrorKind::kIo: return "I/O error";
    case ErrorKind::kConfig: return "config error";
    case ErrorKind::kDegenerateSignal: return "degenerate signal";
    case ErrorKind::kTooShort: return "too short";
    case ErrorKind::kShape: return "shape error";
    case ErrorKind::kNumeric: return "numeric error";
    case ErrorKind::kNoAlignment: return "no alignment";
    case ErrorKind::kAlignment: return "alignment error";
    case ErrorKind::kSampling: return "sampling error";
    case ErrorKind::kUndefinedEer: return "undefined EER";
    case ErrorKind::kUndefinedReference: return "undefined reference";
    case ErrorKind::kIncompatibleCheckpoint: return "incompatible checkpoint";
    case ErrorKind::kMissingArtifact: return "missing artifact";
    case ErrorKind::kIncompleteRun: return "incomplete run";
  }
  return "error";
}

void Fail(ErrorKind kind, const std::string &message) {
  throw Error(kind, std::string(ErrorKindName(kind)) + ": " + message);
}

namespace {

std::uint64_t SplitMix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t SubSeed(std::uint64_t root, std::string_view stream) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char c : stream) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return SplitMix64(SplitMix64(root) ^ h);
}

std::uint64_t UniformIndex(Rng &rng, std::uint64_t n) {
  if (n <= 1) return 0;
  // Rejection sampling keeps the draw unbiased.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % n;
}

double Gaussian(Rng &rng) {
  double u1 = Uniform01(rng);
  double u2 = Uniform01(rng);
  if (u1 < 1e-300) u1 = 1e-300;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

void RoundToFloat(Matrix *m) {
  for (Eigen::Index i = 0; i < m->size(); ++i)
    m->data()[i] = static_cast<double>(static_cast<float>(m->data()[i]));
}

}  // namespace laud
