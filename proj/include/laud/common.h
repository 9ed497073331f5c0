// laud/common.h

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

#ifndef LAUD_COMMON_H_
#define LAUD_COMMON_H_

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace laud {

/// Row-major dense matrix; rows are frames throughout the toolkit.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

enum class ErrorKind {
  kFormat,
  kUnsupportedEncoding,
  kIo,
  kConfig,
  kDegenerateSignal,
  kTooShort,
  kShape,
  kNumeric,
  kNoAlignment,
  kAlignment,
  kSampling,
  kUndefinedEer,
  kUndefinedReference,
  kIncompatibleCheckpoint,
  kMissingArtifact,
  kIncompleteRun,
};

std::string_view ErrorKindName(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string &what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void Fail(ErrorKind kind, const std::string &message);

/// The single random engine used everywhere. Seeds are derived from a root
/// seed and a stream name so that each component can be re-run alone.
using Rng = std::mt19937_64;

std::uint64_t SubSeed(std::uint64_t root, std::string_view stream);

inline Rng MakeRng(std::uint64_t root, std::string_view stream) {
  return Rng(SubSeed(root, stream));
}

/// Uniform in [0, 1) from the top 53 bits; independent of the standard
/// library's distribution implementations.
inline double Uniform01(Rng &rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double UniformIn(Rng &rng, double lo, double hi) {
  return lo + (hi - lo) * Uniform01(rng);
}

/// Uniform integer in [0, n).
std::uint64_t UniformIndex(Rng &rng, std::uint64_t n);

double Gaussian(Rng &rng);

/// Fisher-Yates with UniformIndex, so the order depends only on the seed and
/// not on the standard library's shuffle implementation.
template <typename T>
void Shuffle(std::vector<T> *v, Rng &rng) {
  for (std::size_t i = v->size(); i > 1; --i)
    std::swap((*v)[i - 1], (*v)[static_cast<std::size_t>(UniformIndex(rng, i))]);
}

/// Rounds every element to single precision (the storage precision of
/// model parameters).
void RoundToFloat(Matrix *m);

}  // namespace laud

#endif  // LAUD_COMMON_H_
