// laud/features.h

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

// Log-mel front end and its inverse (mel pseudo-inverse followed by
// Griffin-Lim phase reconstruction).

#ifndef LAUD_FEATURES_H_
#define LAUD_FEATURES_H_

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "laud/audio.h"
#include "laud/common.h"

namespace laud {

constexpr int kNumMelBins = 80;
constexpr double kLogFloor = 1e-10;

using ComplexMatrix =
    Eigen::Matrix<std::complex<double>, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class WindowKind { kHann };

struct StftConfig {
  int win_length = 400;
  int hop_length = 160;
  int fft_size = 512;
  WindowKind window = WindowKind::kHann;

  int bins() const { return fft_size / 2 + 1; }
  /// Throws a config error unless hop <= win <= fft and fft is a power of two.
  void Validate() const;
};

/// Analysis window of length fft_size: a periodic Hann of win_length samples
/// centred in the frame, zeros elsewhere.
std::vector<double> FrameWindow(const StftConfig &cfg);

/// Centred STFT with reflection padding of fft_size/2 on both sides.
/// Produces 1 + floor(len / hop) frames of fft_size/2 + 1 bins.
ComplexMatrix Stft(const Waveform &w, const StftConfig &cfg);
Matrix StftMagnitude(const Waveform &w, const StftConfig &cfg);

double HzToMel(double hz);
double MelToHz(double mel);

struct MelConfig {
  int num_bins = kNumMelBins;
  int sample_rate_hz = kCanonicalSampleRate;
  double fmin_hz = 20.0;
  double fmax_hz = 7600.0;
  bool row_stochastic = false;
  StftConfig stft;
};

struct MelFilterbank {
  Matrix weights;  // num_bins x (fft_size/2 + 1), non-negative
  std::vector<double> center_hz;
  int sample_rate_hz = kCanonicalSampleRate;
  double fmin_hz = 0.0;
  double fmax_hz = 0.0;
};

/// Triangular filters whose corner frequencies are uniformly spaced on the
/// HTK mel scale between fmin and fmax.
MelFilterbank MakeMel(const MelConfig &cfg);

struct MelSpectrogram {
  /// T x 80, or T x 240 when with_dynamics (static | delta | acceleration).
  Matrix frames;
  bool with_dynamics = false;

  Eigen::Index num_frames() const { return frames.rows(); }
  Matrix StaticBlock() const { return frames.leftCols(kNumMelBins); }
};

/// Regression deltas over +-window frames with edge replication.
Matrix Deltas(const Matrix &c, int window = 2);

/// Stacks [c | delta(c) | delta(delta(c))].
Matrix AddDynamics(const Matrix &static_block);

/// Per-column mean and standard deviation.
struct FeatureStats {
  Vector mean;
  Vector stddev;
};

FeatureStats ComputeStats(const Matrix &frames);

/// (x - mean) / max(stddev, 1e-5) column-wise.
Matrix Normalize(const Matrix &frames, const FeatureStats &stats);

struct GriffinLimConfig {
  int iterations = 60;
  bool random_init = true;
  std::uint64_t seed = 0;
};

struct GriffinLimResult {
  Waveform wave;
  /// Spectral convergence after each iteration; non-increasing.
  std::vector<double> objective;
};

/// Spectral convergence ||est - target|| / ||target|| where the norm counts
/// every interior bin twice, i.e. the Frobenius norm of the full two-sided
/// spectrum. Under that norm classic Griffin-Lim is monotone.
double SpectralConvergence(const Matrix &est_mag, const Matrix &target_mag);

/// Log-mel extraction and inversion for one configuration. The filterbank
/// and its pseudo-inverse are built once; instances are immutable and may be
/// shared across threads.
class Frontend {
 public:
  explicit Frontend(const MelConfig &cfg = MelConfig(), double rcond = 1e-6);

  /// Shared instance with the default configuration.
  static const Frontend &Default();

  const MelConfig &config() const { return cfg_; }
  const MelFilterbank &filterbank() const { return fb_; }
  const Matrix &pseudo_inverse() const { return pinv_; }

  /// T x 80 linear mel energies (power spectrum through the filterbank).
  Matrix MelEnergies(const Waveform &w) const;

  /// log(max(mel energy, 1e-10)), optionally with deltas and accelerations.
  MelSpectrogram LogMel(const Waveform &w, bool with_dynamics) const;

  /// Multiplies by the Moore-Penrose pseudo-inverse of the filterbank and
  /// clamps negative values to zero. Input and output are in the power
  /// domain.
  Matrix MelPinv(const Matrix &mel_energies) const;

  GriffinLimResult GriffinLim(const Matrix &magnitude,
                              const GriffinLimConfig &gl = GriffinLimConfig()) const;

 private:
  MelConfig cfg_;
  MelFilterbank fb_;
  Matrix pinv_;  // bins x num_bins
};

/// 8-bit binary PGM (P5) of the static block: rows are mel bins with the
/// lowest bin at the bottom, columns are frames, min maps to 0 and max to
/// 255. A constant input maps to all zeros.
std::vector<std::uint8_t> EncodePgm(const MelSpectrogram &mel);
void ExportPgm(const MelSpectrogram &mel, const std::string &path);

}  // namespace laud

#endif  // LAUD_FEATURES_H_
