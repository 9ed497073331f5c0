// src/features.cc

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

#include "laud/features.h"

#include <algorithm>
#include <cmath>

#include "fft.h"
#include "laud/io.h"

namespace laud {

void StftConfig::Validate() const {
  const bool pow2 = fft_size > 0 && (fft_size & (fft_size - 1)) == 0;
  if (!pow2) Fail(ErrorKind::kConfig, "stft: fft_size must be a power of two");
  if (hop_length <= 0 || hop_length > win_length || win_length > fft_size)
    Fail(ErrorKind::kConfig, "stft: need 0 < hop <= win <= fft_size");
}

std::vector<double> FrameWindow(const StftConfig &cfg) {
  std::vector<double> w(cfg.fft_size, 0.0);
  const int offset = (cfg.fft_size - cfg.win_length) / 2;
  for (int i = 0; i < cfg.win_length; ++i)
    w[offset + i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / cfg.win_length);
  return w;
}

namespace {

std::vector<double> ReflectPad(const std::vector<double> &x, int pad) {
  const long n = static_cast<long>(x.size());
  if (n <= pad)
    Fail(ErrorKind::kTooShort, "stft: signal of " + std::to_string(n) +
                                   " samples is too short to pad by " +
                                   std::to_string(pad));
  std::vector<double> y(n + 2 * pad);
  for (long i = 0; i < pad; ++i) y[i] = x[pad - i];
  std::copy(x.begin(), x.end(), y.begin() + pad);
  for (long i = 0; i < pad; ++i) y[pad + n + i] = x[n - 2 - i];
  return y;
}

// STFT of an already padded signal: frame t covers [t*hop, t*hop + fft).
ComplexMatrix FramedStft(const std::vector<double> &signal, long frames,
                         const StftConfig &cfg, const std::vector<double> &window,
                         RealFft &fft) {
  const int nfft = cfg.fft_size;
  ComplexMatrix out(frames, cfg.bins());
  for (long t = 0; t < frames; ++t) {
    const double *src = signal.data() + t * cfg.hop_length;
    for (int i = 0; i < nfft; ++i) fft.time()[i] = src[i] * window[i];
    fft.Forward();
    for (int k = 0; k < cfg.bins(); ++k) out(t, k) = fft.freq()[k];
  }
  return out;
}

// Least-squares inverse of FramedStft: weighted overlap-add divided by the
// summed squared window. Samples with zero window support are set to zero.
std::vector<double> FramedIstft(const ComplexMatrix &spec, const StftConfig &cfg,
                                const std::vector<double> &window, RealFft &fft) {
  const int nfft = cfg.fft_size;
  const long frames = spec.rows();
  const std::size_t len = static_cast<std::size_t>((frames - 1) * cfg.hop_length + nfft);
  std::vector<double> acc(len, 0.0), norm(len, 0.0);
  for (long t = 0; t < frames; ++t) {
    for (int k = 0; k < cfg.bins(); ++k) fft.freq()[k] = spec(t, k);
    fft.Inverse();
    const std::size_t base = static_cast<std::size_t>(t * cfg.hop_length);
    for (int i = 0; i < nfft; ++i) {
      acc[base + i] += window[i] * fft.time()[i];
      norm[base + i] += window[i] * window[i];
    }
  }
  for (std::size_t i = 0; i < len; ++i)
    acc[i] = norm[i] > 1e-12 ? acc[i] / norm[i] : 0.0;
  return acc;
}

}  // namespace

ComplexMatrix Stft(const Waveform &w, const StftConfig &cfg) {
  cfg.Validate();
  if (static_cast<long>(w.size()) < cfg.win_length)
    Fail(ErrorKind::kTooShort, "stft: signal shorter than one window (" +
                                   std::to_string(w.size()) + " < " +
                                   std::to_string(cfg.win_length) + ")");
  const int pad = cfg.fft_size / 2;
  const std::vector<double> padded = ReflectPad(w.samples, pad);
  const long frames = 1 + static_cast<long>(w.size()) / cfg.hop_length;
  RealFft fft(cfg.fft_size);
  return FramedStft(padded, frames, cfg, FrameWindow(cfg), fft);
}

Matrix StftMagnitude(const Waveform &w, const StftConfig &cfg) {
  return Stft(w, cfg).cwiseAbs();
}

double HzToMel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double MelToHz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

MelFilterbank MakeMel(const MelConfig &cfg) {
  cfg.stft.Validate();
  if (cfg.num_bins <= 0) Fail(ErrorKind::kConfig, "mel: num_bins must be positive");
  if (!(cfg.fmin_hz >= 0.0 && cfg.fmin_hz < cfg.fmax_hz))
    Fail(ErrorKind::kConfig, "mel: need 0 <= fmin < fmax");
  if (cfg.fmax_hz > cfg.sample_rate_hz / 2.0)
    Fail(ErrorKind::kConfig, "mel: fmax above Nyquist");

  MelFilterbank fb;
  fb.sample_rate_hz = cfg.sample_rate_hz;
  fb.fmin_hz = cfg.fmin_hz;
  fb.fmax_hz = cfg.fmax_hz;
  const int bins = cfg.stft.bins();
  const double mel_lo = HzToMel(cfg.fmin_hz), mel_hi = HzToMel(cfg.fmax_hz);
  std::vector<double> edges(cfg.num_bins + 2);
  for (int i = 0; i < cfg.num_bins + 2; ++i)
    edges[i] = MelToHz(mel_lo + (mel_hi - mel_lo) * i / (cfg.num_bins + 1));

  fb.weights = Matrix::Zero(cfg.num_bins, bins);
  for (int m = 0; m < cfg.num_bins; ++m) {
    const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
    fb.center_hz.push_back(mid);
    for (int k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * cfg.sample_rate_hz / cfg.stft.fft_size;
      const double up = (f - lo) / (mid - lo);
      const double down = (hi - f) / (hi - mid);
      fb.weights(m, k) = std::max(0.0, std::min(up, down));
    }
    if (fb.weights.row(m).sum() <= 0.0)
      Fail(ErrorKind::kConfig, "mel: filter " + std::to_string(m) +
                                   " covers no FFT bin; raise fft_size or fmin");
    if (cfg.row_stochastic) fb.weights.row(m) /= fb.weights.row(m).sum();
  }
  return fb;
}

Matrix Deltas(const Matrix &c, int window) {
  const Eigen::Index t_max = c.rows();
  double denom = 0.0;
  for (int n = 1; n <= window; ++n) denom += 2.0 * n * n;
  Matrix d = Matrix::Zero(c.rows(), c.cols());
  for (Eigen::Index t = 0; t < t_max; ++t) {
    for (int n = 1; n <= window; ++n) {
      const Eigen::Index ahead = std::min<Eigen::Index>(t + n, t_max - 1);
      const Eigen::Index behind = std::max<Eigen::Index>(t - n, 0);
      d.row(t) += n * (c.row(ahead) - c.row(behind));
    }
  }
  return d / denom;
}

Matrix AddDynamics(const Matrix &static_block) {
  const Matrix delta = Deltas(static_block);
  const Matrix accel = Deltas(delta);
  Matrix out(static_block.rows(), 3 * static_block.cols());
  out << static_block, delta, accel;
  return out;
}

FeatureStats ComputeStats(const Matrix &frames) {
  FeatureStats s;
  s.mean = frames.colwise().mean().transpose();
  s.stddev.resize(frames.cols());
  for (Eigen::Index j = 0; j < frames.cols(); ++j) {
    const double var = (frames.col(j).array() - s.mean(j)).square().mean();
    s.stddev(j) = std::sqrt(var);
  }
  return s;
}

Matrix Normalize(const Matrix &frames, const FeatureStats &stats) {
  Matrix out(frames.rows(), frames.cols());
  for (Eigen::Index j = 0; j < frames.cols(); ++j)
    out.col(j) = (frames.col(j).array() - stats.mean(j)) /
                 std::max(stats.stddev(j), 1e-5);
  return out;
}

double SpectralConvergence(const Matrix &est_mag, const Matrix &target_mag) {
  if (est_mag.rows() != target_mag.rows() || est_mag.cols() != target_mag.cols())
    Fail(ErrorKind::kShape, "spectral convergence: shape mismatch");
  const Eigen::Index bins = target_mag.cols();
  double num = 0.0, den = 0.0;
  for (Eigen::Index t = 0; t < target_mag.rows(); ++t) {
    for (Eigen::Index k = 0; k < bins; ++k) {
      const double wgt = (k == 0 || k == bins - 1) ? 1.0 : 2.0;
      const double d = est_mag(t, k) - target_mag(t, k);
      num += wgt * d * d;
      den += wgt * target_mag(t, k) * target_mag(t, k);
    }
  }
  if (den == 0.0) return std::sqrt(num);
  return std::sqrt(num / den);
}

// ---------------------------------------------------------------------------

Frontend::Frontend(const MelConfig &cfg, double rcond) : cfg_(cfg), fb_(MakeMel(cfg)) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(Eigen::MatrixXd(fb_.weights),
                                        Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd &sv = svd.singularValues();
  const double cutoff = rcond * sv.maxCoeff();
  Eigen::VectorXd inv(sv.size());
  for (Eigen::Index i = 0; i < sv.size(); ++i) inv(i) = sv(i) > cutoff ? 1.0 / sv(i) : 0.0;
  pinv_ = svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

const Frontend &Frontend::Default() {
  static const Frontend instance;
  return instance;
}

Matrix Frontend::MelEnergies(const Waveform &w) const {
  if (w.sample_rate_hz != cfg_.sample_rate_hz)
    Fail(ErrorKind::kConfig, "logmel: expected " + std::to_string(cfg_.sample_rate_hz) +
                                 " Hz input, got " + std::to_string(w.sample_rate_hz));
  const Matrix power = StftMagnitude(w, cfg_.stft).array().square();
  return power * fb_.weights.transpose();
}

MelSpectrogram Frontend::LogMel(const Waveform &w, bool with_dynamics) const {
  Matrix logmel = MelEnergies(w).unaryExpr(
      [](double e) { return std::log(std::max(e, kLogFloor)); });
  MelSpectrogram out;
  out.with_dynamics = with_dynamics;
  out.frames = with_dynamics ? AddDynamics(logmel) : std::move(logmel);
  return out;
}

Matrix Frontend::MelPinv(const Matrix &mel_energies) const {
  if (mel_energies.cols() != fb_.weights.rows())
    Fail(ErrorKind::kShape, "mel_pinv: expected " + std::to_string(fb_.weights.rows()) +
                                " mel bins");
  if (!mel_energies.allFinite())
    Fail(ErrorKind::kNumeric, "mel_pinv: non-finite input");
  Matrix lin = mel_energies * pinv_.transpose();
  return lin.cwiseMax(0.0);
}

GriffinLimResult Frontend::GriffinLim(const Matrix &magnitude,
                                      const GriffinLimConfig &gl) const {
  const StftConfig &cfg = cfg_.stft;
  if (gl.iterations < 1) Fail(ErrorKind::kConfig, "griffin-lim: iterations must be >= 1");
  if (magnitude.cols() != cfg.bins() || magnitude.rows() < 1)
    Fail(ErrorKind::kShape, "griffin-lim: magnitude must be T x " +
                                std::to_string(cfg.bins()));
  if (!magnitude.allFinite() || magnitude.minCoeff() < 0.0)
    Fail(ErrorKind::kNumeric, "griffin-lim: magnitudes must be finite and >= 0");

  const std::vector<double> window = FrameWindow(cfg);
  RealFft fft(cfg.fft_size);
  const Eigen::Index frames = magnitude.rows();

  ComplexMatrix spec = magnitude.cast<std::complex<double>>();
  if (gl.random_init) {
    Rng rng(SubSeed(gl.seed, "griffin-lim"));
    for (Eigen::Index i = 0; i < spec.size(); ++i)
      spec.data()[i] *= std::polar(1.0, UniformIn(rng, -M_PI, M_PI));
  }

  GriffinLimResult result;
  std::vector<double> signal;
  for (int it = 0; it < gl.iterations; ++it) {
    signal = FramedIstft(spec, cfg, window, fft);
    const ComplexMatrix rebuilt = FramedStft(signal, frames, cfg, window, fft);
    result.objective.push_back(SpectralConvergence(rebuilt.cwiseAbs(), magnitude));
    for (Eigen::Index i = 0; i < spec.size(); ++i) {
      const std::complex<double> z = rebuilt.data()[i];
      const double a = std::abs(z);
      spec.data()[i] = a > 0.0 ? magnitude.data()[i] * (z / a)
                               : std::complex<double>(magnitude.data()[i], 0.0);
    }
  }

  const int pad = cfg.fft_size / 2;
  const std::size_t len = static_cast<std::size_t>((frames - 1) * cfg.hop_length);
  result.wave.sample_rate_hz = cfg_.sample_rate_hz;
  result.wave.samples.assign(signal.begin() + pad, signal.begin() + pad + len);
  return result;
}

// ---------------------------------------------------------------------------

std::vector<std::uint8_t> EncodePgm(const MelSpectrogram &mel) {
  const Matrix s = mel.StaticBlock();
  if (!s.allFinite()) Fail(ErrorKind::kNumeric, "pgm: non-finite values");
  const Eigen::Index width = s.rows(), height = s.cols();
  const std::string header =
      "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  const double lo = s.minCoeff(), hi = s.maxCoeff();
  const double range = hi - lo;
  for (Eigen::Index row = 0; row < height; ++row) {
    const Eigen::Index bin = height - 1 - row;
    for (Eigen::Index t = 0; t < width; ++t) {
      double px = range > 0.0 ? std::floor((s(t, bin) - lo) / range * 255.0 + 0.5) : 0.0;
      out.push_back(static_cast<std::uint8_t>(std::clamp(px, 0.0, 255.0)));
    }
  }
  return out;
}

void ExportPgm(const MelSpectrogram &mel, const std::string &path) {
  WriteFileAtomic(path, EncodePgm(mel));
}

}  // namespace laud
