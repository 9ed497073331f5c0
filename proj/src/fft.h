// src/fft.h

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

#ifndef LAUD_SRC_FFT_H_
#define LAUD_SRC_FFT_H_

#include <complex>

#include <fftw3.h>

namespace laud {

/// Real-input FFT of one fixed size with owned FFTW buffers and plans.
/// Not copyable; create one per thread.
class RealFft {
 public:
  explicit RealFft(int n);
  ~RealFft();
  RealFft(const RealFft &) = delete;
  RealFft &operator=(const RealFft &) = delete;

  int size() const { return n_; }
  double *time() { return time_; }
  std::complex<double> *freq() {
    return reinterpret_cast<std::complex<double> *>(freq_);
  }
  /// time() -> freq(), n/2 + 1 bins, unnormalised.
  void Forward() { fftw_execute(forward_); }
  /// freq() -> time(), scaled by 1/n so that Inverse(Forward(x)) == x.
  /// Destroys freq().
  void Inverse();

 private:
  int n_;
  double *time_;
  fftw_complex *freq_;
  fftw_plan forward_;
  fftw_plan inverse_;
};

}  // namespace laud

#endif  // LAUD_SRC_FFT_H_
