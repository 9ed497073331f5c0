// laud/nn.h

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

// A small neural-network kernel. Every layer pairs a const Forward, which
// fills an explicit cache, with a Backward that accumulates parameter
// gradients and returns the gradient with respect to its input. There is no
// autodiff graph and no hidden global state.
//
// Sequences are T x d matrices (one frame per row). Parameters are held in
// double precision but rounded to single precision after every update, which
// is also their on-disk precision.

#ifndef LAUD_NN_H_
#define LAUD_NN_H_

#include <cstdint>
#include <string>
#include <vector>

#include "laud/common.h"

namespace laud {

struct Parameter {
  std::string name;
  std::vector<int> shape;
  Matrix value;  // shape[0] x product(rest); rank-1 parameters are 1 x n
  Matrix grad;

  Parameter() = default;
  Parameter(std::string name, std::vector<int> shape);

  void ZeroGrad() { grad.setZero(); }
  /// uniform(-k, k), rounded to single precision.
  void InitUniform(double k, Rng &rng);
  std::size_t size() const { return static_cast<std::size_t>(value.size()); }
};

using ParamList = std::vector<Parameter *>;
using ConstParamList = std::vector<const Parameter *>;

void ZeroGrads(const ParamList &params);

/// y = x W^T + b.
class Dense {
 public:
  Dense() = default;
  Dense(const std::string &name, int in_dim, int out_dim);

  void Init(Rng &rng);
  Matrix Forward(const Matrix &x) const;
  Matrix Backward(const Matrix &x, const Matrix &dy);

  int in_dim() const { return in_dim_; }
  int out_dim() const { return out_dim_; }
  Parameter &weight() { return weight_; }
  Parameter &bias() { return bias_; }
  ParamList Params() { return {&weight_, &bias_}; }
  ConstParamList Params() const { return {&weight_, &bias_}; }

 private:
  int in_dim_ = 0, out_dim_ = 0;
  Parameter weight_, bias_;
};

Matrix Relu(const Matrix &x);
/// `y` is the forward output; the gradient passes where y > 0.
Matrix ReluBackward(const Matrix &y, const Matrix &dy);

/// y = T(x) * H(x) + (1 - T(x)) * x with H = relu(W_H x + b_H) and
/// T = sigmoid(W_T x + b_T).
class Highway {
 public:
  struct Cache {
    Matrix transform;  // H(x)
    Matrix gate;       // T(x)
  };

  Highway() = default;
  Highway(const std::string &name, int dim);

  /// uniform init, transform-gate bias -1 (biased toward carrying x).
  void Init(Rng &rng);
  Matrix Forward(const Matrix &x, Cache *cache) const;
  Matrix Backward(const Matrix &x, const Cache &cache, const Matrix &dy);

  int dim() const { return dim_; }
  Parameter &gate_bias() { return b_t_; }
  ParamList Params() { return {&w_h_, &b_h_, &w_t_, &b_t_}; }
  ConstParamList Params() const { return {&w_h_, &b_h_, &w_t_, &b_t_}; }

 private:
  int dim_ = 0;
  Parameter w_h_, b_h_, w_t_, b_t_;
};

/// One LSTM direction. Gate order in the stacked parameters is
/// input, forget, cell candidate, output.
class Lstm {
 public:
  struct Cache {
    Matrix gates;   // T x 4h, post-activation
    Matrix cells;   // T x h
    Matrix hidden;  // T x h, the layer output
  };

  Lstm() = default;
  Lstm(const std::string &name, int in_dim, int hidden_dim, bool reverse);

  /// uniform init, forget-gate bias +1.
  void Init(Rng &rng);
  Matrix Forward(const Matrix &x, Cache *cache) const;
  Matrix Backward(const Matrix &x, const Cache &cache, const Matrix &dh);

  int in_dim() const { return in_dim_; }
  int hidden_dim() const { return hidden_; }
  ParamList Params() { return {&w_x_, &w_h_, &b_}; }
  ConstParamList Params() const { return {&w_x_, &w_h_, &b_}; }

 private:
  int in_dim_ = 0, hidden_ = 0;
  bool reverse_ = false;
  Parameter w_x_, w_h_, b_;
};

/// Forward and backward LSTMs over the same input, outputs concatenated
/// per frame as [forward | backward].
class BiLstm {
 public:
  struct Cache {
    Lstm::Cache fwd, bwd;
  };

  BiLstm() = default;
  BiLstm(const std::string &name, int in_dim, int hidden_dim);

  void Init(Rng &rng);
  Matrix Forward(const Matrix &x, Cache *cache) const;
  Matrix Backward(const Matrix &x, const Cache &cache, const Matrix &dy);

  int in_dim() const { return fwd_.in_dim(); }
  int out_dim() const { return 2 * fwd_.hidden_dim(); }
  ParamList Params();
  ConstParamList Params() const;

 private:
  Lstm fwd_, bwd_;
};

/// Channels x (height * width) image stack; height is time, width is
/// frequency.
struct FeatureMap {
  int channels = 0, height = 0, width = 0;
  Matrix data;

  FeatureMap() = default;
  FeatureMap(int c, int h, int w) : channels(c), height(h), width(w), data(Matrix::Zero(c, h * w)) {}
};

/// 3x3 convolution, stride 1, zero "same" padding.
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(const std::string &name, int in_channels, int out_channels);

  void Init(Rng &rng);
  /// `columns` receives the im2col matrix needed by Backward.
  FeatureMap Forward(const FeatureMap &x, Matrix *columns) const;
  FeatureMap Backward(const FeatureMap &x, const Matrix &columns,
                      const FeatureMap &dy);

  int in_channels() const { return in_; }
  int out_channels() const { return out_; }
  ParamList Params() { return {&weight_, &bias_}; }
  ConstParamList Params() const { return {&weight_, &bias_}; }

 private:
  int in_ = 0, out_ = 0;
  Parameter weight_, bias_;  // out x (in * 9), out
};

FeatureMap ReluForward(const FeatureMap &x);
FeatureMap ReluBackward(const FeatureMap &y, const FeatureMap &dy);

/// 2x2 max pooling with stride 2; odd trailing rows/columns form partial
/// windows, so the output is ceil(h/2) x ceil(w/2). `argmax` records the
/// flat input index chosen for each output cell.
FeatureMap MaxPoolForward(const FeatureMap &x, std::vector<int> *argmax);
FeatureMap MaxPoolBackward(const FeatureMap &x, const std::vector<int> &argmax,
                           const FeatureMap &dy);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam over a fixed parameter list.
class Adam {
 public:
  Adam(ParamList params, const AdamConfig &cfg = AdamConfig());

  /// Applies one update from the accumulated gradients. Throws a numeric
  /// error naming the parameter if any gradient is non-finite.
  void Step();
  void set_lr(double lr) { cfg_.lr = lr; }
  long steps() const { return t_; }

 private:
  ParamList params_;
  AdamConfig cfg_;
  std::vector<Matrix> m_, v_;
  long t_ = 0;
};

/// Scales gradients so that their global L2 norm is at most max_norm.
/// Returns the norm before clipping.
double ClipGradNorm(const ParamList &params, double max_norm);

// Checkpoints: "LAUD", u32 version, length-prefixed descriptor, u32 count,
// then per parameter: length-prefixed name, u32 rank, u32 dims, f32 data.

constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  std::vector<int> shape;
  std::vector<float> data;
};

struct Checkpoint {
  std::string descriptor;
  std::vector<NamedTensor> tensors;
};

std::vector<std::uint8_t> EncodeCheckpoint(const std::string &descriptor,
                                           const ConstParamList &params);
Checkpoint DecodeCheckpoint(const std::vector<std::uint8_t> &bytes);
void SaveCheckpoint(const std::string &path, const std::string &descriptor,
                    const ConstParamList &params);
Checkpoint LoadCheckpoint(const std::string &path);

/// Copies tensors into parameters by name. Missing names or mismatched
/// shapes raise an incompatible-checkpoint error.
void AssignParameters(const Checkpoint &ckpt, const ParamList &params);

}  // namespace laud

#endif  // LAUD_NN_H_
