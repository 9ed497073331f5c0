// src/nn.cc

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

#include "laud/nn.h"

#include <cmath>
#include <map>

#include "laud/io.h"

namespace laud {

namespace {

void CheckCols(const Matrix &x, int expected, const std::string &who) {
  if (x.cols() != expected)
    Fail(ErrorKind::kShape, who + ": expected " + std::to_string(expected) +
                                " columns, got " + std::to_string(x.cols()));
}

void CheckSameShape(const Matrix &a, const Matrix &b, const std::string &who) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    Fail(ErrorKind::kShape, who + ": gradient shape does not match output");
}

double Sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

Parameter::Parameter(std::string n, std::vector<int> s)
    : name(std::move(n)), shape(std::move(s)) {
  int rows = shape.size() == 1 ? 1 : shape[0];
  int cols = 1;
  for (std::size_t i = shape.size() == 1 ? 0 : 1; i < shape.size(); ++i) cols *= shape[i];
  value = Matrix::Zero(rows, cols);
  grad = Matrix::Zero(rows, cols);
}

void Parameter::InitUniform(double k, Rng &rng) {
  for (Eigen::Index i = 0; i < value.size(); ++i) value.data()[i] = UniformIn(rng, -k, k);
  RoundToFloat(&value);
}

void ZeroGrads(const ParamList &params) {
  for (Parameter *p : params) p->ZeroGrad();
}

// ---------------------------------------------------------------------------

Dense::Dense(const std::string &name, int in_dim, int out_dim)
    : in_dim_(in_dim),
      out_dim_(out_dim),
      weight_(name + ".weight", {out_dim, in_dim}),
      bias_(name + ".bias", {out_dim}) {}

void Dense::Init(Rng &rng) {
  const double k = 1.0 / std::sqrt(static_cast<double>(in_dim_));
  weight_.InitUniform(k, rng);
  bias_.InitUniform(k, rng);
}

Matrix Dense::Forward(const Matrix &x) const {
  CheckCols(x, in_dim_, weight_.name);
  Matrix y = x * weight_.value.transpose();
  y.rowwise() += bias_.value.row(0);
  return y;
}

Matrix Dense::Backward(const Matrix &x, const Matrix &dy) {
  CheckCols(dy, out_dim_, weight_.name);
  weight_.grad.noalias() += dy.transpose() * x;
  bias_.grad.row(0) += dy.colwise().sum();
  return dy * weight_.value;
}

Matrix Relu(const Matrix &x) { return x.cwiseMax(0.0); }

Matrix ReluBackward(const Matrix &y, const Matrix &dy) {
  CheckSameShape(y, dy, "relu");
  return (y.array() > 0.0).select(dy, 0.0);
}

// ---------------------------------------------------------------------------

Highway::Highway(const std::string &name, int dim)
    : dim_(dim),
      w_h_(name + ".transform.weight", {dim, dim}),
      b_h_(name + ".transform.bias", {dim}),
      w_t_(name + ".gate.weight", {dim, dim}),
      b_t_(name + ".gate.bias", {dim}) {}

void Highway::Init(Rng &rng) {
  const double k = 1.0 / std::sqrt(static_cast<double>(dim_));
  w_h_.InitUniform(k, rng);
  b_h_.InitUniform(k, rng);
  w_t_.InitUniform(k, rng);
  b_t_.value.setConstant(-1.0);
}

Matrix Highway::Forward(const Matrix &x, Cache *cache) const {
  CheckCols(x, dim_, w_h_.name);
  Matrix h = x * w_h_.value.transpose();
  h.rowwise() += b_h_.value.row(0);
  h = h.cwiseMax(0.0);
  Matrix t = x * w_t_.value.transpose();
  t.rowwise() += b_t_.value.row(0);
  t = t.unaryExpr([](double v) { return Sigmoid(v); });
  Matrix y = (t.array() * h.array() + (1.0 - t.array()) * x.array()).matrix();
  if (cache) {
    cache->transform = std::move(h);
    cache->gate = std::move(t);
  }
  return y;
}

Matrix Highway::Backward(const Matrix &x, const Cache &c, const Matrix &dy) {
  CheckSameShape(x, dy, w_h_.name);
  const auto t = c.gate.array();
  const Matrix dh_pre = (c.transform.array() > 0.0).select(dy.array() * t, 0.0).matrix();
  const Matrix dt_pre =
      (dy.array() * (c.transform.array() - x.array()) * t * (1.0 - t)).matrix();
  w_h_.grad.noalias() += dh_pre.transpose() * x;
  b_h_.grad.row(0) += dh_pre.colwise().sum();
  w_t_.grad.noalias() += dt_pre.transpose() * x;
  b_t_.grad.row(0) += dt_pre.colwise().sum();
  Matrix dx = (dy.array() * (1.0 - t)).matrix();
  dx.noalias() += dh_pre * w_h_.value;
  dx.noalias() += dt_pre * w_t_.value;
  return dx;
}

// ---------------------------------------------------------------------------

Lstm::Lstm(const std::string &name, int in_dim, int hidden_dim, bool reverse)
    : in_dim_(in_dim),
      hidden_(hidden_dim),
      reverse_(reverse),
      w_x_(name + ".w_x", {4 * hidden_dim, in_dim}),
      w_h_(name + ".w_h", {4 * hidden_dim, hidden_dim}),
      b_(name + ".bias", {4 * hidden_dim}) {}

void Lstm::Init(Rng &rng) {
  w_x_.InitUniform(1.0 / std::sqrt(static_cast<double>(in_dim_)), rng);
  w_h_.InitUniform(1.0 / std::sqrt(static_cast<double>(hidden_)), rng);
  b_.InitUniform(1.0 / std::sqrt(static_cast<double>(hidden_)), rng);
  b_.value.block(0, hidden_, 1, hidden_).setConstant(1.0);
}

Matrix Lstm::Forward(const Matrix &x, Cache *cache) const {
  CheckCols(x, in_dim_, w_x_.name);
  const Eigen::Index steps = x.rows();
  const int h = hidden_;
  Matrix gates = x * w_x_.value.transpose();
  gates.rowwise() += b_.value.row(0);
  Matrix cells(steps, h), hidden(steps, h);
  Eigen::RowVectorXd h_prev = Eigen::RowVectorXd::Zero(h);
  Eigen::RowVectorXd c_prev = Eigen::RowVectorXd::Zero(h);
  const Matrix w_h_t = w_h_.value.transpose();
  for (Eigen::Index s = 0; s < steps; ++s) {
    const Eigen::Index t = reverse_ ? steps - 1 - s : s;
    auto z = gates.row(t);
    z.noalias() += h_prev * w_h_t;
    for (int j = 0; j < h; ++j) {
      z(j) = Sigmoid(z(j));
      z(h + j) = Sigmoid(z(h + j));
      z(2 * h + j) = std::tanh(z(2 * h + j));
      z(3 * h + j) = Sigmoid(z(3 * h + j));
      const double c = z(h + j) * c_prev(j) + z(j) * z(2 * h + j);
      cells(t, j) = c;
      hidden(t, j) = z(3 * h + j) * std::tanh(c);
    }
    h_prev = hidden.row(t);
    c_prev = cells.row(t);
  }
  if (cache) {
    cache->gates = std::move(gates);
    cache->cells = std::move(cells);
    cache->hidden = hidden;
  }
  return hidden;
}

Matrix Lstm::Backward(const Matrix &x, const Cache &c, const Matrix &dh) {
  const Eigen::Index steps = x.rows();
  const int h = hidden_;
  if (dh.rows() != steps || dh.cols() != h)
    Fail(ErrorKind::kShape, w_x_.name + ": gradient shape does not match output");
  Matrix dz(steps, 4 * h);
  Matrix h_prev_all = Matrix::Zero(steps, h);
  Eigen::RowVectorXd dh_next = Eigen::RowVectorXd::Zero(h);
  Eigen::RowVectorXd dc_next = Eigen::RowVectorXd::Zero(h);
  for (Eigen::Index s = steps - 1; s >= 0; --s) {
    const Eigen::Index t = reverse_ ? steps - 1 - s : s;
    const bool first = s == 0;
    const Eigen::Index prev = reverse_ ? t + 1 : t - 1;
    const auto g = c.gates.row(t);
    for (int j = 0; j < h; ++j) {
      const double i_g = g(j), f_g = g(h + j), c_g = g(2 * h + j), o_g = g(3 * h + j);
      const double tc = std::tanh(c.cells(t, j));
      const double c_prev = first ? 0.0 : c.cells(prev, j);
      const double dht = dh(t, j) + dh_next(j);
      const double dct = dc_next(j) + dht * o_g * (1.0 - tc * tc);
      dz(t, j) = dct * c_g * i_g * (1.0 - i_g);
      dz(t, h + j) = dct * c_prev * f_g * (1.0 - f_g);
      dz(t, 2 * h + j) = dct * i_g * (1.0 - c_g * c_g);
      dz(t, 3 * h + j) = dht * tc * o_g * (1.0 - o_g);
      dc_next(j) = dct * f_g;
    }
    dh_next.noalias() = dz.row(t) * w_h_.value;
    if (!first) h_prev_all.row(t) = c.hidden.row(prev);
  }
  w_x_.grad.noalias() += dz.transpose() * x;
  w_h_.grad.noalias() += dz.transpose() * h_prev_all;
  b_.grad.row(0) += dz.colwise().sum();
  return dz * w_x_.value;
}

BiLstm::BiLstm(const std::string &name, int in_dim, int hidden_dim)
    : fwd_(name + ".fwd", in_dim, hidden_dim, false),
      bwd_(name + ".bwd", in_dim, hidden_dim, true) {}

void BiLstm::Init(Rng &rng) {
  fwd_.Init(rng);
  bwd_.Init(rng);
}

Matrix BiLstm::Forward(const Matrix &x, Cache *cache) const {
  Matrix f = fwd_.Forward(x, cache ? &cache->fwd : nullptr);
  Matrix b = bwd_.Forward(x, cache ? &cache->bwd : nullptr);
  Matrix y(x.rows(), f.cols() + b.cols());
  y << f, b;
  return y;
}

Matrix BiLstm::Backward(const Matrix &x, const Cache &cache, const Matrix &dy) {
  const int h = fwd_.hidden_dim();
  if (dy.cols() != 2 * h) Fail(ErrorKind::kShape, "bilstm: gradient width mismatch");
  Matrix dx = fwd_.Backward(x, cache.fwd, dy.leftCols(h));
  dx += bwd_.Backward(x, cache.bwd, dy.rightCols(h));
  return dx;
}

ParamList BiLstm::Params() {
  ParamList p = fwd_.Params();
  for (Parameter *q : bwd_.Params()) p.push_back(q);
  return p;
}

ConstParamList BiLstm::Params() const {
  ConstParamList p = fwd_.Params();
  for (const Parameter *q : bwd_.Params()) p.push_back(q);
  return p;
}

// ---------------------------------------------------------------------------

Conv2d::Conv2d(const std::string &name, int in_channels, int out_channels)
    : in_(in_channels),
      out_(out_channels),
      weight_(name + ".weight", {out_channels, in_channels, 3, 3}),
      bias_(name + ".bias", {out_channels}) {}

void Conv2d::Init(Rng &rng) {
  const double k = 1.0 / std::sqrt(9.0 * in_);
  weight_.InitUniform(k, rng);
  bias_.InitUniform(k, rng);
}

FeatureMap Conv2d::Forward(const FeatureMap &x, Matrix *columns) const {
  if (x.channels != in_)
    Fail(ErrorKind::kShape, weight_.name + ": expected " + std::to_string(in_) +
                                " input channels, got " + std::to_string(x.channels));
  const int hh = x.height, ww = x.width;
  Matrix cols = Matrix::Zero(in_ * 9, hh * ww);
  for (int c = 0; c < in_; ++c) {
    for (int kh = 0; kh < 3; ++kh) {
      for (int kw = 0; kw < 3; ++kw) {
        auto row = cols.row(c * 9 + kh * 3 + kw);
        for (int i = 0; i < hh; ++i) {
          const int si = i + kh - 1;
          if (si < 0 || si >= hh) continue;
          for (int j = 0; j < ww; ++j) {
            const int sj = j + kw - 1;
            if (sj < 0 || sj >= ww) continue;
            row(i * ww + j) = x.data(c, si * ww + sj);
          }
        }
      }
    }
  }
  FeatureMap y(out_, hh, ww);
  y.data.noalias() = weight_.value * cols;
  y.data.colwise() += bias_.value.row(0).transpose();
  if (columns) *columns = std::move(cols);
  return y;
}

FeatureMap Conv2d::Backward(const FeatureMap &x, const Matrix &columns,
                            const FeatureMap &dy) {
  if (dy.channels != out_ || dy.height != x.height || dy.width != x.width)
    Fail(ErrorKind::kShape, weight_.name + ": gradient shape mismatch");
  weight_.grad.noalias() += dy.data * columns.transpose();
  bias_.grad.row(0) += dy.data.rowwise().sum().transpose();
  const Matrix dcols = weight_.value.transpose() * dy.data;
  const int hh = x.height, ww = x.width;
  FeatureMap dx(in_, hh, ww);
  for (int c = 0; c < in_; ++c) {
    for (int kh = 0; kh < 3; ++kh) {
      for (int kw = 0; kw < 3; ++kw) {
        const auto row = dcols.row(c * 9 + kh * 3 + kw);
        for (int i = 0; i < hh; ++i) {
          const int si = i + kh - 1;
          if (si < 0 || si >= hh) continue;
          for (int j = 0; j < ww; ++j) {
            const int sj = j + kw - 1;
            if (sj < 0 || sj >= ww) continue;
            dx.data(c, si * ww + sj) += row(i * ww + j);
          }
        }
      }
    }
  }
  return dx;
}

FeatureMap ReluForward(const FeatureMap &x) {
  FeatureMap y = x;
  y.data = x.data.cwiseMax(0.0);
  return y;
}

FeatureMap ReluBackward(const FeatureMap &y, const FeatureMap &dy) {
  FeatureMap dx = dy;
  dx.data = ReluBackward(y.data, dy.data);
  return dx;
}

FeatureMap MaxPoolForward(const FeatureMap &x, std::vector<int> *argmax) {
  const int oh = (x.height + 1) / 2, ow = (x.width + 1) / 2;
  FeatureMap y(x.channels, oh, ow);
  if (argmax) argmax->assign(static_cast<std::size_t>(x.channels) * oh * ow, 0);
  for (int c = 0; c < x.channels; ++c) {
    for (int i = 0; i < oh; ++i) {
      for (int j = 0; j < ow; ++j) {
        int best = -1;
        double best_v = 0.0;
        for (int di = 0; di < 2; ++di) {
          for (int dj = 0; dj < 2; ++dj) {
            const int si = 2 * i + di, sj = 2 * j + dj;
            if (si >= x.height || sj >= x.width) continue;
            const int idx = si * x.width + sj;
            const double v = x.data(c, idx);
            if (best < 0 || v > best_v) best = idx, best_v = v;
          }
        }
        y.data(c, i * ow + j) = best_v;
        if (argmax) (*argmax)[(static_cast<std::size_t>(c) * oh + i) * ow + j] = best;
      }
    }
  }
  return y;
}

FeatureMap MaxPoolBackward(const FeatureMap &x, const std::vector<int> &argmax,
                           const FeatureMap &dy) {
  const int oh = (x.height + 1) / 2, ow = (x.width + 1) / 2;
  if (dy.channels != x.channels || dy.height != oh || dy.width != ow ||
      argmax.size() != static_cast<std::size_t>(x.channels) * oh * ow)
    Fail(ErrorKind::kShape, "maxpool: gradient shape mismatch");
  FeatureMap dx(x.channels, x.height, x.width);
  for (int c = 0; c < x.channels; ++c)
    for (int k = 0; k < oh * ow; ++k)
      dx.data(c, argmax[static_cast<std::size_t>(c) * oh * ow + k]) += dy.data(c, k);
  return dx;
}

// ---------------------------------------------------------------------------

Adam::Adam(ParamList params, const AdamConfig &cfg)
    : params_(std::move(params)), cfg_(cfg) {
  for (const Parameter *p : params_) {
    m_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
  }
}

void Adam::Step() {
  for (const Parameter *p : params_)
    if (!p->grad.allFinite())
      Fail(ErrorKind::kNumeric, "non-finite gradient in " + p->name);
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  // Bias corrections folded into the step size and epsilon.
  const double lr_t = cfg_.lr * std::sqrt(c2) / c1;
  const double eps_t = cfg_.eps * std::sqrt(c2);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Parameter &p = *params_[i];
    auto g = p.grad.array();
    auto m = m_[i].array();
    auto v = v_[i].array();
    m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g;
    v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * g.square();
    p.value.array() = (p.value.array() - lr_t * m / (v.sqrt() + eps_t)).cast<float>().cast<double>();
  }
}

double ClipGradNorm(const ParamList &params, double max_norm) {
  double sq = 0.0;
  for (const Parameter *p : params) sq += p->grad.squaredNorm();
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double scale = max_norm / norm;
    for (Parameter *p : params) p->grad *= scale;
  }
  return norm;
}

// ---------------------------------------------------------------------------

std::vector<std::uint8_t> EncodeCheckpoint(const std::string &descriptor,
                                           const ConstParamList &params) {
  ByteWriter out;
  out.Tag("LAUD");
  out.U32(kCheckpointVersion);
  out.String(descriptor);
  out.U32(static_cast<std::uint32_t>(params.size()));
  for (const Parameter *p : params) {
    out.String(p->name);
    out.U32(static_cast<std::uint32_t>(p->shape.size()));
    for (int d : p->shape) out.U32(static_cast<std::uint32_t>(d));
    for (Eigen::Index i = 0; i < p->value.size(); ++i)
      out.F32(static_cast<float>(p->value.data()[i]));
  }
  return std::move(out.buffer());
}

Checkpoint DecodeCheckpoint(const std::vector<std::uint8_t> &bytes) {
  ByteReader in(bytes, "checkpoint");
  if (in.Tag() != "LAUD") Fail(ErrorKind::kFormat, "checkpoint: bad magic");
  const std::uint32_t version = in.U32();
  if (version != kCheckpointVersion)
    Fail(ErrorKind::kIncompatibleCheckpoint,
         "checkpoint version " + std::to_string(version) + ", expected " +
             std::to_string(kCheckpointVersion));
  Checkpoint ckpt;
  ckpt.descriptor = in.String();
  const std::uint32_t count = in.U32();
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = in.String();
    const std::uint32_t rank = in.U32();
    if (rank > 8) Fail(ErrorKind::kFormat, "checkpoint: implausible rank");
    std::size_t n = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      t.shape.push_back(static_cast<int>(in.U32()));
      n *= static_cast<std::size_t>(t.shape.back());
    }
    if (n * 4 > in.remaining()) Fail(ErrorKind::kFormat, "checkpoint: truncated data");
    t.data.resize(n);
    in.Bytes(t.data.data(), n * sizeof(float));
    ckpt.tensors.push_back(std::move(t));
  }
  if (in.remaining() != 0) Fail(ErrorKind::kFormat, "checkpoint: trailing bytes");
  return ckpt;
}

void SaveCheckpoint(const std::string &path, const std::string &descriptor,
                    const ConstParamList &params) {
  WriteFileAtomic(path, EncodeCheckpoint(descriptor, params));
}

Checkpoint LoadCheckpoint(const std::string &path) {
  try {
    return DecodeCheckpoint(ReadFileBytes(path));
  } catch (const Error &e) {
    throw Error(e.kind(), std::string(e.what()) + " (" + path + ")");
  }
}

void AssignParameters(const Checkpoint &ckpt, const ParamList &params) {
  std::map<std::string, const NamedTensor *> by_name;
  for (const NamedTensor &t : ckpt.tensors) by_name[t.name] = &t;
  for (Parameter *p : params) {
    auto it = by_name.find(p->name);
    if (it == by_name.end())
      Fail(ErrorKind::kIncompatibleCheckpoint, "missing parameter " + p->name);
    const NamedTensor &t = *it->second;
    if (t.shape != p->shape)
      Fail(ErrorKind::kIncompatibleCheckpoint, "shape mismatch for " + p->name);
    for (Eigen::Index i = 0; i < p->value.size(); ++i)
      p->value.data()[i] = static_cast<double>(t.data[static_cast<std::size_t>(i)]);
  }
  if (by_name.size() != params.size())
    Fail(ErrorKind::kIncompatibleCheckpoint, "checkpoint has unexpected parameters");
}

}  // namespace laud
