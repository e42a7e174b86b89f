/*
 * Copyright 2026 The MFTR Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "mftr/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace mftr::nn {

template <typename S>
Parameter<S>& ParameterSet<S>::Create(std::string name, int rows, int cols) {
  if (Find(name) != nullptr) {
    throw std::logic_error("duplicate parameter name " + name);
  }
  Parameter<S>& p = params_.emplace_back();
  p.name = std::move(name);
  p.value = Matrix<S>::Zero(rows, cols);
  p.grad = Matrix<S>::Zero(rows, cols);
  return p;
}

template <typename S>
Parameter<S>* ParameterSet<S>::Find(const std::string& name) {
  for (auto& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

template <typename S>
std::size_t ParameterSet<S>::NumScalars() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

template <typename S>
void ParameterSet<S>::ZeroGrad() {
  for (auto& p : params_) p.grad.setZero();
}

template <typename S>
void FillUniform(Matrix<S>& m, S bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    m.data()[i] = static_cast<S>(dist(rng));
  }
}

template <typename S>
void FillNormal(Matrix<S>& m, S stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    m.data()[i] = static_cast<S>(dist(rng));
  }
}

template <typename S>
Linear<S>::Linear(ParameterSet<S>& params, const std::string& name, int in,
                  int out, Rng& rng) {
  weight_ = &params.Create(name + ".weight", in, out);
  bias_ = &params.Create(name + ".bias", 1, out);
  const S bound = S(1) / std::sqrt(static_cast<S>(in));
  FillUniform(weight_->value, bound, rng);
  FillUniform(bias_->value, bound, rng);
}

template <typename S>
Var Linear<S>::Forward(Tape<S>& tape, Var x) const {
  return tape.Linear(x, tape.Param(*weight_), tape.Param(*bias_));
}

template <typename S>
LayerNorm<S>::LayerNorm(ParameterSet<S>& params, const std::string& name,
                        int dim) {
  gamma_ = &params.Create(name + ".gamma", 1, dim);
  beta_ = &params.Create(name + ".beta", 1, dim);
  gamma_->value.setOnes();
}

template <typename S>
Var LayerNorm<S>::Forward(Tape<S>& tape, Var x) const {
  return tape.LayerNorm(x, tape.Param(*gamma_), tape.Param(*beta_),
                        static_cast<S>(kEps));
}

template <typename S>
MultiHeadAttention<S>::MultiHeadAttention(ParameterSet<S>& params,
                                          const std::string& name, int d_model,
                                          int heads, Rng& rng)
    : wq_(params, name + ".q", d_model, d_model, rng),
      wk_(params, name + ".k", d_model, d_model, rng),
      wv_(params, name + ".v", d_model, d_model, rng),
      wo_(params, name + ".out", d_model, d_model, rng),
      heads_(heads) {
  if (heads <= 0 || d_model % heads != 0) {
    throw std::invalid_argument("d_model must be divisible by the head count");
  }
}

template <typename S>
Var MultiHeadAttention<S>::Forward(Tape<S>& tape, Var query, Var key,
                                   Var value, int batch, int q_len,
                                   int k_len) const {
  Var q = wq_.Forward(tape, query);
  Var k = wk_.Forward(tape, key);
  Var v = wv_.Forward(tape, value);
  Var attended = tape.Attention(q, k, v, batch, q_len, k_len, heads_);
  return wo_.Forward(tape, attended);
}

template <typename S>
EncoderLayer<S>::EncoderLayer(ParameterSet<S>& params, const std::string& name,
                              int d_model, int heads, int ffn_hidden, Rng& rng)
    : attention_(params, name + ".attn", d_model, heads, rng),
      norm1_(params, name + ".norm1", d_model),
      norm2_(params, name + ".norm2", d_model),
      ffn1_(params, name + ".ffn1", d_model, ffn_hidden, rng),
      ffn2_(params, name + ".ffn2", ffn_hidden, d_model, rng) {}

template <typename S>
Var EncoderLayer<S>::Forward(Tape<S>& tape, Var x, int batch, int len) const {
  Var attended = attention_.Forward(tape, x, x, x, batch, len, len);
  Var mid = norm1_.Forward(tape, tape.Add(x, attended));
  Var ffn = ffn2_.Forward(tape, tape.Relu(ffn1_.Forward(tape, mid)));
  return norm2_.Forward(tape, tape.Add(mid, ffn));
}

template <typename S>
void EncoderLayer<S>::ZeroResidualBranches() {
  attention_.output_proj().weight().value.setZero();
  attention_.output_proj().bias().value.setZero();
  ffn2_.weight().value.setZero();
  ffn2_.bias().value.setZero();
}

template <typename S>
EncoderStack<S>::EncoderStack(ParameterSet<S>& params, const std::string& name,
                              int layers, int d_model, int heads,
                              int ffn_hidden, Rng& rng) {
  layers_.reserve(static_cast<std::size_t>(layers));
  for (int i = 0; i < layers; ++i) {
    layers_.emplace_back(params, name + "." + std::to_string(i), d_model, heads,
                         ffn_hidden, rng);
  }
}

template <typename S>
Var EncoderStack<S>::Forward(Tape<S>& tape, Var x, int batch, int len) const {
  for (const auto& layer : layers_) x = layer.Forward(tape, x, batch, len);
  return x;
}

template <typename S>
void EncoderStack<S>::ZeroResidualBranches() {
  for (auto& layer : layers_) layer.ZeroResidualBranches();
}

template <typename S>
Lstm<S>::Lstm(ParameterSet<S>& params, const std::string& name, int input,
              int hidden, int layers, Rng& rng)
    : hidden_(hidden) {
  const S bound = S(1) / std::sqrt(static_cast<S>(hidden));
  for (int l = 0; l < layers; ++l) {
    const std::string prefix = name + "." + std::to_string(l);
    Layer layer;
    layer.input = Linear<S>(params, prefix + ".input", l == 0 ? input : hidden,
                            4 * hidden, rng);
    FillUniform(layer.input.weight().value, bound, rng);
    FillUniform(layer.input.bias().value, bound, rng);
    layer.recurrent = &params.Create(prefix + ".recurrent", hidden, 4 * hidden);
    FillUniform(layer.recurrent->value, bound, rng);
    layers_.push_back(layer);
  }
}

template <typename S>
Var Lstm<S>::Forward(Tape<S>& tape, Var x, int batch, int len) const {
  const int h = hidden_;
  // Step-major output rows (k * batch + b) back to batch-major order.
  std::vector<int> to_batch_major(static_cast<std::size_t>(batch) * len);
  for (int b = 0; b < batch; ++b) {
    for (int k = 0; k < len; ++k) to_batch_major[b * len + k] = k * batch + b;
  }
  Var seq = x;
  for (const Layer& layer : layers_) {
    Var projected = layer.input.Forward(tape, seq);
    Var recurrent = tape.Param(*layer.recurrent);
    Var hidden, cell;
    std::vector<Var> outputs;
    outputs.reserve(static_cast<std::size_t>(len));
    for (int k = 0; k < len; ++k) {
      Var gates = tape.GatherRows(projected, SampleRows(batch, len, k, 1));
      if (k > 0) gates = tape.Add(gates, tape.MatMul(hidden, recurrent));
      Var in_gate = tape.Sigmoid(tape.SliceCols(gates, 0, h));
      Var forget_gate = tape.Sigmoid(tape.SliceCols(gates, h, h));
      Var candidate = tape.Tanh(tape.SliceCols(gates, 2 * h, h));
      Var out_gate = tape.Sigmoid(tape.SliceCols(gates, 3 * h, h));
      Var update = tape.Mul(in_gate, candidate);
      cell = k == 0 ? update : tape.Add(tape.Mul(forget_gate, cell), update);
      hidden = tape.Mul(out_gate, tape.Tanh(cell));
      outputs.push_back(hidden);
    }
    seq = tape.GatherRows(tape.ConcatRows(outputs), to_batch_major);
  }
  return seq;
}

template <typename S>
Mlp<S>::Mlp(ParameterSet<S>& params, const std::string& name,
            const std::vector<int>& widths, Rng& rng) {
  if (widths.size() < 2) throw std::invalid_argument("MLP needs two widths");
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    layers_.emplace_back(params, name + "." + std::to_string(i), widths[i],
                         widths[i + 1], rng);
  }
}

template <typename S>
Var Mlp<S>::Forward(Tape<S>& tape, Var x) const {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    x = layers_[i].Forward(tape, x);
    if (i + 1 < layers_.size()) x = tape.Relu(x);
  }
  return x;
}

template <typename S>
Matrix<S> SinusoidalPositions(int len, int d_model) {
  Matrix<S> table(len, d_model);
  for (int pos = 0; pos < len; ++pos) {
    for (int i = 0; i < d_model; ++i) {
      const double rate =
          std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / d_model);
      const double angle = pos * rate;
      table(pos, i) = static_cast<S>(i % 2 == 0 ? std::sin(angle)
                                                : std::cos(angle));
    }
  }
  return table;
}

std::vector<int> SampleRows(int batch, int len, int first, int count) {
  std::vector<int> rows;
  rows.reserve(static_cast<std::size_t>(batch) * count);
  for (int b = 0; b < batch; ++b) {
    for (int i = 0; i < count; ++i) rows.push_back(b * len + first + i);
  }
  return rows;
}

#define MFTR_INSTANTIATE(S)                                             \
  template class ParameterSet<S>;                                       \
  template void FillUniform<S>(Matrix<S>&, S, Rng&);                    \
  template void FillNormal<S>(Matrix<S>&, S, Rng&);                     \
  template class Linear<S>;                                             \
  template class LayerNorm<S>;                                          \
  template class MultiHeadAttention<S>;                                 \
  template class EncoderLayer<S>;                                       \
  template class EncoderStack<S>;                                       \
  template class Lstm<S>;                                               \
  template class Mlp<S>;                                                \
  template Matrix<S> SinusoidalPositions<S>(int, int);

MFTR_INSTANTIATE(float)
MFTR_INSTANTIATE(double)

#undef MFTR_INSTANTIATE

}  // namespace mftr::nn
