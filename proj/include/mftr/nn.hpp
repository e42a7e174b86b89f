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

// Layers built on the autodiff tape: linear, layer norm, multi-head
// attention, post-norm transformer encoder layers and stacked LSTMs.

#pragma once

#include "mftr/autodiff.hpp"

#include <deque>
#include <random>
#include <string>
#include <vector>

namespace mftr::nn {

using ad::Matrix;
using ad::Parameter;
using ad::Tape;
using ad::Var;

using Rng = std::mt19937_64;

// Owns every parameter of a model. Addresses are stable for the lifetime of
// the set, so layers keep raw pointers into it.
template <typename S>
class ParameterSet {
 public:
  ParameterSet() = default;
  ParameterSet(const ParameterSet&) = delete;
  ParameterSet& operator=(const ParameterSet&) = delete;

  Parameter<S>& Create(std::string name, int rows, int cols);
  Parameter<S>* Find(const std::string& name);

  std::size_t size() const { return params_.size(); }
  std::size_t NumScalars() const;
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void ZeroGrad();

 private:
  std::deque<Parameter<S>> params_;
};

template <typename S>
void FillUniform(Matrix<S>& m, S bound, Rng& rng);
template <typename S>
void FillNormal(Matrix<S>& m, S stddev, Rng& rng);

template <typename S>
class Linear {
 public:
  Linear() = default;
  Linear(ParameterSet<S>& params, const std::string& name, int in, int out,
         Rng& rng);

  Var Forward(Tape<S>& tape, Var x) const;

  Parameter<S>& weight() const { return *weight_; }
  Parameter<S>& bias() const { return *bias_; }
  int in() const { return static_cast<int>(weight_->value.rows()); }
  int out() const { return static_cast<int>(weight_->value.cols()); }

 private:
  Parameter<S>* weight_ = nullptr;
  Parameter<S>* bias_ = nullptr;
};

template <typename S>
class LayerNorm {
 public:
  static constexpr double kEps = 1e-5;

  LayerNorm() = default;
  LayerNorm(ParameterSet<S>& params, const std::string& name, int dim);

  Var Forward(Tape<S>& tape, Var x) const;

 private:
  Parameter<S>* gamma_ = nullptr;
  Parameter<S>* beta_ = nullptr;
};

// MultiHead(Q, K, V) = Concat(head_1..head_n) W_o with
// head_i = softmax(Q W_q,i (K W_k,i)^T / sqrt(d_k)) V W_v,i.
template <typename S>
class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(ParameterSet<S>& params, const std::string& name,
                     int d_model, int heads, Rng& rng);

  Var Forward(Tape<S>& tape, Var query, Var key, Var value, int batch,
              int q_len, int k_len) const;

  const Linear<S>& query_proj() const { return wq_; }
  const Linear<S>& key_proj() const { return wk_; }
  const Linear<S>& value_proj() const { return wv_; }
  const Linear<S>& output_proj() const { return wo_; }
  int heads() const { return heads_; }

 private:
  Linear<S> wq_, wk_, wv_, wo_;
  int heads_ = 1;
};

// x' = LN(x + MSA(x)); out = LN(x' + FFN(x')), FFN = Linear-ReLU-Linear.
template <typename S>
class EncoderLayer {
 public:
  EncoderLayer() = default;
  EncoderLayer(ParameterSet<S>& params, const std::string& name, int d_model,
               int heads, int ffn_hidden, Rng& rng);

  Var Forward(Tape<S>& tape, Var x, int batch, int len) const;

  // Zeroes the attention output projection and the second FFN layer so the
  // layer reduces to LN(LN(x)).
  void ZeroResidualBranches();

  const MultiHeadAttention<S>& attention() const { return attention_; }

 private:
  MultiHeadAttention<S> attention_;
  LayerNorm<S> norm1_, norm2_;
  Linear<S> ffn1_, ffn2_;
};

template <typename S>
class EncoderStack {
 public:
  EncoderStack() = default;
  EncoderStack(ParameterSet<S>& params, const std::string& name, int layers,
               int d_model, int heads, int ffn_hidden, Rng& rng);

  Var Forward(Tape<S>& tape, Var x, int batch, int len) const;
  void ZeroResidualBranches();
  std::size_t depth() const { return layers_.size(); }

 private:
  std::vector<EncoderLayer<S>> layers_;
};

// Stacked LSTM returning the full top-layer hidden sequence. Gate order in
// the packed weights is input, forget, cell, output.
template <typename S>
class Lstm {
 public:
  Lstm() = default;
  Lstm(ParameterSet<S>& params, const std::string& name, int input, int hidden,
       int layers, Rng& rng);

  // x holds batch * len rows; output has the same row layout.
  Var Forward(Tape<S>& tape, Var x, int batch, int len) const;
  int hidden() const { return hidden_; }

 private:
  struct Layer {
    Linear<S> input;
    Parameter<S>* recurrent = nullptr;
  };
  std::vector<Layer> layers_;
  int hidden_ = 0;
};

// Linear layers with ReLU between them (none after the last).
template <typename S>
class Mlp {
 public:
  Mlp() = default;
  Mlp(ParameterSet<S>& params, const std::string& name,
      const std::vector<int>& widths, Rng& rng);

  Var Forward(Tape<S>& tape, Var x) const;
  const Linear<S>& layer(std::size_t i) const { return layers_.at(i); }
  std::size_t depth() const { return layers_.size(); }

 private:
  std::vector<Linear<S>> layers_;
};

// Fixed sinusoidal position table, len x d_model.
template <typename S>
Matrix<S> SinusoidalPositions(int len, int d_model);

// Row indices that pick rows [first, first + count) of every sample in a
// batch-major layout of `len` rows per sample.
std::vector<int> SampleRows(int batch, int len, int first, int count);

}  // namespace mftr::nn
