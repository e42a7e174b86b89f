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

// Reverse-mode automatic differentiation over row-major matrices.
//
// A Tape records every operation of one forward pass. Each recorded node owns
// its value (or borrows a Parameter's value) and a closure that pushes its
// gradient to its inputs. Backward() walks the nodes in reverse creation
// order, which is a valid topological order. Parameter gradients accumulate
// into Parameter::grad, so callers zero them between steps.
//
// Sequence tensors are stored batch-major: row b * length + i is token i of
// sample b.

#pragma once

#include <Eigen/Dense>

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace mftr::ad {

template <typename S>
using Matrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename S>
struct Parameter {
  std::string name;
  Matrix<S> value;
  Matrix<S> grad;
  bool trainable = true;
};

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

template <typename S>
class Tape {
 public:
  using Mat = Matrix<S>;

  // With record_gradients = false no backward closures are kept; use for
  // inference.
  explicit Tape(bool record_gradients = true);
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var Constant(Mat value);
  Var Param(Parameter<S>& parameter);

  const Mat& value(Var v) const;
  // Gradient of the last Backward() target w.r.t. v; zero-sized if v did not
  // receive a gradient.
  const Mat& grad(Var v) const;
  int size() const { return static_cast<int>(nodes_.size()); }

  Var MatMul(Var a, Var b);
  // x * w + b, with b a 1 x out row broadcast over rows.
  Var Linear(Var x, Var w, Var b);
  Var Add(Var a, Var b);
  Var AddRowBroadcast(Var x, Var row);
  Var Mul(Var a, Var b);
  Var Scale(Var a, S factor);
  Var Relu(Var a);
  Var Sigmoid(Var a);
  Var Tanh(Var a);
  Var LayerNorm(Var x, Var gamma, Var beta, S eps);

  // Scaled dot-product attention applied per sample and per head. q holds
  // batch * q_len rows, k and v hold batch * k_len rows; the channel dimension
  // is split into `heads` contiguous groups.
  Var Attention(Var q, Var k, Var v, int batch, int q_len, int k_len,
                int heads);

  Var ConcatCols(std::span<const Var> parts);
  Var ConcatRows(std::span<const Var> parts);
  Var SliceCols(Var a, int start, int count);
  // Output row i is input row index[i]. Indices may repeat.
  Var GatherRows(Var a, std::vector<int> index);
  // Sums consecutive groups of `group` rows.
  Var SegmentSum(Var a, int group);

  // sum((pred - target)^2) / normalizer, as a 1 x 1 node.
  Var SquaredError(Var pred, const Mat& target, S normalizer);
  // Binary cross-entropy of sigmoid(logits) against 0/1 targets, summed and
  // divided by normalizer. Computed from logits so it never takes log(0).
  Var BinaryCrossEntropyWithLogits(Var logits, const Mat& target,
                                   S normalizer);

  void Backward(Var loss);

 private:
  struct Node {
    Mat value;
    const Mat* borrowed = nullptr;
    Mat grad;
    Mat* grad_sink = nullptr;
    bool needs_grad = false;
    std::function<void()> backward;
  };

  Var Push(Mat value, bool needs_grad);
  bool NeedsGrad(Var v) const { return nodes_[v.id].needs_grad; }
  // Lazily zero-initialized gradient buffer of v.
  Mat& GradBuffer(Var v);
  void Check(Var v) const;

  bool record_;
  std::vector<Node> nodes_;
};

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace mftr::ad
