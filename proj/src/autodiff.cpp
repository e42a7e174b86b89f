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

#include "mftr/autodiff.hpp"

#include <cmath>
#include <stdexcept>

namespace mftr::ad {

namespace {

std::string Shape(long rows, long cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

}  // namespace

template <typename S>
Tape<S>::Tape(bool record_gradients) : record_(record_gradients) {
  nodes_.reserve(1024);
}

template <typename S>
void Tape<S>::Check(Var v) const {
  if (v.id < 0 || v.id >= static_cast<int>(nodes_.size())) {
    throw std::invalid_argument("variable does not belong to this tape");
  }
}

template <typename S>
Var Tape<S>::Push(Mat value, bool needs_grad) {
  Node node;
  node.value = std::move(value);
  node.needs_grad = record_ && needs_grad;
  nodes_.push_back(std::move(node));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

template <typename S>
Var Tape<S>::Constant(Mat value) {
  return Push(std::move(value), false);
}

template <typename S>
Var Tape<S>::Param(Parameter<S>& parameter) {
  Node node;
  node.borrowed = &parameter.value;
  node.needs_grad = record_ && parameter.trainable;
  if (node.needs_grad) {
    if (parameter.grad.rows() != parameter.value.rows() ||
        parameter.grad.cols() != parameter.value.cols()) {
      parameter.grad = Mat::Zero(parameter.value.rows(), parameter.value.cols());
    }
    node.grad_sink = &parameter.grad;
  }
  nodes_.push_back(std::move(node));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

template <typename S>
const typename Tape<S>::Mat& Tape<S>::value(Var v) const {
  Check(v);
  const Node& n = nodes_[v.id];
  return n.borrowed ? *n.borrowed : n.value;
}

template <typename S>
const typename Tape<S>::Mat& Tape<S>::grad(Var v) const {
  Check(v);
  const Node& n = nodes_[v.id];
  return n.grad_sink ? *n.grad_sink : n.grad;
}

template <typename S>
typename Tape<S>::Mat& Tape<S>::GradBuffer(Var v) {
  Node& n = nodes_[v.id];
  if (n.grad_sink) return *n.grad_sink;
  if (n.grad.size() == 0) {
    const Mat& val = n.borrowed ? *n.borrowed : n.value;
    n.grad = Mat::Zero(val.rows(), val.cols());
  }
  return n.grad;
}

template <typename S>
Var Tape<S>::MatMul(Var a, Var b) {
  Check(a);
  Check(b);
  const Mat& av = value(a);
  const Mat& bv = value(b);
  if (av.cols() != bv.rows()) {
    throw std::invalid_argument("MatMul shape mismatch: " +
                                Shape(av.rows(), av.cols()) + " * " +
                                Shape(bv.rows(), bv.cols()));
  }
  Mat out = av * bv;
  Var r = Push(std::move(out), NeedsGrad(a) || NeedsGrad(b));
  if (nodes_[r.id].needs_grad) {
    nodes_[r.id].backward = [this, a, b, r] {
      const Mat& g = nodes_[r.id].grad;
      if (NeedsGrad(a)) GradBuffer(a).noalias() += g * value(b).transpose();
      if (NeedsGrad(b)) GradBuffer(b).noalias() += value(a).transpose() * g;
    };
  }
  return r;
}

template <typename S>
Var Tape<S>::Linear(Var x, Var w, Var b) {
  Check(x);
  Check(w);
  Check(b);
  const Mat& xv = value(x);
  const Mat& wv = value(w);
  const Mat& bv = value(b);
  if (xv.cols() != wv.rows() || bv.rows() != 1 || bv.cols() != wv.cols()) {
    throw std::invalid_argument("Linear shape mismatch: x " +
                                Shape(xv.rows(), xv.cols()) + ", w " +
                                Shape(wv.rows(), wv.cols()) + ", b " +
                                Shape(bv.rows(), bv.cols()));
  }
  Mat out(xv.rows(), wv.cols());
  out.noalias() = xv * wv;
  out.rowwise() += bv.row(0);
  Var r = Push(std::move(out), NeedsGrad(x) || NeedsGrad(w) || NeedsGrad(b));
  if (nodes_[r.id].needs_grad) {
    nodes_[r.id].backward = [this, x, w, b, r] {
      const Mat& g = nodes_[r.id].grad;
      if (NeedsGrad(x)) GradBuffer(x).noalias() += g * value(w).transpose();
      if (NeedsGrad(w)) GradBuffer(w).noalias() += value(x).transpose() * g;
      if (NeedsGrad(b)) GradBuffer(b) += g.colwise().sum();
    };
  }
  return r;
}

template <typename S>
Var Tape<S>::Add(Var a, Var b) {
  Check(a);
  Check(b);
  const Mat& av = value(a);
  const Mat& bv = value(b);
  if (av.rows() != bv.rows() || av.cols() != bv.cols()) {
    throw std::invalid_argument("Add shape mismatch: " +
                                Shape(av.rows(), av.cols()) + " + " +
                                Shape(bv.rows(), bv.cols()));
  }
  Var r = Push(av + bv, NeedsGrad(a) || NeedsGrad(b));
  if (nodes_[r.id].needs_grad) {
    nodes_[r.id].backward = [this, a, b, r] {
      const Mat& g = nodes_[r.id].grad;
      if (NeedsGrad(a)) GradBuffer(a) += g;
      if (NeedsGrad(b)) GradBuffer(b) += g;
    };
  }
  return r;
}

template <typename S>
Var Tape<S>::AddRowBroadcast(Var x, Var row) {
  Check(x);
  Check(row);
  const Mat& xv = value(x);
  const Mat& rv = value(row);
  if (rv.rows() != 1 || rv.cols() != xv.cols()) {
    throw std::invalid_argument("AddRowBroadcast shape mismatch: " +
                                Shape(xv.rows(), xv.cols()) + " + " +
                                Shape(rv.rows(), rv.cols()));
  }
  Mat out = xv;
  out.rowwise() += rv.row(0);
  Var r = Push(std::move(out), NeedsGrad(x) || NeedsGrad(row));
  if (nodes_[r.id].needs_grad) {
    nodes_[r.id].backward = [this, x, row, r] {
      const Mat& g = nodes_[r.id].grad;
      if (NeedsGrad(x)) GradBuffer(x) += g;
      if (NeedsGrad(row)) GradBuffer(row) += g.colwise().sum();
    };
  }
  return r;
}

template <typename S>
Var Tape<S>::Mul(Var a, Var b) {
  Check(a);
  Check(b);
  const Mat& av = value(a);
  const Mat& bv = value(b);
  if (av.rows() != bv.rows() || av.cols() != bv.cols()) {
    throw std::invalid_argument("Mul shape mismatch: " +
                                Shape(av.rows(), av.cols()) + " * " +
                                Shape(bv.rows(), bv.cols()));
  }
  Var r = Push(av.cwiseProduct(bv), NeedsGrad(a) || NeedsGrad(b));
  if (nodes_[r.id].needs_grad) {
    nodes_[r.id].backward = [this, a, b, r] {
      const Mat& g = nodes_[r.id].grad;
      if (NeedsGrad(a)) GradBuffer(a) += g.cwiseProduct(value(b));
      if (NeedsGrad(b)) GradBuffer(b) += g.cwiseProduct(value(a));
    };
  }
  return r;
}

template <typename S>
Var Tape<S>::Scale(Var a, S factor) {
  Check(a);
  Var r = Push(value(a) * factor, NeedsGrad(a));
  if (nodes_[r.id].needs_grad) {
    nodes_[r.id].backward = [this, a, r, factor] {
      GradBuffer(a) += nodes_[r.id].grad * factor;
    };
  }
  return r;
}

template <typename S>
Var Tape<S>::Relu(Var a) {
  Check(a);
  Var r = Push(value(a).cwiseMax(S(0)), NeedsGrad(a));
  if (nodes_[r.id].needs_grad) {
    nodes_[r.id].backward = [this, a, r] {
      const Mat& g = nodes_[r.id].grad;
      GradBuffer(a) +=
          (value(a).array() > S(0)).select(g, Mat::Zero(g.rows(), g.cols()));
    };
  }
  return r;
}

template <typename S>
Var Tape<S>::Sigmoid(Var a) {
  Check(a);
  Mat out = (S(1) + (-value(a).array()).exp()).inverse().matrix();
  Var r = Push(std::move(out), NeedsGrad(a));
  if (nodes_[r.id].needs_grad) {
    nodes_[r.id].backward = [this, a, r] {
      const Mat& y = nodes_[r.id].value;
      const Mat& g = nodes_[r.id].grad;
      GradBuffer(a).array() += g.array() * y.array() * (S(1) - y.array());
    };
  }
  return r;
}

template <typename S>
Var Tape<S>::Tanh(Var a) {
  Check(a);
  Var r = Push(value(a).array().tanh().matrix(), NeedsGrad(a));
  if (nodes_[r.id].needs_grad) {
    nodes_[r.id].backward = [this, a, r] {
      const Mat& y = nodes_[r.id].value;
      const Mat& g = nodes_[r.id].grad;
      GradBuffer(a).array() += g.array() * (S(1) - y.array().square());
    };
  }
  return r;
}

template <typename S>
Var Tape<S>::LayerNorm(Var x, Var gamma, Var beta, S eps) {
  Check(x);
  Check(gamma);
  Check(beta);
  const Mat& xv = value(x);
  const Mat& gv = value(gamma);
  const Mat& bv = value(beta);
  const auto n = xv.rows();
  const auto d = xv.cols();
  if (gv.rows() != 1 || gv.cols() != d || bv.rows() != 1 || bv.cols() != d) {
    throw std::invalid_argument("LayerNorm parameter shape mismatch");
  }
  Mat normalized(n, d);
  Eigen::Matrix<S, Eigen::Dynamic, 1> inv_std(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const S mean = xv.row(i).mean();
    const S var = (xv.row(i).array() - mean).square().mean();
    inv_std(i) = S(1) / std::sqrt(var + eps);
    normalized.row(i) = (xv.row(i).array() - mean) * inv_std(i);
  }
  Mat out = normalized.array().rowwise() * gv.row(0).array();
  out.rowwise() += bv.row(0);
  Var r = Push(std::move(out),
               NeedsGrad(x) || NeedsGrad(gamma) || NeedsGrad(beta));
  if (nodes_[r.id].needs_grad) {
    nodes_[r.id].backward = [this, x, gamma, beta, r,
                             normalized = std::move(normalized),
                             inv_std = std::move(inv_std)] {
      const Mat& g = nodes_[r.id].grad;
      if (NeedsGrad(gamma)) {
        GradBuffer(gamma) += g.cwiseProduct(normalized).colwise().sum();
      }
      if (NeedsGrad(beta)) GradBuffer(beta) += g.colwise().sum();
      if (NeedsGrad(x)) {
        const Mat dn = g.array().rowwise() * value(gamma).row(0).array();
        Mat& gx = GradBuffer(x);
        for (Eigen::Index i = 0; i < dn.rows(); ++i) {
          const S mean_dn = dn.row(i).mean();
          const S mean_dn_n = dn.row(i).cwiseProduct(normalized.row(i)).mean();
          gx.row(i).array() += inv_std(i) * (dn.row(i).array() - mean_dn -
                                             normalized.row(i).array() * mean_dn_n);
        }
      }
    };
  }
  return r;
}

template <typename S>
Var Tape<S>::Attention(Var q, Var k, Var v, int batch, int q_len, int k_len,
                       int heads) {
  Check(q);
  Check(k);
  Check(v);
  const Mat& qv = value(q);
  const Mat& kv = value(k);
  const Mat& vv = value(v);
  const auto d = qv.cols();
  if (heads <= 0 || d % heads != 0 || kv.cols() != d || vv.cols() != d ||
      qv.rows() != static_cast<Eigen::Index>(batch) * q_len ||
      kv.rows() != static_cast<Eigen::Index>(batch) * k_len ||
      vv.rows() != kv.rows()) {
    throw std::invalid_argument("Attention shape mismatch: q " +
                                Shape(qv.rows(), qv.cols()) + ", k " +
                                Shape(kv.rows(), kv.cols()) + ", v " +
                                Shape(vv.rows(), vv.cols()));
  }
  const int dk = static_cast<int>(d / heads);
  const S scale = S(1) / std::sqrt(static_cast<S>(dk));
  // One q_len x k_len probability block per (sample, head).
  std::vector<Mat> probs(static_cast<std::size_t>(batch) * heads);
  Mat out(qv.rows(), d);
  for (int b = 0; b < batch; ++b) {
    for (int h = 0; h < heads; ++h) {
      auto qb = qv.block(b * q_len, h * dk, q_len, dk);
      auto kb = kv.block(b * k_len, h * dk, k_len, dk);
      auto vb = vv.block(b * k_len, h * dk, k_len, dk);
      Mat scores = (qb * kb.transpose()) * scale;
      for (Eigen::Index i = 0; i < scores.rows(); ++i) {
        const S m = scores.row(i).maxCoeff();
        scores.row(i) = (scores.row(i).array() - m).exp();
        scores.row(i) /= scores.row(i).sum();
      }
      out.block(b * q_len, h * dk, q_len, dk).noalias() = scores * vb;
      probs[static_cast<std::size_t>(b) * heads + h] = std::move(scores);
    }
  }
  Var r = Push(std::move(out), NeedsGrad(q) || NeedsGrad(k) || NeedsGrad(v));
  if (nodes_[r.id].needs_grad) {
    nodes_[r.id].backward = [this, q, k, v, r, batch, q_len, k_len, heads, dk,
                             scale, probs = std::move(probs)] {
      const Mat& g = nodes_[r.id].grad;
      const Mat& qv = value(q);
      const Mat& kv = value(k);
      const Mat& vv = value(v);
      Mat* gq = NeedsGrad(q) ? &GradBuffer(q) : nullptr;
      Mat* gk = NeedsGrad(k) ? &GradBuffer(k) : nullptr;
      Mat* gv = NeedsGrad(v) ? &GradBuffer(v) : nullptr;
      for (int b = 0; b < batch; ++b) {
        for (int h = 0; h < heads; ++h) {
          const Mat& p = probs[static_cast<std::size_t>(b) * heads + h];
          auto go = g.block(b * q_len, h * dk, q_len, dk);
          auto vb = vv.block(b * k_len, h * dk, k_len, dk);
          if (gv) {
            gv->block(b * k_len, h * dk, k_len, dk).noalias() +=
                p.transpose() * go;
          }
          if (!gq && !gk) continue;
          Mat dp = go * vb.transpose();
          // Softmax Jacobian-vector product, row by row.
          Eigen::Matrix<S, Eigen::Dynamic, 1> row_dot =
              dp.cwiseProduct(p).rowwise().sum();
          Mat ds = p.cwiseProduct(dp.colwise() - row_dot) * scale;
          if (gq) {
            gq->block(b * q_len, h * dk, q_len, dk).noalias() +=
                ds * kv.block(b * k_len, h * dk, k_len, dk);
          }
          if (gk) {
            gk->block(b * k_len, h * dk, k_len, dk).noalias() +=
                ds.transpose() * qv.block(b * q_len, h * dk, q_len, dk);
          }
        }
      }
    };
  }
  return r;
}

template <typename S>
Var Tape<S>::ConcatCols(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("ConcatCols of nothing");
  Eigen::Index rows = -1;
  Eigen::Index cols = 0;
  bool needs = false;
  for (Var p : parts) {
    Check(p);
    const Mat& pv = value(p);
    if (rows >= 0 && pv.rows() != rows) {
      throw std::invalid_argument("ConcatCols row count mismatch");
    }
    rows = pv.rows();
    cols += pv.cols();
    needs = needs || NeedsGrad(p);
  }
  Mat out(rows, cols);
  Eigen::Index offset = 0;
  for (Var p : parts) {
    const Mat& pv = value(p);
    out.middleCols(offset, pv.cols()) = pv;
    offset += pv.cols();
  }
  Var r = Push(std::move(out), needs);
  if (nodes_[r.id].needs_grad) {
    std::vector<Var> inputs(parts.begin(), parts.end());
    nodes_[r.id].backward = [this, inputs = std::move(inputs), r] {
      const Mat& g = nodes_[r.id].grad;
      Eigen::Index offset = 0;
      for (Var p : inputs) {
        const auto c = value(p).cols();
        if (NeedsGrad(p)) GradBuffer(p) += g.middleCols(offset, c);
        offset += c;
      }
    };
  }
  return r;
}

template <typename S>
Var Tape<S>::ConcatRows(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("ConcatRows of nothing");
  Eigen::Index cols = -1;
  Eigen::Index rows = 0;
  bool needs = false;
  for (Var p : parts) {
    Check(p);
    const Mat& pv = value(p);
    if (cols >= 0 && pv.cols() != cols) {
      throw std::invalid_argument("ConcatRows column count mismatch");
    }
    cols = pv.cols();
    rows += pv.rows();
    needs = needs || NeedsGrad(p);
  }
  Mat out(rows, cols);
  Eigen::Index offset = 0;
  for (Var p : parts) {
    const Mat& pv = value(p);
    out.middleRows(offset, pv.rows()) = pv;
    offset += pv.rows();
  }
  Var r = Push(std::move(out), needs);
  if (nodes_[r.id].needs_grad) {
    std::vector<Var> inputs(parts.begin(), parts.end());
    nodes_[r.id].backward = [this, inputs = std::move(inputs), r] {
      const Mat& g = nodes_[r.id].grad;
      Eigen::Index offset = 0;
      for (Var p : inputs) {
        const auto n = value(p).rows();
        if (NeedsGrad(p)) GradBuffer(p) += g.middleRows(offset, n);
        offset += n;
      }
    };
  }
  return r;
}

template <typename S>
Var Tape<S>::SliceCols(Var a, int start, int count) {
  Check(a);
  const Mat& av = value(a);
  if (start < 0 || count < 0 || start + count > av.cols()) {
    throw std::invalid_argument("SliceCols range out of bounds");
  }
  Var r = Push(av.middleCols(start, count), NeedsGrad(a));
  if (nodes_[r.id].needs_grad) {
    nodes_[r.id].backward = [this, a, r, start, count] {
      GradBuffer(a).middleCols(start, count) += nodes_[r.id].grad;
    };
  }
  return r;
}

template <typename S>
Var Tape<S>::GatherRows(Var a, std::vector<int> index) {
  Check(a);
  const Mat& av = value(a);
  Mat out(static_cast<Eigen::Index>(index.size()), av.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0 || index[i] >= av.rows()) {
      throw std::invalid_argument("GatherRows index out of range");
    }
    out.row(static_cast<Eigen::Index>(i)) = av.row(index[i]);
  }
  Var r = Push(std::move(out), NeedsGrad(a));
  if (nodes_[r.id].needs_grad) {
    nodes_[r.id].backward = [this, a, r, index = std::move(index)] {
      const Mat& g = nodes_[r.id].grad;
      Mat& ga = GradBuffer(a);
      for (std::size_t i = 0; i < index.size(); ++i) {
        ga.row(index[i]) += g.row(static_cast<Eigen::Index>(i));
      }
    };
  }
  return r;
}

template <typename S>
Var Tape<S>::SegmentSum(Var a, int group) {
  Check(a);
  const Mat& av = value(a);
  if (group <= 0 || av.rows() % group != 0) {
    throw std::invalid_argument("SegmentSum group does not divide rows");
  }
  const auto segments = av.rows() / group;
  Mat out(segments, av.cols());
  for (Eigen::Index s = 0; s < segments; ++s) {
    out.row(s) = av.middleRows(s * group, group).colwise().sum();
  }
  Var r = Push(std::move(out), NeedsGrad(a));
  if (nodes_[r.id].needs_grad) {
    nodes_[r.id].backward = [this, a, r, group] {
      const Mat& g = nodes_[r.id].grad;
      Mat& ga = GradBuffer(a);
      for (Eigen::Index s = 0; s < g.rows(); ++s) {
        ga.middleRows(s * group, group).rowwise() += g.row(s);
      }
    };
  }
  return r;
}

template <typename S>
Var Tape<S>::SquaredError(Var pred, const Mat& target, S normalizer) {
  Check(pred);
  const Mat& pv = value(pred);
  if (pv.rows() != target.rows() || pv.cols() != target.cols()) {
    throw std::invalid_argument("SquaredError shape mismatch");
  }
  Mat diff = pv - target;
  Mat out(1, 1);
  out(0, 0) = diff.squaredNorm() / normalizer;
  Var r = Push(std::move(out), NeedsGrad(pred));
  if (nodes_[r.id].needs_grad) {
    nodes_[r.id].backward = [this, pred, r, normalizer,
                             diff = std::move(diff)] {
      GradBuffer(pred) += diff * (S(2) * nodes_[r.id].grad(0, 0) / normalizer);
    };
  }
  return r;
}

template <typename S>
Var Tape<S>::BinaryCrossEntropyWithLogits(Var logits, const Mat& target,
                                          S normalizer) {
  Check(logits);
  const Mat& z = value(logits);
  if (z.rows() != target.rows() || z.cols() != target.cols()) {
    throw std::invalid_argument("BinaryCrossEntropy shape mismatch");
  }
  // -[y log s + (1 - y) log(1 - s)] = softplus(z) - y z, with
  // softplus(z) = max(z, 0) + log1p(exp(-|z|)).
  const auto za = z.array();
  const auto softplus = za.max(S(0)) + (-za.abs()).exp().log1p();
  Mat out(1, 1);
  out(0, 0) = (softplus - target.array() * za).sum() / normalizer;
  Var r = Push(std::move(out), NeedsGrad(logits));
  if (nodes_[r.id].needs_grad) {
    nodes_[r.id].backward = [this, logits, r, normalizer, target] {
      const Mat& z = value(logits);
      const Mat s = (S(1) + (-z.array()).exp()).inverse().matrix();
      GradBuffer(logits) += (s - target) * (nodes_[r.id].grad(0, 0) / normalizer);
    };
  }
  return r;
}

template <typename S>
void Tape<S>::Backward(Var loss) {
  Check(loss);
  if (!record_) throw std::logic_error("Backward on a tape without gradients");
  const Mat& lv = value(loss);
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw std::invalid_argument("Backward target must be a 1x1 scalar");
  }
  if (!nodes_[loss.id].needs_grad) return;
  GradBuffer(loss).setOnes();
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.backward && n.grad.size() != 0) n.backward();
  }
}

template class Tape<float>;
template class Tape<double>;

}  // namespace mftr::ad
