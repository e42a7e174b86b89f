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
#include "mftr/nn.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

namespace mftr {
namespace {

using ad::Tape;
using ad::Var;
using M = nn::Matrix<double>;
using testing::MaxGradRelError;

constexpr double kTol = 1e-6;

class OpGradient : public ::testing::Test {
 protected:
  nn::Parameter<double>& Make(int rows, int cols, double scale = 1.0) {
    auto& p = params_.Create("p" + std::to_string(params_.size()), rows, cols);
    nn::FillUniform(p.value, scale, rng_);
    return p;
  }
  // Reduces any matrix to a scalar with fixed random weights so every
  // output entry receives a distinct gradient.
  Var Reduce(Tape<double>& tape, Var x) {
    const M& v = tape.value(x);
    if (weights_.rows() != v.rows() || weights_.cols() != v.cols()) {
      weights_.resize(v.rows(), v.cols());
      nn::FillUniform(weights_, 1.0, rng_);
    }
    Var w = tape.Constant(weights_);
    Var prod = tape.Mul(x, w);
    Var ones = tape.Constant(M::Ones(v.cols(), 1));
    Var col = tape.MatMul(prod, ones);
    Var ones_t = tape.Constant(M::Ones(1, v.rows()));
    return tape.MatMul(ones_t, col);
  }
  double Check(const std::function<Var(Tape<double>&)>& f) {
    return MaxGradRelError(params_, [&](Tape<double>& t) { return Reduce(t, f(t)); });
  }

  nn::ParameterSet<double> params_;
  nn::Rng rng_{42};
  M weights_;
};

TEST_F(OpGradient, MatMulLinearAdd) {
  auto& a = Make(3, 4);
  auto& b = Make(4, 2);
  auto& bias = Make(1, 2);
  auto& c = Make(3, 2);
  EXPECT_LT(Check([&](Tape<double>& t) {
              Var y = t.Linear(t.Param(a), t.Param(b), t.Param(bias));
              return t.Add(t.MatMul(t.Param(a), t.Param(b)), t.Add(y, t.Param(c)));
            }),
            kTol);
}

TEST_F(OpGradient, ElementwiseOps) {
  auto& a = Make(3, 5, 2.0);
  auto& b = Make(3, 5);
  auto& row = Make(1, 5);
  EXPECT_LT(Check([&](Tape<double>& t) {
              Var x = t.AddRowBroadcast(t.Mul(t.Param(a), t.Param(b)), t.Param(row));
              Var s = t.Add(t.Sigmoid(x), t.Tanh(t.Scale(x, 0.7)));
              return t.Add(s, t.Relu(t.Param(a)));
            }),
            kTol);
}

TEST_F(OpGradient, LayerNorm) {
  auto& x = Make(4, 6, 3.0);
  auto& g = Make(1, 6);
  auto& b = Make(1, 6);
  EXPECT_LT(Check([&](Tape<double>& t) {
              return t.LayerNorm(t.Param(x), t.Param(g), t.Param(b), 1e-5);
            }),
            kTol);
}

TEST_F(OpGradient, AttentionMultiHeadCross) {
  auto& q = Make(2 * 3, 4);
  auto& k = Make(2 * 5, 4);
  auto& v = Make(2 * 5, 4);
  EXPECT_LT(Check([&](Tape<double>& t) {
              return t.Attention(t.Param(q), t.Param(k), t.Param(v), 2, 3, 5, 2);
            }),
            kTol);
}

TEST_F(OpGradient, ShapeOps) {
  auto& a = Make(4, 3);
  auto& b = Make(4, 2);
  auto& c = Make(2, 5);
  EXPECT_LT(Check([&](Tape<double>& t) {
              std::vector<Var> cols = {t.Param(a), t.Param(b)};
              Var ab = t.ConcatCols(cols);  // 4 x 5
              std::vector<Var> rows = {ab, t.Param(c)};
              Var all = t.ConcatRows(rows);  // 6 x 5
              Var g = t.GatherRows(all, {5, 0, 0, 3, 2, 1});
              Var s = t.SegmentSum(g, 2);  // 3 x 5
              return t.SliceCols(s, 1, 3);
            }),
            kTol);
}

TEST_F(OpGradient, Losses) {
  auto& p = Make(3, 2);
  auto& logits = Make(3, 4, 3.0);
  M target(3, 2);
  target << 0.1, -0.2, 0.3, 0.4, -0.5, 0.6;
  M labels(3, 4);
  labels << 1, 0, 0, 1, 0, 1, 1, 0, 0, 0, 0, 1;
  EXPECT_LT(MaxGradRelError(params_,
                            [&](Tape<double>& t) {
                              return t.Add(t.SquaredError(t.Param(p), target, 3.0),
                                           t.BinaryCrossEntropyWithLogits(
                                               t.Param(logits), labels, 12.0));
                            }),
            kTol);
}

TEST(Losses, BinaryCrossEntropyToyValue) {
  Tape<double> t;
  M logits(1, 2);
  logits << 0.0, std::log(3.0);  // sigmoid: 0.5, 0.75
  M labels(1, 2);
  labels << 1.0, 0.0;
  Var l = t.BinaryCrossEntropyWithLogits(t.Constant(logits), labels, 2.0);
  // (-ln 0.5 - ln 0.25) / 2 = 1.5 ln 2.
  EXPECT_NEAR(t.value(l)(0, 0), 1.5 * std::log(2.0), 1e-12);
}

TEST(Losses, BinaryCrossEntropyFiniteForHugeLogits) {
  Tape<double> t;
  M logits(1, 2);
  logits << 800.0, -800.0;
  M labels(1, 2);
  labels << 0.0, 1.0;
  Var l = t.BinaryCrossEntropyWithLogits(t.Constant(logits), labels, 1.0);
  EXPECT_NEAR(t.value(l)(0, 0), 1600.0, 1e-9);
}

TEST(Losses, SquaredErrorValue) {
  Tape<double> t;
  M pred(2, 2);
  pred << 1, 2, 3, 4;
  M target(2, 2);
  target << 0, 2, 3, 6;
  EXPECT_DOUBLE_EQ(t.value(t.SquaredError(t.Constant(pred), target, 2.0))(0, 0), 2.5);
}

TEST(Tape, InferenceTapeRejectsBackward) {
  Tape<double> t(false);
  Var x = t.Constant(M::Ones(1, 1));
  EXPECT_THROW(t.Backward(x), std::logic_error);
}

TEST(Tape, BackwardRequiresScalar) {
  nn::ParameterSet<double> ps;
  auto& p = ps.Create("p", 2, 2);
  Tape<double> t;
  EXPECT_THROW(t.Backward(t.Param(p)), std::invalid_argument);
}

TEST(Attention, HandComputedSingleHead) {
  // softmax([1*1, 1*0] / sqrt 2) over keys (1,0) and (0,1) for query (1,0).
  Tape<double> t;
  M q(1, 2), k(2, 2), v(2, 2);
  q << 1, 0;
  k << 1, 0, 0, 1;
  v << 10, 0, 0, 20;
  Var out = t.Attention(t.Constant(q), t.Constant(k), t.Constant(v), 1, 1, 2, 1);
  const double w0 = std::exp(1 / std::sqrt(2.0));
  const double p0 = w0 / (w0 + 1.0);
  EXPECT_NEAR(t.value(out)(0, 0), 10 * p0, 1e-12);
  EXPECT_NEAR(t.value(out)(0, 1), 20 * (1 - p0), 1e-12);
}

TEST(Attention, HeadsAreIndependentGroups) {
  // Two heads of width 1: each is a scalar attention with scale 1.
  Tape<double> t;
  M q(1, 2), k(2, 2), v(2, 2);
  q << 1, -1;
  k << 2, 0, 0, 3;
  v << 1, 5, 3, 7;
  Var out = t.Attention(t.Constant(q), t.Constant(k), t.Constant(v), 1, 1, 2, 2);
  const double a0 = std::exp(2.0) / (std::exp(2.0) + std::exp(0.0));
  const double a1 = std::exp(0.0) / (std::exp(0.0) + std::exp(-3.0));
  EXPECT_NEAR(t.value(out)(0, 0), a0 * 1 + (1 - a0) * 3, 1e-12);
  EXPECT_NEAR(t.value(out)(0, 1), a1 * 5 + (1 - a1) * 7, 1e-12);
}

TEST(MultiHeadAttention, MatchesManualProjectionOracle) {
  nn::ParameterSet<double> ps;
  nn::Rng rng(5);
  nn::MultiHeadAttention<double> mha(ps, "mha", 4, 2, rng);
  M x(3, 4);
  nn::FillUniform(x, 1.0, rng);
  Tape<double> t(false);
  Var xv = t.Constant(x);
  const M out = t.value(mha.Forward(t, xv, xv, xv, 1, 3, 3));

  auto proj = [&](const nn::Linear<double>& l) {
    M y = x * l.weight().value;
    y.rowwise() += l.bias().value.row(0);
    return y;
  };
  const M q = proj(mha.query_proj()), k = proj(mha.key_proj()), v = proj(mha.value_proj());
  M concat(3, 4);
  for (int h = 0; h < 2; ++h) {
    const M qh = q.middleCols(2 * h, 2), kh = k.middleCols(2 * h, 2), vh = v.middleCols(2 * h, 2);
    M s = qh * kh.transpose() / std::sqrt(2.0);
    for (int r = 0; r < 3; ++r) {
      const double mx = s.row(r).maxCoeff();
      s.row(r) = (s.row(r).array() - mx).exp();
      s.row(r) /= s.row(r).sum();
    }
    concat.middleCols(2 * h, 2) = s * vh;
  }
  M expected = concat * mha.output_proj().weight().value;
  expected.rowwise() += mha.output_proj().bias().value.row(0);
  EXPECT_LT((out - expected).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(EncoderLayer, FiniteDifferenceGradient) {
  nn::ParameterSet<double> ps;
  nn::Rng rng(9);
  nn::EncoderLayer<double> layer(ps, "enc", 8, 2, 16, rng);
  M x(2 * 3, 8);
  nn::FillUniform(x, 1.0, rng);
  M w(2 * 3, 8);
  nn::FillUniform(w, 1.0, rng);
  const double err = MaxGradRelError(ps, [&](Tape<double>& t) {
    Var y = layer.Forward(t, t.Constant(x), 2, 3);
    return t.SquaredError(y, w, 1.0);
  });
  EXPECT_LT(err, 1e-5);
}

TEST(EncoderLayer, ZeroedResidualBranchesGiveDoubleLayerNorm) {
  nn::ParameterSet<double> ps;
  nn::Rng rng(2);
  nn::EncoderLayer<double> layer(ps, "enc", 6, 3, 12, rng);
  layer.ZeroResidualBranches();
  M x(4, 6);
  nn::FillUniform(x, 2.0, rng);
  Tape<double> t(false);
  const M y = t.value(layer.Forward(t, t.Constant(x), 2, 2));
  auto ln = [](M m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      const double mean = m.row(r).mean();
      const double var = (m.row(r).array() - mean).square().mean();
      m.row(r) = (m.row(r).array() - mean) / std::sqrt(var + 1e-5);
    }
    return m;
  };
  EXPECT_LT((y - ln(ln(x))).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Lstm, FiniteDifferenceGradient) {
  nn::ParameterSet<double> ps;
  nn::Rng rng(4);
  nn::Lstm<double> lstm(ps, "lstm", 3, 4, 2, rng);
  M x(2 * 3, 3);
  nn::FillUniform(x, 1.0, rng);
  M w(2 * 3, 4);
  nn::FillUniform(w, 1.0, rng);
  const double err = MaxGradRelError(ps, [&](Tape<double>& t) {
    return t.SquaredError(lstm.Forward(t, t.Constant(x), 2, 3), w, 1.0);
  });
  EXPECT_LT(err, 1e-5);
}

TEST(Lstm, ZeroWeightsGiveZeroState) {
  nn::ParameterSet<double> ps;
  nn::Rng rng(4);
  nn::Lstm<double> lstm(ps, "lstm", 2, 3, 1, rng);
  for (auto& p : ps) p.value.setZero();
  Tape<double> t(false);
  const M y = t.value(lstm.Forward(t, t.Constant(M::Ones(4, 2)), 2, 2));
  EXPECT_EQ(y.rows(), 4);
  EXPECT_EQ(y.cols(), 3);
  EXPECT_EQ(y.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Lstm, SingleStepHandOracle) {
  // One unit: i = f = o = sigmoid(1), g = tanh(1) -> c = i g, h = o tanh(c).
  nn::ParameterSet<double> ps;
  nn::Rng rng(1);
  nn::Lstm<double> lstm(ps, "lstm", 1, 1, 1, rng);
  for (auto& p : ps) p.value.setZero();
  ps.Find("lstm.0.input.bias")->value.setOnes();
  Tape<double> t(false);
  const M y = t.value(lstm.Forward(t, t.Constant(M::Zero(1, 1)), 1, 1));
  const double s = 1 / (1 + std::exp(-1.0));
  EXPECT_NEAR(y(0, 0), s * std::tanh(s * std::tanh(1.0)), 1e-12);
}

TEST(Positions, SinusoidalTable) {
  const M pe = nn::SinusoidalPositions<double>(4, 6);
  for (int pos = 0; pos < 4; ++pos) {
    for (int i = 0; i < 3; ++i) {
      const double angle = pos / std::pow(10000.0, 2.0 * i / 6);
      EXPECT_NEAR(pe(pos, 2 * i), std::sin(angle), 1e-12);
      EXPECT_NEAR(pe(pos, 2 * i + 1), std::cos(angle), 1e-12);
    }
  }
}

TEST(Positions, SampleRows) {
  EXPECT_EQ(nn::SampleRows(2, 5, 3, 2), (std::vector<int>{3, 4, 8, 9}));
}

}  // namespace
}  // namespace mftr
