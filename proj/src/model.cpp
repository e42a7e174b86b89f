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

#include "mftr/model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

namespace mftr {

namespace {

void Require(bool ok, const std::string& field, const std::string& what) {
  if (!ok) throw std::invalid_argument("model config: " + field + " " + what);
}

template <typename S>
nn::Matrix<S> TiledPositions(int batch, int len, int d_model) {
  const nn::Matrix<S> table = nn::SinusoidalPositions<S>(len, d_model);
  nn::Matrix<S> tiled(static_cast<Eigen::Index>(batch) * len, d_model);
  for (int b = 0; b < batch; ++b) tiled.middleRows(b * len, len) = table;
  return tiled;
}

}  // namespace

void ModelConfig::Validate() const {
  grid.Validate();
  Require(history >= 1, "history", "must be at least 1");
  Require(horizon >= 1, "horizon", "must be at least 1");
  Require(horizon <= history, "horizon",
          "must not exceed history (the position head reads the last T "
          "temporal rows)");
  Require(d_model >= 1, "d_model", "must be positive");
  Require(c_head >= 1 && c_eye >= 1, "c_head/c_eye", "must be positive");
  Require(c_head + c_eye == d_model, "c_head + c_eye", "must equal d_model");
  Require(recurrent_hidden == c_head && recurrent_hidden == c_eye,
          "recurrent_hidden",
          "must equal c_head and c_eye (recurrent outputs keep the "
          "projected width)");
  Require(recurrent_layers >= 1, "recurrent_layers", "must be at least 1");
  Require(encoder_layers >= 0, "encoder_layers", "must not be negative");
  Require(attention_heads >= 1 && d_model % attention_heads == 0,
          "attention_heads", "must divide d_model");
  Require(ffn_hidden >= 1, "ffn_hidden", "must be positive");
  Require(!pos_head_hidden.empty(), "pos_head_hidden", "must not be empty");
  for (int w : pos_head_hidden) {
    Require(w >= 1, "pos_head_hidden", "widths must be positive");
  }
  Require(tile_head_hidden >= 1, "tile_head_hidden", "must be positive");
  Require(descriptor_dim >= 1, "descriptor_dim", "must be positive");
  Require(gamma > 0.0 && gamma < 1.0, "gamma", "must lie in (0, 1)");
  Require(alpha >= 0.0, "alpha", "must not be negative");
  Require(beta >= 0.0, "beta", "must not be negative");
  Require(freeze_backbone, "freeze_backbone",
          "must be true: descriptors come from a frozen extractor");
  Require(!(ablation.no_position_head && ablation.no_tile_head),
          "ablation", "cannot remove both prediction heads");
}

TileMask Threshold(const ScoreMap& scores, double gamma) {
  std::vector<std::uint8_t> values(static_cast<std::size_t>(scores.size()));
  for (Eigen::Index r = 0; r < scores.rows(); ++r) {
    for (Eigen::Index c = 0; c < scores.cols(); ++c) {
      values[static_cast<std::size_t>(r * scores.cols() + c)] =
          scores(r, c) > gamma ? 1 : 0;
    }
  }
  return TileMask(static_cast<int>(scores.rows()),
                  static_cast<int>(scores.cols()), std::move(values));
}

double LossPos(const HeadPrediction& predicted, const Eigen::MatrixXd& truth) {
  if (predicted.rows() != truth.rows() || predicted.cols() != truth.cols() ||
      predicted.rows() == 0) {
    throw std::invalid_argument("LossPos shape mismatch");
  }
  return (predicted - truth).squaredNorm() / static_cast<double>(predicted.rows());
}

double LossCls(std::span<const ScoreMap> scores,
               std::span<const TileMask> truth) {
  if (scores.size() != truth.size() || scores.empty()) {
    throw std::invalid_argument("LossCls needs one mask per score map");
  }
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const ScoreMap& s = scores[i];
    const TileMask& y = truth[i];
    if (s.rows() != y.rows() || s.cols() != y.cols()) {
      throw std::invalid_argument("LossCls score map and mask shapes differ");
    }
    for (int r = 0; r < y.rows(); ++r) {
      for (int c = 0; c < y.cols(); ++c) {
        const double p = std::clamp(s(r, c), kScoreClampEps, 1.0 - kScoreClampEps);
        sum += y.at(r, c) ? std::log(p) : std::log(1.0 - p);
        ++count;
      }
    }
  }
  return -sum / static_cast<double>(count);
}

double TotalLoss(double loss_pos, double loss_cls, const ModelConfig& config) {
  const double alpha = config.ablation.no_position_head ? 0.0 : config.alpha;
  const double beta = config.ablation.no_tile_head ? 0.0 : config.beta;
  return alpha * loss_pos + beta * loss_cls;
}

template <typename S>
Mftr<S>::Mftr(const ModelConfig& config, std::uint64_t seed)
    : config_(config), seed_(seed) {
  config_.Validate();
  nn::Rng rng(seed);
  const ModelConfig& c = config_;
  head_in_ = nn::Linear<S>(params_, "temporal.head_fc", 2, c.c_head, rng);
  eye_in_ = nn::Linear<S>(params_, "temporal.eye_fc", 2, c.c_eye, rng);
  head_lstm_ = nn::Lstm<S>(params_, "temporal.head_lstm", c.c_head,
                           c.recurrent_hidden, c.recurrent_layers, rng);
  eye_lstm_ = nn::Lstm<S>(params_, "temporal.eye_lstm", c.c_eye,
                          c.recurrent_hidden, c.recurrent_layers, rng);
  temporal_encoder_ =
      nn::EncoderStack<S>(params_, "temporal.encoder", c.encoder_layers,
                          c.d_model, c.attention_heads, c.ffn_hidden, rng);
  visual_in_ =
      nn::Linear<S>(params_, "visual.fc", c.descriptor_dim, c.d_model, rng);
  visual_encoder_ =
      nn::EncoderStack<S>(params_, "visual.encoder", c.encoder_layers,
                          c.d_model, c.attention_heads, c.ffn_hidden, rng);
  type_temporal_ = &params_.Create("fusion.type_temporal", 1, c.d_model);
  type_visual_ = &params_.Create("fusion.type_visual", 1, c.d_model);
  nn::FillNormal(type_temporal_->value, S(0.02), rng);
  nn::FillNormal(type_visual_->value, S(0.02), rng);
  fusion_encoder_ =
      nn::EncoderStack<S>(params_, "fusion.encoder", c.encoder_layers,
                          c.d_model, c.attention_heads, c.ffn_hidden, rng);
  std::vector<int> pos_widths = {c.d_model};
  pos_widths.insert(pos_widths.end(), c.pos_head_hidden.begin(),
                    c.pos_head_hidden.end());
  pos_widths.push_back(2);
  pos_head_ = nn::Mlp<S>(params_, "position_head", pos_widths, rng);
  tile_head_ = nn::Mlp<S>(
      params_, "tile_head",
      {c.d_model, c.tile_head_hidden, c.grid.num_tiles()}, rng);
}

template <typename S>
ad::Var Mftr<S>::TemporalBranch(ad::Tape<S>& tape, const Mat& head,
                                const Mat& eye, int batch) const {
  const int t = config_.history;
  if (head.rows() != static_cast<Eigen::Index>(batch) * t || head.cols() != 2 ||
      eye.rows() != head.rows() || eye.cols() != 2) {
    throw std::invalid_argument("temporal inputs must be batch*t x 2");
  }
  if (!head.allFinite() || !eye.allFinite()) {
    throw std::invalid_argument("temporal inputs contain non-finite values");
  }
  ad::Var h = head_in_.Forward(tape, tape.Constant(head));
  ad::Var e = eye_in_.Forward(tape, tape.Constant(eye));
  h = head_lstm_.Forward(tape, h, batch, t);
  e = eye_lstm_.Forward(tape, e, batch, t);
  const std::array<ad::Var, 2> parts = {h, e};
  ad::Var joined = tape.ConcatCols(parts);
  if (config_.ablation.no_temporal_transformer) return joined;
  return temporal_encoder_.Forward(tape, joined, batch, t);
}

template <typename S>
ad::Var Mftr<S>::VisualTokens(ad::Tape<S>& tape, const Mat& descriptors,
                              int batch) const {
  const int len = config_.history + config_.horizon;
  if (descriptors.rows() != static_cast<Eigen::Index>(batch) * len ||
      descriptors.cols() != config_.descriptor_dim) {
    throw std::invalid_argument(
        "visual descriptors must be batch*(t+T) x " +
        std::to_string(config_.descriptor_dim) + ", got " +
        std::to_string(descriptors.rows()) + "x" +
        std::to_string(descriptors.cols()));
  }
  ad::Var reduced = visual_in_.Forward(tape, tape.Constant(descriptors));
  return tape.Add(reduced, tape.Constant(TiledPositions<S>(batch, len,
                                                           config_.d_model)));
}

template <typename S>
ad::Var Mftr<S>::VisualBranch(ad::Tape<S>& tape, const Mat& descriptors,
                              int batch) const {
  ad::Var tokens = VisualTokens(tape, descriptors, batch);
  if (config_.ablation.no_visual_transformer) return tokens;
  return visual_encoder_.Forward(tape, tokens, batch,
                                 config_.history + config_.horizon);
}

template <typename S>
ad::Var Mftr<S>::Fuse(ad::Tape<S>& tape, ad::Var temporal, ad::Var visual,
                      int batch) const {
  const int t = config_.history;
  const int horizon = config_.horizon;
  const int visual_len = t + horizon;
  if (config_.ablation.no_fusion) {
    ad::Var future =
        tape.GatherRows(visual, nn::SampleRows(batch, visual_len, t, horizon));
    ad::Var mean = tape.Scale(tape.SegmentSum(temporal, t), S(1) / S(t));
    std::vector<int> repeat;
    for (int b = 0; b < batch; ++b) repeat.insert(repeat.end(), horizon, b);
    return tape.Add(future, tape.GatherRows(mean, std::move(repeat)));
  }

  ad::Var temporal_tokens;
  int temporal_len = t;
  if (config_.fusion_temporal_mode == FusionTemporalMode::kSum) {
    temporal_tokens = tape.SegmentSum(temporal, t);
    temporal_len = 1;
  } else {
    temporal_tokens = temporal;
    if (config_.fusion_temporal_positions) {
      temporal_tokens = tape.Add(
          temporal_tokens,
          tape.Constant(TiledPositions<S>(batch, t, config_.d_model)));
    }
  }
  temporal_tokens =
      tape.AddRowBroadcast(temporal_tokens, tape.Param(*type_temporal_));
  ad::Var visual_tokens =
      tape.AddRowBroadcast(visual, tape.Param(*type_visual_));

  const std::array<ad::Var, 2> parts = {temporal_tokens, visual_tokens};
  ad::Var stacked = tape.ConcatRows(parts);
  const int joint_len = temporal_len + visual_len;
  std::vector<int> order;
  order.reserve(static_cast<std::size_t>(batch) * joint_len);
  for (int b = 0; b < batch; ++b) {
    for (int i = 0; i < temporal_len; ++i) order.push_back(b * temporal_len + i);
    for (int j = 0; j < visual_len; ++j) {
      order.push_back(batch * temporal_len + b * visual_len + j);
    }
  }
  ad::Var joint = tape.GatherRows(stacked, std::move(order));
  ad::Var fused = fusion_encoder_.Forward(tape, joint, batch, joint_len);
  return tape.GatherRows(
      fused, nn::SampleRows(batch, joint_len, joint_len - horizon, horizon));
}

template <typename S>
ad::Var Mftr<S>::PositionHead(ad::Tape<S>& tape, ad::Var temporal,
                              int batch) const {
  const int t = config_.history;
  const int horizon = config_.horizon;
  ad::Var all = pos_head_.Forward(tape, temporal);
  return tape.GatherRows(all, nn::SampleRows(batch, t, t - horizon, horizon));
}

template <typename S>
ad::Var Mftr<S>::TileHead(ad::Tape<S>& tape, ad::Var fused) const {
  return tile_head_.Forward(tape, fused);
}

template <typename S>
ForwardVars Mftr<S>::Forward(ad::Tape<S>& tape,
                             const ModelInputs<S>& inputs) const {
  if (inputs.batch <= 0) throw std::invalid_argument("empty batch");
  ForwardVars vars;
  vars.temporal = TemporalBranch(tape, inputs.head, inputs.eye, inputs.batch);
  vars.visual = VisualBranch(tape, inputs.visual, inputs.batch);
  vars.fused = Fuse(tape, vars.temporal, vars.visual, inputs.batch);
  if (!config_.ablation.no_position_head) {
    vars.head = PositionHead(tape, vars.temporal, inputs.batch);
  }
  if (!config_.ablation.no_tile_head) {
    vars.logits = TileHead(tape, vars.fused);
  }
  return vars;
}

template <typename S>
LossVars Mftr<S>::Loss(ad::Tape<S>& tape, const ForwardVars& vars,
                       const ModelTargets<S>& targets, int batch) const {
  const S rows = static_cast<S>(batch * config_.horizon);
  LossVars loss;
  if (vars.head.valid()) {
    loss.pos = tape.SquaredError(vars.head, targets.heads, rows);
  }
  if (vars.logits.valid()) {
    loss.cls = tape.BinaryCrossEntropyWithLogits(
        vars.logits, targets.masks, rows * config_.grid.num_tiles());
  }
  if (loss.pos.valid() && loss.cls.valid()) {
    loss.total = tape.Add(tape.Scale(loss.pos, static_cast<S>(config_.alpha)),
                          tape.Scale(loss.cls, static_cast<S>(config_.beta)));
  } else if (loss.pos.valid()) {
    loss.total = tape.Scale(loss.pos, static_cast<S>(config_.alpha));
  } else {
    loss.total = tape.Scale(loss.cls, static_cast<S>(config_.beta));
  }
  return loss;
}

template <typename S>
std::vector<Prediction> Mftr<S>::Decode(const ad::Tape<S>& tape,
                                        const ForwardVars& vars,
                                        int batch) const {
  const int horizon = config_.horizon;
  const TileGrid& grid = config_.grid;
  std::vector<Prediction> out(static_cast<std::size_t>(batch));
  for (int b = 0; b < batch; ++b) {
    Prediction& p = out[static_cast<std::size_t>(b)];
    if (vars.head.valid()) {
      p.head = tape.value(vars.head)
                   .middleRows(b * horizon, horizon)
                   .template cast<double>();
    }
    if (vars.logits.valid()) {
      const auto& logits = tape.value(vars.logits);
      for (int i = 0; i < horizon; ++i) {
        ScoreMap map(grid.n_rows, grid.n_cols);
        for (int r = 0; r < grid.n_rows; ++r) {
          for (int c = 0; c < grid.n_cols; ++c) {
            const double z = static_cast<double>(
                logits(b * horizon + i, r * grid.n_cols + c));
            map(r, c) = 1.0 / (1.0 + std::exp(-z));
          }
        }
        p.anchors.push_back(SelectViewport(Threshold(map, config_.gamma), grid));
        p.scores.push_back(std::move(map));
      }
    } else {
      for (int i = 0; i < horizon; ++i) {
        p.anchors.push_back(NearestViewport(
            HeadPosition::FromUnconstrained(p.head(i, 0), p.head(i, 1)), grid));
      }
    }
  }
  return out;
}

template <typename S>
std::vector<Prediction> Mftr<S>::Predict(const ModelInputs<S>& inputs) const {
  ad::Tape<S> tape(/*record_gradients=*/false);
  ForwardVars vars = Forward(tape, inputs);
  return Decode(tape, vars, inputs.batch);
}

template <typename S>
void Mftr<S>::ZeroResidualBranches() {
  temporal_encoder_.ZeroResidualBranches();
  visual_encoder_.ZeroResidualBranches();
  fusion_encoder_.ZeroResidualBranches();
}

template class Mftr<float>;
template class Mftr<double>;

std::string ToString(FusionTemporalMode mode) {
  return mode == FusionTemporalMode::kSum ? "sum" : "sequence";
}

FusionTemporalMode ParseFusionTemporalMode(const std::string& text) {
  if (text == "sequence") return FusionTemporalMode::kSequence;
  if (text == "sum") return FusionTemporalMode::kSum;
  throw std::invalid_argument("fusion_temporal_mode must be sequence or sum, got " +
                              text);
}

}  // namespace mftr
