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

// The multimodal fusion transformer viewport predictor.
//
//   head, eye  --FC--LSTM--concat--temporal encoder--> TF (t x C)
//   frames     --descriptor--FC--+positions--visual encoder--> V (t+T x C)
//   [TF ; V] + modality embeddings --fusion encoder--> last T rows = VP
//   TF --MLP--> head positions (last T rows)
//   VP --MLP--sigmoid--> one score map per future second
//
// The predicted viewport of each future second is the viewport-sized region
// covering the most tiles whose score exceeds gamma.

#pragma once

#include "mftr/geometry.hpp"
#include "mftr/nn.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace mftr {

enum class FusionTemporalMode {
  kSequence,  // t temporal tokens followed by t+T visual tokens
  kSum,       // one temporal token holding the sum of TF rows
};

struct AblationFlags {
  bool no_temporal_transformer = false;
  bool no_position_head = false;
  bool no_visual_transformer = false;
  bool no_fusion = false;
  bool no_tile_head = false;

  friend bool operator==(const AblationFlags&, const AblationFlags&) = default;
};

struct ModelConfig {
  TileGrid grid;
  int history = 5;  // t
  int horizon = 5;  // T
  int d_model = 512;
  int c_head = 256;
  int c_eye = 256;
  int recurrent_layers = 3;
  int recurrent_hidden = 256;
  int encoder_layers = 6;
  int attention_heads = 8;
  int ffn_hidden = 2048;
  std::vector<int> pos_head_hidden = {128, 64};
  int tile_head_hidden = 256;
  int descriptor_dim = 1000;
  double gamma = 0.55;
  double alpha = 0.35;
  double beta = 0.65;
  FusionTemporalMode fusion_temporal_mode = FusionTemporalMode::kSequence;
  // Sinusoidal positions on the temporal tokens entering the fusion encoder.
  bool fusion_temporal_positions = true;
  // Descriptors come from a frozen extractor; fine-tuning is not supported.
  bool freeze_backbone = true;
  AblationFlags ablation;

  // Throws std::invalid_argument naming the offending field.
  void Validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

using ScoreMap = Eigen::MatrixXd;      // n_rows x n_cols, entries in [0, 1]
using HeadPrediction = Eigen::MatrixXd;  // T x 2, (yaw, pitch) radians

// Tiles whose score strictly exceeds gamma.
TileMask Threshold(const ScoreMap& scores, double gamma);

// (1/T) sum_i ||hp_i - gt_i||^2.
double LossPos(const HeadPrediction& predicted, const Eigen::MatrixXd& truth);

inline constexpr double kScoreClampEps = 1e-7;

// Mean binary cross-entropy over every tile of every map; scores are clamped
// to [eps, 1 - eps].
double LossCls(std::span<const ScoreMap> scores,
               std::span<const TileMask> truth);

// alpha * l_pos + beta * l_cls, honoring the position/tile head ablations.
double TotalLoss(double loss_pos, double loss_cls, const ModelConfig& config);

// Batched model inputs in batch-major row layout.
template <typename S>
struct ModelInputs {
  int batch = 0;
  nn::Matrix<S> head;    // batch * t x 2
  nn::Matrix<S> eye;     // batch * t x 2
  nn::Matrix<S> visual;  // batch * (t + T) x descriptor_dim
};

template <typename S>
struct ModelTargets {
  nn::Matrix<S> heads;  // batch * T x 2
  nn::Matrix<S> masks;  // batch * T x n_rows * n_cols
};

struct ForwardVars {
  ad::Var temporal;  // batch * t x C
  ad::Var visual;    // batch * (t + T) x C
  ad::Var fused;     // batch * T x C
  ad::Var head;      // batch * T x 2, unset without a position head
  ad::Var logits;    // batch * T x N, unset without a tile head
};

struct LossVars {
  ad::Var pos;  // unset without a position head
  ad::Var cls;  // unset without a tile head
  ad::Var total;
};

struct Prediction {
  HeadPrediction head;  // empty without a position head
  std::vector<ScoreMap> scores;  // empty without a tile head
  std::vector<ViewportAnchor> anchors;
};

template <typename S>
class Mftr {
 public:
  using Mat = nn::Matrix<S>;

  Mftr(const ModelConfig& config, std::uint64_t seed);
  Mftr(const Mftr&) = delete;
  Mftr& operator=(const Mftr&) = delete;

  const ModelConfig& config() const { return config_; }
  std::uint64_t seed() const { return seed_; }
  nn::ParameterSet<S>& parameters() { return params_; }
  const nn::ParameterSet<S>& parameters() const { return params_; }

  ad::Var TemporalBranch(ad::Tape<S>& tape, const Mat& head, const Mat& eye,
                         int batch) const;
  ad::Var VisualBranch(ad::Tape<S>& tape, const Mat& descriptors,
                       int batch) const;
  // Visual tokens right before the visual encoder (descriptor projection plus
  // position embeddings).
  ad::Var VisualTokens(ad::Tape<S>& tape, const Mat& descriptors,
                       int batch) const;
  ad::Var Fuse(ad::Tape<S>& tape, ad::Var temporal, ad::Var visual,
               int batch) const;
  ad::Var PositionHead(ad::Tape<S>& tape, ad::Var temporal, int batch) const;
  // Returns logits; scores are their sigmoid.
  ad::Var TileHead(ad::Tape<S>& tape, ad::Var fused) const;

  ForwardVars Forward(ad::Tape<S>& tape, const ModelInputs<S>& inputs) const;
  LossVars Loss(ad::Tape<S>& tape, const ForwardVars& vars,
                const ModelTargets<S>& targets, int batch) const;

  // Inference without gradient bookkeeping; one Prediction per sample.
  std::vector<Prediction> Predict(const ModelInputs<S>& inputs) const;
  // Converts forward outputs of one batch into per-sample predictions.
  std::vector<Prediction> Decode(const ad::Tape<S>& tape,
                                 const ForwardVars& vars, int batch) const;

  // Turns every encoder layer into LN(LN(x)) for pass-through tests.
  void ZeroResidualBranches();

  nn::Parameter<S>& temporal_type_embedding() { return *type_temporal_; }
  nn::Parameter<S>& visual_type_embedding() { return *type_visual_; }
  const nn::Mlp<S>& position_mlp() const { return pos_head_; }
  const nn::Mlp<S>& tile_mlp() const { return tile_head_; }

 private:
  ModelConfig config_;
  std::uint64_t seed_;
  nn::ParameterSet<S> params_;
  nn::Linear<S> head_in_, eye_in_;
  nn::Lstm<S> head_lstm_, eye_lstm_;
  nn::EncoderStack<S> temporal_encoder_;
  nn::Linear<S> visual_in_;
  nn::EncoderStack<S> visual_encoder_;
  nn::Parameter<S>* type_temporal_ = nullptr;
  nn::Parameter<S>* type_visual_ = nullptr;
  nn::EncoderStack<S> fusion_encoder_;
  nn::Mlp<S> pos_head_;
  nn::Mlp<S> tile_head_;
};

extern template class Mftr<float>;
extern template class Mftr<double>;

std::string ToString(FusionTemporalMode mode);
FusionTemporalMode ParseFusionTemporalMode(const std::string& text);

}  // namespace mftr
