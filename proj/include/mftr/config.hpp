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

// The JSON run configuration file. Every section is optional and every
// missing key keeps its default; unknown keys are rejected.
//
//   {
//     "seed": 0,
//     "grid":  {"n_rows", "n_cols", "vp_rows", "vp_cols", "frame_w", "frame_h"},
//     "model": {"history", "horizon", "d_model", "c_head", "c_eye",
//               "recurrent_layers", "recurrent_hidden", "encoder_layers",
//               "attention_heads", "ffn_hidden", "pos_head_hidden",
//               "tile_head_hidden", "descriptor_dim", "gamma", "alpha", "beta",
//               "fusion_temporal_mode", "fusion_temporal_positions",
//               "freeze_backbone", "ablation": {...five flags...}},
//     "train": {"lr", "beta1", "beta2", "weight_decay", "adam_eps",
//               "batch_size", "max_epochs", "early_stop_patience",
//               "grad_clip_norm", "warmup_steps", "decay_steps",
//               "sweep"},
//     "split": {"train", "val", "test", "mode"},
//     "synth": {"n_streams", "seconds_per_stream", "mean_reversion",
//               "sigma_yaw", "sigma_pitch", "pitch_limit", "gaze_noise",
//               "blob_sigma_px"},
//     "data":  {"dataset_dir", "traces", "frames", "extractor", "onnx_model",
//               "feature_cache"}
//   }

#pragma once

#include "mftr/data.hpp"
#include "mftr/model.hpp"
#include "mftr/training.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>

namespace mftr {

struct DataConfig {
  // Directory written by `mftr synth` (traces.jsonl + frames/). Empty means
  // the synthetic dataset is generated in memory.
  std::string dataset_dir;
  // Explicit overrides of the two dataset paths.
  std::string traces;
  std::string frames;
  std::string extractor = "hash_projection";  // or "onnx"
  std::string onnx_model;
  std::string feature_cache;

  friend bool operator==(const DataConfig&, const DataConfig&) = default;
};

struct RunConfig {
  std::uint64_t seed = 0;
  TrainConfig train;  // holds the model config and split spec
  SynthParams synth;
  DataConfig data;

  // Copies the top-level seed into train.seed and the derived split seed
  // into train.split.seed.
  void PropagateSeed();
  void Validate() const;
};

// Throws ConfigError naming the offending key.
RunConfig ParseRunConfig(const std::string& text);
RunConfig LoadRunConfig(const std::filesystem::path& path);
nlohmann::ordered_json ToJson(const RunConfig& config);

nlohmann::ordered_json ModelConfigToJson(const ModelConfig& config);
ModelConfig ModelConfigFromJson(const nlohmann::json& j);
nlohmann::ordered_json TrainConfigToJson(const TrainConfig& config);

// Dotted key of the first field where the configs differ ("" when equal).
std::string FirstDifference(const ModelConfig& a, const ModelConfig& b);

}  // namespace mftr
