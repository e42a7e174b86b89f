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

#include "mftr/config.hpp"

#include "mftr/errors.hpp"
#include "mftr/seeding.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace mftr {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;
using Setter = std::function<void(const json&, const std::string&)>;
using Fields = std::map<std::string, Setter>;

template <typename T>
Setter Field(T& out) {
  return [&out](const json& v, const std::string& key) {
    try {
      out = v.get<T>();
    } catch (const json::exception&) {
      throw ConfigError("config key '" + key + "' has the wrong type");
    }
  };
}

void ParseSection(const json& j, const std::string& prefix,
                  const Fields& fields) {
  if (!j.is_object()) {
    throw ConfigError("config key '" + prefix + "' must be an object");
  }
  for (const auto& [key, value] : j.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    const auto it = fields.find(key);
    if (it == fields.end()) throw ConfigError("unknown config key '" + path + "'");
    it->second(value, path);
  }
}

Fields GridFields(TileGrid& g) {
  return {{"n_rows", Field(g.n_rows)},   {"n_cols", Field(g.n_cols)},
          {"vp_rows", Field(g.vp_rows)}, {"vp_cols", Field(g.vp_cols)},
          {"frame_w", Field(g.frame_w)}, {"frame_h", Field(g.frame_h)}};
}

Fields AblationFields(AblationFlags& a) {
  return {{"no_temporal_transformer", Field(a.no_temporal_transformer)},
          {"no_position_head", Field(a.no_position_head)},
          {"no_visual_transformer", Field(a.no_visual_transformer)},
          {"no_fusion", Field(a.no_fusion)},
          {"no_tile_head", Field(a.no_tile_head)}};
}

Fields ModelFields(ModelConfig& m) {
  return {
      {"history", Field(m.history)},
      {"horizon", Field(m.horizon)},
      {"d_model", Field(m.d_model)},
      {"c_head", Field(m.c_head)},
      {"c_eye", Field(m.c_eye)},
      {"recurrent_layers", Field(m.recurrent_layers)},
      {"recurrent_hidden", Field(m.recurrent_hidden)},
      {"encoder_layers", Field(m.encoder_layers)},
      {"attention_heads", Field(m.attention_heads)},
      {"ffn_hidden", Field(m.ffn_hidden)},
      {"pos_head_hidden", Field(m.pos_head_hidden)},
      {"tile_head_hidden", Field(m.tile_head_hidden)},
      {"descriptor_dim", Field(m.descriptor_dim)},
      {"gamma", Field(m.gamma)},
      {"alpha", Field(m.alpha)},
      {"beta", Field(m.beta)},
      {"fusion_temporal_mode",
       [&m](const json& v, const std::string& key) {
         std::string text;
         Field(text)(v, key);
         try {
           m.fusion_temporal_mode = ParseFusionTemporalMode(text);
         } catch (const std::invalid_argument& e) {
           throw ConfigError("config key '" + key + "': " + e.what());
         }
       }},
      {"fusion_temporal_positions", Field(m.fusion_temporal_positions)},
      {"freeze_backbone", Field(m.freeze_backbone)},
      {"ablation",
       [&m](const json& v, const std::string& key) {
         ParseSection(v, key, AblationFields(m.ablation));
       }},
  };
}

Fields TrainFields(TrainConfig& t) {
  return {{"lr", Field(t.lr)},
          {"beta1", Field(t.beta1)},
          {"beta2", Field(t.beta2)},
          {"weight_decay", Field(t.weight_decay)},
          {"adam_eps", Field(t.adam_eps)},
          {"batch_size", Field(t.batch_size)},
          {"max_epochs", Field(t.max_epochs)},
          {"early_stop_patience", Field(t.early_stop_patience)},
          {"grad_clip_norm", Field(t.grad_clip_norm)},
          {"warmup_steps", Field(t.warmup_steps)},
          {"decay_steps", Field(t.decay_steps)},
          {"sweep", Field(t.sweep)}};
}

Fields SplitFields(SplitSpec& s) {
  return {{"train", Field(s.train)},
          {"val", Field(s.val)},
          {"test", Field(s.test)},
          {"mode", [&s](const json& v, const std::string& key) {
             std::string text;
             Field(text)(v, key);
             try {
               s.mode = ParseSplitMode(text);
             } catch (const std::invalid_argument& e) {
               throw ConfigError("config key '" + key + "': " + e.what());
             }
           }}};
}

Fields SynthFields(SynthParams& p) {
  return {{"n_streams", Field(p.n_streams)},
          {"seconds_per_stream", Field(p.seconds_per_stream)},
          {"mean_reversion", Field(p.mean_reversion)},
          {"sigma_yaw", Field(p.sigma_yaw)},
          {"sigma_pitch", Field(p.sigma_pitch)},
          {"pitch_limit", Field(p.pitch_limit)},
          {"gaze_noise", Field(p.gaze_noise)},
          {"blob_sigma_px", Field(p.blob_sigma_px)}};
}

Fields DataFields(DataConfig& d) {
  return {{"dataset_dir", Field(d.dataset_dir)},
          {"traces", Field(d.traces)},
          {"frames", Field(d.frames)},
          {"extractor", Field(d.extractor)},
          {"onnx_model", Field(d.onnx_model)},
          {"feature_cache", Field(d.feature_cache)}};
}

ordered_json GridToJson(const TileGrid& g) {
  ordered_json j;
  j["n_rows"] = g.n_rows;
  j["n_cols"] = g.n_cols;
  j["vp_rows"] = g.vp_rows;
  j["vp_cols"] = g.vp_cols;
  j["frame_w"] = g.frame_w;
  j["frame_h"] = g.frame_h;
  return j;
}

// Model fields without the grid.
ordered_json ModelBodyToJson(const ModelConfig& m) {
  ordered_json j;
  j["history"] = m.history;
  j["horizon"] = m.horizon;
  j["d_model"] = m.d_model;
  j["c_head"] = m.c_head;
  j["c_eye"] = m.c_eye;
  j["recurrent_layers"] = m.recurrent_layers;
  j["recurrent_hidden"] = m.recurrent_hidden;
  j["encoder_layers"] = m.encoder_layers;
  j["attention_heads"] = m.attention_heads;
  j["ffn_hidden"] = m.ffn_hidden;
  j["pos_head_hidden"] = m.pos_head_hidden;
  j["tile_head_hidden"] = m.tile_head_hidden;
  j["descriptor_dim"] = m.descriptor_dim;
  j["gamma"] = m.gamma;
  j["alpha"] = m.alpha;
  j["beta"] = m.beta;
  j["fusion_temporal_mode"] = ToString(m.fusion_temporal_mode);
  j["fusion_temporal_positions"] = m.fusion_temporal_positions;
  j["freeze_backbone"] = m.freeze_backbone;
  const AblationFlags& a = m.ablation;
  j["ablation"] = {{"no_temporal_transformer", a.no_temporal_transformer},
                   {"no_position_head", a.no_position_head},
                   {"no_visual_transformer", a.no_visual_transformer},
                   {"no_fusion", a.no_fusion},
                   {"no_tile_head", a.no_tile_head}};
  return j;
}

void Flatten(const json& j, const std::string& prefix,
             std::map<std::string, json>& out) {
  if (j.is_object()) {
    for (const auto& [k, v] : j.items()) {
      Flatten(v, prefix.empty() ? k : prefix + "." + k, out);
    }
  } else {
    out[prefix] = j;
  }
}

}  // namespace

void RunConfig::PropagateSeed() {
  train.seed = seed;
  train.split.seed = DeriveSeed(seed, "split");
}

void RunConfig::Validate() const {
  try {
    train.Validate();
    synth.Validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (data.extractor != "hash_projection" && data.extractor != "onnx") {
    throw ConfigError("config key 'data.extractor' must be 'hash_projection' "
                      "or 'onnx', got '" + data.extractor + "'");
  }
  if (data.extractor == "onnx" && data.onnx_model.empty()) {
    throw ConfigError("config key 'data.onnx_model' is required with the onnx "
                      "extractor");
  }
}

RunConfig ParseRunConfig(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig config;
  ParseSection(
      j, "",
      {{"seed", Field(config.seed)},
       {"grid",
        [&](const json& v, const std::string& k) {
          ParseSection(v, k, GridFields(config.train.model.grid));
        }},
       {"model",
        [&](const json& v, const std::string& k) {
          ParseSection(v, k, ModelFields(config.train.model));
        }},
       {"train",
        [&](const json& v, const std::string& k) {
          ParseSection(v, k, TrainFields(config.train));
        }},
       {"split",
        [&](const json& v, const std::string& k) {
          ParseSection(v, k, SplitFields(config.train.split));
        }},
       {"synth",
        [&](const json& v, const std::string& k) {
          ParseSection(v, k, SynthFields(config.synth));
        }},
       {"data", [&](const json& v, const std::string& k) {
          ParseSection(v, k, DataFields(config.data));
        }}});
  config.PropagateSeed();
  config.Validate();
  return config;
}

RunConfig LoadRunConfig(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  try {
    return ParseRunConfig(buffer.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

ordered_json TrainConfigToJson(const TrainConfig& t) {
  ordered_json j;
  j["lr"] = t.lr;
  j["beta1"] = t.beta1;
  j["beta2"] = t.beta2;
  j["weight_decay"] = t.weight_decay;
  j["adam_eps"] = t.adam_eps;
  j["batch_size"] = t.batch_size;
  j["max_epochs"] = t.max_epochs;
  j["early_stop_patience"] = t.early_stop_patience;
  j["grad_clip_norm"] = t.grad_clip_norm;
  j["warmup_steps"] = t.warmup_steps;
  j["decay_steps"] = t.decay_steps;
  j["sweep"] = t.sweep;
  return j;
}

ordered_json ToJson(const RunConfig& c) {
  ordered_json j;
  j["seed"] = c.seed;
  j["grid"] = GridToJson(c.train.model.grid);
  j["model"] = ModelBodyToJson(c.train.model);
  j["train"] = TrainConfigToJson(c.train);
  j["split"] = {{"train", c.train.split.train},
                {"val", c.train.split.val},
                {"test", c.train.split.test},
                {"mode", ToString(c.train.split.mode)}};
  const SynthParams& s = c.synth;
  j["synth"] = {{"n_streams", s.n_streams},
                {"seconds_per_stream", s.seconds_per_stream},
                {"mean_reversion", s.mean_reversion},
                {"sigma_yaw", s.sigma_yaw},
                {"sigma_pitch", s.sigma_pitch},
                {"pitch_limit", s.pitch_limit},
                {"gaze_noise", s.gaze_noise},
                {"blob_sigma_px", s.blob_sigma_px}};
  const DataConfig& d = c.data;
  j["data"] = {{"dataset_dir", d.dataset_dir}, {"traces", d.traces},
               {"frames", d.frames},           {"extractor", d.extractor},
               {"onnx_model", d.onnx_model},   {"feature_cache", d.feature_cache}};
  return j;
}

ordered_json ModelConfigToJson(const ModelConfig& config) {
  ordered_json j;
  j["grid"] = GridToJson(config.grid);
  const ordered_json body = ModelBodyToJson(config);
  for (const auto& [k, v] : body.items()) j[k] = v;
  return j;
}

ModelConfig ModelConfigFromJson(const json& j) {
  ModelConfig config;
  json body = j;
  if (!body.is_object()) throw ConfigError("model config must be an object");
  if (body.contains("grid")) {
    ParseSection(body["grid"], "model.grid", GridFields(config.grid));
    body.erase("grid");
  }
  ParseSection(body, "model", ModelFields(config));
  return config;
}

std::string FirstDifference(const ModelConfig& a, const ModelConfig& b) {
  std::map<std::string, json> fa, fb;
  Flatten(json(ModelConfigToJson(a)), "", fa);
  Flatten(json(ModelConfigToJson(b)), "", fb);
  for (const auto& [key, value] : fa) {
    const auto it = fb.find(key);
    if (it == fb.end() || it->second != value) return key;
  }
  for (const auto& [key, value] : fb) {
    if (!fa.contains(key)) return key;
  }
  return "";
}

}  // namespace mftr
