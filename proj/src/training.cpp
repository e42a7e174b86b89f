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

#include "mftr/training.hpp"

#include "mftr/batch.hpp"
#include "mftr/checkpoint.hpp"
#include "mftr/config.hpp"
#include "mftr/errors.hpp"
#include "mftr/seeding.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>

namespace mftr {
namespace {

void Require(bool ok, const std::string& field, const std::string& message) {
  if (!ok) throw std::invalid_argument("train config: " + field + " " + message);
}

std::string FormatDouble(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void WriteText(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

}  // namespace

void TrainConfig::Validate() const {
  model.Validate();
  split.Validate();
  Require(lr > 0.0, "lr", "must be positive");
  Require(beta1 >= 0.0 && beta1 < 1.0, "beta1", "must lie in [0, 1)");
  Require(beta2 >= 0.0 && beta2 < 1.0, "beta2", "must lie in [0, 1)");
  Require(weight_decay >= 0.0, "weight_decay", "must not be negative");
  Require(adam_eps > 0.0, "adam_eps", "must be positive");
  Require(batch_size >= 1, "batch_size", "must be at least 1");
  Require(max_epochs >= 1, "max_epochs", "must be at least 1");
  Require(early_stop_patience >= 1, "early_stop_patience", "must be at least 1");
  Require(grad_clip_norm >= 0.0, "grad_clip_norm", "must not be negative");
  Require(warmup_steps >= 0, "warmup_steps", "must not be negative");
  Require(decay_steps >= 0, "decay_steps", "must not be negative");
}

template <typename S>
AdamW<S>::AdamW(nn::ParameterSet<S>& params, const TrainConfig& config)
    : lr_(config.lr),
      beta1_(config.beta1),
      beta2_(config.beta2),
      weight_decay_(config.weight_decay),
      eps_(config.adam_eps),
      warmup_steps_(config.warmup_steps),
      decay_steps_(config.decay_steps) {
  for (nn::Parameter<S>& p : params) {
    if (!p.trainable) continue;
    params_.push_back(&p);
    m_.push_back(nn::Matrix<S>::Zero(p.value.rows(), p.value.cols()));
    v_.push_back(nn::Matrix<S>::Zero(p.value.rows(), p.value.cols()));
  }
}

template <typename S>
double AdamW<S>::LearningRate(int step) const {
  if (step < warmup_steps_) return lr_ * step / warmup_steps_;
  if (decay_steps_ <= 0) return lr_;
  const double progress =
      std::min(1.0, static_cast<double>(step - warmup_steps_) / decay_steps_);
  return 0.5 * lr_ * (1.0 + std::cos(std::numbers::pi * progress));
}

template <typename S>
void AdamW<S>::Step() {
  ++steps_;
  const double c1 = 1.0 - std::pow(beta1_, steps_);
  const double c2 = 1.0 - std::pow(beta2_, steps_);
  const double rate = LearningRate(steps_);
  const S lr = static_cast<S>(rate);
  const S decay = static_cast<S>(1.0 - rate * weight_decay_);
  const S b1 = static_cast<S>(beta1_), b2 = static_cast<S>(beta2_);
  const S inv_c1 = static_cast<S>(1.0 / c1);
  const S inv_sqrt_c2 = static_cast<S>(1.0 / std::sqrt(c2));
  const S eps = static_cast<S>(eps_);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    nn::Parameter<S>& p = *params_[i];
    if (p.grad.size() == 0) continue;  // never reached by the loss
    p.value *= decay;
    m_[i] = b1 * m_[i] + (S(1) - b1) * p.grad;
    v_[i] = b2 * v_[i] + (S(1) - b2) * p.grad.cwiseProduct(p.grad);
    p.value.array() -= lr * (m_[i].array() * inv_c1) /
                       ((v_[i].array().sqrt() * inv_sqrt_c2) + eps);
  }
}

template <typename S>
double ClipGradNorm(nn::ParameterSet<S>& params, double max_norm) {
  double sq = 0.0;
  for (const nn::Parameter<S>& p : params) {
    if (p.grad.size()) sq += p.grad.template cast<double>().squaredNorm();
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const S scale = static_cast<S>(max_norm / (norm + 1e-12));
    for (nn::Parameter<S>& p : params) {
      if (p.grad.size()) p.grad *= scale;
    }
  }
  return norm;
}

std::string RunRecord::ToJson() const {
  nlohmann::ordered_json j;
  j["config_hash"] = config_hash;
  j["best_epoch"] = best_epoch;
  j["best_val_ap"] = best_val_ap;
  j["best_checkpoint"] = best_checkpoint;
  j["stopped_early"] = stopped_early;
  j["wall_seconds"] = wall_seconds;
  j["epochs"] = nlohmann::ordered_json::array();
  for (const EpochRecord& e : epochs) {
    nlohmann::ordered_json r;
    r["epoch"] = e.epoch;
    r["train_loss"] = e.train_loss;
    r["l_pos"] = e.l_pos;
    r["l_cls"] = e.l_cls;
    r["val_ap"] = e.val_ap;
    r["val_ao"] = e.val_ao;
    r["train_ap1"] = e.train_ap1 ? nlohmann::ordered_json(*e.train_ap1) : nullptr;
    r["seconds"] = e.seconds;
    j["epochs"].push_back(r);
  }
  return j.dump(2) + "\n";
}

std::string RunRecord::ToCsv() const {
  std::string out = "epoch,train_loss,l_pos,l_cls,val_ap,val_ao,train_ap1,seconds\n";
  for (const EpochRecord& e : epochs) {
    out += std::to_string(e.epoch) + "," + FormatDouble(e.train_loss) + "," +
           FormatDouble(e.l_pos) + "," + FormatDouble(e.l_cls) + "," +
           FormatDouble(e.val_ap) + "," + FormatDouble(e.val_ao) + "," +
           (e.train_ap1 ? FormatDouble(*e.train_ap1) : "") + "," +
           FormatDouble(e.seconds) + "\n";
  }
  return out;
}

std::string ConfigHash(const TrainConfig& config) {
  nlohmann::ordered_json j;
  j["model"] = ModelConfigToJson(config.model);
  j["train"] = TrainConfigToJson(config);
  j["split"] = {{"train", config.split.train},
                {"val", config.split.val},
                {"test", config.split.test},
                {"mode", ToString(config.split.mode)},
                {"seed", config.split.seed}};
  j["seed"] = config.seed;
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(Fnv1a64(j.dump())));
  return buf;
}

std::string RunDirName(const std::string& config_hash) {
  const std::time_t now = std::time(nullptr);
  std::tm utc{};
  gmtime_r(&now, &utc);
  char stamp[32];
  std::strftime(stamp, sizeof(stamp), "%Y%m%dT%H%M%SZ", &utc);
  return config_hash + "-" + stamp;
}

template <typename S>
RunRecord Train(const TrainConfig& config, Mftr<S>& model,
                const std::vector<TraceSample>& train,
                const std::vector<TraceSample>& val, const FeatureBank& bank,
                const std::filesystem::path& run_dir, const TrainHooks& hooks) {
  config.Validate();
  if (train.empty()) throw DataError("training split is empty");
  if (val.empty()) throw DataError("validation split is empty");
  if (!(config.model == model.config())) {
    throw ConfigError("model config differs from the train config in '" +
                      FirstDifference(config.model, model.config()) + "'");
  }
  using Clock = std::chrono::steady_clock;
  const auto run_start = Clock::now();

  RunRecord record;
  record.config_hash = ConfigHash(config);
  if (!run_dir.empty()) std::filesystem::create_directories(run_dir);
  const std::filesystem::path best_path =
      run_dir.empty() ? std::filesystem::path() : run_dir / "best.ckpt";

  AdamW<S> optimizer(model.parameters(), config);
  std::mt19937_64 shuffle_rng(DeriveSeed(config.seed, "shuffle"));
  std::vector<std::size_t> order(train.size());
  std::vector<nn::Matrix<S>> best_weights;
  int since_best = 0;
  int global_batch = 0;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto epoch_start = Clock::now();
    std::iota(order.begin(), order.end(), std::size_t{0});
    DeterministicShuffle(order, shuffle_rng);

    double sum_total = 0.0, sum_pos = 0.0, sum_cls = 0.0;
    for (std::size_t begin = 0; begin < order.size();
         begin += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(
          order.size(), begin + static_cast<std::size_t>(config.batch_size));
      std::vector<const TraceSample*> ptrs;
      for (std::size_t i = begin; i < end; ++i) ptrs.push_back(&train[order[i]]);
      Batch<S> batch = MakeBatch<S>(std::span<const TraceSample* const>(ptrs),
                                    bank, config.model);

      model.parameters().ZeroGrad();
      ad::Tape<S> tape;
      const ForwardVars vars = model.Forward(tape, batch.inputs);
      const LossVars loss = model.Loss(tape, vars, batch.targets, batch.inputs.batch);
      const double total = static_cast<double>(tape.value(loss.total)(0, 0));
      if (!std::isfinite(total)) {
        throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch) +
                                  ", batch " + std::to_string(global_batch),
                              global_batch);
      }
      tape.Backward(loss.total);
      if (config.grad_clip_norm > 0.0) {
        ClipGradNorm(model.parameters(), config.grad_clip_norm);
      }
      optimizer.Step();

      const double weight = static_cast<double>(end - begin);
      sum_total += weight * total;
      if (loss.pos.valid()) sum_pos += weight * tape.value(loss.pos)(0, 0);
      if (loss.cls.valid()) sum_cls += weight * tape.value(loss.cls)(0, 0);
      ++global_batch;
    }

    EpochRecord e;
    e.epoch = epoch;
    const double n = static_cast<double>(train.size());
    e.train_loss = sum_total / n;
    e.l_pos = sum_pos / n;
    e.l_cls = sum_cls / n;
    const EvalReport val_report = Evaluate(model, val, bank, config.batch_size);
    e.val_ap = val_report.overall.ap;
    e.val_ao = val_report.overall.ao;
    if (hooks.eval_train) {
      e.train_ap1 = Evaluate(model, train, bank, config.batch_size).per_horizon[0].ap;
    }
    e.seconds = std::chrono::duration<double>(Clock::now() - epoch_start).count();
    record.epochs.push_back(e);

    if (epoch == 1 || e.val_ap > record.best_val_ap) {
      record.best_epoch = epoch;
      record.best_val_ap = e.val_ap;
      since_best = 0;
      best_weights.clear();
      for (const nn::Parameter<S>& p : model.parameters()) best_weights.push_back(p.value);
      if (!best_path.empty()) {
        SaveCheckpoint(best_path, model, bank.identity(), epoch);
        record.best_checkpoint = best_path.string();
      }
    } else {
      ++since_best;
    }

    const bool keep_going = !hooks.on_epoch || hooks.on_epoch(e);
    if (since_best >= config.early_stop_patience) {
      record.stopped_early = epoch < config.max_epochs;
      break;
    }
    if (!keep_going) break;
  }

  std::size_t i = 0;
  for (nn::Parameter<S>& p : model.parameters()) p.value = best_weights[i++];
  record.wall_seconds =
      std::chrono::duration<double>(Clock::now() - run_start).count();
  if (!run_dir.empty()) {
    WriteText(run_dir / "run_record.json", record.ToJson());
    WriteText(run_dir / "run_record.csv", record.ToCsv());
  }
  return record;
}

std::vector<AblationVariant> AblationVariants(const TrainConfig& base) {
  std::vector<AblationVariant> out;
  auto add = [&](std::string table, std::string name, std::string label,
                 auto&& edit) {
    AblationVariant v{std::move(table), std::move(name), std::move(label), base,
                      false};
    edit(v.config);
    v.is_baseline = v.config == base;
    out.push_back(std::move(v));
  };
  add("components", "no_temporal_transformer", "w/o Temporal Transformer",
      [](TrainConfig& c) { c.model.ablation.no_temporal_transformer = true; });
  add("components", "no_position_head", "w/o Position Prediction Head",
      [](TrainConfig& c) { c.model.ablation.no_position_head = true; });
  add("components", "no_visual_transformer", "w/o Visual Transformer",
      [](TrainConfig& c) { c.model.ablation.no_visual_transformer = true; });
  add("components", "no_fusion", "w/o Temporal-Visual Fusion",
      [](TrainConfig& c) { c.model.ablation.no_fusion = true; });
  add("components", "no_tile_head", "w/o Tile Classification Head",
      [](TrainConfig& c) { c.model.ablation.no_tile_head = true; });
  for (int layers : {2, 4, 6, 8}) {
    add("encoder_layers", "layers_" + std::to_string(layers),
        std::to_string(layers) + " layers",
        [layers](TrainConfig& c) { c.model.encoder_layers = layers; });
  }
  const std::pair<const char*, double> weights[] = {
      {"0.25", 0.25}, {"0.30", 0.30}, {"0.35", 0.35}, {"0.40", 0.40}, {"0.45", 0.45}};
  for (const auto& [text, alpha] : weights) {
    char beta_text[8];
    std::snprintf(beta_text, sizeof(beta_text), "%.2f", 1.0 - alpha);
    add("loss_weights", std::string("alpha_") + text + "_beta_" + beta_text,
        std::string("alpha ") + text + ", beta " + beta_text,
        [alpha](TrainConfig& c) {
          c.model.alpha = alpha;
          c.model.beta = std::round((1.0 - alpha) * 100.0) / 100.0;
        });
  }
  return out;
}

const SuiteRow* SuiteResult::Find(const std::string& name) const {
  for (const SuiteRow& row : rows) {
    if (row.name == name) return &row;
  }
  return nullptr;
}

std::string SuiteResult::ToJson() const {
  nlohmann::ordered_json j;
  j["n_runs"] = n_runs;
  j["rows"] = nlohmann::ordered_json::array();
  for (const SuiteRow& row : rows) {
    nlohmann::ordered_json r;
    r["table"] = row.table;
    r["variant"] = row.name;
    r["label"] = row.label;
    r["ok"] = row.ok;
    r["error"] = row.error;
    if (row.val_report) {
      r["val"] = nlohmann::ordered_json::parse(row.val_report->ToJson());
    } else {
      r["val"] = nullptr;
    }
    r["best_epoch"] = row.record.best_epoch;
    r["epochs"] = row.record.epochs.size();
    r["config_hash"] = row.record.config_hash;
    j["rows"].push_back(r);
  }
  return j.dump(2) + "\n";
}

std::string SuiteResult::ToCsv() const {
  std::size_t horizon = 0;
  for (const SuiteRow& row : rows) {
    if (row.val_report) horizon = std::max(horizon, row.val_report->per_horizon.size());
  }
  std::string out = "table,variant,label,ok";
  for (std::size_t k = 1; k <= horizon; ++k) out += ",ap_" + std::to_string(k) + "s";
  for (std::size_t k = 1; k <= horizon; ++k) out += ",ao_" + std::to_string(k) + "s";
  out += ",best_epoch,epochs\n";
  for (const SuiteRow& row : rows) {
    out += row.table + "," + row.name + ",\"" + row.label + "\"," +
           (row.ok ? "1" : "0");
    for (int metric = 0; metric < 2; ++metric) {
      for (std::size_t k = 0; k < horizon; ++k) {
        out += ",";
        if (row.val_report && k < row.val_report->per_horizon.size()) {
          const HorizonMetrics& m = row.val_report->per_horizon[k];
          out += FormatDouble(metric == 0 ? m.ap : m.ao);
        }
      }
    }
    out += "," + std::to_string(row.record.best_epoch) + "," +
           std::to_string(row.record.epochs.size()) + "\n";
  }
  return out;
}

SuiteResult RunAblationSuite(const TrainConfig& base,
                             const std::vector<TraceSample>& train,
                             const std::vector<TraceSample>& val,
                             const FeatureBank& bank,
                             const std::filesystem::path& run_root,
                             const TrainHooks& hooks) {
  auto run = [&](const std::string& name, const TrainConfig& config) {
    SuiteRow row;
    try {
      Mftr<float> model(config.model, DeriveSeed(config.seed, "init"));
      const std::filesystem::path dir =
          run_root.empty() ? std::filesystem::path() : run_root / name;
      row.record = Train(config, model, train, val, bank, dir, hooks);
      row.val_report = Evaluate(model, val, bank, config.batch_size);
      row.ok = true;
    } catch (const std::exception& e) {
      row.ok = false;
      row.error = e.what();
    }
    return row;
  };

  const std::vector<AblationVariant> variants = AblationVariants(base);
  auto selected = [&](const AblationVariant& v) {
    if (base.sweep.empty()) return true;
    return std::find(base.sweep.begin(), base.sweep.end(), v.name) != base.sweep.end();
  };

  SuiteResult result;
  SuiteRow baseline = run("MFTR", base);
  ++result.n_runs;
  baseline.table = "components";
  baseline.name = "MFTR";
  baseline.label = "MFTR";

  auto emit = [&](const AblationVariant& v) {
    SuiteRow row;
    if (v.is_baseline) {
      row = baseline;
    } else {
      row = run(v.name, v.config);
      ++result.n_runs;
    }
    row.table = v.table;
    row.name = v.name;
    row.label = v.label;
    result.rows.push_back(std::move(row));
  };
  for (const AblationVariant& v : variants) {
    if (v.table == "components" && selected(v)) emit(v);
  }
  result.rows.push_back(baseline);
  for (const AblationVariant& v : variants) {
    if (v.table != "components" && selected(v)) emit(v);
  }
  if (!run_root.empty()) {
    std::filesystem::create_directories(run_root);
    WriteText(run_root / "ablation.json", result.ToJson());
    WriteText(run_root / "ablation.csv", result.ToCsv());
  }
  return result;
}

template class AdamW<float>;
template class AdamW<double>;
template double ClipGradNorm<float>(nn::ParameterSet<float>&, double);
template double ClipGradNorm<double>(nn::ParameterSet<double>&, double);
template RunRecord Train<float>(const TrainConfig&, Mftr<float>&,
                                const std::vector<TraceSample>&,
                                const std::vector<TraceSample>&, const FeatureBank&,
                                const std::filesystem::path&, const TrainHooks&);
template RunRecord Train<double>(const TrainConfig&, Mftr<double>&,
                                 const std::vector<TraceSample>&,
                                 const std::vector<TraceSample>&, const FeatureBank&,
                                 const std::filesystem::path&, const TrainHooks&);

}  // namespace mftr
