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

// Mini-batch AdamW training with validation early stopping, and the ablation
// sweep over component removals, encoder depths and loss weights.

#pragma once

#include "mftr/data.hpp"
#include "mftr/metrics.hpp"
#include "mftr/model.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace mftr {

struct TrainConfig {
  ModelConfig model;
  SplitSpec split;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 0.01;
  double adam_eps = 1e-8;
  int batch_size = 16;
  int max_epochs = 200;
  // Epochs without a strict improvement of validation AP at the full horizon.
  int early_stop_patience = 10;
  // Global L2 norm bound on the gradient; 0 disables clipping.
  double grad_clip_norm = 0.0;
  // Linear learning-rate ramp over the first optimizer steps; 0 disables it.
  int warmup_steps = 0;
  // Cosine decay from lr to zero over this many steps after the warmup;
  // 0 keeps the rate constant.
  int decay_steps = 0;
  std::uint64_t seed = 0;
  // Ablation variant names to run; empty runs all of them.
  std::vector<std::string> sweep;

  // Throws std::invalid_argument naming the field.
  void Validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

// AdamW with decoupled weight decay applied to every trainable parameter.
template <typename S>
class AdamW {
 public:
  AdamW(nn::ParameterSet<S>& params, const TrainConfig& config);
  // Consumes the accumulated gradients; does not clear them.
  void Step();
  int steps() const { return steps_; }
  // Learning rate used by optimizer step `step` (1-based).
  double LearningRate(int step) const;

 private:
  std::vector<nn::Parameter<S>*> params_;
  std::vector<nn::Matrix<S>> m_;
  std::vector<nn::Matrix<S>> v_;
  double lr_, beta1_, beta2_, weight_decay_, eps_;
  int warmup_steps_, decay_steps_;
  int steps_ = 0;
};

// Rescales gradients so their global L2 norm is at most `max_norm`; returns
// the norm before clipping.
template <typename S>
double ClipGradNorm(nn::ParameterSet<S>& params, double max_norm);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double l_pos = 0.0;
  double l_cls = 0.0;
  double val_ap = 0.0;  // full horizon
  double val_ao = 0.0;
  std::optional<double> train_ap1;  // horizon 1, when requested
  double seconds = 0.0;
};

struct RunRecord {
  std::string config_hash;
  std::vector<EpochRecord> epochs;  // contiguous from epoch 1
  int best_epoch = 0;
  double best_val_ap = 0.0;
  std::string best_checkpoint;  // empty when nothing was written
  bool stopped_early = false;
  double wall_seconds = 0.0;

  std::string ToJson() const;
  // Header "epoch,train_loss,l_pos,l_cls,val_ap,val_ao,train_ap1,seconds".
  std::string ToCsv() const;
};

struct TrainHooks {
  // Also measure train-split AP at horizon 1 after every epoch.
  bool eval_train = false;
  // Called after every epoch; returning false ends training.
  std::function<bool(const EpochRecord&)> on_epoch;
};

// Trains `model` in place and leaves it holding the best-validation weights.
// When `run_dir` is non-empty the best checkpoint and the run record are
// written there. Throws DivergenceError on a non-finite batch loss.
template <typename S>
RunRecord Train(const TrainConfig& config, Mftr<S>& model,
                const std::vector<TraceSample>& train,
                const std::vector<TraceSample>& val, const FeatureBank& bank,
                const std::filesystem::path& run_dir = {},
                const TrainHooks& hooks = {});

// Stable hex digest of the canonical JSON form of the config.
std::string ConfigHash(const TrainConfig& config);
// "<hash>-<UTC timestamp>".
std::string RunDirName(const std::string& config_hash);

struct AblationVariant {
  std::string table;  // "components", "encoder_layers" or "loss_weights"
  std::string name;
  std::string label;
  TrainConfig config;
  bool is_baseline = false;  // identical to the base config
};

// Five component removals, encoder depths 2/4/6/8 and five (alpha, beta)
// pairs. The depth-6 and (0.35, 0.65) entries are the baseline itself.
std::vector<AblationVariant> AblationVariants(const TrainConfig& base);

struct SuiteRow {
  std::string table;
  std::string name;
  std::string label;
  bool ok = false;
  std::string error;
  RunRecord record;
  std::optional<EvalReport> val_report;
};

struct SuiteResult {
  std::vector<SuiteRow> rows;
  int n_runs = 0;  // distinct trainings performed

  const SuiteRow* Find(const std::string& name) const;
  std::string ToJson() const;
  // One row per table entry with per-horizon validation AP and AO.
  std::string ToCsv() const;
};

// Runs every variant (the baseline once) and reports validation metrics of
// each best model. A failing variant is recorded and the suite continues.
// The output lists the component rows, then the baseline tagged "MFTR", then
// the depth and loss-weight rows.
SuiteResult RunAblationSuite(const TrainConfig& base,
                             const std::vector<TraceSample>& train,
                             const std::vector<TraceSample>& val,
                             const FeatureBank& bank,
                             const std::filesystem::path& run_root = {},
                             const TrainHooks& hooks = {});

}  // namespace mftr
