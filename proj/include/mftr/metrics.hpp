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

// Average prediction accuracy (AP), average overlap ratio (AO), per-horizon
// reports and the batch latency benchmark.

#pragma once

#include "mftr/data.hpp"
#include "mftr/geometry.hpp"
#include "mftr/model.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mftr {

// Fraction of steps whose predicted anchor equals the ground truth.
double AveragePrecision(std::span<const ViewportAnchor> preds,
                        std::span<const ViewportAnchor> gts);

// Mean over steps of |S(pred) & S(gt)| / |S(pred)|.
double AverageOverlap(std::span<const ViewportAnchor> preds,
                      std::span<const ViewportAnchor> gts,
                      const TileGrid& grid);

struct HorizonMetrics {
  double ap = 0.0;
  double ao = 0.0;

  friend bool operator==(const HorizonMetrics&, const HorizonMetrics&) = default;
};

struct EvalReport {
  // Entry k-1 scores the first k predicted seconds.
  std::vector<HorizonMetrics> per_horizon;
  HorizonMetrics overall;  // equals per_horizon.back()
  std::size_t n_samples = 0;
  std::optional<double> delay_ms;

  // (m_1 - m_T) / m_1; zero when m_1 is zero.
  HorizonMetrics Stability() const;

  // Stable schema: {"n_samples", "per_horizon": [{"horizon", "ap", "ao"}],
  // "overall": {"ap", "ao"}, "stability": {"ap", "ao"}, "delay_ms"}.
  std::string ToJson() const;
  // Header "horizon,ap,ao"; rows 1..T then "overall".
  std::string ToCsv() const;
  static EvalReport FromJson(const std::string& text);

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

// Scores already-decoded predictions against ground truth, sample by sample.
EvalReport ReportFromAnchors(
    const std::vector<std::vector<ViewportAnchor>>& preds,
    const std::vector<std::vector<ViewportAnchor>>& gts, const TileGrid& grid);

// Runs the model over `samples` in input order. When `predictions` is given it
// receives one Prediction per sample.
template <typename S>
EvalReport Evaluate(const Mftr<S>& model, const std::vector<TraceSample>& samples,
                    const FeatureBank& bank, int batch_size = 16,
                    std::vector<Prediction>* predictions = nullptr);

double Median(std::vector<double> values);

struct DelayReport {
  double median_ms = 0.0;
  int batch_size = 16;
  int horizon = 5;
  int n_warmup = 0;
  int n_trials = 0;
  std::vector<double> trial_ms;
  std::string hardware;
  std::string device;

  std::string ToJson() const;
};

// CPU model and thread count, e.g. "Intel(R) Xeon(R) ... | 1 threads".
std::string HardwareDescriptor();

// Median wall-clock of one gradient-free forward pass plus decoding over a
// batch, after discarding `n_warmup` passes.
template <typename S>
DelayReport BenchDelay(const Mftr<S>& model, const ModelInputs<S>& inputs,
                       int n_warmup, int n_trials);

}  // namespace mftr
