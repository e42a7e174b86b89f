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

#include "mftr/metrics.hpp"

#include "mftr/batch.hpp"

#include <json.hpp>

#include <Eigen/Core>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <thread>

namespace mftr {
namespace {

void CheckLengths(std::size_t a, std::size_t b) {
  if (a != b) {
    throw std::invalid_argument("prediction length " + std::to_string(a) +
                                " differs from ground-truth length " +
                                std::to_string(b));
  }
  if (a == 0) throw std::invalid_argument("empty anchor sequence");
}

std::string FormatDouble(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

double AveragePrecision(std::span<const ViewportAnchor> preds,
                        std::span<const ViewportAnchor> gts) {
  CheckLengths(preds.size(), gts.size());
  int hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) hits += preds[i] == gts[i];
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

double AverageOverlap(std::span<const ViewportAnchor> preds,
                      std::span<const ViewportAnchor> gts,
                      const TileGrid& grid) {
  CheckLengths(preds.size(), gts.size());
  const double area = grid.viewport_tiles();
  double sum = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    sum += OverlapCount(gts[i], preds[i], grid) / area;
  }
  return sum / static_cast<double>(preds.size());
}

HorizonMetrics EvalReport::Stability() const {
  HorizonMetrics s;
  if (per_horizon.empty()) return s;
  const HorizonMetrics& first = per_horizon.front();
  const HorizonMetrics& last = per_horizon.back();
  if (first.ap > 0.0) s.ap = (first.ap - last.ap) / first.ap;
  if (first.ao > 0.0) s.ao = (first.ao - last.ao) / first.ao;
  return s;
}

std::string EvalReport::ToJson() const {
  nlohmann::ordered_json j;
  j["n_samples"] = n_samples;
  j["per_horizon"] = nlohmann::ordered_json::array();
  for (std::size_t k = 0; k < per_horizon.size(); ++k) {
    j["per_horizon"].push_back(
        {{"horizon", k + 1}, {"ap", per_horizon[k].ap}, {"ao", per_horizon[k].ao}});
  }
  j["overall"] = {{"ap", overall.ap}, {"ao", overall.ao}};
  const HorizonMetrics s = Stability();
  j["stability"] = {{"ap", s.ap}, {"ao", s.ao}};
  j["delay_ms"] = delay_ms ? nlohmann::ordered_json(*delay_ms) : nullptr;
  return j.dump(2) + "\n";
}

std::string EvalReport::ToCsv() const {
  std::string out = "horizon,ap,ao\n";
  for (std::size_t k = 0; k < per_horizon.size(); ++k) {
    out += std::to_string(k + 1) + "," + FormatDouble(per_horizon[k].ap) + "," +
           FormatDouble(per_horizon[k].ao) + "\n";
  }
  out += "overall," + FormatDouble(overall.ap) + "," + FormatDouble(overall.ao) +
         "\n";
  return out;
}

EvalReport EvalReport::FromJson(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  EvalReport r;
  r.n_samples = j.at("n_samples").get<std::size_t>();
  for (const auto& h : j.at("per_horizon")) {
    r.per_horizon.push_back({h.at("ap").get<double>(), h.at("ao").get<double>()});
  }
  r.overall = {j.at("overall").at("ap").get<double>(),
               j.at("overall").at("ao").get<double>()};
  if (j.contains("delay_ms") && !j["delay_ms"].is_null()) {
    r.delay_ms = j["delay_ms"].get<double>();
  }
  return r;
}

EvalReport ReportFromAnchors(
    const std::vector<std::vector<ViewportAnchor>>& preds,
    const std::vector<std::vector<ViewportAnchor>>& gts, const TileGrid& grid) {
  if (preds.empty()) throw std::invalid_argument("cannot evaluate an empty dataset");
  if (preds.size() != gts.size()) {
    throw std::invalid_argument("prediction and ground-truth sample counts differ");
  }
  const std::size_t horizon = gts.front().size();
  EvalReport report;
  report.n_samples = preds.size();
  report.per_horizon.assign(horizon, {});
  for (std::size_t s = 0; s < preds.size(); ++s) {
    CheckLengths(preds[s].size(), gts[s].size());
    if (gts[s].size() != horizon) {
      throw std::invalid_argument("samples have different horizons");
    }
    for (std::size_t k = 1; k <= horizon; ++k) {
      std::span<const ViewportAnchor> p(preds[s].data(), k);
      std::span<const ViewportAnchor> g(gts[s].data(), k);
      report.per_horizon[k - 1].ap += AveragePrecision(p, g);
      report.per_horizon[k - 1].ao += AverageOverlap(p, g, grid);
    }
  }
  const double n = static_cast<double>(preds.size());
  for (HorizonMetrics& m : report.per_horizon) {
    m.ap /= n;
    m.ao /= n;
  }
  report.overall = report.per_horizon.back();
  return report;
}

template <typename S>
EvalReport Evaluate(const Mftr<S>& model, const std::vector<TraceSample>& samples,
                    const FeatureBank& bank, int batch_size,
                    std::vector<Prediction>* predictions) {
  if (samples.empty()) throw std::invalid_argument("cannot evaluate an empty dataset");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  std::vector<std::vector<ViewportAnchor>> preds, gts;
  preds.reserve(samples.size());
  gts.reserve(samples.size());
  if (predictions) predictions->clear();
  for (std::size_t begin = 0; begin < samples.size();
       begin += static_cast<std::size_t>(batch_size)) {
    const std::size_t end =
        std::min(samples.size(), begin + static_cast<std::size_t>(batch_size));
    Batch<S> batch = MakeBatch<S>(samples, begin, end, bank, model.config());
    std::vector<Prediction> out = model.Predict(batch.inputs);
    for (std::size_t i = 0; i < out.size(); ++i) {
      preds.push_back(out[i].anchors);
      gts.push_back(batch.gt_anchors[i]);
      if (predictions) predictions->push_back(std::move(out[i]));
    }
  }
  return ReportFromAnchors(preds, gts, model.config().grid);
}

double Median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median of an empty set");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::string DelayReport::ToJson() const {
  nlohmann::ordered_json j;
  j["median_ms"] = median_ms;
  j["batch_size"] = batch_size;
  j["horizon"] = horizon;
  j["n_warmup"] = n_warmup;
  j["n_trials"] = n_trials;
  j["trial_ms"] = trial_ms;
  j["hardware"] = hardware;
  j["device"] = device;
  return j.dump(2) + "\n";
}

std::string HardwareDescriptor() {
  std::string cpu = "unknown cpu";
  std::ifstream in("/proc/cpuinfo");
  for (std::string line; std::getline(in, line);) {
    if (line.rfind("model name", 0) == 0) {
      const auto colon = line.find(':');
      if (colon != std::string::npos) {
        cpu = line.substr(colon + 1);
        cpu.erase(0, cpu.find_first_not_of(' '));
      }
      break;
    }
  }
  return cpu + " | " + std::to_string(Eigen::nbThreads()) + " threads | " +
         std::to_string(std::thread::hardware_concurrency()) + " cores";
}

template <typename S>
DelayReport BenchDelay(const Mftr<S>& model, const ModelInputs<S>& inputs,
                       int n_warmup, int n_trials) {
  if (n_trials < 1) throw std::invalid_argument("n_trials must be >= 1");
  using Clock = std::chrono::steady_clock;
  for (int i = 0; i < n_warmup; ++i) (void)model.Predict(inputs);
  DelayReport report;
  report.batch_size = inputs.batch;
  report.horizon = model.config().horizon;
  report.n_warmup = n_warmup;
  report.n_trials = n_trials;
  for (int i = 0; i < n_trials; ++i) {
    const auto start = Clock::now();
    (void)model.Predict(inputs);
    const std::chrono::duration<double, std::milli> elapsed = Clock::now() - start;
    report.trial_ms.push_back(elapsed.count());
  }
  report.median_ms = Median(report.trial_ms);
  report.hardware = HardwareDescriptor();
  report.device = "cpu";
  return report;
}

template EvalReport Evaluate<float>(const Mftr<float>&, const std::vector<TraceSample>&,
                                    const FeatureBank&, int, std::vector<Prediction>*);
template EvalReport Evaluate<double>(const Mftr<double>&, const std::vector<TraceSample>&,
                                     const FeatureBank&, int, std::vector<Prediction>*);
template DelayReport BenchDelay<float>(const Mftr<float>&, const ModelInputs<float>&, int, int);
template DelayReport BenchDelay<double>(const Mftr<double>&, const ModelInputs<double>&, int, int);

}  // namespace mftr
