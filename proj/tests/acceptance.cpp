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

// Acceptance checks for the whole system. Prints one PASS/FAIL line per
// criterion and exits non-zero when any criterion fails. `--only 1,4` runs a
// subset.

#include "mftr/batch.hpp"
#include "mftr/checkpoint.hpp"
#include "mftr/config.hpp"
#include "mftr/metrics.hpp"
#include "mftr/pipeline.hpp"
#include "mftr/seeding.hpp"
#include "mftr/training.hpp"

#include "test_util.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace mftr {
namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double SecondsSince(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string Format(const char* fmt, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, fmt, args...);
  return buf;
}

// Optimizer settings used wherever the default-depth model is trained from
// scratch: a lower peak rate than 1e-3 behind a short linear warmup, then a
// cosine decay that reaches zero at the last epoch.
constexpr double kDeepLr = 2e-4;
constexpr int kDeepWarmupSteps = 60;

TrainConfig DeepRecipe(TrainConfig t, std::size_t n_train) {
  const int steps_per_epoch =
      static_cast<int>((n_train + t.batch_size - 1) / t.batch_size);
  t.lr = kDeepLr;
  t.warmup_steps = kDeepWarmupSteps;
  t.decay_steps = std::max(1, t.max_epochs * steps_per_epoch - kDeepWarmupSteps);
  return t;
}

// Tiny model used for the smoke trainings.
ModelConfig SmokeModel() {
  ModelConfig m;
  m.d_model = 16;
  m.c_head = m.c_eye = m.recurrent_hidden = 8;
  m.recurrent_layers = 1;
  m.encoder_layers = 1;
  m.attention_heads = 2;
  m.ffn_hidden = 32;
  m.pos_head_hidden = {8};
  m.tile_head_hidden = 16;
  m.descriptor_dim = 32;
  return m;
}

RunConfig SmokeRun() {
  RunConfig c;
  c.seed = 11;
  c.train.model = SmokeModel();
  c.train.max_epochs = 20;
  c.train.lr = 3e-3;
  c.synth.seconds_per_stream = 30;
  c.PropagateSeed();
  return c;
}

Outcome GeometryOracle() {
  const TileGrid g;
  std::mt19937_64 rng(1);
  const auto start = Clock::now();
  int mismatches = 0;
  for (int i = 0; i < 1000; ++i) {
    const TileMask m = testing::RandomMask(g, 0.05 + 0.9 * (i % 10) / 10.0, rng);
    mismatches += !(SelectViewport(m, g) == testing::BruteSelect(m, g));
  }
  const double secs = SecondsSince(start);
  return {mismatches == 0 && secs < 5.0,
          Format("%d mismatches over 1000 masks against the 140-anchor scan, %.2f s",
                 mismatches, secs)};
}

Outcome MetricCorrectness() {
  const TileGrid g;
  const std::vector<ViewportAnchor> gt = {{3, 4}}, shifted = {{3, 6}};
  const double ao = AverageOverlap(shifted, gt, g);
  std::mt19937_64 rng(2);
  auto draw = [&](int n) { return static_cast<int>(UniformIndex(rng, n)); };
  int violations = 0;
  for (int i = 0; i < 1000; ++i) {
    std::vector<ViewportAnchor> p, t;
    for (int k = 0; k < 5; ++k) {
      t.push_back({draw(g.anchor_rows()), draw(g.n_cols)});
      p.push_back(draw(4) ? t.back() : ViewportAnchor{draw(g.anchor_rows()), draw(g.n_cols)});
    }
    violations += (AveragePrecision(p, t) == 1.0) != (AverageOverlap(p, t, g) == 1.0);
  }
  const double err = std::abs(ao - 28.0 / 36.0);
  return {err <= 1e-12 && violations == 0,
          Format("2-column shift AO %.15f (error %.1e), AP=1<=>AO=1 violations %d/1000", ao,
                 err, violations)};
}

Outcome GradientCheck() {
  const ModelConfig c = testing::TinyConfig();
  const auto start = Clock::now();
  Mftr<double> model(c, 13);
  const ModelInputs<double> in = RandomInputs<double>(c, 2, 14);
  ModelTargets<double> tg;
  std::mt19937_64 rng(15);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  tg.heads.resize(2 * c.horizon, 2);
  tg.masks.resize(2 * c.horizon, c.grid.num_tiles());
  for (Eigen::Index i = 0; i < tg.heads.size(); ++i) tg.heads.data()[i] = unit(rng) - 0.5;
  for (Eigen::Index i = 0; i < tg.masks.size(); ++i) tg.masks.data()[i] = unit(rng) < 0.4;
  const double err = testing::MaxGradRelError(model.parameters(), [&](ad::Tape<double>& t) {
    const ForwardVars v = model.Forward(t, in);
    return model.Loss(t, v, tg, 2).total;
  });
  const double secs = SecondsSince(start);
  return {err <= 1e-4 && secs < 120.0,
          Format("max relative error %.2e over %zu parameter tensors, %.1f s", err,
                 model.parameters().size(), secs)};
}

Outcome LossComposition() {
  const ModelConfig c;
  const double total = TotalLoss(1.0, 1.0, c);
  const TileGrid g;
  const std::vector<ScoreMap> maps(5, ScoreMap::Constant(g.n_rows, g.n_cols, 0.5));
  std::mt19937_64 rng(4);
  std::vector<TileMask> masks;
  for (int i = 0; i < 5; ++i) masks.push_back(testing::RandomMask(g, 0.3, rng));
  const double cls = LossCls(maps, masks);
  const double err = std::abs(cls - std::log(2.0));
  return {total == 1.0 && err <= 1e-9,
          Format("total_loss(1,1) = %.17g, uniform-0.5 cls loss - ln2 = %.1e", total, err)};
}

Outcome OverfitSanity() {
  RunConfig cfg;
  // Only the training split is being fitted, so validation must not end the run.
  cfg.train.early_stop_patience = cfg.train.max_epochs;
  cfg.PropagateSeed();
  const auto start = Clock::now();
  PreparedData data = PrepareData(cfg);
  cfg.train = DeepRecipe(cfg.train, data.split.train.size());
  Mftr<float> model(cfg.train.model, DeriveSeed(cfg.seed, "init"));
  TrainHooks hooks;
  hooks.eval_train = true;
  int reached = 0;
  double best = 0.0;
  hooks.on_epoch = [&](const EpochRecord& e) {
    best = std::max(best, *e.train_ap1);
    std::fprintf(stderr, "  overfit epoch %d loss %.4f train AP@1 %.3f (%.0f s)\n", e.epoch,
                 e.train_loss, *e.train_ap1, SecondsSince(start));
    if (*e.train_ap1 >= 0.90) reached = e.epoch;
    return reached == 0 && SecondsSince(start) < 1800.0;
  };
  const RunRecord r = Train(cfg.train, model, data.split.train, data.split.val, data.bank, {}, hooks);
  const double minutes = SecondsSince(start) / 60.0;
  const std::string what =
      Format("%zu train windows, default-shape model, lr %.0e, %d warmup and %d cosine "
             "decay steps: ",
             data.split.train.size(), kDeepLr, kDeepWarmupSteps, cfg.train.decay_steps);
  if (reached) {
    return {minutes < 30.0, what + Format("train AP@1 >= 0.90 at epoch %d, %.1f min", reached,
                                           minutes)};
  }
  return {false, what + Format("best train AP@1 %.3f after %zu epochs, %.1f min", best,
                               r.epochs.size(), minutes)};
}

// Narrower model for the ablation suite so that fourteen variants train in
// minutes; depth and heads keep their defaults.
RunConfig AblationRun() {
  RunConfig cfg;
  ModelConfig& m = cfg.train.model;
  m.d_model = 64;
  m.c_head = m.c_eye = m.recurrent_hidden = 32;
  m.ffn_hidden = 256;
  m.tile_head_hidden = 64;
  cfg.train.max_epochs = 80;
  cfg.synth.n_streams = 10;
  cfg.seed = 6;
  cfg.PropagateSeed();
  return cfg;
}

Outcome AblationDirection() {
  RunConfig cfg = AblationRun();
  const auto start = Clock::now();
  PreparedData data = PrepareData(cfg);
  cfg.train = DeepRecipe(cfg.train, data.split.train.size());
  const fs::path root = fs::temp_directory_path() / "mftr_acceptance_ablation";
  fs::remove_all(root);
  const SuiteResult s =
      RunAblationSuite(cfg.train, data.split.train, data.split.val, data.bank, root);
  int ok = 0;
  for (const SuiteRow& row : s.rows) ok += row.ok;
  const SuiteRow* full = s.Find("MFTR");
  const SuiteRow* no_tt = s.Find("no_temporal_transformer");
  const bool have = full && no_tt && full->val_report && no_tt->val_report;
  const double ap_full = have ? full->val_report->per_horizon.back().ap : -1.0;
  const double ap_no_tt = have ? no_tt->val_report->per_horizon.back().ap : -1.0;
  const bool all_ok = ok == static_cast<int>(s.rows.size()) && s.rows.size() == 15;
  const bool report = fs::exists(root / "ablation.json") && fs::exists(root / "ablation.csv");
  std::fprintf(stderr, "%s", s.ToCsv().c_str());
  fs::remove_all(root);
  return {all_ok && report && have && ap_no_tt < ap_full,
          Format("%d/%zu rows trained (%d runs, %zu val windows), val AP@5 MFTR %.3f vs "
                 "no_temporal_transformer %.3f, %.1f min",
                 ok, s.rows.size(), s.n_runs, data.split.val.size(), ap_full, ap_no_tt,
                 SecondsSince(start) / 60.0)};
}

Outcome Determinism() {
  const RunConfig cfg = SmokeRun();
  auto run = [&cfg] {
    PreparedData data = PrepareData(cfg);
    Mftr<float> model(cfg.train.model, DeriveSeed(cfg.seed, "init"));
    const RunRecord r = Train(cfg.train, model, data.split.train, data.split.val, data.bank);
    return std::pair{r, Evaluate(model, data.split.test, data.bank)};
  };
  const auto [ra, ea] = run();
  const auto [rb, eb] = run();
  const double l1 = ra.epochs.front().train_loss, l2 = rb.epochs.front().train_loss;
  const double rel = std::abs(l1 - l2) / std::max(std::abs(l1), 1e-30);
  const bool same = ea == eb && ea.ToJson() == eb.ToJson();
  return {rel <= 1e-6 && same && ra.epochs.size() == rb.epochs.size(),
          Format("epoch-1 loss %.9g vs %.9g (relative difference %.1e), %zu vs %zu epochs, "
                 "final reports %s",
                 l1, l2, rel, ra.epochs.size(), rb.epochs.size(),
                 same ? "identical" : "differ")};
}

Outcome DelayHarness() {
  const fs::path out = fs::temp_directory_path() / "mftr_acceptance_delay.json";
  const std::string cmd = std::string(MFTR_CLI_PATH) +
                          " bench-delay --warmup 2 --trials 5 > " + out.string();
  const int status = std::system(cmd.c_str());
  const int code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  if (code != 0) return {false, Format("mftr bench-delay exited with %d", code)};
  std::ifstream in(out);
  const auto j = nlohmann::json::parse(in);
  fs::remove(out);
  const double median = j.at("median_ms");
  const int batch = j.at("batch_size"), horizon = j.at("horizon");
  const bool fields = j.contains("hardware") && j.contains("n_trials") && j.contains("n_warmup");
  return {median > 0.0 && batch == 16 && horizon == 5 && fields,
          Format("median %.1f ms per batch of %d at T=%d on %s", median, batch, horizon,
                 j.at("hardware").get<std::string>().c_str())};
}

Outcome ThresholdMonotonicity() {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  int violations = 0;
  for (int i = 0; i < 100; ++i) {
    ScoreMap s(10, 20);
    for (Eigen::Index k = 0; k < s.size(); ++k) s.data()[k] = unit(rng);
    const TileMask hi = Threshold(s, 0.75), lo = Threshold(s, 0.55);
    for (std::size_t k = 0; k < hi.values().size(); ++k) {
      violations += hi.values()[k] && !lo.values()[k];
    }
  }
  return {violations == 0,
          Format("%d tiles above 0.75 but not above 0.55 across 100 maps", violations)};
}

Outcome RoundTrips() {
  RunConfig cfg = SmokeRun();
  cfg.train.max_epochs = 3;
  PreparedData data = PrepareData(cfg);
  Mftr<float> model(cfg.train.model, DeriveSeed(cfg.seed, "init"));
  Train(cfg.train, model, data.split.train, data.split.val, data.bank);
  const fs::path dir = fs::temp_directory_path() / "mftr_acceptance_roundtrip";
  fs::remove_all(dir);
  fs::create_directories(dir);
  SaveCheckpoint(dir / "model.ckpt", model, data.bank.identity(), 3);
  const auto loaded = LoadCheckpoint<float>(dir / "model.ckpt");
  const EvalReport before = Evaluate(model, data.split.val, data.bank);
  const EvalReport after = Evaluate(*loaded, data.split.val, data.bank);
  const bool reports = before == after && before.ToJson() == after.ToJson();

  SaveTraces(dir / "traces.jsonl", data.records);
  const bool traces = LoadTraces(dir / "traces.jsonl") == data.records;
  fs::remove_all(dir);
  return {reports && traces,
          Format("checkpoint reload EvalReport %s; %zu trace records %s after JSONL write/read",
                 reports ? "bitwise identical" : "differs", data.records.size(),
                 traces ? "identical" : "differ")};
}

}  // namespace
}  // namespace mftr

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::vector<int> only;
  std::vector<int> known;
  app.add_option("--only", only, "criteria to run")->delimiter(',');
  app.add_option("--known-failures", known,
                 "criteria whose failure is reported but does not fail the run")
      ->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  using mftr::Outcome;
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"geometry oracle equivalence", mftr::GeometryOracle},
      {"metric correctness", mftr::MetricCorrectness},
      {"gradient check", mftr::GradientCheck},
      {"loss composition", mftr::LossComposition},
      {"overfit sanity", mftr::OverfitSanity},
      {"ablation direction", mftr::AblationDirection},
      {"determinism", mftr::Determinism},
      {"delay benchmark harness", mftr::DelayHarness},
      {"threshold monotonicity", mftr::ThresholdMonotonicity},
      {"round-trips", mftr::RoundTrips},
  };
  const std::set<int> selected(only.begin(), only.end());
  const std::set<int> tolerated(known.begin(), known.end());
  int failures = 0, known_failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.contains(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    if (!o.pass) ++(tolerated.contains(id) ? known_failures : failures);
    std::printf("criterion %d (%s): %s - %s\n", id, criteria[i].first.c_str(),
                o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
  }
  if (known_failures) {
    std::printf("%d known failure(s) not counted against the run\n", known_failures);
  }
  return failures ? 1 : 0;
}
