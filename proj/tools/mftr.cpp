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

// mftr: synth, train, eval, predict, ablate and bench-delay.
//
// Exit status: 0 success, 1 unexpected failure, 2 configuration error,
// 3 data error, 4 training divergence.

#include "mftr/batch.hpp"
#include "mftr/checkpoint.hpp"
#include "mftr/config.hpp"
#include "mftr/errors.hpp"
#include "mftr/metrics.hpp"
#include "mftr/pipeline.hpp"
#include "mftr/render.hpp"
#include "mftr/seeding.hpp"
#include "mftr/training.hpp"

#include <CLI11.hpp>
#include <Eigen/Core>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

namespace fs = std::filesystem;

namespace mftr {
namespace {

enum ExitCode { kOk = 0, kFailure = 1, kConfig = 2, kData = 3, kDivergence = 4 };

struct CommonOptions {
  std::string config;
  std::string out;
  std::string checkpoint;
  std::string split = "test";
  std::optional<std::uint64_t> seed;
};

// MFTR_DEVICE selects the compute device: "cpu" (default) or "cpu:<threads>".
std::string ApplyDevice() {
  const char* env = std::getenv("MFTR_DEVICE");
  const std::string device = env && *env ? env : "cpu";
  if (device == "cpu") return device;
  if (device.rfind("cpu:", 0) == 0) {
    const std::string count = device.substr(4);
    int threads = 0;
    try {
      threads = std::stoi(count);
    } catch (const std::exception&) {
      threads = 0;
    }
    if (threads < 1) {
      throw ConfigError("MFTR_DEVICE='" + device + "': thread count must be a positive integer");
    }
    Eigen::setNbThreads(threads);
    return device;
  }
  throw ConfigError("MFTR_DEVICE='" + device +
                    "' is not supported; this build runs on 'cpu' or 'cpu:<threads>'");
}

RunConfig LoadConfig(const CommonOptions& opts) {
  RunConfig config = opts.config.empty() ? RunConfig{} : LoadRunConfig(opts.config);
  if (opts.seed) config.seed = *opts.seed;
  config.PropagateSeed();
  config.Validate();
  return config;
}

void WriteFile(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

fs::path RequireOut(const CommonOptions& opts) {
  const fs::path out = opts.out.empty() ? fs::path(".") : fs::path(opts.out);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw DataError("cannot create output directory " + out.string() + ": " + ec.message());
  return out;
}

// Config for commands that start from a checkpoint: the model section must
// agree with the checkpoint when a config file is given, and is taken from
// the checkpoint otherwise.
RunConfig ConfigForCheckpoint(const CommonOptions& opts, const CheckpointInfo& info) {
  RunConfig config = LoadConfig(opts);
  if (opts.config.empty()) {
    config.train.model = info.config;
  } else {
    const std::string field = FirstDifference(config.train.model, info.config);
    if (!field.empty()) {
      throw ConfigError("config and checkpoint disagree on 'model." + field + "'");
    }
  }
  config.Validate();
  return config;
}

int CmdSynth(const CommonOptions& opts) {
  const RunConfig config = LoadConfig(opts);
  const fs::path out = RequireOut(opts);
  const SynthManifest manifest = WriteSyntheticDataset(config, out);
  std::cout << manifest.ToJson();
  return kOk;
}

int CmdTrain(const CommonOptions& opts) {
  const RunConfig config = LoadConfig(opts);
  PreparedData data = PrepareData(config);
  const fs::path run_dir = RequireOut(opts) / RunDirName(ConfigHash(config.train));
  fs::create_directories(run_dir);
  WriteFile(run_dir / "config.json", ToJson(config).dump(2) + "\n");

  Mftr<float> model(config.train.model, DeriveSeed(config.seed, "init"));
  TrainHooks hooks;
  hooks.on_epoch = [](const EpochRecord& e) {
    std::cerr << "epoch " << e.epoch << " loss " << e.train_loss << " val_ap "
              << e.val_ap << " val_ao " << e.val_ao << " (" << e.seconds << " s)\n";
    return true;
  };
  const RunRecord record = Train(config.train, model, data.split.train,
                                 data.split.val, data.bank, run_dir, hooks);
  if (!data.split.test.empty()) {
    const EvalReport test = Evaluate(model, data.split.test, data.bank,
                                     config.train.batch_size);
    WriteFile(run_dir / "eval_test.json", test.ToJson());
    WriteFile(run_dir / "eval_test.csv", test.ToCsv());
  }
  std::cout << run_dir.string() << "\n";
  std::cerr << "best epoch " << record.best_epoch << " val AP "
            << record.best_val_ap << "\n";
  return kOk;
}

int CmdEval(const CommonOptions& opts) {
  CheckpointInfo info = ReadCheckpointInfo(opts.checkpoint);
  const RunConfig config = ConfigForCheckpoint(opts, info);
  PreparedData data = PrepareData(config);
  auto model = LoadCheckpoint<float>(opts.checkpoint, &info);
  if (info.extractor_identity != data.bank.identity()) {
    throw ConfigError("checkpoint was trained on descriptors from '" +
                      info.extractor_identity + "' but the config uses '" +
                      data.bank.identity() + "'");
  }
  const auto& samples = SplitByName(data.split, opts.split);
  if (samples.empty()) throw DataError("split '" + opts.split + "' is empty");
  std::vector<Prediction> preds;
  const EvalReport report =
      Evaluate(*model, samples, data.bank, config.train.batch_size, &preds);
  const fs::path out = RequireOut(opts);
  WriteFile(out / "eval.json", report.ToJson());
  WriteFile(out / "eval.csv", report.ToCsv());

  std::string lines;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    nlohmann::ordered_json j;
    j["video_id"] = samples[i].meta.video_id;
    j["user_id"] = samples[i].meta.user_id;
    j["start_sec"] = samples[i].meta.start_sec;
    auto anchors = [](const std::vector<ViewportAnchor>& v) {
      nlohmann::ordered_json a = nlohmann::ordered_json::array();
      for (const ViewportAnchor& x : v) a.push_back({x.row, x.col});
      return a;
    };
    j["predicted"] = anchors(preds[i].anchors);
    j["ground_truth"] = anchors(samples[i].gt_anchors);
    lines += j.dump() + "\n";
  }
  WriteFile(out / "predictions.jsonl", lines);
  std::cout << report.ToJson();
  return kOk;
}

int CmdPredict(const CommonOptions& opts, int index, bool heatmap) {
  CheckpointInfo info = ReadCheckpointInfo(opts.checkpoint);
  const RunConfig config = ConfigForCheckpoint(opts, info);
  PreparedData data = PrepareData(config);
  auto model = LoadCheckpoint<float>(opts.checkpoint, &info);
  const auto& samples = SplitByName(data.split, opts.split);
  if (index < 0 || static_cast<std::size_t>(index) >= samples.size()) {
    throw DataError("sample index " + std::to_string(index) + " is outside split '" +
                    opts.split + "' of " + std::to_string(samples.size()) + " samples");
  }
  const TraceSample& sample = samples[static_cast<std::size_t>(index)];
  Batch<float> batch = MakeBatch<float>(samples, static_cast<std::size_t>(index),
                                        static_cast<std::size_t>(index) + 1,
                                        data.bank, model->config());
  const Prediction pred = model->Predict(batch.inputs).front();
  const ModelConfig& m = model->config();
  const fs::path out = RequireOut(opts);

  nlohmann::ordered_json j;
  j["video_id"] = sample.meta.video_id;
  j["user_id"] = sample.meta.user_id;
  j["start_sec"] = sample.meta.start_sec;
  j["gamma"] = m.gamma;
  j["steps"] = nlohmann::ordered_json::array();
  for (int k = 0; k < m.horizon; ++k) {
    const ViewportAnchor& a = pred.anchors[static_cast<std::size_t>(k)];
    const ViewportAnchor& g = sample.gt_anchors[static_cast<std::size_t>(k)];
    nlohmann::ordered_json step;
    step["step"] = k + 1;
    step["t_sec"] = sample.meta.start_sec + m.history + k;
    step["predicted"] = {a.row, a.col};
    step["ground_truth"] = {g.row, g.col};
    const std::string stem = "step_" + std::to_string(k + 1);
    if (!pred.scores.empty()) {
      const ScoreMap& scores = pred.scores[static_cast<std::size_t>(k)];
      const TileMask mask = Threshold(scores, m.gamma);
      Eigen::MatrixXd mask_m(m.grid.n_rows, m.grid.n_cols);
      for (int r = 0; r < m.grid.n_rows; ++r) {
        for (int c = 0; c < m.grid.n_cols; ++c) mask_m(r, c) = mask.at(r, c);
      }
      WriteFile(out / (stem + "_scores.csv"), MatrixToCsv(scores));
      WriteFile(out / (stem + "_mask.csv"), MatrixToCsv(mask_m));
      step["scores"] = stem + "_scores.csv";
      step["mask"] = stem + "_mask.csv";
      if (heatmap) {
        const FrameRef ref = sample.frames[static_cast<std::size_t>(m.history + k)];
        const Image frame = data.frames->Load(ref);
        WritePng(out / (stem + "_heatmap.png"),
                 RenderHeatmap(&frame, scores, m.grid, a, g));
        step["heatmap"] = stem + "_heatmap.png";
      }
    }
    if (pred.head.size()) {
      step["head"] = {pred.head(k, 0), pred.head(k, 1)};
    }
    j["steps"].push_back(step);
  }
  WriteFile(out / "prediction.json", j.dump(2) + "\n");
  std::cout << j.dump(2) << "\n";
  return kOk;
}

int CmdAblate(const CommonOptions& opts) {
  const RunConfig config = LoadConfig(opts);
  PreparedData data = PrepareData(config);
  const fs::path root = RequireOut(opts) / ("ablation-" + RunDirName(ConfigHash(config.train)));
  TrainHooks hooks;
  const SuiteResult result = RunAblationSuite(config.train, data.split.train,
                                              data.split.val, data.bank, root, hooks);
  std::cout << result.ToCsv();
  std::cerr << "wrote " << (root / "ablation.json").string() << "\n";
  return kOk;
}

int CmdBenchDelay(const CommonOptions& opts, int batch_size, int warmup, int trials,
                  const std::string& device) {
  std::unique_ptr<Mftr<float>> model;
  if (!opts.checkpoint.empty()) {
    model = LoadCheckpoint<float>(opts.checkpoint);
  } else {
    const RunConfig config = LoadConfig(opts);
    model = std::make_unique<Mftr<float>>(config.train.model, DeriveSeed(config.seed, "init"));
  }
  const ModelInputs<float> inputs = RandomInputs<float>(
      model->config(), batch_size, DeriveSeed(model->seed(), "bench"));
  DelayReport report = BenchDelay(*model, inputs, warmup, trials);
  report.device = device;
  if (!opts.out.empty()) WriteFile(RequireOut(opts) / "delay.json", report.ToJson());
  std::cout << report.ToJson();
  return kOk;
}

int Run(int argc, char** argv) {
  CLI::App app{"Multimodal fusion transformer viewport prediction"};
  app.require_subcommand(1);
  CommonOptions opts;
  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", opts.config, "JSON run config")->check(CLI::ExistingFile);
    cmd->add_option("--out", opts.out, "output directory");
    cmd->add_option("--seed", opts.seed, "override the config seed");
  };

  auto* synth = app.add_subcommand("synth", "write the synthetic dataset");
  add_common(synth);
  auto* train = app.add_subcommand("train", "train a model");
  add_common(train);
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a split");
  add_common(eval);
  eval->add_option("--checkpoint", opts.checkpoint)->required()->check(CLI::ExistingFile);
  eval->add_option("--split", opts.split)->check(CLI::IsMember({"train", "val", "test"}));

  int index = 0;
  bool heatmap = false;
  auto* predict = app.add_subcommand("predict", "score maps and viewports for one sample");
  add_common(predict);
  predict->add_option("--checkpoint", opts.checkpoint)->required()->check(CLI::ExistingFile);
  predict->add_option("--split", opts.split)->check(CLI::IsMember({"train", "val", "test"}));
  predict->add_option("--index", index, "sample index within the split");
  predict->add_flag("--heatmap", heatmap, "also render heatmap PNGs");

  auto* ablate = app.add_subcommand("ablate", "run the ablation suite");
  add_common(ablate);

  int batch_size = 16, warmup = 5, trials = 20;
  auto* bench = app.add_subcommand("bench-delay", "median batch prediction latency");
  add_common(bench);
  bench->add_option("--checkpoint", opts.checkpoint)->check(CLI::ExistingFile);
  bench->add_option("--batch", batch_size)->check(CLI::PositiveNumber);
  bench->add_option("--warmup", warmup)->check(CLI::NonNegativeNumber);
  bench->add_option("--trials", trials)->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    const std::string device = ApplyDevice();
    if (*synth) return CmdSynth(opts);
    if (*train) return CmdTrain(opts);
    if (*eval) return CmdEval(opts);
    if (*predict) return CmdPredict(opts, index, heatmap);
    if (*ablate) return CmdAblate(opts);
    if (*bench) return CmdBenchDelay(opts, batch_size, warmup, trials, device);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const DivergenceError& e) {
    std::cerr << "training diverged: " << e.what() << "\n";
    return kDivergence;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kFailure;
}

}  // namespace
}  // namespace mftr

int main(int argc, char** argv) { return mftr::Run(argc, argv); }
