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

#include "mftr/pipeline.hpp"

#include "mftr/errors.hpp"
#include "mftr/seeding.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

namespace mftr {
namespace {

std::filesystem::path TracesPath(const DataConfig& d) {
  if (!d.traces.empty()) return d.traces;
  return std::filesystem::path(d.dataset_dir) / "traces.jsonl";
}

std::filesystem::path FramesPath(const DataConfig& d) {
  if (!d.frames.empty()) return d.frames;
  return std::filesystem::path(d.dataset_dir) / "frames";
}

std::string ReadFile(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

std::unique_ptr<FrameEncoder> MakeEncoder(const RunConfig& config) {
  const ModelConfig& m = config.train.model;
  if (config.data.extractor == "onnx") {
    auto encoder = std::make_unique<OnnxFrameEncoder>(config.data.onnx_model);
    if (encoder->dim() != m.descriptor_dim) {
      throw ConfigError("config key 'model.descriptor_dim' must be 1000 with "
                        "the onnx extractor");
    }
    return encoder;
  }
  return std::make_unique<HashProjectionEncoder>(m.grid, m.descriptor_dim);
}

PreparedData PrepareData(const RunConfig& config) {
  config.Validate();
  const ModelConfig& m = config.train.model;
  PreparedData out;
  const bool on_disk = !config.data.dataset_dir.empty() || !config.data.traces.empty();
  if (on_disk) {
    const auto traces = TracesPath(config.data);
    const auto frames = FramesPath(config.data);
    if (!std::filesystem::exists(traces)) {
      throw DataError("trace file " + traces.string() +
                      " not found; create a dataset with `mftr synth --out DIR` "
                      "or point data.dataset_dir / data.traces at one");
    }
    if (!std::filesystem::is_directory(frames)) {
      throw DataError("frame directory " + frames.string() +
                      " not found; expected <video_id>/<t_sec>.png files");
    }
    out.records = LoadTraces(traces);
    out.frames = std::make_unique<DirectoryFrameSource>(frames, m.grid);
  } else {
    SyntheticDataset synth = SynthDataset(config.synth, m.grid, config.seed);
    out.records = std::move(synth.records);
    out.frames = std::make_unique<MemoryFrameSource>(std::move(synth.frames));
    out.synthetic = true;
  }

  out.windows = BuildWindows(out.records, *out.frames, m.grid, m.history, m.horizon);
  if (out.windows.samples.empty()) {
    throw DataError("no complete windows of " +
                    std::to_string(m.history + m.horizon) +
                    " seconds found in the dataset");
  }

  out.encoder = MakeEncoder(config);
  out.bank = FeatureBank(out.encoder->identity(), out.encoder->dim());
  const bool cached = !config.data.feature_cache.empty() &&
                      out.bank.Load(config.data.feature_cache);
  std::set<FrameRef> needed;
  for (const TraceSample& s : out.windows.samples) {
    needed.insert(s.frames.begin(), s.frames.end());
  }
  std::vector<FrameRef> missing;
  for (const FrameRef& ref : needed) {
    if (!out.bank.Has(ref)) missing.push_back(ref);
  }
  out.bank.AddFrames(missing, *out.frames, *out.encoder);
  if (!config.data.feature_cache.empty() && (!cached || !missing.empty())) {
    out.bank.Save(config.data.feature_cache);
  }

  out.split = SplitDataset(out.windows.samples, config.train.split);
  return out;
}

const std::vector<TraceSample>& SplitByName(const DatasetSplit& split,
                                            const std::string& name) {
  if (name == "train") return split.train;
  if (name == "val") return split.val;
  if (name == "test") return split.test;
  throw ConfigError("unknown split '" + name + "', expected train, val or test");
}

std::string SynthManifest::ToJson() const {
  nlohmann::ordered_json j;
  j["n_streams"] = n_streams;
  j["seconds_per_stream"] = seconds_per_stream;
  j["n_records"] = n_records;
  j["n_frames"] = n_frames;
  j["windows"] = windows;
  j["history"] = history;
  j["horizon"] = horizon;
  j["seed"] = seed;
  j["content_hash"] = content_hash;
  return j.dump(2) + "\n";
}

SynthManifest WriteSyntheticDataset(const RunConfig& config,
                                    const std::filesystem::path& out_dir) {
  config.Validate();
  const ModelConfig& m = config.train.model;
  SyntheticDataset synth = SynthDataset(config.synth, m.grid, config.seed);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw DataError("cannot create " + out_dir.string() + ": " + ec.message());
  const auto traces = out_dir / "traces.jsonl";
  SaveTraces(traces, synth.records);
  SaveFrames(out_dir / "frames", synth.frames);

  std::uint64_t hash = Fnv1a64(ReadFile(traces));
  for (const auto& [ref, image] : synth.frames.frames()) {
    const auto path = DirectoryFrameSource::PathFor(out_dir / "frames", ref);
    hash = SplitMix64(hash ^ Fnv1a64(ReadFile(path)));
  }

  SynthManifest manifest;
  manifest.n_streams = config.synth.n_streams;
  manifest.seconds_per_stream = config.synth.seconds_per_stream;
  manifest.n_records = synth.records.size();
  manifest.n_frames = synth.frames.frames().size();
  manifest.windows = static_cast<int>(
      BuildWindows(synth.records, synth.frames, m.grid, m.history, m.horizon)
          .samples.size());
  manifest.history = m.history;
  manifest.horizon = m.horizon;
  manifest.seed = config.seed;
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash));
  manifest.content_hash = buf;

  std::ofstream out(out_dir / "manifest.json", std::ios::trunc);
  if (!out) throw DataError("cannot write " + (out_dir / "manifest.json").string());
  out << manifest.ToJson();
  return manifest;
}

}  // namespace mftr
