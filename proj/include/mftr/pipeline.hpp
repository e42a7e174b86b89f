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

// Glue from a run config to ready-to-train splits and descriptors.

#pragma once

#include "mftr/config.hpp"
#include "mftr/data.hpp"
#include "mftr/frames.hpp"

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

namespace mftr {

struct PreparedData {
  std::vector<TraceRecord> records;
  std::unique_ptr<FrameSource> frames;
  std::unique_ptr<FrameEncoder> encoder;
  WindowSet windows;
  DatasetSplit split;
  FeatureBank bank;
  bool synthetic = false;
};

std::unique_ptr<FrameEncoder> MakeEncoder(const RunConfig& config);

// Loads the configured dataset (or synthesizes it in memory), builds windows,
// splits them and encodes every referenced frame. Throws DataError with a
// hint when the dataset is missing.
PreparedData PrepareData(const RunConfig& config);

// "train", "val" or "test"; throws ConfigError otherwise.
const std::vector<TraceSample>& SplitByName(const DatasetSplit& split,
                                            const std::string& name);

struct SynthManifest {
  int n_streams = 0;
  int seconds_per_stream = 0;
  std::size_t n_records = 0;
  std::size_t n_frames = 0;
  int windows = 0;
  int history = 0;
  int horizon = 0;
  std::uint64_t seed = 0;
  std::string content_hash;  // over traces.jsonl and every frame file

  std::string ToJson() const;
};

// Writes traces.jsonl, frames/<video>/<sec>.png and manifest.json.
SynthManifest WriteSyntheticDataset(const RunConfig& config,
                                    const std::filesystem::path& out_dir);

}  // namespace mftr
