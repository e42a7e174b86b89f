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

// Trace ingestion, sliding-window sample construction, dataset splitting and
// the synthetic dataset generator.

#pragma once

#include "mftr/errors.hpp"
#include "mftr/frames.hpp"
#include "mftr/geometry.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace mftr {

// One 1 Hz trace sample of one user watching one video.
struct TraceRecord {
  std::string video_id;
  std::string user_id;
  int t_sec = 0;
  HeadPosition head;
  GazePosition gaze;

  friend bool operator==(const TraceRecord&, const TraceRecord&) = default;
};

// A raw trace sample at an arbitrary timestamp, before 1 Hz resampling.
struct TimedTraceRecord {
  std::string video_id;
  std::string user_id;
  double time_sec = 0.0;
  HeadPosition head;
  GazePosition gaze;
};

// JSON-lines, one object per line with keys video_id, user_id, t_sec, yaw,
// pitch, gx, gy. Blank lines are skipped. Throws DataError with the line
// number on a missing field, an out-of-range coordinate or a duplicate
// (video_id, user_id, t_sec).
std::vector<TraceRecord> ParseTraces(std::istream& in,
                                     const std::string& source = "<stream>");
std::vector<TraceRecord> LoadTraces(const std::filesystem::path& path);
void WriteTraces(std::ostream& out, const std::vector<TraceRecord>& records);
void SaveTraces(const std::filesystem::path& path,
                const std::vector<TraceRecord>& records);

// Keeps, for every integer second covered by a stream, the raw record nearest
// to it (earlier record on ties).
std::vector<TraceRecord> ResampleToSeconds(
    const std::vector<TimedTraceRecord>& raw);

struct SampleMeta {
  std::string video_id;
  std::string user_id;
  int start_sec = 0;

  friend auto operator<=>(const SampleMeta&, const SampleMeta&) = default;
};

struct TraceSample {
  Eigen::MatrixXd head_hist;  // t x 2, (yaw, pitch) radians
  Eigen::MatrixXd eye_hist;   // t x 2, frame-normalized (x, y)
  std::vector<FrameRef> frames;  // t + T seconds starting at start_sec
  std::vector<ViewportAnchor> gt_anchors;  // T
  Eigen::MatrixXd gt_heads;  // T x 2
  SampleMeta meta;
};

struct WindowSet {
  std::vector<TraceSample> samples;
  int skipped_missing_frames = 0;
};

// One sample per start second s whose history [s, s + t) and future
// [s + t, s + t + T) are fully present in a stream. Samples needing a frame the
// source does not have are skipped and counted. Output is sorted by
// (video_id, user_id, start_sec).
WindowSet BuildWindows(const std::vector<TraceRecord>& records,
                       const FrameSource& frames, const TileGrid& grid,
                       int history, int horizon);

// Number of windows a stream of `seconds` contiguous seconds yields.
inline int WindowCount(int seconds, int history, int horizon) {
  return std::max(0, seconds - (history + horizon) + 1);
}

enum class SplitMode {
  kSample,  // shuffle individual windows
  kStream,  // keep every (video, user) stream inside one split
};

struct SplitSpec {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
  std::uint64_t seed = 0;
  SplitMode mode = SplitMode::kSample;

  void Validate() const;
  friend bool operator==(const SplitSpec&, const SplitSpec&) = default;
};

// Largest-remainder apportionment of n items; remainder ties go to train,
// then val, then test.
std::array<std::size_t, 3> SplitSizes(std::size_t n, const SplitSpec& spec);

struct DatasetSplit {
  std::vector<TraceSample> train;
  std::vector<TraceSample> val;
  std::vector<TraceSample> test;
};

// Deterministic for a given seed and independent of input order: samples are
// sorted canonically before shuffling.
DatasetSplit SplitDataset(std::vector<TraceSample> samples,
                          const SplitSpec& spec);

std::string ToString(SplitMode mode);
SplitMode ParseSplitMode(const std::string& text);

// Ornstein-Uhlenbeck head motion with a rendered Gaussian blob that shows
// where the head will be one second later.
struct SynthParams {
  int n_streams = 2;
  int seconds_per_stream = 60;
  double mean_reversion = 0.15;  // per second, towards yaw 0 / pitch 0
  double sigma_yaw = 0.35;       // rad per sqrt(second)
  double sigma_pitch = 0.12;     // rad per sqrt(second)
  double pitch_limit = 1.2;      // |pitch| clamp, rad
  double gaze_noise = 0.01;      // stddev, frame-normalized units
  double blob_sigma_px = 24.0;

  void Validate() const;
  friend bool operator==(const SynthParams&, const SynthParams&) = default;
};

struct SyntheticDataset {
  std::vector<TraceRecord> records;
  MemoryFrameSource frames;
};

// Stream k uses video "synth_v<k>" and user "synth_u<k>", seconds
// [0, seconds_per_stream).
SyntheticDataset SynthDataset(const SynthParams& params, const TileGrid& grid,
                              std::uint64_t seed);

}  // namespace mftr
