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

#include "mftr/data.hpp"

#include "mftr/seeding.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <tuple>

namespace mftr {

namespace {

using Json = nlohmann::json;
using StreamKey = std::pair<std::string, std::string>;

template <typename T>
T RequireField(const Json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) {
    throw DataError(where + ": missing field '" + key + "'");
  }
  if constexpr (std::is_same_v<T, std::string>) {
    if (!it->is_string()) {
      throw DataError(where + ": field '" + key + "' must be a string");
    }
  } else if constexpr (std::is_integral_v<T>) {
    if (!it->is_number_integer()) {
      throw DataError(where + ": field '" + key + "' must be an integer");
    }
  } else {
    if (!it->is_number()) {
      throw DataError(where + ": field '" + key + "' must be a number");
    }
  }
  return it->get<T>();
}

}  // namespace

std::vector<TraceRecord> ParseTraces(std::istream& in,
                                     const std::string& source) {
  std::vector<TraceRecord> records;
  std::map<std::tuple<std::string, std::string, int>, int> seen;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = source + ":" + std::to_string(line_no);
    Json obj;
    try {
      obj = Json::parse(line);
    } catch (const Json::parse_error& e) {
      throw DataError(where + ": invalid JSON (" + e.what() + ")");
    }
    if (!obj.is_object()) throw DataError(where + ": expected a JSON object");
    TraceRecord r;
    r.video_id = RequireField<std::string>(obj, "video_id", where);
    r.user_id = RequireField<std::string>(obj, "user_id", where);
    r.t_sec = RequireField<int>(obj, "t_sec", where);
    const double yaw = RequireField<double>(obj, "yaw", where);
    const double pitch = RequireField<double>(obj, "pitch", where);
    const double gx = RequireField<double>(obj, "gx", where);
    const double gy = RequireField<double>(obj, "gy", where);
    try {
      r.head = HeadPosition(yaw, pitch);
      r.gaze = GazePosition(gx, gy);
    } catch (const std::invalid_argument& e) {
      throw DataError(where + ": " + e.what());
    }
    auto [it, inserted] =
        seen.emplace(std::make_tuple(r.video_id, r.user_id, r.t_sec), line_no);
    if (!inserted) {
      throw DataError(where + ": duplicate record for video '" + r.video_id +
                      "', user '" + r.user_id + "', t_sec " +
                      std::to_string(r.t_sec) + " (first seen on line " +
                      std::to_string(it->second) + ")");
    }
    records.push_back(std::move(r));
  }
  return records;
}

std::vector<TraceRecord> LoadTraces(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open trace file " + path.string());
  return ParseTraces(in, path.string());
}

void WriteTraces(std::ostream& out, const std::vector<TraceRecord>& records) {
  for (const TraceRecord& r : records) {
    nlohmann::ordered_json obj;
    obj["video_id"] = r.video_id;
    obj["user_id"] = r.user_id;
    obj["t_sec"] = r.t_sec;
    obj["yaw"] = r.head.yaw();
    obj["pitch"] = r.head.pitch();
    obj["gx"] = r.gaze.x();
    obj["gy"] = r.gaze.y();
    out << obj.dump() << '\n';
  }
}

void SaveTraces(const std::filesystem::path& path,
                const std::vector<TraceRecord>& records) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write trace file " + path.string());
  WriteTraces(out, records);
  if (!out) throw DataError("failed while writing " + path.string());
}

std::vector<TraceRecord> ResampleToSeconds(
    const std::vector<TimedTraceRecord>& raw) {
  std::map<StreamKey, std::vector<const TimedTraceRecord*>> streams;
  for (const auto& r : raw) streams[{r.video_id, r.user_id}].push_back(&r);
  std::vector<TraceRecord> out;
  for (auto& [key, items] : streams) {
    std::stable_sort(items.begin(), items.end(),
                     [](const auto* a, const auto* b) {
                       return a->time_sec < b->time_sec;
                     });
    const int first = static_cast<int>(std::ceil(items.front()->time_sec));
    const int last = static_cast<int>(std::floor(items.back()->time_sec));
    std::size_t j = 0;
    for (int sec = first; sec <= last; ++sec) {
      while (j + 1 < items.size() &&
             std::abs(items[j + 1]->time_sec - sec) <
                 std::abs(items[j]->time_sec - sec)) {
        ++j;
      }
      const TimedTraceRecord& src = *items[j];
      out.push_back({key.first, key.second, sec, src.head, src.gaze});
    }
  }
  return out;
}

WindowSet BuildWindows(const std::vector<TraceRecord>& records,
                       const FrameSource& frames, const TileGrid& grid,
                       int history, int horizon) {
  if (history < 1 || horizon < 1) {
    throw std::invalid_argument("history and horizon must be positive");
  }
  if (horizon > history) {
    throw std::invalid_argument("horizon must not exceed history");
  }
  std::map<StreamKey, std::map<int, const TraceRecord*>> streams;
  for (const TraceRecord& r : records) {
    streams[{r.video_id, r.user_id}][r.t_sec] = &r;
  }
  const int span = history + horizon;
  WindowSet out;
  for (const auto& [key, by_sec] : streams) {
    const int first = by_sec.begin()->first;
    const int last = by_sec.rbegin()->first;
    for (int s = first; s + span - 1 <= last; ++s) {
      bool complete = true;
      for (int k = 0; k < span && complete; ++k) {
        complete = by_sec.contains(s + k);
      }
      if (!complete) continue;
      bool have_frames = true;
      for (int k = 0; k < span && have_frames; ++k) {
        have_frames = frames.Has({key.first, s + k});
      }
      if (!have_frames) {
        ++out.skipped_missing_frames;
        continue;
      }
      TraceSample sample;
      sample.meta = {key.first, key.second, s};
      sample.head_hist.resize(history, 2);
      sample.eye_hist.resize(history, 2);
      for (int k = 0; k < history; ++k) {
        const TraceRecord& r = *by_sec.at(s + k);
        sample.head_hist(k, 0) = r.head.yaw();
        sample.head_hist(k, 1) = r.head.pitch();
        sample.eye_hist(k, 0) = r.gaze.x();
        sample.eye_hist(k, 1) = r.gaze.y();
      }
      sample.gt_heads.resize(horizon, 2);
      for (int i = 0; i < horizon; ++i) {
        const TraceRecord& r = *by_sec.at(s + history + i);
        sample.gt_heads(i, 0) = r.head.yaw();
        sample.gt_heads(i, 1) = r.head.pitch();
        sample.gt_anchors.push_back(NearestViewport(r.head, grid));
      }
      for (int k = 0; k < span; ++k) sample.frames.push_back({key.first, s + k});
      out.samples.push_back(std::move(sample));
    }
  }
  return out;
}

void SplitSpec::Validate() const {
  if (!(train > 0.0 && val > 0.0 && test > 0.0)) {
    throw std::invalid_argument("split fractions must be positive");
  }
  if (std::abs(train + val + test - 1.0) > 1e-9) {
    throw std::invalid_argument("split fractions must sum to 1");
  }
}

std::array<std::size_t, 3> SplitSizes(std::size_t n, const SplitSpec& spec) {
  spec.Validate();
  const std::array<double, 3> fractions = {spec.train, spec.val, spec.test};
  std::array<std::size_t, 3> sizes{};
  std::array<double, 3> remainders{};
  std::size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    const double quota = fractions[i] * static_cast<double>(n);
    // Snap quotas that are integral up to rounding noise (0.1 * 100 etc.).
    double whole = std::floor(quota + 1e-9);
    sizes[i] = static_cast<std::size_t>(whole);
    remainders[i] = std::max(0.0, quota - whole);
    assigned += sizes[i];
  }
  while (assigned < n) {
    int best = 0;
    for (int i = 1; i < 3; ++i) {
      if (remainders[i] > remainders[best] + 1e-12) best = i;
    }
    ++sizes[best];
    remainders[best] = -1.0;
    ++assigned;
  }
  return sizes;
}

DatasetSplit SplitDataset(std::vector<TraceSample> samples,
                          const SplitSpec& spec) {
  spec.Validate();
  std::stable_sort(samples.begin(), samples.end(),
                   [](const TraceSample& a, const TraceSample& b) {
                     return a.meta < b.meta;
                   });
  std::mt19937_64 rng(spec.seed);
  DatasetSplit out;
  auto bucket = [&out](int i) -> std::vector<TraceSample>& {
    return i == 0 ? out.train : (i == 1 ? out.val : out.test);
  };

  if (spec.mode == SplitMode::kSample) {
    std::vector<std::size_t> order(samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    DeterministicShuffle(order, rng);
    const auto sizes = SplitSizes(samples.size(), spec);
    std::size_t next = 0;
    for (int b = 0; b < 3; ++b) {
      for (std::size_t k = 0; k < sizes[b]; ++k) {
        bucket(b).push_back(std::move(samples[order[next++]]));
      }
    }
    return out;
  }

  std::vector<StreamKey> keys;
  for (const auto& s : samples) {
    StreamKey key{s.meta.video_id, s.meta.user_id};
    if (keys.empty() || keys.back() != key) keys.push_back(key);
  }
  DeterministicShuffle(keys, rng);
  const auto sizes = SplitSizes(keys.size(), spec);
  std::map<StreamKey, int> assignment;
  std::size_t next = 0;
  for (int b = 0; b < 3; ++b) {
    for (std::size_t k = 0; k < sizes[b]; ++k) assignment[keys[next++]] = b;
  }
  for (auto& s : samples) {
    bucket(assignment.at({s.meta.video_id, s.meta.user_id}))
        .push_back(std::move(s));
  }
  return out;
}

std::string ToString(SplitMode mode) {
  return mode == SplitMode::kStream ? "stream" : "sample";
}

SplitMode ParseSplitMode(const std::string& text) {
  if (text == "sample") return SplitMode::kSample;
  if (text == "stream") return SplitMode::kStream;
  throw std::invalid_argument("split mode must be sample or stream, got " +
                              text);
}

void SynthParams::Validate() const {
  if (n_streams < 1) throw std::invalid_argument("synth n_streams must be >= 1");
  if (seconds_per_stream < 1) {
    throw std::invalid_argument("synth seconds_per_stream must be >= 1");
  }
  if (mean_reversion < 0.0 || mean_reversion > 1.0) {
    throw std::invalid_argument("synth mean_reversion must lie in [0, 1]");
  }
  if (sigma_yaw < 0.0 || sigma_pitch < 0.0 || gaze_noise < 0.0) {
    throw std::invalid_argument("synth noise scales must not be negative");
  }
  if (pitch_limit <= 0.0 || pitch_limit > kPi / 2) {
    throw std::invalid_argument("synth pitch_limit must lie in (0, pi/2]");
  }
  if (blob_sigma_px <= 0.0) {
    throw std::invalid_argument("synth blob_sigma_px must be positive");
  }
}

namespace {

constexpr double kBackground = 16.0;
constexpr double kBlobPeak = 239.0;

Image RenderBlob(const FramePoint& center, const TileGrid& grid,
                 double sigma) {
  Image img{grid.frame_w, grid.frame_h, {}};
  img.rgb.resize(static_cast<std::size_t>(grid.frame_w) * grid.frame_h * 3);
  std::vector<double> col_weight(static_cast<std::size_t>(grid.frame_w));
  std::vector<double> row_weight(static_cast<std::size_t>(grid.frame_h));
  const double denom = 2.0 * sigma * sigma;
  for (int x = 0; x < grid.frame_w; ++x) {
    double du = std::abs(x + 0.5 - center.u);
    du = std::min(du, grid.frame_w - du);  // longitude wraps
    col_weight[static_cast<std::size_t>(x)] = std::exp(-du * du / denom);
  }
  for (int y = 0; y < grid.frame_h; ++y) {
    const double dv = y + 0.5 - center.v;
    row_weight[static_cast<std::size_t>(y)] = std::exp(-dv * dv / denom);
  }
  std::size_t i = 0;
  for (int y = 0; y < grid.frame_h; ++y) {
    for (int x = 0; x < grid.frame_w; ++x) {
      const double w = row_weight[static_cast<std::size_t>(y)] *
                       col_weight[static_cast<std::size_t>(x)];
      const auto value =
          static_cast<std::uint8_t>(std::lround(kBackground + kBlobPeak * w));
      // Warm tint so the blob is not pure gray.
      img.rgb[i++] = value;
      img.rgb[i++] = static_cast<std::uint8_t>(std::lround(kBackground + 0.85 * kBlobPeak * w));
      img.rgb[i++] = static_cast<std::uint8_t>(std::lround(kBackground + 0.6 * kBlobPeak * w));
    }
  }
  return img;
}

}  // namespace

SyntheticDataset SynthDataset(const SynthParams& params, const TileGrid& grid,
                              std::uint64_t seed) {
  params.Validate();
  grid.Validate();
  SyntheticDataset out;
  const int seconds = params.seconds_per_stream;
  for (int k = 0; k < params.n_streams; ++k) {
    std::mt19937_64 rng(DeriveSeed(seed, "synth") + static_cast<std::uint64_t>(k));
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const std::string video = "synth_v" + std::to_string(k);
    const std::string user = "synth_u" + std::to_string(k);

    // One extra second so the last frame can show the head one second ahead.
    std::vector<HeadPosition> heads;
    double yaw = (2.0 * unit(rng) - 1.0) * kPi;
    double pitch = (2.0 * unit(rng) - 1.0) * 0.4;
    for (int s = 0; s <= seconds; ++s) {
      heads.push_back(HeadPosition::FromUnconstrained(yaw, pitch));
      yaw += -params.mean_reversion * yaw + params.sigma_yaw * gauss(rng);
      pitch += -params.mean_reversion * pitch + params.sigma_pitch * gauss(rng);
      pitch = std::clamp(pitch, -params.pitch_limit, params.pitch_limit);
    }
    for (int s = 0; s < seconds; ++s) {
      const FramePoint p = HeadToFrame(heads[s], grid);
      const double gx = std::clamp(
          p.u / grid.frame_w + params.gaze_noise * gauss(rng), 0.0, 1.0);
      const double gy = std::clamp(
          p.v / grid.frame_h + params.gaze_noise * gauss(rng), 0.0, 1.0);
      out.records.push_back({video, user, s, heads[s], GazePosition(gx, gy)});
      out.frames.Put({video, s},
                     RenderBlob(HeadToFrame(heads[s + 1], grid), grid,
                                params.blob_sigma_px));
    }
  }
  return out;
}

}  // namespace mftr
