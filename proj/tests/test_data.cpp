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

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <set>
#include <sstream>

namespace mftr {
namespace {

const TileGrid kSmallGrid{2, 4, 1, 2, 8, 4};

Image Blank(const TileGrid& g) {
  return Image{g.frame_w, g.frame_h,
               std::vector<std::uint8_t>(static_cast<std::size_t>(g.frame_w) * g.frame_h * 3)};
}

// One stream of `seconds` contiguous records with frames for each second.
void AddStream(const std::string& video, const std::string& user, int seconds,
               std::vector<TraceRecord>& records, MemoryFrameSource& frames) {
  for (int s = 0; s < seconds; ++s) {
    const double yaw = std::sin(0.3 * s);
    records.push_back({video, user, s, HeadPosition(yaw, 0.1 * std::cos(s)),
                       GazePosition(0.5, 0.5)});
    if (!frames.Has({video, s})) frames.Put({video, s}, Blank(kSmallGrid));
  }
}

std::vector<TraceSample> NumberedSamples(int n) {
  std::vector<TraceSample> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out[i].meta = {"v", "u", i};
  return out;
}

std::set<int> Starts(const std::vector<TraceSample>& v) {
  std::set<int> s;
  for (const auto& x : v) s.insert(x.meta.start_sec);
  return s;
}

TEST(Traces, ParsesDocumentedLine) {
  std::istringstream in(
      R"({"video_id":"v1","user_id":"u1","t_sec":0,"yaw":0.0,"pitch":0.0,"gx":0.5,"gy":0.5})");
  const auto r = ParseTraces(in);
  ASSERT_EQ(r.size(), 1u);
  EXPECT_EQ(r[0].video_id, "v1");
  EXPECT_EQ(r[0].user_id, "u1");
  EXPECT_EQ(r[0].t_sec, 0);
  EXPECT_EQ(r[0].head, HeadPosition(0.0, 0.0));
  EXPECT_EQ(r[0].gaze, GazePosition(0.5, 0.5));
}

TEST(Traces, EmptyInputYieldsNoRecords) {
  std::istringstream in("");
  EXPECT_TRUE(ParseTraces(in).empty());
  std::istringstream blanks("\n  \n");
  EXPECT_TRUE(ParseTraces(blanks).empty());
}

std::string ParseError(const std::string& text) {
  std::istringstream in(text);
  try {
    ParseTraces(in, "t.jsonl");
  } catch (const DataError& e) {
    return e.what();
  }
  return {};
}

TEST(Traces, RejectionsAreDescriptive) {
  const std::string good =
      R"({"video_id":"v","user_id":"u","t_sec":0,"yaw":0,"pitch":0,"gx":0.5,"gy":0.5})";
  const std::string yaw =
      ParseError(good + "\n" +
                 R"({"video_id":"v","user_id":"u","t_sec":1,"yaw":4.0,"pitch":0,"gx":0.5,"gy":0.5})");
  EXPECT_NE(yaw.find("t.jsonl:2"), std::string::npos) << yaw;
  EXPECT_NE(yaw.find("[-pi, pi]"), std::string::npos) << yaw;

  const std::string missing = ParseError(R"({"video_id":"v","user_id":"u","t_sec":0,"yaw":0,"pitch":0,"gx":0.5})");
  EXPECT_NE(missing.find("'gy'"), std::string::npos) << missing;

  const std::string dup = ParseError(good + "\n" + good);
  EXPECT_NE(dup.find("duplicate"), std::string::npos) << dup;

  EXPECT_NE(ParseError("{not json").find("invalid JSON"), std::string::npos);
  EXPECT_NE(ParseError(R"({"video_id":"v","user_id":"u","t_sec":0,"yaw":0,"pitch":0,"gx":1.5,"gy":0.5})"),
            "");
}

TEST(Traces, WriteReadRoundTripPreservesRecords) {
  const SyntheticDataset d = SynthDataset(SynthParams{}, TileGrid{}, 5);
  std::stringstream buf;
  WriteTraces(buf, d.records);
  EXPECT_EQ(ParseTraces(buf), d.records);

  const auto path = std::filesystem::temp_directory_path() / "mftr_traces_rt.jsonl";
  SaveTraces(path, d.records);
  EXPECT_EQ(LoadTraces(path), d.records);
  std::filesystem::remove(path);
  EXPECT_THROW(LoadTraces(path), DataError);
}

TEST(Traces, ResampleKeepsNearestRecordPerSecond) {
  std::vector<TimedTraceRecord> raw;
  for (double t : {0.0, 0.4, 0.6, 1.1, 1.5, 2.0}) {
    raw.push_back({"v", "u", t, HeadPosition(t, 0.0), GazePosition()});
  }
  const auto out = ResampleToSeconds(raw);
  ASSERT_EQ(out.size(), 3u);
  EXPECT_EQ(out[0].head.yaw(), 0.0);
  EXPECT_EQ(out[1].head.yaw(), 1.1);
  EXPECT_EQ(out[2].head.yaw(), 2.0);
  EXPECT_EQ(out[2].t_sec, 2);
}

TEST(Windows, CountExamples) {
  for (auto [seconds, expected] : {std::pair{12, 3}, {10, 1}, {9, 0}}) {
    std::vector<TraceRecord> records;
    MemoryFrameSource frames;
    AddStream("v", "u", seconds, records, frames);
    const WindowSet w = BuildWindows(records, frames, kSmallGrid, 5, 5);
    ASSERT_EQ(static_cast<int>(w.samples.size()), expected) << seconds;
    EXPECT_EQ(WindowCount(seconds, 5, 5), expected);
    for (int i = 0; i < expected; ++i) EXPECT_EQ(w.samples[i].meta.start_sec, i);
  }
}

TEST(Windows, CountMatchesFormulaAcrossStreams) {
  std::vector<TraceRecord> records;
  MemoryFrameSource frames;
  const std::vector<int> lengths = {3, 10, 17, 25};
  int expected = 0;
  for (std::size_t k = 0; k < lengths.size(); ++k) {
    AddStream("v" + std::to_string(k), "u", lengths[k], records, frames);
    expected += WindowCount(lengths[k], 4, 3);
  }
  EXPECT_EQ(static_cast<int>(BuildWindows(records, frames, kSmallGrid, 4, 3).samples.size()),
            expected);
}

TEST(Windows, SamplesAreConsistentWithRecords) {
  std::vector<TraceRecord> records;
  MemoryFrameSource frames;
  AddStream("v", "u", 14, records, frames);
  const WindowSet w = BuildWindows(records, frames, kSmallGrid, 5, 3);
  for (const TraceSample& s : w.samples) {
    const int st = s.meta.start_sec;
    ASSERT_EQ(s.frames.size(), 8u);
    EXPECT_EQ(s.frames.front().t_sec, st);
    EXPECT_EQ(s.head_hist(4, 0), records[st + 4].head.yaw());
    EXPECT_EQ(s.gt_heads(0, 0), records[st + 5].head.yaw());
    for (int i = 0; i < 3; ++i) {
      EXPECT_EQ(s.gt_anchors[i],
                NearestViewport(HeadPosition(s.gt_heads(i, 0), s.gt_heads(i, 1)), kSmallGrid));
    }
  }
}

TEST(Windows, MissingFrameSkipsAndCounts) {
  std::vector<TraceRecord> records;
  MemoryFrameSource all, partial;
  AddStream("v", "u", 12, records, all);
  for (const auto& [ref, img] : all.frames()) {
    if (ref.t_sec != 9) partial.Put(ref, img);
  }
  const WindowSet w = BuildWindows(records, partial, kSmallGrid, 5, 5);
  EXPECT_TRUE(w.samples.empty());
  EXPECT_EQ(w.skipped_missing_frames, 3);
}

TEST(Windows, GapBreaksContiguity) {
  std::vector<TraceRecord> records;
  MemoryFrameSource frames;
  AddStream("v", "u", 22, records, frames);
  records.erase(records.begin() + 11);
  EXPECT_EQ(BuildWindows(records, frames, kSmallGrid, 5, 5).samples.size(), 3u);
}

TEST(Windows, HorizonLongerThanHistoryRejected) {
  EXPECT_THROW(BuildWindows({}, MemoryFrameSource(), kSmallGrid, 2, 3), std::invalid_argument);
}

TEST(Split, ExactFractions) {
  SplitSpec spec;
  spec.seed = 7;
  const auto sizes = SplitSizes(100, spec);
  EXPECT_EQ(sizes, (std::array<std::size_t, 3>{80, 10, 10}));
  const DatasetSplit d = SplitDataset(NumberedSamples(100), spec);
  EXPECT_EQ(d.train.size(), 80u);
  EXPECT_EQ(d.val.size(), 10u);
  EXPECT_EQ(d.test.size(), 10u);
}

TEST(Split, LargestRemainderTiesFavorEarlierSplits) {
  EXPECT_EQ(SplitSizes(5, SplitSpec{}), (std::array<std::size_t, 3>{4, 1, 0}));
  EXPECT_EQ(SplitSizes(102, SplitSpec{}), (std::array<std::size_t, 3>{82, 10, 10}));
}

TEST(Split, SizesWithinOneOfQuota) {
  SplitSpec spec{0.5, 0.3, 0.2, 0, SplitMode::kSample};
  for (std::size_t n = 0; n < 200; ++n) {
    const auto s = SplitSizes(n, spec);
    ASSERT_EQ(s[0] + s[1] + s[2], n);
    const double f[] = {0.5, 0.3, 0.2};
    for (int i = 0; i < 3; ++i) ASSERT_LT(std::abs(s[i] - f[i] * n), 1.0) << n;
  }
}

TEST(Split, PartitionIsDisjointAndExhaustive) {
  const DatasetSplit d = SplitDataset(NumberedSamples(57), SplitSpec{});
  std::set<int> all;
  for (const auto* part : {&d.train, &d.val, &d.test}) {
    for (int s : Starts(*part)) EXPECT_TRUE(all.insert(s).second);
  }
  EXPECT_EQ(all.size(), 57u);
}

TEST(Split, DeterministicAndOrderIndependent) {
  SplitSpec spec;
  spec.seed = 11;
  auto shuffled = NumberedSamples(40);
  std::reverse(shuffled.begin(), shuffled.end());
  const DatasetSplit a = SplitDataset(NumberedSamples(40), spec);
  const DatasetSplit b = SplitDataset(shuffled, spec);
  EXPECT_EQ(Starts(a.train), Starts(b.train));
  EXPECT_EQ(Starts(a.val), Starts(b.val));
  spec.seed = 12;
  EXPECT_NE(Starts(SplitDataset(NumberedSamples(40), spec).val), Starts(a.val));
}

TEST(Split, StreamModeKeepsStreamsTogether) {
  std::vector<TraceSample> samples;
  for (int k = 0; k < 10; ++k) {
    for (int i = 0; i < 4; ++i) {
      TraceSample s;
      s.meta = {"v" + std::to_string(k), "u", i};
      samples.push_back(s);
    }
  }
  SplitSpec spec;
  spec.mode = SplitMode::kStream;
  const DatasetSplit d = SplitDataset(samples, spec);
  EXPECT_EQ(d.train.size(), 32u);
  std::set<std::string> train_videos;
  for (const auto& s : d.train) train_videos.insert(s.meta.video_id);
  for (const auto* part : {&d.val, &d.test}) {
    for (const auto& s : *part) EXPECT_FALSE(train_videos.contains(s.meta.video_id));
  }
}

TEST(Split, InvalidFractionsRejected) {
  EXPECT_THROW(SplitSizes(10, SplitSpec{0.8, 0.2, 0.0, 0, SplitMode::kSample}),
               std::invalid_argument);
  EXPECT_THROW(SplitSizes(10, SplitSpec{0.8, 0.2, 0.2, 0, SplitMode::kSample}),
               std::invalid_argument);
  EXPECT_EQ(ParseSplitMode(ToString(SplitMode::kStream)), SplitMode::kStream);
}

TEST(Synth, WindowCountForTwoThirtySecondStreams) {
  SynthParams p;
  p.seconds_per_stream = 30;
  const SyntheticDataset d = SynthDataset(p, TileGrid{}, 1);
  EXPECT_EQ(d.records.size(), 60u);
  EXPECT_EQ(BuildWindows(d.records, d.frames, TileGrid{}, 5, 5).samples.size(), 42u);
}

TEST(Synth, DeterministicForSeed) {
  SynthParams p;
  p.seconds_per_stream = 8;
  const SyntheticDataset a = SynthDataset(p, TileGrid{}, 3);
  const SyntheticDataset b = SynthDataset(p, TileGrid{}, 3);
  const SyntheticDataset c = SynthDataset(p, TileGrid{}, 4);
  EXPECT_EQ(a.records, b.records);
  EXPECT_EQ(a.frames.frames(), b.frames.frames());
  EXPECT_NE(a.records, c.records);
}

TEST(Synth, BlobMarksNextSecondHeadPosition) {
  SynthParams p;
  p.seconds_per_stream = 12;
  p.n_streams = 1;
  const TileGrid g;
  const SyntheticDataset d = SynthDataset(p, g, 9);
  for (int s = 0; s + 1 < 12; ++s) {
    const Image img = d.frames.Load({"synth_v0", s});
    int bx = 0, by = 0, best = -1;
    for (int y = 0; y < img.height; ++y) {
      for (int x = 0; x < img.width; ++x) {
        if (img.at(x, y, 0) > best) best = img.at(x, y, 0), bx = x, by = y;
      }
    }
    const FramePoint want = HeadToFrame(d.records[s + 1].head, g);
    double du = std::abs(bx + 0.5 - want.u);
    du = std::min(du, g.frame_w - du);
    EXPECT_LE(du, 2.0) << s;
    EXPECT_LE(std::abs(by + 0.5 - want.v), 2.0) << s;
  }
}

TEST(Synth, GazeTracksHeadWithinNoise) {
  const TileGrid g;
  const SyntheticDataset d = SynthDataset(SynthParams{}, g, 2);
  for (const auto& r : d.records) {
    const FramePoint p = HeadToFrame(r.head, g);
    double dx = std::abs(r.gaze.x() - p.u / g.frame_w);
    dx = std::min(dx, 1.0 - dx);
    EXPECT_LT(dx, 0.06);
    EXPECT_LT(std::abs(r.gaze.y() - p.v / g.frame_h), 0.06);
  }
}

}  // namespace
}  // namespace mftr
