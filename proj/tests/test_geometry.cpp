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

#include "mftr/geometry.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

namespace mftr {
namespace {

const TileGrid kGrid;

TEST(HeadPosition, RejectsOutOfRange) {
  EXPECT_THROW(HeadPosition(4.0, 0.0), std::invalid_argument);
  EXPECT_THROW(HeadPosition(0.0, 1.6), std::invalid_argument);
  EXPECT_THROW(HeadPosition(std::nan(""), 0.0), std::invalid_argument);
  EXPECT_NO_THROW(HeadPosition(-kPi, kPi / 2));
  EXPECT_NO_THROW(HeadPosition(kPi, -kPi / 2));
}

TEST(HeadPosition, FromUnconstrainedWrapsYawAndClampsPitch) {
  const HeadPosition h = HeadPosition::FromUnconstrained(kPi + 0.5, 2.0);
  EXPECT_NEAR(h.yaw(), -kPi + 0.5, 1e-12);
  EXPECT_DOUBLE_EQ(h.pitch(), kPi / 2);
}

TEST(GazePosition, RejectsOutOfRange) {
  EXPECT_THROW(GazePosition(-0.1, 0.5), std::invalid_argument);
  EXPECT_THROW(GazePosition(0.5, 1.1), std::invalid_argument);
  EXPECT_NO_THROW(GazePosition(0.0, 1.0));
}

TEST(TileGrid, DefaultsAndValidation) {
  EXPECT_EQ(kGrid.num_tiles(), 200);
  EXPECT_EQ(kGrid.num_anchors(), 140);
  EXPECT_DOUBLE_EQ(kGrid.tile_w(), 36.0);
  EXPECT_DOUBLE_EQ(kGrid.tile_h(), 36.0);
  TileGrid bad = kGrid;
  bad.frame_w = 721;
  EXPECT_THROW(bad.Validate(), std::invalid_argument);
  bad = kGrid;
  bad.vp_rows = 11;
  EXPECT_THROW(bad.Validate(), std::invalid_argument);
}

TEST(HeadToFrame, Examples) {
  FramePoint p = HeadToFrame(HeadPosition(0, 0), kGrid);
  EXPECT_DOUBLE_EQ(p.u, 360.0);
  EXPECT_DOUBLE_EQ(p.v, 180.0);
  p = HeadToFrame(HeadPosition(-kPi, kPi / 2), kGrid);
  EXPECT_DOUBLE_EQ(p.u, 0.0);
  EXPECT_DOUBLE_EQ(p.v, 0.0);
  p = HeadToFrame(HeadPosition(kPi / 2, -kPi / 4), kGrid);
  EXPECT_NEAR(p.u, 540.0, 1e-9);
  EXPECT_NEAR(p.v, 270.0, 1e-9);
  p = HeadToFrame(HeadPosition(kPi, 0), kGrid);
  EXPECT_DOUBLE_EQ(p.u, 0.0);
}

TEST(HeadToFrame, MonotoneInYawAntiMonotoneInPitch) {
  double prev_u = -1.0;
  for (int deg = -180; deg < 180; ++deg) {
    const double u = HeadToFrame(HeadPosition(deg * kPi / 180, 0), kGrid).u;
    EXPECT_GT(u, prev_u);
    prev_u = u;
  }
  double prev_v = -1.0;
  for (int deg = 90; deg >= -90; --deg) {
    const double v = HeadToFrame(HeadPosition(0, deg * kPi / 180), kGrid).v;
    EXPECT_GT(v, prev_v);
    prev_v = v;
  }
}

TEST(TileOf, Examples) {
  EXPECT_EQ(TileOf(360.0, 180.0, kGrid), (TileIndex{5, 10}));
  EXPECT_EQ(TileOf(0.0, 0.0, kGrid), (TileIndex{0, 0}));
  EXPECT_EQ(TileOf(719.9, 360.0, kGrid), (TileIndex{9, 19}));
  EXPECT_THROW(TileOf(720.0, 0.0, kGrid), std::out_of_range);
  EXPECT_THROW(TileOf(0.0, -1.0, kGrid), std::out_of_range);
}

// Exhaustive scan over every legal anchor with wrapped column distance.
ViewportAnchor BruteNearest(const HeadPosition& h, const TileGrid& g) {
  const FramePoint p = HeadToFrame(h, g);
  const double hr = p.v / g.tile_h(), hc = p.u / g.tile_w();
  ViewportAnchor best{0, 0};
  double best_d = 1e300;
  for (int r = 0; r < g.anchor_rows(); ++r) {
    for (int c = 0; c < g.n_cols; ++c) {
      const double dr = r + g.vp_rows / 2.0 - hr;
      double dc = std::fmod(std::abs(c + g.vp_cols / 2.0 - hc), g.n_cols);
      dc = std::min(dc, g.n_cols - dc);
      const double d = dr * dr + dc * dc;
      if (d < best_d - 1e-9) {
        best_d = d;
        best = {r, c};
      }
    }
  }
  return best;
}

TEST(NearestViewport, Examples) {
  EXPECT_EQ(NearestViewport(HeadPosition(0, 0), kGrid), (ViewportAnchor{3, 5}));
  EXPECT_EQ(NearestViewport(HeadPosition(-kPi, kPi / 2), kGrid),
            (ViewportAnchor{0, 15}));
  TileGrid whole = kGrid;
  whole.vp_rows = whole.n_rows;
  whole.vp_cols = whole.n_cols;
  EXPECT_EQ(NearestViewport(HeadPosition(1.0, -0.3), whole), (ViewportAnchor{0, 0}));
}

TEST(NearestViewport, MatchesBruteForceAndCoversHeadTileOnDegreeSweep) {
  for (int yaw = -180; yaw <= 180; ++yaw) {
    for (int pitch = -90; pitch <= 90; ++pitch) {
      const HeadPosition h(yaw * kPi / 180, pitch * kPi / 180);
      const ViewportAnchor a = NearestViewport(h, kGrid);
      ASSERT_EQ(a, BruteNearest(h, kGrid)) << yaw << "," << pitch;
      const FramePoint p = HeadToFrame(h, kGrid);
      const TileIndex t = TileOf(p.u, p.v, kGrid);
      ASSERT_TRUE(ViewportMask(a, kGrid).at(t.row, t.col)) << yaw << "," << pitch;
    }
  }
}

TEST(ViewportMask, Examples) {
  const TileMask m = ViewportMask({3, 5}, kGrid);
  EXPECT_EQ(m.count(), 36);
  for (int r = 0; r < 10; ++r) {
    for (int c = 0; c < 20; ++c) {
      EXPECT_EQ(m.at(r, c), r >= 3 && r <= 6 && c >= 5 && c <= 13);
    }
  }
  const TileMask w = ViewportMask({0, 18}, kGrid);
  EXPECT_EQ(w.count(), 36);
  for (int c : {18, 19, 0, 1, 2, 3, 4, 5, 6}) EXPECT_TRUE(w.at(0, c));
  EXPECT_FALSE(w.at(0, 7));
  EXPECT_FALSE(w.at(0, 17));
  TileGrid whole = kGrid;
  whole.vp_rows = 10;
  whole.vp_cols = 20;
  EXPECT_EQ(ViewportMask({0, 0}, whole).count(), 200);
}

TEST(SelectViewport, Examples) {
  EXPECT_EQ(SelectViewport(ViewportMask({3, 5}, kGrid), kGrid), (ViewportAnchor{3, 5}));
  EXPECT_EQ(SelectViewport(TileMask(kGrid), kGrid), (ViewportAnchor{0, 0}));
}

TEST(SelectViewport, EqualsExhaustiveScanOnRandomMasks) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 1000; ++trial) {
    const TileMask mask = testing::RandomMask(kGrid, 0.1 + 0.8 * (trial % 10) / 9.0, rng);
    ASSERT_EQ(SelectViewport(mask, kGrid), testing::BruteSelect(mask, kGrid)) << trial;
  }
}

TEST(SelectViewport, EqualsExhaustiveScanOnOddGrids) {
  std::mt19937_64 rng(11);
  for (const TileGrid g : {TileGrid{6, 8, 2, 3, 80, 60}, TileGrid{3, 5, 3, 5, 50, 30},
                           TileGrid{4, 7, 1, 7, 70, 40}, TileGrid{5, 9, 4, 2, 90, 50}}) {
    for (int trial = 0; trial < 200; ++trial) {
      const TileMask mask = testing::RandomMask(g, 0.4, rng);
      ASSERT_EQ(SelectViewport(mask, g), testing::BruteSelect(mask, g));
    }
  }
}

TEST(SelectViewport, CyclicColumnShiftShiftsAnchor) {
  std::mt19937_64 rng(3);
  int checked = 0;
  while (checked < 300) {
    const TileMask mask = testing::RandomMask(kGrid, 0.3, rng);
    // Only masks with a unique maximum.
    int best = -1, ties = 0;
    for (int r = 0; r < kGrid.anchor_rows(); ++r) {
      for (int c = 0; c < kGrid.n_cols; ++c) {
        const int s = testing::CountInside(mask, {r, c}, kGrid);
        if (s > best) {
          best = s;
          ties = 1;
        } else if (s == best) {
          ++ties;
        }
      }
    }
    if (ties != 1) continue;
    const ViewportAnchor a = SelectViewport(mask, kGrid);
    for (int k = 1; k < kGrid.n_cols; k += 3) {
      TileMask shifted(kGrid);
      for (int r = 0; r < kGrid.n_rows; ++r) {
        for (int c = 0; c < kGrid.n_cols; ++c) {
          shifted.set(r, (c + k) % kGrid.n_cols, mask.at(r, c));
        }
      }
      EXPECT_EQ(SelectViewport(shifted, kGrid),
                (ViewportAnchor{a.row, (a.col + k) % kGrid.n_cols}));
    }
    ++checked;
  }
}

TEST(OverlapCount, Examples) {
  EXPECT_EQ(OverlapCount({3, 5}, {3, 5}, kGrid), 36);
  EXPECT_EQ(OverlapCount({3, 5}, {3, 7}, kGrid), 28);
  EXPECT_EQ(OverlapCount({0, 0}, {6, 10}, kGrid), 0);
  EXPECT_EQ(OverlapCount({0, 18}, {0, 0}, kGrid), 28);
}

TEST(OverlapCount, SymmetricAndMatchesMaskIntersection) {
  for (int r1 = 0; r1 < kGrid.anchor_rows(); ++r1) {
    for (int c1 = 0; c1 < kGrid.n_cols; ++c1) {
      const TileMask m1 = ViewportMask({r1, c1}, kGrid);
      EXPECT_EQ(OverlapCount({r1, c1}, {r1, c1}, kGrid), 36);
      for (int r2 = 0; r2 < kGrid.anchor_rows(); r2 += 2) {
        for (int c2 = 0; c2 < kGrid.n_cols; c2 += 3) {
          const TileMask m2 = ViewportMask({r2, c2}, kGrid);
          int both = 0;
          for (std::size_t i = 0; i < m1.values().size(); ++i) {
            both += m1.values()[i] && m2.values()[i];
          }
          ASSERT_EQ(OverlapCount({r1, c1}, {r2, c2}, kGrid), both);
          ASSERT_EQ(OverlapCount({r2, c2}, {r1, c1}, kGrid), both);
        }
      }
    }
  }
}

}  // namespace
}  // namespace mftr
