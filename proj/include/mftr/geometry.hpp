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

// Equirectangular frame geometry: tile grid, viewport anchors and masks.
//
// Conventions: yaw -pi maps to pixel column 0 and grows to the right; pitch
// +pi/2 maps to pixel row 0 (top of the frame). Longitude wraps around the
// frame, latitude does not, so a viewport anchor's row is bounded while its
// column is taken modulo the number of tile columns.

#pragma once

#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

namespace mftr {

inline constexpr double kPi = std::numbers::pi;

// Head orientation in radians. yaw in [-pi, pi], pitch in [-pi/2, pi/2].
class HeadPosition {
 public:
  HeadPosition() = default;
  // Throws std::invalid_argument when a coordinate is out of range or not
  // finite.
  HeadPosition(double yaw, double pitch);

  // Wraps yaw into [-pi, pi] and clamps pitch; used for regressed outputs.
  static HeadPosition FromUnconstrained(double yaw, double pitch);

  double yaw() const { return yaw_; }
  double pitch() const { return pitch_; }

  friend bool operator==(const HeadPosition&, const HeadPosition&) = default;

 private:
  double yaw_ = 0.0;
  double pitch_ = 0.0;
};

// Frame-normalized gaze point, both coordinates in [0, 1].
class GazePosition {
 public:
  GazePosition() = default;
  GazePosition(double x, double y);

  double x() const { return x_; }
  double y() const { return y_; }

  friend bool operator==(const GazePosition&, const GazePosition&) = default;

 private:
  double x_ = 0.5;
  double y_ = 0.5;
};

struct TileGrid {
  int n_rows = 10;
  int n_cols = 20;
  int vp_rows = 4;
  int vp_cols = 9;
  int frame_w = 720;
  int frame_h = 360;

  // Throws std::invalid_argument naming the violated constraint.
  void Validate() const;

  double tile_w() const { return static_cast<double>(frame_w) / n_cols; }
  double tile_h() const { return static_cast<double>(frame_h) / n_rows; }
  int num_tiles() const { return n_rows * n_cols; }
  int viewport_tiles() const { return vp_rows * vp_cols; }
  // Legal anchor rows are [0, anchor_rows()).
  int anchor_rows() const { return n_rows - vp_rows + 1; }
  int num_anchors() const { return anchor_rows() * n_cols; }

  friend bool operator==(const TileGrid&, const TileGrid&) = default;
};

struct TileIndex {
  int row = 0;
  int col = 0;
  friend bool operator==(const TileIndex&, const TileIndex&) = default;
};

// Top-left tile of a viewport.
struct ViewportAnchor {
  int row = 0;
  int col = 0;

  bool IsValid(const TileGrid& grid) const {
    return row >= 0 && row < grid.anchor_rows() && col >= 0 &&
           col < grid.n_cols;
  }

  friend bool operator==(const ViewportAnchor&, const ViewportAnchor&) =
      default;
  friend auto operator<=>(const ViewportAnchor&, const ViewportAnchor&) =
      default;
};

// Row-major n_rows x n_cols binary matrix.
class TileMask {
 public:
  TileMask() = default;
  explicit TileMask(const TileGrid& grid);
  TileMask(int n_rows, int n_cols, std::vector<std::uint8_t> values);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::uint8_t at(int row, int col) const { return values_[row * cols_ + col]; }
  void set(int row, int col, bool on) { values_[row * cols_ + col] = on; }
  int count() const;
  const std::vector<std::uint8_t>& values() const { return values_; }

  friend bool operator==(const TileMask&, const TileMask&) = default;

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<std::uint8_t> values_;
};

struct FramePoint {
  double u = 0.0;
  double v = 0.0;
};

FramePoint HeadToFrame(const HeadPosition& head, const TileGrid& grid);

// Requires 0 <= u < frame_w and 0 <= v <= frame_h; v == frame_h clamps into
// the last row.
TileIndex TileOf(double u, double v, const TileGrid& grid);

// Legal anchor whose viewport center is closest (wrapped column distance) to
// the head's tile-space position. Ties go to the smallest row, then column.
ViewportAnchor NearestViewport(const HeadPosition& head, const TileGrid& grid);

TileMask ViewportMask(const ViewportAnchor& anchor, const TileGrid& grid);

// Anchor whose viewport covers the most interested tiles. Ties go to the
// smallest row, then column.
ViewportAnchor SelectViewport(const TileMask& interest, const TileGrid& grid);

int OverlapCount(const ViewportAnchor& a, const ViewportAnchor& b,
                 const TileGrid& grid);

std::string ToString(const ViewportAnchor& anchor);

}  // namespace mftr
