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

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace mftr {

namespace {

std::string FormatRange(const char* name, double value, const char* range) {
  return std::string(name) + " = " + std::to_string(value) +
         " outside the range " + range;
}

}  // namespace

HeadPosition::HeadPosition(double yaw, double pitch) : yaw_(yaw), pitch_(pitch) {
  if (!std::isfinite(yaw) || yaw < -kPi || yaw > kPi) {
    throw std::invalid_argument(FormatRange("yaw", yaw, "[-pi, pi]"));
  }
  if (!std::isfinite(pitch) || pitch < -kPi / 2 || pitch > kPi / 2) {
    throw std::invalid_argument(FormatRange("pitch", pitch, "[-pi/2, pi/2]"));
  }
}

HeadPosition HeadPosition::FromUnconstrained(double yaw, double pitch) {
  if (!std::isfinite(yaw)) yaw = 0.0;
  if (!std::isfinite(pitch)) pitch = 0.0;
  double wrapped = std::remainder(yaw, 2 * kPi);
  wrapped = std::clamp(wrapped, -kPi, kPi);
  return HeadPosition(wrapped, std::clamp(pitch, -kPi / 2, kPi / 2));
}

GazePosition::GazePosition(double x, double y) : x_(x), y_(y) {
  if (!std::isfinite(x) || x < 0.0 || x > 1.0) {
    throw std::invalid_argument(FormatRange("gx", x, "[0, 1]"));
  }
  if (!std::isfinite(y) || y < 0.0 || y > 1.0) {
    throw std::invalid_argument(FormatRange("gy", y, "[0, 1]"));
  }
}

void TileGrid::Validate() const {
  if (n_rows <= 0 || n_cols <= 0 || vp_rows <= 0 || vp_cols <= 0 ||
      frame_w <= 0 || frame_h <= 0) {
    throw std::invalid_argument("tile grid dimensions must be positive");
  }
  if (vp_rows > n_rows) {
    throw std::invalid_argument("vp_rows must not exceed n_rows");
  }
  if (vp_cols > n_cols) {
    throw std::invalid_argument("vp_cols must not exceed n_cols");
  }
  if (frame_w % n_cols != 0) {
    throw std::invalid_argument("frame_w must be divisible by n_cols");
  }
  if (frame_h % n_rows != 0) {
    throw std::invalid_argument("frame_h must be divisible by n_rows");
  }
}

TileMask::TileMask(const TileGrid& grid)
    : rows_(grid.n_rows),
      cols_(grid.n_cols),
      values_(static_cast<std::size_t>(grid.num_tiles()), 0) {}

TileMask::TileMask(int n_rows, int n_cols, std::vector<std::uint8_t> values)
    : rows_(n_rows), cols_(n_cols), values_(std::move(values)) {
  if (static_cast<int>(values_.size()) != rows_ * cols_) {
    throw std::invalid_argument("tile mask size does not match its shape");
  }
  for (auto& v : values_) {
    if (v > 1) throw std::invalid_argument("tile mask entries must be 0 or 1");
  }
}

int TileMask::count() const {
  return static_cast<int>(std::count(values_.begin(), values_.end(), 1));
}

FramePoint HeadToFrame(const HeadPosition& head, const TileGrid& grid) {
  double u = (head.yaw() + kPi) / (2 * kPi) * grid.frame_w;
  double v = (kPi / 2 - head.pitch()) / kPi * grid.frame_h;
  if (u >= grid.frame_w) u = 0.0;
  return {u, std::clamp(v, 0.0, static_cast<double>(grid.frame_h))};
}

TileIndex TileOf(double u, double v, const TileGrid& grid) {
  if (!(u >= 0.0 && u < grid.frame_w)) {
    throw std::out_of_range("u = " + std::to_string(u) +
                            " outside [0, frame_w)");
  }
  if (!(v >= 0.0 && v <= grid.frame_h)) {
    throw std::out_of_range("v = " + std::to_string(v) +
                            " outside [0, frame_h]");
  }
  int row = std::min(static_cast<int>(std::floor(v / grid.tile_h())),
                     grid.n_rows - 1);
  int col = std::min(static_cast<int>(std::floor(u / grid.tile_w())),
                     grid.n_cols - 1);
  return {row, col};
}

ViewportAnchor NearestViewport(const HeadPosition& head, const TileGrid& grid) {
  const FramePoint p = HeadToFrame(head, grid);
  const double head_row = p.v / grid.tile_h();
  const double head_col = p.u / grid.tile_w();

  // Row and column distances are independent, so each axis is minimized
  // separately; the lexicographic scan order keeps the tie-break. Distances
  // within kTieTolerance count as ties so rounding in the projection cannot
  // flip an exact half-tile tie.
  constexpr double kTieTolerance = 1e-9;
  int best_row = 0;
  double best_row_d = std::numeric_limits<double>::infinity();
  for (int r = 0; r < grid.anchor_rows(); ++r) {
    double d = std::abs(r + grid.vp_rows / 2.0 - head_row);
    if (d < best_row_d - kTieTolerance) {
      best_row_d = d;
      best_row = r;
    }
  }
  int best_col = 0;
  double best_col_d = std::numeric_limits<double>::infinity();
  for (int c = 0; c < grid.n_cols; ++c) {
    double d = std::fmod(std::abs(c + grid.vp_cols / 2.0 - head_col),
                         static_cast<double>(grid.n_cols));
    d = std::min(d, grid.n_cols - d);
    if (d < best_col_d - kTieTolerance) {
      best_col_d = d;
      best_col = c;
    }
  }
  // A full-width viewport covers the same tiles from every column.
  if (grid.vp_cols == grid.n_cols) best_col = 0;
  return {best_row, best_col};
}

TileMask ViewportMask(const ViewportAnchor& anchor, const TileGrid& grid) {
  if (!anchor.IsValid(grid)) {
    throw std::out_of_range("anchor " + ToString(anchor) +
                            " is not legal for the grid");
  }
  TileMask mask(grid);
  for (int r = 0; r < grid.vp_rows; ++r) {
    for (int k = 0; k < grid.vp_cols; ++k) {
      mask.set(anchor.row + r, (anchor.col + k) % grid.n_cols, true);
    }
  }
  return mask;
}

ViewportAnchor SelectViewport(const TileMask& interest, const TileGrid& grid) {
  if (interest.rows() != grid.n_rows || interest.cols() != grid.n_cols) {
    throw std::invalid_argument("interest mask shape does not match the grid");
  }
  // Prefix sums over a frame extended by vp_cols - 1 wrapped columns:
  // prefix[r][c] = sum of interest[0..r) x [0..c) in extended coordinates.
  const int ext_cols = grid.n_cols + grid.vp_cols - 1;
  const int stride = ext_cols + 1;
  std::vector<int> prefix(static_cast<std::size_t>((grid.n_rows + 1) * stride),
                          0);
  for (int r = 0; r < grid.n_rows; ++r) {
    for (int c = 0; c < ext_cols; ++c) {
      prefix[(r + 1) * stride + c + 1] = interest.at(r, c % grid.n_cols) +
                                         prefix[r * stride + c + 1] +
                                         prefix[(r + 1) * stride + c] -
                                         prefix[r * stride + c];
    }
  }
  ViewportAnchor best;
  int best_count = -1;
  for (int r = 0; r < grid.anchor_rows(); ++r) {
    const int r2 = r + grid.vp_rows;
    for (int c = 0; c < grid.n_cols; ++c) {
      const int c2 = c + grid.vp_cols;
      int count = prefix[r2 * stride + c2] - prefix[r * stride + c2] -
                  prefix[r2 * stride + c] + prefix[r * stride + c];
      if (count > best_count) {
        best_count = count;
        best = {r, c};
      }
    }
  }
  return best;
}

int OverlapCount(const ViewportAnchor& a, const ViewportAnchor& b,
                 const TileGrid& grid) {
  const int row_overlap =
      std::max(0, std::min(a.row, b.row) + grid.vp_rows - std::max(a.row, b.row));
  if (row_overlap == 0) return 0;
  // Column sets are cyclic intervals; count shared columns directly.
  int col_overlap = 0;
  for (int k = 0; k < grid.vp_cols; ++k) {
    int col = (a.col + k) % grid.n_cols;
    int offset = ((col - b.col) % grid.n_cols + grid.n_cols) % grid.n_cols;
    if (offset < grid.vp_cols) ++col_overlap;
  }
  return row_overlap * col_overlap;
}

std::string ToString(const ViewportAnchor& anchor) {
  return "(" + std::to_string(anchor.row) + ", " + std::to_string(anchor.col) +
         ")";
}

}  // namespace mftr
