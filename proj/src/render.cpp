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

#include "mftr/render.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace mftr {
namespace {

using Rgb = std::array<std::uint8_t, 3>;

void SetPixel(Image& img, int x, int y, const Rgb& c) {
  if (x < 0 || y < 0 || x >= img.width || y >= img.height) return;
  const std::size_t i = (static_cast<std::size_t>(y) * img.width + x) * 3;
  img.rgb[i] = c[0];
  img.rgb[i + 1] = c[1];
  img.rgb[i + 2] = c[2];
}

void Outline(Image& img, const TileRect& r, const TileGrid& grid, const Rgb& c,
             int thickness) {
  const int x0 = static_cast<int>(std::lround(r.col0 * grid.tile_w()));
  const int x1 = static_cast<int>(std::lround(r.col1 * grid.tile_w())) - 1;
  const int y0 = static_cast<int>(std::lround(r.row0 * grid.tile_h()));
  const int y1 = static_cast<int>(std::lround(r.row1 * grid.tile_h())) - 1;
  for (int t = 0; t < thickness; ++t) {
    for (int x = x0; x <= x1; ++x) {
      SetPixel(img, x, y0 + t, c);
      SetPixel(img, x, y1 - t, c);
    }
    for (int y = y0; y <= y1; ++y) {
      SetPixel(img, x0 + t, y, c);
      SetPixel(img, x1 - t, y, c);
    }
  }
}

Rgb ScoreColor(double s) {
  s = std::clamp(s, 0.0, 1.0);
  return {static_cast<std::uint8_t>(std::lround(255 * s)),
          static_cast<std::uint8_t>(std::lround(255 * (1 - std::abs(2 * s - 1)) * 0.6)),
          static_cast<std::uint8_t>(std::lround(255 * (1 - s)))};
}

}  // namespace

std::vector<TileRect> ViewportRects(const ViewportAnchor& anchor,
                                    const TileGrid& grid) {
  if (!anchor.IsValid(grid)) {
    throw std::invalid_argument("anchor " + ToString(anchor) +
                                " is not a legal viewport anchor");
  }
  const int row1 = anchor.row + grid.vp_rows;
  const int end = anchor.col + grid.vp_cols;
  if (end <= grid.n_cols) return {{anchor.row, row1, anchor.col, end}};
  return {{anchor.row, row1, anchor.col, grid.n_cols},
          {anchor.row, row1, 0, end - grid.n_cols}};
}

Image RenderHeatmap(const Image* frame, const ScoreMap& scores,
                    const TileGrid& grid, const ViewportAnchor& predicted,
                    const std::optional<ViewportAnchor>& truth) {
  if (scores.rows() != grid.n_rows || scores.cols() != grid.n_cols) {
    throw std::invalid_argument("score map shape does not match the tile grid");
  }
  Image img;
  img.width = grid.frame_w;
  img.height = grid.frame_h;
  img.rgb.assign(static_cast<std::size_t>(img.width) * img.height * 3, 0);
  if (frame) {
    if (frame->width != img.width || frame->height != img.height) {
      throw std::invalid_argument("frame size does not match the tile grid");
    }
    img.rgb = frame->rgb;
  }
  for (int y = 0; y < img.height; ++y) {
    const int row = std::min(grid.n_rows - 1, static_cast<int>(y / grid.tile_h()));
    for (int x = 0; x < img.width; ++x) {
      const int col = std::min(grid.n_cols - 1, static_cast<int>(x / grid.tile_w()));
      const Rgb c = ScoreColor(scores(row, col));
      const std::size_t i = (static_cast<std::size_t>(y) * img.width + x) * 3;
      for (int k = 0; k < 3; ++k) {
        img.rgb[i + k] = static_cast<std::uint8_t>(
            std::lround(0.45 * img.rgb[i + k] + 0.55 * c[k]));
      }
    }
  }
  if (truth) {
    for (const TileRect& r : ViewportRects(*truth, grid)) {
      Outline(img, r, grid, {0, 255, 0}, 3);
    }
  }
  for (const TileRect& r : ViewportRects(predicted, grid)) {
    Outline(img, r, grid, {255, 255, 255}, 2);
  }
  return img;
}

std::string MatrixToCsv(const Eigen::MatrixXd& m) {
  std::string out;
  char buf[32];
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      std::snprintf(buf, sizeof(buf), "%.9g", m(r, c));
      if (c) out += ",";
      out += buf;
    }
    out += "\n";
  }
  return out;
}

}  // namespace mftr
