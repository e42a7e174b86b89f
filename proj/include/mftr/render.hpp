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

// Score-map heatmaps with viewport rectangles drawn over the frame.

#pragma once

#include "mftr/frames.hpp"
#include "mftr/geometry.hpp"
#include "mftr/model.hpp"

#include <optional>
#include <string>
#include <vector>

namespace mftr {

// Half-open tile rectangle [row0, row1) x [col0, col1).
struct TileRect {
  int row0 = 0, row1 = 0, col0 = 0, col1 = 0;
  friend bool operator==(const TileRect&, const TileRect&) = default;
};

// The viewport as one rectangle, or two when it wraps past the last column.
std::vector<TileRect> ViewportRects(const ViewportAnchor& anchor,
                                    const TileGrid& grid);

// Frame (or black when absent) blended with a blue-to-red score overlay; tile
// borders of interested tiles are not drawn. The predicted viewport is
// outlined in white and the ground truth, when given, in green.
Image RenderHeatmap(const Image* frame, const ScoreMap& scores,
                    const TileGrid& grid, const ViewportAnchor& predicted,
                    const std::optional<ViewportAnchor>& truth);

// Comma-separated matrix, one line per tile row.
std::string MatrixToCsv(const Eigen::MatrixXd& m);

}  // namespace mftr
