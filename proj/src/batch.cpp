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

#include "mftr/batch.hpp"

#include <random>

namespace mftr {

template <typename S>
Batch<S> MakeBatch(std::span<const TraceSample* const> samples,
                   const FeatureBank& bank, const ModelConfig& config) {
  const int t = config.history;
  const int horizon = config.horizon;
  const int span = t + horizon;
  const int batch = static_cast<int>(samples.size());
  const TileGrid& grid = config.grid;
  if (bank.dim() != config.descriptor_dim) {
    throw DataError("descriptors have " + std::to_string(bank.dim()) +
                    " dims but the model expects " +
                    std::to_string(config.descriptor_dim));
  }
  Batch<S> out;
  out.inputs.batch = batch;
  out.inputs.head.resize(batch * t, 2);
  out.inputs.eye.resize(batch * t, 2);
  out.inputs.visual.resize(batch * span, config.descriptor_dim);
  out.targets.heads.resize(batch * horizon, 2);
  out.targets.masks.setZero(batch * horizon, grid.num_tiles());
  for (int b = 0; b < batch; ++b) {
    const TraceSample& s = *samples[static_cast<std::size_t>(b)];
    if (s.head_hist.rows() != t || s.eye_hist.rows() != t ||
        s.head_hist.cols() != 2 || s.eye_hist.cols() != 2 ||
        static_cast<int>(s.frames.size()) != span ||
        static_cast<int>(s.gt_anchors.size()) != horizon ||
        s.gt_heads.rows() != horizon || s.gt_heads.cols() != 2) {
      throw DataError("sample " + s.meta.video_id + "/" + s.meta.user_id +
                      "@" + std::to_string(s.meta.start_sec) +
                      " does not match history " + std::to_string(t) +
                      " and horizon " + std::to_string(horizon));
    }
    out.inputs.head.middleRows(b * t, t) = s.head_hist.cast<S>();
    out.inputs.eye.middleRows(b * t, t) = s.eye_hist.cast<S>();
    for (int k = 0; k < span; ++k) {
      out.inputs.visual.row(b * span + k) =
          bank.Get(s.frames[static_cast<std::size_t>(k)]).cast<S>().transpose();
    }
    out.targets.heads.middleRows(b * horizon, horizon) = s.gt_heads.cast<S>();
    for (int i = 0; i < horizon; ++i) {
      const TileMask mask = ViewportMask(s.gt_anchors[static_cast<std::size_t>(i)], grid);
      for (int r = 0; r < grid.n_rows; ++r) {
        for (int c = 0; c < grid.n_cols; ++c) {
          out.targets.masks(b * horizon + i, r * grid.n_cols + c) =
              static_cast<S>(mask.at(r, c));
        }
      }
    }
    out.gt_anchors.push_back(s.gt_anchors);
  }
  return out;
}

template <typename S>
Batch<S> MakeBatch(const std::vector<TraceSample>& samples, std::size_t begin,
                   std::size_t end, const FeatureBank& bank,
                   const ModelConfig& config) {
  std::vector<const TraceSample*> ptrs;
  for (std::size_t i = begin; i < end; ++i) ptrs.push_back(&samples[i]);
  return MakeBatch<S>(std::span<const TraceSample* const>(ptrs), bank, config);
}

template <typename S>
ModelInputs<S> RandomInputs(const ModelConfig& config, int batch,
                            std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int t = config.history;
  const int span = t + config.horizon;
  ModelInputs<S> in;
  in.batch = batch;
  in.head.resize(batch * t, 2);
  in.eye.resize(batch * t, 2);
  in.visual.resize(batch * span, config.descriptor_dim);
  for (int r = 0; r < batch * t; ++r) {
    in.head(r, 0) = static_cast<S>((2.0 * unit(rng) - 1.0) * kPi);
    in.head(r, 1) = static_cast<S>((unit(rng) - 0.5) * kPi);
    in.eye(r, 0) = static_cast<S>(unit(rng));
    in.eye(r, 1) = static_cast<S>(unit(rng));
  }
  for (Eigen::Index i = 0; i < in.visual.size(); ++i) {
    in.visual.data()[i] = static_cast<S>(unit(rng) - 0.5);
  }
  return in;
}

#define MFTR_INSTANTIATE(S)                                                  \
  template Batch<S> MakeBatch<S>(std::span<const TraceSample* const>,        \
                                 const FeatureBank&, const ModelConfig&);    \
  template Batch<S> MakeBatch<S>(const std::vector<TraceSample>&,            \
                                 std::size_t, std::size_t, const FeatureBank&, \
                                 const ModelConfig&);                        \
  template ModelInputs<S> RandomInputs<S>(const ModelConfig&, int, std::uint64_t);

MFTR_INSTANTIATE(float)
MFTR_INSTANTIATE(double)

#undef MFTR_INSTANTIATE

}  // namespace mftr
