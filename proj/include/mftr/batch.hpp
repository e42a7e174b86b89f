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

#pragma once

#include "mftr/data.hpp"
#include "mftr/model.hpp"

#include <span>
#include <vector>

namespace mftr {

template <typename S>
struct Batch {
  ModelInputs<S> inputs;
  ModelTargets<S> targets;
  std::vector<std::vector<ViewportAnchor>> gt_anchors;
};

// Packs samples into batch-major matrices. Throws DataError when a sample's
// shape disagrees with the model config or a descriptor is missing.
template <typename S>
Batch<S> MakeBatch(std::span<const TraceSample* const> samples,
                   const FeatureBank& bank, const ModelConfig& config);

template <typename S>
Batch<S> MakeBatch(const std::vector<TraceSample>& samples, std::size_t begin,
                   std::size_t end, const FeatureBank& bank,
                   const ModelConfig& config);

// Seeded random inputs of the configured shape; used for latency benchmarks
// when no dataset is at hand.
template <typename S>
ModelInputs<S> RandomInputs(const ModelConfig& config, int batch,
                            std::uint64_t seed);

}  // namespace mftr
