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

// Versioned model checkpoints.
//
//   "MFTRCKPT" | u32 version | u64 header length | JSON header | tensors
//
// The header holds the model config, extractor identity, seed, scalar type
// and the (name, rows, cols) list; tensors follow in that order as raw
// little-endian values of the scalar type.

#pragma once

#include "mftr/model.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>

namespace mftr {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointInfo {
  ModelConfig config;
  std::string extractor_identity;
  std::uint64_t seed = 0;
  int epoch = 0;
  std::string scalar;  // "float32" or "float64"
};

template <typename S>
void SaveCheckpoint(const std::filesystem::path& path, const Mftr<S>& model,
                    const std::string& extractor_identity, int epoch);

// Header only. Throws ConfigError on a foreign or corrupt file.
CheckpointInfo ReadCheckpointInfo(const std::filesystem::path& path);

// Builds a model from the stored config and loads its weights.
template <typename S>
std::unique_ptr<Mftr<S>> LoadCheckpoint(const std::filesystem::path& path,
                                        CheckpointInfo* info = nullptr);

// Loads weights into an existing model. Throws ConfigError naming the first
// config field that differs, or the extractor identity when
// `extractor_identity` is non-empty and disagrees.
template <typename S>
CheckpointInfo LoadCheckpointInto(const std::filesystem::path& path,
                                  Mftr<S>& model,
                                  const std::string& extractor_identity = "");

}  // namespace mftr
