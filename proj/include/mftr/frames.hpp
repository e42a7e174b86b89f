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

// Video frames (one per second), frame descriptor extractors and the
// descriptor bank shared by every sample.

#pragma once

#include "mftr/geometry.hpp"

#include <Eigen/Dense>

#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace mftr {

struct FrameRef {
  std::string video_id;
  int t_sec = 0;

  friend auto operator<=>(const FrameRef&, const FrameRef&) = default;
};

// Interleaved 8-bit RGB.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;

  std::uint8_t at(int x, int y, int channel) const {
    return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + channel];
  }
  friend bool operator==(const Image&, const Image&) = default;
};

Image ReadPng(const std::filesystem::path& path);
void WritePng(const std::filesystem::path& path, const Image& image);
// Area-averaging resize.
Image Resize(const Image& image, int width, int height);

class FrameSource {
 public:
  virtual ~FrameSource() = default;
  virtual bool Has(const FrameRef& ref) const = 0;
  // Throws DataError when absent.
  virtual Image Load(const FrameRef& ref) const = 0;
};

class MemoryFrameSource : public FrameSource {
 public:
  void Put(FrameRef ref, Image image);
  bool Has(const FrameRef& ref) const override;
  Image Load(const FrameRef& ref) const override;
  const std::map<FrameRef, Image>& frames() const { return frames_; }

 private:
  std::map<FrameRef, Image> frames_;
};

// Frames stored as <root>/<video_id>/<t_sec>.png. Images whose size differs
// from the grid's frame size are down-scaled on load. This layout is the
// conversion target for externally recorded datasets.
class DirectoryFrameSource : public FrameSource {
 public:
  DirectoryFrameSource(std::filesystem::path root, const TileGrid& grid);
  bool Has(const FrameRef& ref) const override;
  Image Load(const FrameRef& ref) const override;

  static std::filesystem::path PathFor(const std::filesystem::path& root,
                                       const FrameRef& ref);

 private:
  std::filesystem::path root_;
  TileGrid grid_;
};

// Writes every frame of `source` into the directory layout above.
void SaveFrames(const std::filesystem::path& root,
                const MemoryFrameSource& source);

// Maps one frame to a fixed-length descriptor.
class FrameEncoder {
 public:
  virtual ~FrameEncoder() = default;
  // Stable string identifying the extractor and its settings; keys caches and
  // is stored in checkpoints.
  virtual std::string identity() const = 0;
  virtual int dim() const = 0;
  virtual Eigen::VectorXf Encode(const Image& image) const = 0;
};

// Weight-free stand-in for a pretrained CNN. The frame is average-pooled to
// luminance cells at twice the tile resolution, centered on its mean, then
// multiplied by a fixed pseudo-random +-1 matrix generated from a hash of
// (seed, row, column). Linear in the pooled image, so spatial content
// survives; entries land on the scale of classifier logits.
class HashProjectionEncoder : public FrameEncoder {
 public:
  HashProjectionEncoder(const TileGrid& grid, int dim = 1000,
                        std::uint64_t seed = 0x6d667472);
  std::string identity() const override;
  int dim() const override { return dim_; }
  Eigen::VectorXf Encode(const Image& image) const override;

  // The pooled luminance cells, row-major, values in [0, 1].
  Eigen::VectorXf Pool(const Image& image) const;

 private:
  TileGrid grid_;
  int dim_;
  std::uint64_t seed_;
  int pool_rows_;
  int pool_cols_;
  Eigen::MatrixXf projection_;  // dim x cells
};

// Runs an ImageNet classifier exported to ONNX (e.g. MobileNet-V2) through
// OpenCV's DNN module and returns its 1000 class logits.
class OnnxFrameEncoder : public FrameEncoder {
 public:
  explicit OnnxFrameEncoder(const std::filesystem::path& model_path,
                            int input_size = 224);
  ~OnnxFrameEncoder() override;
  std::string identity() const override;
  int dim() const override { return 1000; }
  Eigen::VectorXf Encode(const Image& image) const override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::string identity_;
  int input_size_;
};

// Descriptor for every referenced frame, computed once.
class FeatureBank {
 public:
  FeatureBank() = default;
  FeatureBank(std::string encoder_identity, int dim)
      : identity_(std::move(encoder_identity)), dim_(dim) {}

  // Encodes every frame in `refs` not yet present.
  void AddFrames(const std::vector<FrameRef>& refs, const FrameSource& source,
                 const FrameEncoder& encoder);
  void Put(const FrameRef& ref, Eigen::VectorXf descriptor);
  const Eigen::VectorXf& Get(const FrameRef& ref) const;
  bool Has(const FrameRef& ref) const { return table_.contains(ref); }
  std::size_t size() const { return table_.size(); }
  int dim() const { return dim_; }
  const std::string& identity() const { return identity_; }

  // Binary cache. Load returns false when the file is absent or was written
  // by a different extractor.
  void Save(const std::filesystem::path& path) const;
  bool Load(const std::filesystem::path& path);

 private:
  std::string identity_;
  int dim_ = 0;
  std::map<FrameRef, Eigen::VectorXf> table_;
};

}  // namespace mftr
