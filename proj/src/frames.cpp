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

#include "mftr/frames.hpp"

#include "mftr/errors.hpp"
#include "mftr/seeding.hpp"

#include <opencv2/core.hpp>
#include <opencv2/dnn.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <cmath>
#include <cstring>
#include <fstream>

namespace mftr {

namespace {

cv::Mat ToBgr(const Image& image) {
  cv::Mat rgb(image.height, image.width, CV_8UC3,
              const_cast<std::uint8_t*>(image.rgb.data()));
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  return bgr;
}

Image FromBgr(const cv::Mat& bgr) {
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  Image out{rgb.cols, rgb.rows, {}};
  out.rgb.resize(static_cast<std::size_t>(rgb.cols) * rgb.rows * 3);
  for (int y = 0; y < rgb.rows; ++y) {
    std::memcpy(out.rgb.data() + static_cast<std::size_t>(y) * rgb.cols * 3,
                rgb.ptr<std::uint8_t>(y), static_cast<std::size_t>(rgb.cols) * 3);
  }
  return out;
}

void CheckImage(const Image& image) {
  if (image.width <= 0 || image.height <= 0 ||
      image.rgb.size() != static_cast<std::size_t>(image.width) * image.height * 3) {
    throw DataError("image buffer does not match its dimensions");
  }
}

template <typename T>
void WriteRaw(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T ReadRaw(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw DataError("truncated descriptor cache");
  return v;
}

constexpr char kBankMagic[8] = {'M', 'F', 'T', 'R', 'F', 'E', 'A', 'T'};
constexpr std::uint32_t kBankVersion = 1;

}  // namespace

Image ReadPng(const std::filesystem::path& path) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw DataError("cannot read image " + path.string());
  return FromBgr(bgr);
}

void WritePng(const std::filesystem::path& path, const Image& image) {
  CheckImage(image);
  if (!cv::imwrite(path.string(), ToBgr(image))) {
    throw DataError("cannot write image " + path.string());
  }
}

Image Resize(const Image& image, int width, int height) {
  CheckImage(image);
  if (image.width == width && image.height == height) return image;
  cv::Mat out;
  cv::resize(ToBgr(image), out, cv::Size(width, height), 0, 0, cv::INTER_AREA);
  return FromBgr(out);
}

void MemoryFrameSource::Put(FrameRef ref, Image image) {
  frames_[std::move(ref)] = std::move(image);
}

bool MemoryFrameSource::Has(const FrameRef& ref) const {
  return frames_.contains(ref);
}

Image MemoryFrameSource::Load(const FrameRef& ref) const {
  auto it = frames_.find(ref);
  if (it == frames_.end()) {
    throw DataError("no frame for video '" + ref.video_id + "' at second " +
                    std::to_string(ref.t_sec));
  }
  return it->second;
}

DirectoryFrameSource::DirectoryFrameSource(std::filesystem::path root,
                                           const TileGrid& grid)
    : root_(std::move(root)), grid_(grid) {}

std::filesystem::path DirectoryFrameSource::PathFor(
    const std::filesystem::path& root, const FrameRef& ref) {
  return root / ref.video_id / (std::to_string(ref.t_sec) + ".png");
}

bool DirectoryFrameSource::Has(const FrameRef& ref) const {
  return std::filesystem::is_regular_file(PathFor(root_, ref));
}

Image DirectoryFrameSource::Load(const FrameRef& ref) const {
  Image img = ReadPng(PathFor(root_, ref));
  return Resize(img, grid_.frame_w, grid_.frame_h);
}

void SaveFrames(const std::filesystem::path& root,
                const MemoryFrameSource& source) {
  for (const auto& [ref, image] : source.frames()) {
    const auto path = DirectoryFrameSource::PathFor(root, ref);
    std::filesystem::create_directories(path.parent_path());
    WritePng(path, image);
  }
}

HashProjectionEncoder::HashProjectionEncoder(const TileGrid& grid, int dim,
                                             std::uint64_t seed)
    : grid_(grid),
      dim_(dim),
      seed_(seed),
      pool_rows_(2 * grid.n_rows),
      pool_cols_(2 * grid.n_cols) {
  if (dim <= 0) throw std::invalid_argument("descriptor dim must be positive");
  const int cells = pool_rows_ * pool_cols_;
  projection_.resize(dim, cells);
  for (int j = 0; j < dim; ++j) {
    for (int c = 0; c < cells; ++c) {
      const std::uint64_t h = SplitMix64(
          seed_ ^ SplitMix64(static_cast<std::uint64_t>(j) * cells + c));
      projection_(j, c) = (h & 1) ? 1.0f : -1.0f;
    }
  }
}

std::string HashProjectionEncoder::identity() const {
  return "hash_projection:v2:dim=" + std::to_string(dim_) +
         ":cells=" + std::to_string(pool_rows_) + "x" +
         std::to_string(pool_cols_) + ":seed=" + std::to_string(seed_);
}

Eigen::VectorXf HashProjectionEncoder::Pool(const Image& image) const {
  CheckImage(image);
  if (image.width != grid_.frame_w || image.height != grid_.frame_h) {
    throw DataError("frame is " + std::to_string(image.width) + "x" +
                    std::to_string(image.height) + ", expected " +
                    std::to_string(grid_.frame_w) + "x" +
                    std::to_string(grid_.frame_h));
  }
  Eigen::VectorXf pooled = Eigen::VectorXf::Zero(pool_rows_ * pool_cols_);
  Eigen::VectorXf counts = Eigen::VectorXf::Zero(pool_rows_ * pool_cols_);
  for (int y = 0; y < image.height; ++y) {
    const int pr = static_cast<int>(static_cast<long>(y) * pool_rows_ / image.height);
    for (int x = 0; x < image.width; ++x) {
      const int pc = static_cast<int>(static_cast<long>(x) * pool_cols_ / image.width);
      const float luma = (0.299f * image.at(x, y, 0) + 0.587f * image.at(x, y, 1) +
                          0.114f * image.at(x, y, 2)) /
                         255.0f;
      pooled(pr * pool_cols_ + pc) += luma;
      counts(pr * pool_cols_ + pc) += 1.0f;
    }
  }
  return pooled.cwiseQuotient(counts.cwiseMax(1.0f));
}

Eigen::VectorXf HashProjectionEncoder::Encode(const Image& image) const {
  const Eigen::VectorXf pooled = Pool(image);
  return projection_ * (pooled.array() - pooled.mean()).matrix();
}

struct OnnxFrameEncoder::Impl {
  mutable cv::dnn::Net net;
};

OnnxFrameEncoder::OnnxFrameEncoder(const std::filesystem::path& model_path,
                                   int input_size)
    : impl_(std::make_unique<Impl>()), input_size_(input_size) {
  if (!std::filesystem::is_regular_file(model_path)) {
    throw DataError("ONNX model not found: " + model_path.string());
  }
  try {
    impl_->net = cv::dnn::readNetFromONNX(model_path.string());
  } catch (const cv::Exception& e) {
    throw DataError("cannot load ONNX model " + model_path.string() + ": " +
                    e.what());
  }
  identity_ = "onnx:" + model_path.filename().string() + ":bytes=" +
              std::to_string(std::filesystem::file_size(model_path)) +
              ":input=" + std::to_string(input_size);
}

OnnxFrameEncoder::~OnnxFrameEncoder() = default;

std::string OnnxFrameEncoder::identity() const { return identity_; }

Eigen::VectorXf OnnxFrameEncoder::Encode(const Image& image) const {
  CheckImage(image);
  cv::Mat rgb(image.height, image.width, CV_8UC3,
              const_cast<std::uint8_t*>(image.rgb.data()));
  cv::Mat resized;
  cv::resize(rgb, resized, cv::Size(input_size_, input_size_), 0, 0,
             cv::INTER_AREA);
  cv::Mat normalized;
  resized.convertTo(normalized, CV_32FC3, 1.0 / 255.0);
  // ImageNet channel statistics, RGB order.
  cv::subtract(normalized, cv::Scalar(0.485, 0.456, 0.406), normalized);
  cv::divide(normalized, cv::Scalar(0.229, 0.224, 0.225), normalized);
  cv::Mat blob = cv::dnn::blobFromImage(normalized);
  impl_->net.setInput(blob);
  cv::Mat out = impl_->net.forward();
  if (out.total() != 1000) {
    throw DataError("ONNX model produced " + std::to_string(out.total()) +
                    " outputs, expected 1000");
  }
  Eigen::VectorXf descriptor(1000);
  const float* p = out.ptr<float>();
  for (int i = 0; i < 1000; ++i) descriptor(i) = p[i];
  return descriptor;
}

void FeatureBank::AddFrames(const std::vector<FrameRef>& refs,
                            const FrameSource& source,
                            const FrameEncoder& encoder) {
  if (encoder.identity() != identity_ || encoder.dim() != dim_) {
    throw std::invalid_argument("encoder does not match the feature bank");
  }
  for (const FrameRef& ref : refs) {
    if (!table_.contains(ref)) table_[ref] = encoder.Encode(source.Load(ref));
  }
}

void FeatureBank::Put(const FrameRef& ref, Eigen::VectorXf descriptor) {
  if (descriptor.size() != dim_) {
    throw std::invalid_argument("descriptor has " +
                                std::to_string(descriptor.size()) +
                                " entries, expected " + std::to_string(dim_));
  }
  table_[ref] = std::move(descriptor);
}

const Eigen::VectorXf& FeatureBank::Get(const FrameRef& ref) const {
  auto it = table_.find(ref);
  if (it == table_.end()) {
    throw DataError("no descriptor for video '" + ref.video_id +
                    "' at second " + std::to_string(ref.t_sec));
  }
  return it->second;
}

void FeatureBank::Save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write descriptor cache " + path.string());
  out.write(kBankMagic, sizeof(kBankMagic));
  WriteRaw(out, kBankVersion);
  WriteRaw(out, static_cast<std::uint32_t>(identity_.size()));
  out.write(identity_.data(), static_cast<std::streamsize>(identity_.size()));
  WriteRaw(out, static_cast<std::int32_t>(dim_));
  WriteRaw(out, static_cast<std::uint64_t>(table_.size()));
  for (const auto& [ref, desc] : table_) {
    WriteRaw(out, static_cast<std::uint32_t>(ref.video_id.size()));
    out.write(ref.video_id.data(),
              static_cast<std::streamsize>(ref.video_id.size()));
    WriteRaw(out, static_cast<std::int32_t>(ref.t_sec));
    out.write(reinterpret_cast<const char*>(desc.data()),
              static_cast<std::streamsize>(sizeof(float) * desc.size()));
  }
  if (!out) throw DataError("failed while writing " + path.string());
}

bool FeatureBank::Load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return false;
  char magic[sizeof(kBankMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kBankMagic, sizeof(magic)) != 0) return false;
  if (ReadRaw<std::uint32_t>(in) != kBankVersion) return false;
  std::string identity(ReadRaw<std::uint32_t>(in), '\0');
  in.read(identity.data(), static_cast<std::streamsize>(identity.size()));
  const int dim = ReadRaw<std::int32_t>(in);
  if (identity != identity_ || dim != dim_) return false;
  const auto count = ReadRaw<std::uint64_t>(in);
  std::map<FrameRef, Eigen::VectorXf> table;
  for (std::uint64_t i = 0; i < count; ++i) {
    FrameRef ref;
    ref.video_id.resize(ReadRaw<std::uint32_t>(in));
    in.read(ref.video_id.data(),
            static_cast<std::streamsize>(ref.video_id.size()));
    ref.t_sec = ReadRaw<std::int32_t>(in);
    Eigen::VectorXf desc(dim);
    in.read(reinterpret_cast<char*>(desc.data()),
            static_cast<std::streamsize>(sizeof(float) * dim));
    if (!in) throw DataError("truncated descriptor cache " + path.string());
    table[std::move(ref)] = std::move(desc);
  }
  table_ = std::move(table);
  return true;
}

}  // namespace mftr
