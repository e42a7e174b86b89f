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

#include "mftr/checkpoint.hpp"

#include "mftr/config.hpp"
#include "mftr/errors.hpp"

#include <json.hpp>

#include <cstring>
#include <fstream>
#include <type_traits>

namespace mftr {
namespace {

constexpr char kMagic[8] = {'M', 'F', 'T', 'R', 'C', 'K', 'P', 'T'};

template <typename S>
std::string ScalarName() {
  return std::is_same_v<S, float> ? "float32" : "float64";
}

struct RawCheckpoint {
  nlohmann::json header;
  std::streamoff data_offset = 0;
};

RawCheckpoint ReadHeader(std::ifstream& in, const std::filesystem::path& path) {
  char magic[8];
  std::uint32_t version = 0;
  std::uint64_t length = 0;
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0) {
    throw ConfigError(path.string() + " is not an MFTR checkpoint");
  }
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  if (!in || version != kCheckpointVersion) {
    throw ConfigError(path.string() + ": unsupported checkpoint version " +
                      std::to_string(version));
  }
  in.read(reinterpret_cast<char*>(&length), sizeof(length));
  std::string text(length, '\0');
  in.read(text.data(), static_cast<std::streamsize>(length));
  if (!in) throw ConfigError(path.string() + ": truncated checkpoint header");
  RawCheckpoint raw;
  try {
    raw.header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": corrupt checkpoint header: " + e.what());
  }
  raw.data_offset = in.tellg();
  return raw;
}

CheckpointInfo InfoFromHeader(const nlohmann::json& h) {
  CheckpointInfo info;
  info.config = ModelConfigFromJson(h.at("config"));
  info.extractor_identity = h.at("extractor").get<std::string>();
  info.seed = h.at("seed").get<std::uint64_t>();
  info.epoch = h.at("epoch").get<int>();
  info.scalar = h.at("scalar").get<std::string>();
  return info;
}

template <typename S>
void ReadTensors(std::ifstream& in, const nlohmann::json& header,
                 const std::string& scalar, Mftr<S>& model,
                 const std::filesystem::path& path) {
  const auto& tensors = header.at("tensors");
  if (tensors.size() != model.parameters().size()) {
    throw ConfigError(path.string() + ": checkpoint holds " +
                      std::to_string(tensors.size()) + " tensors, model has " +
                      std::to_string(model.parameters().size()));
  }
  std::size_t i = 0;
  for (nn::Parameter<S>& p : model.parameters()) {
    const auto& t = tensors[i++];
    const std::string name = t.at("name").get<std::string>();
    const int rows = t.at("rows").get<int>();
    const int cols = t.at("cols").get<int>();
    if (name != p.name || rows != p.value.rows() || cols != p.value.cols()) {
      throw ConfigError(path.string() + ": tensor '" + name +
                        "' does not match model parameter '" + p.name + "'");
    }
    const std::size_t n = static_cast<std::size_t>(rows) * cols;
    if (scalar == "float32") {
      std::vector<float> buf(n);
      in.read(reinterpret_cast<char*>(buf.data()),
              static_cast<std::streamsize>(n * sizeof(float)));
      for (std::size_t k = 0; k < n; ++k) p.value.data()[k] = static_cast<S>(buf[k]);
    } else {
      std::vector<double> buf(n);
      in.read(reinterpret_cast<char*>(buf.data()),
              static_cast<std::streamsize>(n * sizeof(double)));
      for (std::size_t k = 0; k < n; ++k) p.value.data()[k] = static_cast<S>(buf[k]);
    }
    if (!in) throw ConfigError(path.string() + ": truncated tensor data");
  }
}

}  // namespace

template <typename S>
void SaveCheckpoint(const std::filesystem::path& path, const Mftr<S>& model,
                    const std::string& extractor_identity, int epoch) {
  nlohmann::ordered_json header;
  header["config"] = ModelConfigToJson(model.config());
  header["extractor"] = extractor_identity;
  header["seed"] = model.seed();
  header["epoch"] = epoch;
  header["scalar"] = ScalarName<S>();
  header["tensors"] = nlohmann::ordered_json::array();
  for (const nn::Parameter<S>& p : model.parameters()) {
    header["tensors"].push_back(
        {{"name", p.name}, {"rows", p.value.rows()}, {"cols", p.value.cols()}});
  }
  const std::string text = header.dump();
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write checkpoint " + tmp.string());
    const std::uint32_t version = kCheckpointVersion;
    const std::uint64_t length = text.size();
    out.write(kMagic, 8);
    out.write(reinterpret_cast<const char*>(&version), sizeof(version));
    out.write(reinterpret_cast<const char*>(&length), sizeof(length));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const nn::Parameter<S>& p : model.parameters()) {
      out.write(reinterpret_cast<const char*>(p.value.data()),
                static_cast<std::streamsize>(p.value.size() * sizeof(S)));
    }
    if (!out) throw std::runtime_error("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

CheckpointInfo ReadCheckpointInfo(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint " + path.string());
  return InfoFromHeader(ReadHeader(in, path).header);
}

template <typename S>
std::unique_ptr<Mftr<S>> LoadCheckpoint(const std::filesystem::path& path,
                                        CheckpointInfo* info) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint " + path.string());
  const RawCheckpoint raw = ReadHeader(in, path);
  const CheckpointInfo parsed = InfoFromHeader(raw.header);
  auto model = std::make_unique<Mftr<S>>(parsed.config, parsed.seed);
  ReadTensors(in, raw.header, parsed.scalar, *model, path);
  if (info) *info = parsed;
  return model;
}

template <typename S>
CheckpointInfo LoadCheckpointInto(const std::filesystem::path& path,
                                  Mftr<S>& model,
                                  const std::string& extractor_identity) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint " + path.string());
  const RawCheckpoint raw = ReadHeader(in, path);
  const CheckpointInfo info = InfoFromHeader(raw.header);
  const std::string field = FirstDifference(info.config, model.config());
  if (!field.empty()) {
    throw ConfigError(path.string() + ": checkpoint config differs in '" +
                      field + "'");
  }
  if (!extractor_identity.empty() && extractor_identity != info.extractor_identity) {
    throw ConfigError(path.string() + ": checkpoint extractor '" +
                      info.extractor_identity + "' differs from '" +
                      extractor_identity + "'");
  }
  ReadTensors(in, raw.header, info.scalar, model, path);
  return info;
}

#define MFTR_INSTANTIATE(S)                                                   \
  template void SaveCheckpoint<S>(const std::filesystem::path&,              \
                                  const Mftr<S>&, const std::string&, int);  \
  template std::unique_ptr<Mftr<S>> LoadCheckpoint<S>(                        \
      const std::filesystem::path&, CheckpointInfo*);                         \
  template CheckpointInfo LoadCheckpointInto<S>(const std::filesystem::path&, \
                                                Mftr<S>&, const std::string&);

MFTR_INSTANTIATE(float)
MFTR_INSTANTIATE(double)

#undef MFTR_INSTANTIATE

}  // namespace mftr
