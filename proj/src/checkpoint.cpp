// Copyright (c) 2026 The QualNet Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "qualnet/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>

#include "qualnet/errors.hpp"

namespace qualnet {

namespace {

constexpr std::array<char, 8> kMagic = {'Q', 'N', 'E', 'T', 'C', 'K', 'P', 'T'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::size_t element_count(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw IoError("negative tensor dimension in checkpoint");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

void write_container(const std::filesystem::path& path, const nlohmann::json& header,
                     const std::vector<const Parameter<float>*>& tensors) {
  std::string blob(kMagic.begin(), kMagic.end());
  const std::string text = header.dump();
  put_u32(blob, static_cast<std::uint32_t>(text.size()));
  blob += text;
  for (const auto* t : tensors) {
    for (float v : t->value) put_u32(blob, std::bit_cast<std::uint32_t>(v));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path.string());
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!out) throw IoError("failed writing checkpoint: " + path.string());
}

nlohmann::json manifest_of(const std::vector<const Parameter<float>*>& tensors) {
  nlohmann::json list = nlohmann::json::array();
  for (const auto* t : tensors) list.push_back({{"name", t->name}, {"shape", t->shape}});
  return list;
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const Model<float>& model,
                      const std::vector<Parameter<float>>& extra_tensors,
                      const nlohmann::json& extra) {
  std::vector<const Parameter<float>*> tensors;
  for (const auto& p : model.parameters()) tensors.push_back(&p);
  for (const auto& p : extra_tensors) tensors.push_back(&p);
  nlohmann::json header{{"format_version", kCheckpointFormatVersion},
                        {"model_config", model.config()},
                        {"model_tensor_count", model.parameters().size()},
                        {"tensors", manifest_of(tensors)},
                        {"extra", extra}};
  write_container(path, header, tensors);
}

CheckpointContents read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < kMagic.size() + 4 ||
      std::memcmp(bytes.data(), kMagic.data(), kMagic.size()) != 0) {
    throw IoError("not a checkpoint file: " + path.string());
  }
  const std::uint32_t header_len = get_u32(bytes.data() + kMagic.size());
  const std::size_t header_begin = kMagic.size() + 4;
  if (bytes.size() < header_begin + header_len) {
    throw IoError("truncated checkpoint header: " + path.string());
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(header_begin),
                                   bytes.begin() +
                                       static_cast<std::ptrdiff_t>(header_begin + header_len));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed checkpoint header in " + path.string() + ": " + e.what());
  }

  CheckpointContents c;
  c.format_version = header.value("format_version", 0);
  if (c.format_version != kCheckpointFormatVersion) {
    throw IoError("unsupported checkpoint version " + std::to_string(c.format_version) + " in " +
                  path.string());
  }
  c.config = header.at("model_config").get<ModelConfig>();
  c.model_tensor_count = header.value("model_tensor_count", std::size_t{0});
  c.extra = header.value("extra", nlohmann::json::object());
  std::size_t offset = header_begin + header_len;
  for (const auto& entry : header.at("tensors")) {
    Parameter<float> t;
    t.name = entry.at("name").get<std::string>();
    t.shape = entry.at("shape").get<std::vector<int>>();
    const std::size_t count = element_count(t.shape);
    if (bytes.size() < offset + 4 * count) {
      throw IoError("truncated tensor '" + t.name + "' in " + path.string());
    }
    t.value.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
      t.value[i] = std::bit_cast<float>(get_u32(bytes.data() + offset + 4 * i));
    }
    offset += 4 * count;
    c.tensors.push_back(std::move(t));
  }
  if (offset != bytes.size()) {
    throw IoError("trailing bytes after tensor payload in " + path.string());
  }
  return c;
}

Model<float> model_from_checkpoint(const CheckpointContents& contents) {
  Model<float> model(contents.config);
  auto& params = model.parameters();
  if (contents.model_tensor_count != params.size() || contents.tensors.size() < params.size()) {
    throw IoError("checkpoint parameter list does not match its model config");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& t = contents.tensors[i];
    if (t.name != params[i].name || t.shape != params[i].shape) {
      throw IoError("checkpoint tensor '" + t.name + "' does not match model parameter '" +
                    params[i].name + "'");
    }
    params[i].value = t.value;
  }
  return model;
}

Model<float> load_model(const std::filesystem::path& path) {
  return model_from_checkpoint(read_checkpoint(path));
}

void write_backbone(const std::filesystem::path& path, const Model<float>& model) {
  std::vector<const Parameter<float>*> tensors;
  for (const auto& p : model.parameters()) {
    if (p.name.starts_with("backbone.")) tensors.push_back(&p);
  }
  nlohmann::json header{{"format_version", kCheckpointFormatVersion},
                        {"model_config", model.config()},
                        {"model_tensor_count", tensors.size()},
                        {"tensors", manifest_of(tensors)},
                        {"extra", {{"kind", "backbone"}}}};
  write_container(path, header, tensors);
}

void import_backbone(const std::filesystem::path& path, Model<float>& model) {
  const auto contents = read_checkpoint(path);
  std::map<std::string, const Parameter<float>*> by_name;
  for (const auto& t : contents.tensors) by_name[t.name] = &t;
  std::string offenders;
  for (const auto& p : model.parameters()) {
    if (!p.name.starts_with("backbone.")) continue;
    auto it = by_name.find(p.name);
    if (it == by_name.end()) {
      offenders += "\n  " + p.name + ": missing";
    } else if (it->second->shape != p.shape) {
      auto fmt = [](const std::vector<int>& s) {
        std::string out;
        for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "x" : "") + std::to_string(s[i]);
        return out;
      };
      offenders += "\n  " + p.name + ": expected " + fmt(p.shape) + ", file has " +
                   fmt(it->second->shape);
    }
  }
  if (!offenders.empty()) {
    throw ShapeError("backbone import from " + path.string() + " failed:" + offenders);
  }
  for (auto& p : model.parameters()) {
    if (p.name.starts_with("backbone.")) p.value = by_name.at(p.name)->value;
  }
}

}  // namespace qualnet
