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

#pragma once

// Checkpoint container:
//   8 bytes   magic "QNETCKPT"
//   4 bytes   header length L (little-endian uint32)
//   L bytes   JSON header {format_version, model_config, model_tensor_count,
//             tensors: [{name, shape}...], extra}
//   payload   every tensor in manifest order as little-endian float32
// The first model_tensor_count tensors are model parameters; anything after them
// (optimizer moments) belongs to the training state.

#include <filesystem>
#include <vector>

#include "json.hpp"
#include "qualnet/model.hpp"

namespace qualnet {

inline constexpr int kCheckpointFormatVersion = 1;

struct CheckpointContents {
  int format_version = 0;
  ModelConfig config;
  std::size_t model_tensor_count = 0;
  std::vector<Parameter<float>> tensors;
  nlohmann::json extra;
};

void write_checkpoint(const std::filesystem::path& path, const Model<float>& model,
                      const std::vector<Parameter<float>>& extra_tensors = {},
                      const nlohmann::json& extra = nlohmann::json::object());

CheckpointContents read_checkpoint(const std::filesystem::path& path);

// Rebuilds the model described by the header and loads its parameters.
Model<float> load_model(const std::filesystem::path& path);
Model<float> model_from_checkpoint(const CheckpointContents& contents);

// Writes only the backbone tensors, the format accepted by import_backbone.
void write_backbone(const std::filesystem::path& path, const Model<float>& model);

// Overwrites backbone parameters from a container. Every backbone tensor must
// be present with the right shape; all offenders are listed in the error.
void import_backbone(const std::filesystem::path& path, Model<float>& model);

}  // namespace qualnet
