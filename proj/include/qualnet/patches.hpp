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

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "qualnet/dataset.hpp"
#include "qualnet/image.hpp"
#include "qualnet/tensor.hpp"

namespace qualnet {

struct PatchRecord {
  Tensor<float> pixels;  // 1 x 3 x P x P
  std::size_t source = 0;  // index of the ImageRecord in its manifest
  int grid_x = 0;  // pixel offset of the patch's left edge
  int grid_y = 0;
  int distortion_index = 0;
  double score = 0.0;
  bool flipped = false;
};

struct PatchingConfig {
  int stride = 0;  // 0 means half the patch side
  bool hflip = true;  // training only; evaluation never augments
};

int effective_stride(const PatchingConfig& config, int patch_side);

// Offsets along one axis: multiples of stride from 0, plus one patch flush
// with the far edge when (side - patch) is not a multiple of stride.
std::vector<int> patch_offsets(int side, int patch, int stride);

// Cuts an image into patches that inherit the source record's labels.
// `name` identifies the image in errors.
std::vector<PatchRecord> extract_patches(const Image& image, int patch, int stride,
                                         const ImageRecord& label, std::size_t source,
                                         const std::string& name);

// Appends a mirrored copy of every patch when enabled.
std::vector<PatchRecord> hflip_augment(std::vector<PatchRecord> patches, bool enabled);

// Reads every image of the manifest and extracts its patches.
std::vector<PatchRecord> load_patches(const DatasetManifest& manifest, int patch, int stride);

struct SplitSpec {
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
};

// Shuffles reference ids with the seed and sends the first ceil(f * R) to the
// training side (at most R - 1, so the test side is never empty).
std::pair<DatasetManifest, DatasetManifest> split_by_reference(const DatasetManifest& manifest,
                                                               const SplitSpec& spec);

// Visit order for one epoch; a pure function of (seed, epoch).
std::vector<std::size_t> epoch_order(std::size_t count, std::uint64_t seed, int epoch);

// Sequential training stream over a fixed patch set, batch_size patches per step.
class TrainingStream {
 public:
  TrainingStream(const std::vector<PatchRecord>& patches, int batch_size, std::uint64_t seed);

  void start_epoch(int epoch);
  // Indices of the next batch; empty at the end of the epoch.
  std::vector<std::size_t> next();
  std::size_t steps_per_epoch() const;

 private:
  const std::vector<PatchRecord>* patches_;
  int batch_size_;
  std::uint64_t seed_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

}  // namespace qualnet
