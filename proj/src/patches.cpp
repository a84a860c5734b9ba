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

#include "qualnet/patches.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "qualnet/errors.hpp"
#include "qualnet/ops.hpp"
#include "qualnet/random.hpp"

namespace qualnet {

int effective_stride(const PatchingConfig& config, int patch_side) {
  const int stride = config.stride > 0 ? config.stride : patch_side / 2;
  return std::max(1, stride);
}

std::vector<int> patch_offsets(int side, int patch, int stride) {
  if (patch < 1 || stride < 1) throw ConfigError("patch size and stride must be positive");
  if (side < patch) return {};
  std::vector<int> offsets;
  for (int o = 0; o + patch <= side; o += stride) offsets.push_back(o);
  if ((side - patch) % stride != 0) offsets.push_back(side - patch);
  return offsets;
}

std::vector<PatchRecord> extract_patches(const Image& image, int patch, int stride,
                                         const ImageRecord& label, std::size_t source,
                                         const std::string& name) {
  if (image.width < patch || image.height < patch) {
    throw ShapeError("image " + name + " (" + std::to_string(image.width) + "x" +
                     std::to_string(image.height) + ") is smaller than the " +
                     std::to_string(patch) + "-pixel patch");
  }
  std::vector<PatchRecord> out;
  for (int y : patch_offsets(image.height, patch, stride)) {
    for (int x : patch_offsets(image.width, patch, stride)) {
      out.push_back({crop_to_tensor(image, x, y, patch), source, x, y, label.distortion_index,
                     label.score, false});
    }
  }
  return out;
}

std::vector<PatchRecord> hflip_augment(std::vector<PatchRecord> patches, bool enabled) {
  if (!enabled) return patches;
  const std::size_t n = patches.size();
  patches.reserve(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    PatchRecord mirrored = patches[i];
    mirrored.pixels = ops::hflip(patches[i].pixels);
    mirrored.flipped = !patches[i].flipped;
    patches.push_back(std::move(mirrored));
  }
  return patches;
}

std::vector<PatchRecord> load_patches(const DatasetManifest& manifest, int patch, int stride) {
  std::vector<PatchRecord> out;
  for (std::size_t i = 0; i < manifest.records.size(); ++i) {
    const auto& r = manifest.records[i];
    const auto path = manifest.resolve(r);
    auto patches = extract_patches(read_image(path), patch, stride, r, i, path.string());
    std::move(patches.begin(), patches.end(), std::back_inserter(out));
  }
  return out;
}

std::pair<DatasetManifest, DatasetManifest> split_by_reference(const DatasetManifest& manifest,
                                                               const SplitSpec& spec) {
  if (!(spec.train_fraction > 0.0) || !(spec.train_fraction < 1.0)) {
    throw ConfigError("train_fraction must lie strictly between 0 and 1");
  }
  auto refs = manifest.reference_ids();
  if (refs.size() < 2) {
    throw DataError("a reference-disjoint split needs at least 2 distinct references, found " +
                    std::to_string(refs.size()));
  }
  std::mt19937_64 rng(derive_seed(spec.seed, {0x5b1u}));
  shuffle_in_place(refs, rng);
  const auto wanted = static_cast<std::size_t>(
      std::ceil(spec.train_fraction * static_cast<double>(refs.size()) - 1e-9));
  const std::size_t n_train = std::clamp<std::size_t>(wanted, 1, refs.size() - 1);
  std::map<int, bool> to_train;
  for (std::size_t i = 0; i < refs.size(); ++i) to_train[refs[i]] = i < n_train;

  DatasetManifest train = manifest;
  DatasetManifest test = manifest;
  train.records.clear();
  test.records.clear();
  for (const auto& r : manifest.records) {
    (to_train.at(r.reference_id) ? train : test).records.push_back(r);
  }
  return {std::move(train), std::move(test)};
}

std::vector<std::size_t> epoch_order(std::size_t count, std::uint64_t seed, int epoch) {
  return seeded_permutation(count, derive_seed(seed, {0xe90cu, static_cast<std::uint64_t>(epoch)}));
}

TrainingStream::TrainingStream(const std::vector<PatchRecord>& patches, int batch_size,
                               std::uint64_t seed)
    : patches_(&patches), batch_size_(batch_size), seed_(seed) {
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (patches.empty()) throw DataError("training stream over an empty patch set");
}

void TrainingStream::start_epoch(int epoch) {
  order_ = epoch_order(patches_->size(), seed_, epoch);
  cursor_ = 0;
}

std::vector<std::size_t> TrainingStream::next() {
  const std::size_t end = std::min(order_.size(), cursor_ + static_cast<std::size_t>(batch_size_));
  std::vector<std::size_t> batch(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                                 order_.begin() + static_cast<std::ptrdiff_t>(end));
  cursor_ = end;
  return batch;
}

std::size_t TrainingStream::steps_per_epoch() const {
  const auto b = static_cast<std::size_t>(batch_size_);
  return (patches_->size() + b - 1) / b;
}

}  // namespace qualnet
