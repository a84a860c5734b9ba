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
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "qualnet/distortions.hpp"

namespace qualnet {

struct ImageRecord {
  std::string path;  // relative to the manifest directory
  int reference_id = 0;
  int distortion_index = 0;  // 1-based into DatasetManifest::classes
  int severity_level = 0;
  double score = 0.0;  // DMOS-like, higher is worse
};

void to_json(nlohmann::json& j, const ImageRecord& r);
void from_json(const nlohmann::json& j, ImageRecord& r);

struct DatasetManifest {
  std::vector<std::string> classes;  // classes[i] has index i + 1
  int levels = kSeverityLevels;
  std::vector<ImageRecord> records;
  nlohmann::json generator = nlohmann::json::object();
  std::filesystem::path base_dir;  // not serialized

  int num_classes() const { return static_cast<int>(classes.size()); }
  std::vector<int> reference_ids() const;  // sorted, unique
  std::filesystem::path resolve(const ImageRecord& r) const { return base_dir / r.path; }
  // 1-based index of a class name, or 0 when absent.
  int class_index(const std::string& name) const;
  // Throws DataError on an out-of-range class or a duplicate (reference, class, level).
  void validate() const;
};

// Manifest file: first line a JSON header {format, version, classes, levels,
// generator}, then one JSON object per record.
void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::filesystem::path& path);

struct DatasetBuildSpec {
  std::filesystem::path corpus_dir;
  std::vector<std::string> types;  // class names, composites as "a+b"
  int levels = kSeverityLevels;
  std::uint64_t seed = 0;
  std::filesystem::path out_dir;
  int jobs = 1;
};

// Distorts every reference in corpus_dir at every (type, level), writes PNGs
// under out_dir/images and the manifest to out_dir/manifest.jsonl. Records are
// ordered by (reference_id, class, level).
DatasetManifest build_dataset(const DatasetBuildSpec& spec);

// Sorted list of decodable image files (.png, .ppm) in a corpus directory.
std::vector<std::filesystem::path> list_corpus(const std::filesystem::path& corpus_dir);

// Procedural reference images (smooth gradients, multi-octave texture, hard-edged
// shapes, stripes) for running the protocol without a photo corpus.
Image generate_reference_image(int side, std::uint64_t seed);
void generate_reference_corpus(const std::filesystem::path& dir, int count, int side,
                               std::uint64_t seed);

}  // namespace qualnet
