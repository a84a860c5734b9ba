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
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "qualnet/dataset.hpp"
#include "qualnet/evaluate.hpp"
#include "qualnet/model.hpp"
#include "qualnet/patches.hpp"
#include "qualnet/trainer.hpp"

namespace qualnet {

struct DatasetSection {
  std::filesystem::path corpus;    // reference images for synthesis
  std::filesystem::path manifest;  // existing manifest; skips synthesis when set
  std::vector<std::string> types{"gaussian_blur", "white_noise", "jpeg", "contrast_change"};
  int levels = kSeverityLevels;
  std::uint64_t seed = 0;  // generator seed
  double train_fraction = 0.8;
};

struct EvalSection {
  int n_splits = 1;
  std::filesystem::path cross_set;        // foreign manifest
  std::vector<std::string> shared_types;  // empty: every class name both sides know
};

struct AblationSection {
  std::vector<std::string> variants{"a", "b", "c", "d", "e", "f"};
  // Extra rows for variant f: each optimizer other than the base one, each patch
  // side other than the base one, and optionally a deeper backbone.
  std::vector<std::string> optimizers{"sgd"};
  std::vector<int> patch_sizes{64, 32};
  bool deeper = true;
  std::vector<int> deeper_convs{2, 2, 4, 4, 4};
  int seeds = 3;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;  // split, initialization and shuffling
  DatasetSection dataset;
  ModelConfig model;
  TrainConfig train;
  PatchingConfig patches;
  EvalSection eval;
  AblationSection ablation;

  // Checks every section; throws ConfigError naming the offending field.
  void validate() const;
};

// Unknown keys are rejected so that typos fail before any work starts.
ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& config);
ExperimentConfig load_config(const std::filesystem::path& path);

// Output root: explicit value, else $QUALNET_OUTPUT_ROOT, else ./runs.
std::filesystem::path output_root(const std::filesystem::path& explicit_root);
// Creates <root>/<YYYYmmdd-HHMMSS>-seed<seed>[-k] and returns it.
std::filesystem::path make_run_dir(const std::filesystem::path& root, std::uint64_t seed);

// 64-bit FNV-1a digest of a file, as 16 hex digits.
std::string file_digest(const std::filesystem::path& path);

// The manifest named by the config, or one synthesized into out_dir.
DatasetManifest obtain_manifest(const ExperimentConfig& config, const std::filesystem::path& out_dir,
                                int jobs = 1);

// Model config for a manifest: class count and names follow the manifest.
ModelConfig model_for(const ExperimentConfig& config, const DatasetManifest& manifest);

struct AblationRow {
  std::string label;
  ModelConfig model;
  TrainConfig train;
  std::size_t parameter_count = 0;
  std::vector<std::uint64_t> seeds;
  std::vector<double> srocc, lcc, accuracy;  // one entry per successful seed
  std::optional<double> median_srocc, median_lcc, median_accuracy;
  double wall_seconds = 0.0;
  std::string error;  // empty on success
};

// Rows in label order: a..f, then f-V2.. (optimizer and patch-size rows) and f-deeper.
std::vector<AblationRow> ablation_matrix(const ExperimentConfig& config);

// Trains and evaluates every row on shared reference splits and seeds
// (seed + 0 .. seed + seeds - 1). Failures are recorded in the row.
std::vector<AblationRow> run_ablation(const ExperimentConfig& config,
                                      const DatasetManifest& manifest, int jobs);

nlohmann::json ablation_to_json(const std::vector<AblationRow>& rows);
void write_ablation_csv(const std::filesystem::path& path, const std::vector<AblationRow>& rows);

// Score-vs-severity scatter with one panel per distortion type present in the
// report, in class order. Panels share the vertical score range.
Image render_scatter(const EvalReport& report);
EvalReport report_from_json(const nlohmann::json& j);

// Montage of the top_k most active channels (by mean activation) of a feature map
// taken from a single image; returns the montage and the channels chosen.
struct Montage {
  Image image;
  std::vector<int> channels;
};
Montage render_montage(const Tensor<float>& features, int top_k);

// Command-line surface. Every command resolves and validates its configuration
// before touching the file system.
struct CommandOptions {
  std::filesystem::path config;  // empty: built-in defaults
  std::optional<std::uint64_t> seed;
  std::filesystem::path out;  // output root override
  std::filesystem::path checkpoint;
  std::filesystem::path cross_set;
  std::filesystem::path resume;
  std::filesystem::path report;
  std::filesystem::path image;
  int jobs = 1;
  int top_k = 8;
};

struct CommandResult {
  std::filesystem::path run_dir;
  nlohmann::json summary;
};

ExperimentConfig resolve_config(const CommandOptions& options);

CommandResult cmd_synth(const CommandOptions& options);
CommandResult cmd_train(const CommandOptions& options);
CommandResult cmd_eval(const CommandOptions& options);
CommandResult cmd_ablate(const CommandOptions& options);
CommandResult cmd_plot(const CommandOptions& options);

}  // namespace qualnet
