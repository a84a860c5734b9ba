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
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "qualnet/dataset.hpp"
#include "qualnet/metrics.hpp"
#include "qualnet/model.hpp"
#include "qualnet/patches.hpp"
#include "qualnet/trainer.hpp"

namespace qualnet {

struct PatchPrediction {
  std::vector<double> logits;  // empty for single-task models
  double score = 0.0;
};

struct ImagePrediction {
  double score = 0.0;        // mean patch score
  int predicted_class = 0;   // 1-based majority vote; 0 without a distortion head
  std::vector<PatchPrediction> patches;
};

// Mean score and majority-vote class. Vote ties go to the larger summed softmax
// probability, then to the lower class index. Logits equal to -infinity mark
// classes excluded from the vote.
ImagePrediction aggregate_image(std::span<const PatchPrediction> patches);

struct ImageRow {
  std::string path;
  int reference_id = 0;
  int distortion_true = 0;
  int distortion_pred = 0;
  int severity = 0;
  double score_true = 0.0;
  double score_pred = 0.0;
};

struct EvalReport {
  std::size_t n_images = 0;
  bool degenerate = false;
  std::string degenerate_reason;
  std::optional<double> srocc;
  std::optional<double> lcc_raw;
  std::optional<double> lcc_mapped;
  std::optional<double> accuracy;
  std::optional<LogisticParams> logistic;
  std::vector<ImageRow> images;
};

// Computes correlations and accuracy from per-image rows. Constant predictions
// produce a degenerate report instead of numbers. Accuracy is reported when
// has_classes is set.
EvalReport summarize(std::vector<ImageRow> rows, bool has_classes);

std::vector<PatchPrediction> predict_patches(const Model<float>& model,
                                             const std::vector<PatchRecord>& patches);

// Image-level evaluation on every (unaugmented) patch of every test image.
EvalReport evaluate(const Model<float>& model, const DatasetManifest& test,
                    const PatchingConfig& patching);

// Evaluation on a manifest from a different source: records are filtered to the
// shared class names, predicted classes are translated by name (the vote only
// considers shared classes) and a logistic remap aligns score scales.
EvalReport cross_dataset_eval(const Model<float>& model, const DatasetManifest& foreign,
                              const std::vector<std::string>& shared_types,
                              const PatchingConfig& patching);

struct SplitRun {
  int index = 0;
  std::uint64_t seed = 0;
  std::optional<EvalReport> report;
  std::string error;
};

struct RepeatedSplitSummary {
  std::vector<SplitRun> runs;
  std::size_t successes = 0;
  std::optional<double> median_srocc;
  std::optional<double> median_lcc;
  std::optional<double> median_accuracy;
};

struct RepeatedSplitSpec {
  int n = 10;
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
  int jobs = 1;
};

// n independent split -> train -> evaluate runs with seeds seed + 0 .. seed + n - 1
// (split, initialization and shuffling all use the run seed). Fails unless at
// least half of the runs succeed.
RepeatedSplitSummary run_repeated_splits(const DatasetManifest& manifest, ModelConfig model_config,
                                         TrainConfig train_config, const PatchingConfig& patching,
                                         const RepeatedSplitSpec& spec);

nlohmann::json report_to_json(const EvalReport& report);
nlohmann::json summary_to_json(const RepeatedSplitSummary& summary);
// Per-image table with header reference_id,distortion_true,distortion_pred,severity,score_true,score_pred.
void write_image_csv(const std::filesystem::path& path, const EvalReport& report);

}  // namespace qualnet
