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
#include <functional>
#include <span>
#include <vector>

#include "json.hpp"
#include "qualnet/losses.hpp"
#include "qualnet/model.hpp"
#include "qualnet/optimizer.hpp"
#include "qualnet/patches.hpp"

namespace qualnet {

struct TrainConfig {
  int epochs = 50;
  double lr0 = 2e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double lr_decay = 0.98;
  int decay_every = 3;
  double lambda = 1.0;
  int batch_size = 1;
  std::uint64_t seed = 0;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  double sgd_momentum = 0.9;
  double clip_norm = 0.0;  // 0 disables clipping
  int checkpoint_every = 0;  // epochs; 0 writes only the final checkpoint

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

// lr0 * decay^floor((epoch - 1) / decay_every), epochs counted from 1.
double lr_at(int epoch, const TrainConfig& config);

struct EpochStats {
  int epoch = 0;
  double mean_ld = 0.0;
  double mean_ls = 0.0;
  double mean_total = 0.0;
  double lr = 0.0;
};

void to_json(nlohmann::json& j, const EpochStats& s);
void from_json(const nlohmann::json& j, EpochStats& s);

struct TrainState {
  Model<float> model;
  MomentState<float> moments;
  int epoch = 0;  // completed epochs
  std::vector<EpochStats> history;

  explicit TrainState(Model<float> m);
};

struct TrainHooks {
  std::filesystem::path checkpoint_path;  // empty: no checkpoints
  std::filesystem::path log_path;         // empty: no log
  std::function<void(const EpochStats&)> on_epoch;
};

// Loss of a batch (mean over samples) and its gradient, accumulated into grads.
// classes are 1-based and ignored by single-task variants.
template <typename T>
LossBreakdown loss_and_gradients(const Model<T>& model, const Tensor<T>& batch,
                                 std::span<const int> classes, std::span<const double> scores,
                                 double lambda, Gradients<T>& grads);

// Runs epochs state.epoch + 1 .. config.epochs over the patch set. A resumed
// state continues the identical trajectory. Aborts with DataError on a
// non-finite gradient or epoch loss after restoring (and persisting, if a
// checkpoint path is set) the last good state.
void train(TrainState& state, const std::vector<PatchRecord>& patches, const TrainConfig& config,
           const TrainHooks& hooks = {});

// Convenience: extracts patches from the manifest (with flips if enabled) and trains
// a fresh state.
TrainState train(Model<float> model, const DatasetManifest& train_manifest,
                 const PatchingConfig& patching, const TrainConfig& config,
                 const TrainHooks& hooks = {});

void save_train_state(const std::filesystem::path& path, const TrainState& state,
                      const TrainConfig& config);
TrainState load_train_state(const std::filesystem::path& path);

}  // namespace qualnet
