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

#include "qualnet/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#if defined(__SSE__)
#include <xmmintrin.h>
#endif

#include "qualnet/checkpoint.hpp"
#include "qualnet/errors.hpp"

namespace qualnet {

namespace {

// Flushes subnormal floats to zero for the lifetime of the guard. Adam's second
// moments decay into the subnormal range and would otherwise slow every step.
class FlushDenormals {
 public:
  FlushDenormals() {
#if defined(__SSE__)
    saved_ = _mm_getcsr();
    _mm_setcsr(saved_ | 0x8040);  // FTZ | DAZ
#endif
  }
  ~FlushDenormals() {
#if defined(__SSE__)
    _mm_setcsr(saved_);
#endif
  }
  FlushDenormals(const FlushDenormals&) = delete;
  FlushDenormals& operator=(const FlushDenormals&) = delete;

 private:
  unsigned saved_ = 0;
};

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (!(lr0 > 0.0)) throw ConfigError("lr0 must be positive");
  if (!(adam_beta1 > 0.0 && adam_beta1 < 1.0) || !(adam_beta2 > 0.0 && adam_beta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in (0, 1)");
  }
  if (!(adam_epsilon > 0.0)) throw ConfigError("adam_epsilon must be positive");
  if (!(lr_decay > 0.0)) throw ConfigError("lr_decay must be positive");
  if (decay_every < 1) throw ConfigError("decay_every must be >= 1");
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(sgd_momentum >= 0.0)) throw ConfigError("sgd_momentum must be >= 0");
  if (!(clip_norm >= 0.0)) throw ConfigError("clip_norm must be >= 0");
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"epochs", c.epochs},
                     {"lr0", c.lr0},
                     {"adam_beta1", c.adam_beta1},
                     {"adam_beta2", c.adam_beta2},
                     {"adam_epsilon", c.adam_epsilon},
                     {"lr_decay", c.lr_decay},
                     {"decay_every", c.decay_every},
                     {"lambda", c.lambda},
                     {"batch_size", c.batch_size},
                     {"seed", c.seed},
                     {"optimizer", to_string(c.optimizer)},
                     {"sgd_momentum", c.sgd_momentum},
                     {"clip_norm", c.clip_norm},
                     {"checkpoint_every", c.checkpoint_every}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  const TrainConfig d;
  c.epochs = j.value("epochs", d.epochs);
  c.lr0 = j.value("lr0", d.lr0);
  c.adam_beta1 = j.value("adam_beta1", d.adam_beta1);
  c.adam_beta2 = j.value("adam_beta2", d.adam_beta2);
  c.adam_epsilon = j.value("adam_epsilon", d.adam_epsilon);
  c.lr_decay = j.value("lr_decay", d.lr_decay);
  c.decay_every = j.value("decay_every", d.decay_every);
  c.lambda = j.value("lambda", d.lambda);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.seed = j.value("seed", d.seed);
  c.optimizer = parse_optimizer(j.value("optimizer", std::string("adam")));
  c.sgd_momentum = j.value("sgd_momentum", d.sgd_momentum);
  c.clip_norm = j.value("clip_norm", d.clip_norm);
  c.checkpoint_every = j.value("checkpoint_every", d.checkpoint_every);
}

double lr_at(int epoch, const TrainConfig& config) {
  if (epoch < 1) throw ConfigError("epochs are numbered from 1");
  const int steps = (epoch - 1) / config.decay_every;
  return config.lr0 * std::pow(config.lr_decay, steps);
}

void to_json(nlohmann::json& j, const EpochStats& s) {
  j = nlohmann::json{{"epoch", s.epoch},
                     {"mean_Ld", s.mean_ld},
                     {"mean_Ls", s.mean_ls},
                     {"mean_Ltotal", s.mean_total},
                     {"lr", s.lr}};
}

void from_json(const nlohmann::json& j, EpochStats& s) {
  s.epoch = j.at("epoch").get<int>();
  s.mean_ld = j.at("mean_Ld").get<double>();
  s.mean_ls = j.at("mean_Ls").get<double>();
  s.mean_total = j.at("mean_Ltotal").get<double>();
  s.lr = j.at("lr").get<double>();
}

TrainState::TrainState(Model<float> m)
    : model(std::move(m)), moments(make_moments(model.parameters())) {}

template <typename T>
LossBreakdown loss_and_gradients(const Model<T>& model, const Tensor<T>& batch,
                                 std::span<const int> classes, std::span<const double> scores,
                                 double lambda, Gradients<T>& grads) {
  const int n = batch.n;
  if (static_cast<int>(scores.size()) != n || static_cast<int>(classes.size()) != n) {
    throw ShapeError("label count does not match batch size");
  }
  Tape<T> tape;
  const auto outputs = model.forward(batch, &tape);
  const bool multitask = has_distortion_head(model.config().variant);
  const int m = model.config().num_distortions;
  std::vector<T> grad_logits(multitask ? static_cast<std::size_t>(n) * m : 0);
  std::vector<T> grad_scores(static_cast<std::size_t>(n));
  LossBreakdown mean;
  const double inv_n = 1.0 / n;
  for (int i = 0; i < n; ++i) {
    const auto& out = outputs[i];
    const std::span<const T> logits(out.d_logits);
    const auto loss = total_loss(logits, classes[i], static_cast<double>(out.s), scores[i], lambda);
    mean.distortion += loss.distortion * inv_n;
    mean.quality += loss.quality * inv_n;
    mean.total += loss.total * inv_n;
    const double ls_weight = multitask ? lambda : 1.0;
    grad_scores[i] = static_cast<T>(ls_weight * 2.0 * (static_cast<double>(out.s) - scores[i]) * inv_n);
    if (multitask) {
      const auto g = cross_entropy_gradient(logits, classes[i]);
      for (int k = 0; k < m; ++k) grad_logits[static_cast<std::size_t>(i) * m + k] = static_cast<T>(g[k] * inv_n);
    }
  }
  model.backward(tape, grad_logits, grad_scores, grads);
  return mean;
}

template LossBreakdown loss_and_gradients(const Model<float>&, const Tensor<float>&,
                                          std::span<const int>, std::span<const double>, double,
                                          Gradients<float>&);
template LossBreakdown loss_and_gradients(const Model<double>&, const Tensor<double>&,
                                          std::span<const int>, std::span<const double>, double,
                                          Gradients<double>&);

void train(TrainState& state, const std::vector<PatchRecord>& patches, const TrainConfig& config,
           const TrainHooks& hooks) {
  config.validate();
  if (patches.empty()) throw DataError("training set is empty");
  const auto& mc = state.model.config();
  if (has_distortion_head(mc.variant)) {
    for (const auto& p : patches) {
      if (p.distortion_index < 1 || p.distortion_index > mc.num_distortions) {
        throw ConfigError("patch class " + std::to_string(p.distortion_index) +
                          " is outside the model's " + std::to_string(mc.num_distortions) +
                          " distortion classes");
      }
    }
  }

  std::ofstream log;
  if (!hooks.log_path.empty()) {
    log.open(hooks.log_path, std::ios::app);
    if (!log) throw IoError("cannot open training log: " + hooks.log_path.string());
  }

  const FlushDenormals flush;
  TrainingStream stream(patches, config.batch_size, config.seed);
  auto grads = state.model.zero_gradients();
  const AdamSettings adam{config.adam_beta1, config.adam_beta2, config.adam_epsilon};
  for (int epoch = state.epoch + 1; epoch <= config.epochs; ++epoch) {
    const TrainState last_good = state;
    auto abort_with = [&](const std::string& why) {
      state = last_good;
      if (!hooks.checkpoint_path.empty()) save_train_state(hooks.checkpoint_path, state, config);
      throw DataError("training aborted in epoch " + std::to_string(epoch) + ": " + why);
    };

    const double rate = lr_at(epoch, config);
    stream.start_epoch(epoch);
    double sum_ld = 0.0;
    double sum_ls = 0.0;
    double sum_total = 0.0;
    std::size_t steps = 0;
    for (auto batch_idx = stream.next(); !batch_idx.empty(); batch_idx = stream.next()) {
      std::vector<Tensor<float>> samples;
      std::vector<int> classes;
      std::vector<double> scores;
      for (auto i : batch_idx) {
        samples.push_back(patches[i].pixels);
        classes.push_back(patches[i].distortion_index);
        scores.push_back(patches[i].score);
      }
      const Tensor<float> batch =
          samples.size() == 1 ? samples.front() : stack<float>(std::span<const Tensor<float>>(samples));
      for (auto& g : grads) std::fill(g.begin(), g.end(), 0.0f);
      const auto loss =
          loss_and_gradients<float>(state.model, batch, classes, scores, config.lambda, grads);
      if (config.clip_norm > 0.0) clip_gradient_norm(grads, config.clip_norm);
      try {
        if (config.optimizer == OptimizerKind::kAdam) {
          adam_step(state.model.parameters(), grads, state.moments, rate, adam);
        } else {
          sgd_step(state.model.parameters(), grads, state.moments, rate, config.sgd_momentum);
        }
      } catch (const DataError& e) {
        abort_with(e.what());
      }
      sum_ld += loss.distortion;
      sum_ls += loss.quality;
      sum_total += loss.total;
      ++steps;
    }
    const double inv = 1.0 / static_cast<double>(steps);
    const EpochStats stats{epoch, sum_ld * inv, sum_ls * inv, sum_total * inv, rate};
    if (!std::isfinite(stats.mean_total)) abort_with("mean epoch loss is not finite");

    state.epoch = epoch;
    state.history.push_back(stats);
    if (log.is_open()) log << nlohmann::json(stats).dump() << '\n' << std::flush;
    if (hooks.on_epoch) hooks.on_epoch(stats);
    const bool cadence = config.checkpoint_every > 0 && epoch % config.checkpoint_every == 0;
    if (!hooks.checkpoint_path.empty() && (cadence || epoch == config.epochs)) {
      save_train_state(hooks.checkpoint_path, state, config);
    }
  }
}

TrainState train(Model<float> model, const DatasetManifest& train_manifest,
                 const PatchingConfig& patching, const TrainConfig& config,
                 const TrainHooks& hooks) {
  config.validate();
  if (train_manifest.records.empty()) throw DataError("training manifest is empty");
  const int side = model.config().patch_side;
  const auto patches = hflip_augment(
      load_patches(train_manifest, side, effective_stride(patching, side)), patching.hflip);
  TrainState state(std::move(model));
  train(state, patches, config, hooks);
  return state;
}

void save_train_state(const std::filesystem::path& path, const TrainState& state,
                      const TrainConfig& config) {
  std::vector<Parameter<float>> moments;
  const auto& params = state.model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    moments.push_back({"optimizer.first/" + params[i].name, params[i].shape, state.moments.first[i]});
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    moments.push_back(
        {"optimizer.second/" + params[i].name, params[i].shape, state.moments.second[i]});
  }
  const nlohmann::json extra{{"kind", "train_state"},
                             {"epoch", state.epoch},
                             {"optimizer_step", state.moments.step},
                             {"train_config", config},
                             {"history", state.history}};
  // Write-then-rename so an interrupted save never clobbers the previous checkpoint.
  auto tmp = path;
  tmp += ".tmp";
  write_checkpoint(tmp, state.model, moments, extra);
  std::filesystem::rename(tmp, path);
}

TrainState load_train_state(const std::filesystem::path& path) {
  auto contents = read_checkpoint(path);
  TrainState state(model_from_checkpoint(contents));
  const std::size_t n = contents.model_tensor_count;
  if (contents.extra.value("kind", std::string()) == "train_state") {
    if (contents.tensors.size() != 3 * n) {
      throw IoError("train-state checkpoint has an incomplete optimizer section: " + path.string());
    }
    for (std::size_t i = 0; i < n; ++i) {
      state.moments.first[i] = contents.tensors[n + i].value;
      state.moments.second[i] = contents.tensors[2 * n + i].value;
    }
    state.moments.step = contents.extra.value("optimizer_step", std::int64_t{0});
    state.epoch = contents.extra.value("epoch", 0);
    state.history = contents.extra.value("history", std::vector<EpochStats>{});
  }
  return state;
}

}  // namespace qualnet
