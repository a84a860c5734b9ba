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

#include "qualnet/model.hpp"

#include <cmath>
#include <random>

#include "qualnet/errors.hpp"
#include "qualnet/ops.hpp"
#include "qualnet/random.hpp"

namespace qualnet {

namespace {

constexpr int kStages = 5;
constexpr int kTap4Stage = 3;
constexpr int kFcHidden = 512;

}  // namespace

std::string to_string(HeadVariant variant) {
  switch (variant) {
    case HeadVariant::kA: return "a";
    case HeadVariant::kB: return "b";
    case HeadVariant::kC: return "c";
    case HeadVariant::kD: return "d";
    case HeadVariant::kE: return "e";
    case HeadVariant::kF: return "f";
  }
  return "?";
}

HeadVariant parse_variant(std::string_view id) {
  if (id == "a") return HeadVariant::kA;
  if (id == "b") return HeadVariant::kB;
  if (id == "c") return HeadVariant::kC;
  if (id == "d") return HeadVariant::kD;
  if (id == "e") return HeadVariant::kE;
  if (id == "f") return HeadVariant::kF;
  throw ConfigError("unknown head variant '" + std::string(id) + "' (expected one of a..f)");
}

bool has_distortion_head(HeadVariant variant) {
  return variant != HeadVariant::kA && variant != HeadVariant::kB;
}

BackboneConfig BackboneConfig::full() { return BackboneConfig{}; }

BackboneConfig BackboneConfig::tiny() {
  BackboneConfig c;
  c.stage_channels = {8, 16, 32, 64, 64};
  return c;
}

void BackboneConfig::validate() const {
  if (stage_channels.size() != kStages || convs_per_stage.size() != kStages) {
    throw ConfigError("backbone must have exactly 5 stages");
  }
  for (int ch : stage_channels) {
    if (ch < 1) throw ConfigError("backbone channel counts must be >= 1");
  }
  for (int n : convs_per_stage) {
    if (n < 1) throw ConfigError("every backbone stage needs at least one conv");
  }
  if (kernel_size < 1 || kernel_size % 2 == 0) {
    throw ConfigError("backbone kernel size must be odd, got " + std::to_string(kernel_size));
  }
  if (!(in_epsilon > 0.0) || !std::isfinite(in_epsilon)) {
    throw ConfigError("instance-norm epsilon must be positive");
  }
}

void ModelConfig::validate() const {
  backbone.validate();
  if (patch_side < 32 || patch_side % 32 != 0) {
    throw ConfigError("patch_side must be a positive multiple of 32, got " +
                      std::to_string(patch_side));
  }
  if (has_distortion_head(variant) && num_distortions < 1) {
    throw ConfigError("variant " + to_string(variant) + " needs num_distortions >= 1");
  }
  if (!class_names.empty() && static_cast<int>(class_names.size()) != num_distortions) {
    throw ConfigError("class_names has " + std::to_string(class_names.size()) +
                      " entries but num_distortions is " + std::to_string(num_distortions));
  }
}

void to_json(nlohmann::json& j, const BackboneConfig& c) {
  j = nlohmann::json{{"stage_channels", c.stage_channels},
                     {"convs_per_stage", c.convs_per_stage},
                     {"kernel_size", c.kernel_size},
                     {"in_epsilon", c.in_epsilon}};
}

void from_json(const nlohmann::json& j, BackboneConfig& c) {
  if (j.is_string()) {
    const auto scale = j.get<std::string>();
    if (scale == "tiny") {
      c = BackboneConfig::tiny();
    } else if (scale == "full") {
      c = BackboneConfig::full();
    } else {
      throw ConfigError("unknown backbone scale '" + scale + "'");
    }
    return;
  }
  BackboneConfig d = j.contains("scale") && j.at("scale") == "full" ? BackboneConfig::full()
                                                                    : BackboneConfig::tiny();
  c.stage_channels = j.value("stage_channels", d.stage_channels);
  c.convs_per_stage = j.value("convs_per_stage", d.convs_per_stage);
  c.kernel_size = j.value("kernel_size", d.kernel_size);
  c.in_epsilon = j.value("in_epsilon", d.in_epsilon);
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"backbone", c.backbone},
                     {"variant", to_string(c.variant)},
                     {"num_distortions", c.num_distortions},
                     {"patch_side", c.patch_side},
                     {"seed", c.seed},
                     {"class_names", c.class_names}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  ModelConfig d;
  if (j.contains("backbone")) {
    c.backbone = j.at("backbone").get<BackboneConfig>();
  } else {
    c.backbone = d.backbone;
  }
  c.variant = parse_variant(j.value("variant", std::string("f")));
  c.num_distortions = j.value("num_distortions", d.num_distortions);
  c.patch_side = j.value("patch_side", d.patch_side);
  c.seed = j.value("seed", d.seed);
  c.class_names = j.value("class_names", d.class_names);
}

template <typename T>
Model<T>::Model(const ModelConfig& config) : config_(config) {
  config_.validate();
  const auto& bb = config_.backbone;
  int in_channels = 3;
  for (int s = 0; s < kStages; ++s) {
    std::vector<ConvSpec> stage;
    for (int j = 0; j < bb.convs_per_stage[s]; ++j) {
      const std::string name =
          "backbone.conv" + std::to_string(s + 1) + "_" + std::to_string(j + 1);
      stage.push_back(add_conv(name, in_channels, bb.stage_channels[s], bb.kernel_size));
      in_channels = bb.stage_channels[s];
    }
    stages_.push_back(std::move(stage));
  }
  const int c4 = bb.stage_channels[3];
  const int c5 = bb.stage_channels[4];
  const int m = config_.num_distortions;
  const int t5_side = config_.patch_side / 32;

  switch (config_.variant) {
    case HeadVariant::kA:
      fc1_ = add_linear("head.fc1", c5 * t5_side * t5_side, kFcHidden);
      fc2_ = add_linear("head.fc2", kFcHidden, 1);
      break;
    case HeadVariant::kB:
      quality5_ = add_conv("head.quality5", c5, 1, 1);
      break;
    case HeadVariant::kC:
      distortion_ = add_conv("head.distortion", c5, m, 1);
      quality5_ = add_conv("head.quality5", c5, 1, 1);
      break;
    case HeadVariant::kD:
      distortion_ = add_conv("head.distortion", c4, m, 1);
      quality5_ = add_conv("head.quality5", c5, 1, 1);
      break;
    case HeadVariant::kE:
      distortion_ = add_conv("head.distortion", c5, m, 1);
      quality5_ = add_conv("head.quality5", c5, 1, 1);
      quality5b_ = add_conv("head.quality5b", c5, 1, 1);
      fusion_ = add_conv("head.fusion", 2, 1, 1);
      break;
    case HeadVariant::kF:
      distortion_ = add_conv("head.distortion", c4, m, 1);
      quality4_ = add_conv("head.quality4", c4, 1, 1);
      quality5_ = add_conv("head.quality5", c5, 1, 1);
      fusion_ = add_conv("head.fusion", 2, 1, 1);
      break;
  }

  // He-style fan-in scaled normal weights, zero biases.
  std::mt19937_64 rng(config_.seed);
  for (auto& p : params_) {
    if (p.shape.size() == 1) continue;
    std::size_t fan_in = 1;
    for (std::size_t d = 1; d < p.shape.size(); ++d) fan_in *= static_cast<std::size_t>(p.shape[d]);
    const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (auto& v : p.value) v = static_cast<T>(standard_normal(rng) * stddev);
  }
}

template <typename T>
typename Model<T>::ConvSpec Model<T>::add_conv(const std::string& name, int in_channels,
                                               int out_channels, int kernel) {
  ConvSpec spec{in_channels, out_channels, kernel, params_.size(), params_.size() + 1};
  params_.push_back({name + ".weight",
                     {out_channels, in_channels, kernel, kernel},
                     std::vector<T>(static_cast<std::size_t>(out_channels) * in_channels * kernel *
                                    kernel)});
  params_.push_back({name + ".bias", {out_channels}, std::vector<T>(out_channels)});
  return spec;
}

template <typename T>
typename Model<T>::LinearSpec Model<T>::add_linear(const std::string& name, int in_features,
                                                   int out_features) {
  LinearSpec spec{in_features, out_features, params_.size(), params_.size() + 1};
  params_.push_back({name + ".weight",
                     {out_features, in_features},
                     std::vector<T>(static_cast<std::size_t>(out_features) * in_features)});
  params_.push_back({name + ".bias", {out_features}, std::vector<T>(out_features)});
  return spec;
}

template <typename T>
std::optional<std::size_t> Model<T>::find_parameter(std::string_view name) const {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name == name) return i;
  }
  return std::nullopt;
}

template <typename T>
Gradients<T> Model<T>::zero_gradients() const {
  Gradients<T> g;
  g.reserve(params_.size());
  for (const auto& p : params_) g.emplace_back(p.value.size(), T(0));
  return g;
}

template <typename T>
void Model<T>::check_input(const Tensor<T>& patches) const {
  if (patches.n < 1 || patches.c != 3 || patches.h != patches.w || patches.h < 32 ||
      patches.h % 32 != 0) {
    throw ShapeError("expected N x 3 x S x S input with S a multiple of 32, got " +
                     patches.shape_string());
  }
}

template <typename T>
void Model<T>::conv(const ConvSpec& spec, const Tensor<T>& in, Tensor<T>& out,
                    std::vector<T>& cols) const {
  ops::conv2d_forward<T>(in, params_[spec.weight].value, params_[spec.bias].value,
                         spec.out_channels, spec.kernel, out, cols);
}

template <typename T>
void Model<T>::conv_backward(const ConvSpec& spec, const Tensor<T>& grad_out,
                             const std::vector<T>& cols, Gradients<T>& grads,
                             Tensor<T>* grad_in) const {
  ops::conv2d_backward<T>(grad_out, cols, spec.in_channels, spec.kernel,
                          params_[spec.weight].value, grads[spec.weight], grads[spec.bias],
                          grad_in);
}

namespace {

template <typename T>
void add_into(Tensor<T>& acc, const Tensor<T>& x) {
  if (acc.size() == 0) {
    acc = x;
    return;
  }
  for (std::size_t i = 0; i < acc.size(); ++i) acc.data[i] += x.data[i];
}

template <typename T, typename Spec>
FeatureTaps<T> run_backbone(const std::vector<std::vector<Spec>>& stages,
                            const std::vector<Parameter<T>>& params, T epsilon,
                            const Tensor<T>& patches, Tape<T>* tape) {
  FeatureTaps<T> taps;
  Tensor<T> cur = patches;
  Tensor<T> z;
  std::vector<T> scratch_cols;
  std::vector<T> scratch_inv;
  std::vector<std::uint32_t> scratch_argmax;
  if (tape != nullptr) {
    tape->convs.clear();
    tape->pool_argmax.clear();
  }
  for (std::size_t s = 0; s < stages.size(); ++s) {
    for (const auto& spec : stages[s]) {
      std::vector<T>* cols = &scratch_cols;
      std::vector<T>* inv = &scratch_inv;
      Tensor<T> normalized;
      if (tape != nullptr) {
        tape->convs.emplace_back();
        cols = &tape->convs.back().cols;
        inv = &tape->convs.back().inv_std;
      }
      ops::conv2d_forward<T>(cur, params[spec.weight].value, params[spec.bias].value,
                             spec.out_channels, spec.kernel, z, *cols);
      ops::instance_norm_forward<T>(z, epsilon, normalized, *inv);
      cur = normalized;
      ops::relu_inplace(cur);
      if (tape != nullptr) tape->convs.back().normalized = std::move(normalized);
    }
    std::vector<std::uint32_t>* argmax = &scratch_argmax;
    if (tape != nullptr) {
      tape->pool_argmax.emplace_back();
      argmax = &tape->pool_argmax.back();
    }
    Tensor<T> pooled;
    ops::max_pool2_forward(cur, pooled, *argmax);
    cur = std::move(pooled);
    if (s == kTap4Stage) taps.t4 = cur;
  }
  taps.t5 = std::move(cur);
  return taps;
}

}  // namespace

template <typename T>
FeatureTaps<T> Model<T>::forward_backbone(const Tensor<T>& patches) const {
  check_input(patches);
  return run_backbone(stages_, params_, static_cast<T>(config_.backbone.in_epsilon), patches,
                      static_cast<Tape<T>*>(nullptr));
}

template <typename T>
DistortionHeadOutput<T> Model<T>::distortion_head(const Tensor<T>& tap) const {
  if (!distortion_) {
    throw ConfigError("variant " + to_string(config_.variant) + " has no distortion head");
  }
  if (tap.c != distortion_->in_channels) {
    throw ShapeError("distortion head expects " + std::to_string(distortion_->in_channels) +
                     " channels, got " + tap.shape_string());
  }
  DistortionHeadOutput<T> out;
  std::vector<T> cols;
  conv(*distortion_, tap, out.logit_map, cols);
  out.d_logits = ops::global_avg_pool(out.logit_map);
  return out;
}

template <typename T>
Tensor<T> Model<T>::quality_forward(const Tensor<T>& t4, const Tensor<T>& t5, Tape<T>* tape,
                                    std::vector<Tensor<T>>* coarse) const {
  std::vector<T> scratch;
  auto cols_for = [&](std::vector<T> Tape<T>::*member) -> std::vector<T>& {
    return tape != nullptr ? tape->*member : scratch;
  };
  switch (config_.variant) {
    case HeadVariant::kA: {
      if (t5.sample_size() != static_cast<std::size_t>(fc1_->in_features)) {
        throw ShapeError("variant a expects tap-5 of " + std::to_string(fc1_->in_features) +
                         " values, got " + t5.shape_string());
      }
      Tensor<T> hidden;
      ops::linear_forward<T>(t5, params_[fc1_->weight].value, params_[fc1_->bias].value,
                             fc1_->out_features, hidden);
      ops::relu_inplace(hidden);
      Tensor<T> s;
      ops::linear_forward<T>(hidden, params_[fc2_->weight].value, params_[fc2_->bias].value, 1,
                             s);
      if (tape != nullptr) tape->fc_hidden = std::move(hidden);
      return s;
    }
    case HeadVariant::kB:
    case HeadVariant::kC:
    case HeadVariant::kD: {
      Tensor<T> q5;
      conv(*quality5_, t5, q5, cols_for(&Tape<T>::q5_cols));
      Tensor<T> s = ops::global_avg_pool(q5);
      if (coarse != nullptr) coarse->push_back(std::move(q5));
      return s;
    }
    case HeadVariant::kE:
    case HeadVariant::kF: {
      Tensor<T> first;
      if (config_.variant == HeadVariant::kF) {
        if (t4.size() == 0) throw ConfigError("variant f needs tap-4 features");
        Tensor<T> q4;
        conv(*quality4_, t4, q4, cols_for(&Tape<T>::q4_cols));
        ops::avg_pool2_forward(q4, first);
      } else {
        conv(*quality5b_, t5, first, cols_for(&Tape<T>::q5b_cols));
      }
      Tensor<T> q5;
      conv(*quality5_, t5, q5, cols_for(&Tape<T>::q5_cols));
      Tensor<T> fused_in = ops::concat_channels(first, q5);
      Tensor<T> fused;
      conv(*fusion_, fused_in, fused, cols_for(&Tape<T>::fuse_cols));
      if (coarse != nullptr) {
        coarse->push_back(std::move(first));
        coarse->push_back(std::move(q5));
      }
      return ops::global_avg_pool(fused);
    }
  }
  return {};
}

template <typename T>
QualityHeadOutput<T> Model<T>::quality_head(const FeatureTaps<T>& taps) const {
  if (taps.t5.size() == 0) throw ConfigError("quality head needs tap-5 features");
  QualityHeadOutput<T> out;
  out.scores = quality_forward(taps.t4, taps.t5, nullptr, &out.coarse_maps);
  return out;
}

template <typename T>
std::vector<ForwardOutput<T>> Model<T>::forward(const Tensor<T>& patches, Tape<T>* tape) const {
  check_input(patches);
  if (patches.h != config_.patch_side) {
    throw ShapeError("model expects " + std::to_string(config_.patch_side) + "-pixel patches, got " +
                     patches.shape_string());
  }
  const auto taps = run_backbone(stages_, params_, static_cast<T>(config_.backbone.in_epsilon),
                                 patches, tape);
  std::vector<ForwardOutput<T>> out(static_cast<std::size_t>(patches.n));
  if (distortion_) {
    const bool on_t4 =
        config_.variant == HeadVariant::kD || config_.variant == HeadVariant::kF;
    const Tensor<T>& tap = on_t4 ? taps.t4 : taps.t5;
    Tensor<T> map;
    std::vector<T> scratch;
    conv(*distortion_, tap, map, tape != nullptr ? tape->dist_cols : scratch);
    const Tensor<T> logits = ops::global_avg_pool(map);
    const int m = config_.num_distortions;
    for (int ni = 0; ni < patches.n; ++ni) {
      out[ni].d_logits.assign(logits.data.begin() + ni * m, logits.data.begin() + (ni + 1) * m);
    }
    if (tape != nullptr) tape->dist_map = std::move(map);
  }
  const Tensor<T> scores = quality_forward(taps.t4, taps.t5, tape, nullptr);
  for (int ni = 0; ni < patches.n; ++ni) out[ni].s = scores.data[ni];
  if (tape != nullptr) {
    tape->t4 = taps.t4;
    tape->t5 = taps.t5;
  }
  return out;
}

template <typename T>
ForwardOutput<T> Model<T>::forward_one(const Tensor<T>& patch) const {
  if (patch.n != 1) throw ShapeError("forward_one expects a single patch");
  return forward(patch).front();
}

template <typename T>
void Model<T>::backward(const Tape<T>& tape, std::span<const T> grad_logits,
                        std::span<const T> grad_scores, Gradients<T>& grads) const {
  const int n = tape.t5.n;
  Tensor<T> g4(tape.t4.n, tape.t4.c, tape.t4.h, tape.t4.w);
  Tensor<T> g5(tape.t5.n, tape.t5.c, tape.t5.h, tape.t5.w);

  if (distortion_) {
    const bool on_t4 =
        config_.variant == HeadVariant::kD || config_.variant == HeadVariant::kF;
    Tensor<T> g_logits(n, config_.num_distortions, 1, 1);
    std::copy(grad_logits.begin(), grad_logits.end(), g_logits.data.begin());
    Tensor<T> g_map(tape.dist_map.n, tape.dist_map.c, tape.dist_map.h, tape.dist_map.w);
    ops::global_avg_pool_backward(g_logits, g_map);
    Tensor<T> g_tap;
    conv_backward(*distortion_, g_map, tape.dist_cols, grads, &g_tap);
    add_into(on_t4 ? g4 : g5, g_tap);
  }

  Tensor<T> g_s(n, 1, 1, 1);
  std::copy(grad_scores.begin(), grad_scores.end(), g_s.data.begin());
  switch (config_.variant) {
    case HeadVariant::kA: {
      Tensor<T> g_hidden;
      ops::linear_backward<T>(g_s, tape.fc_hidden, params_[fc2_->weight].value,
                              grads[fc2_->weight], grads[fc2_->bias], &g_hidden);
      ops::relu_backward_inplace(g_hidden, tape.fc_hidden);
      Tensor<T> g_tap;
      ops::linear_backward<T>(g_hidden, tape.t5, params_[fc1_->weight].value,
                              grads[fc1_->weight], grads[fc1_->bias], &g_tap);
      add_into(g5, g_tap);
      break;
    }
    case HeadVariant::kB:
    case HeadVariant::kC:
    case HeadVariant::kD: {
      Tensor<T> g_map(n, 1, tape.t5.h, tape.t5.w);
      ops::global_avg_pool_backward(g_s, g_map);
      Tensor<T> g_tap;
      conv_backward(*quality5_, g_map, tape.q5_cols, grads, &g_tap);
      add_into(g5, g_tap);
      break;
    }
    case HeadVariant::kE:
    case HeadVariant::kF: {
      Tensor<T> g_fused(n, 1, tape.t5.h, tape.t5.w);
      ops::global_avg_pool_backward(g_s, g_fused);
      Tensor<T> g_in;
      conv_backward(*fusion_, g_fused, tape.fuse_cols, grads, &g_in);
      Tensor<T> g_first(n, 1, tape.t5.h, tape.t5.w);
      Tensor<T> g_q5(n, 1, tape.t5.h, tape.t5.w);
      ops::split_channels(g_in, g_first, g_q5);
      Tensor<T> g_tap;
      conv_backward(*quality5_, g_q5, tape.q5_cols, grads, &g_tap);
      add_into(g5, g_tap);
      if (config_.variant == HeadVariant::kF) {
        Tensor<T> g_q4;
        ops::avg_pool2_backward(g_first, g_q4);
        conv_backward(*quality4_, g_q4, tape.q4_cols, grads, &g_tap);
        add_into(g4, g_tap);
      } else {
        conv_backward(*quality5b_, g_first, tape.q5b_cols, grads, &g_tap);
        add_into(g5, g_tap);
      }
      break;
    }
  }

  Tensor<T> g = std::move(g5);
  std::size_t conv_index = tape.convs.size();
  for (int s = static_cast<int>(stages_.size()) - 1; s >= 0; --s) {
    if (s == kTap4Stage) add_into(g, g4);
    Tensor<T> g_act;
    ops::max_pool2_backward(g, tape.pool_argmax[s], g_act);
    for (int j = static_cast<int>(stages_[s].size()) - 1; j >= 0; --j) {
      const auto& cache = tape.convs[--conv_index];
      ops::relu_backward_inplace(g_act, cache.normalized);
      Tensor<T> g_z;
      ops::instance_norm_backward(g_act, cache.normalized, cache.inv_std, g_z);
      const bool first_layer = s == 0 && j == 0;
      Tensor<T> g_in;
      conv_backward(stages_[s][j], g_z, cache.cols, grads, first_layer ? nullptr : &g_in);
      g_act = std::move(g_in);
    }
    g = std::move(g_act);
  }
}

template <typename T>
ParameterCensus Model<T>::census() const {
  ParameterCensus c;
  for (const auto& p : params_) {
    c.rows.push_back({p.name, p.shape, p.value.size()});
    c.total += p.value.size();
  }
  return c;
}

template <typename To, typename From>
void copy_parameters(const Model<From>& src, Model<To>& dst) {
  const auto& a = src.parameters();
  auto& b = dst.parameters();
  if (a.size() != b.size()) throw ShapeError("copy_parameters: parameter lists differ");
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].shape != b[i].shape) {
      throw ShapeError("copy_parameters: shape mismatch at " + a[i].name);
    }
    for (std::size_t k = 0; k < a[i].value.size(); ++k) {
      b[i].value[k] = static_cast<To>(a[i].value[k]);
    }
  }
}

template class Model<float>;
template class Model<double>;
template void copy_parameters(const Model<float>&, Model<double>&);
template void copy_parameters(const Model<double>&, Model<float>&);
template void copy_parameters(const Model<float>&, Model<float>&);

}  // namespace qualnet
