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

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "qualnet/tensor.hpp"

namespace qualnet {

// Head wiring of the six ablation architectures.
//   a: quality only, two fully connected layers on flattened tap-5
//   b: quality only, 1x1 conv + GAP on tap-5
//   c: distortion and quality heads both on tap-5
//   d: distortion head on tap-4, quality head on tap-5
//   e: both heads on tap-5, two tap-5 quality maps fused
//   f: distortion head on tap-4, tap-4 and tap-5 quality maps fused
enum class HeadVariant { kA, kB, kC, kD, kE, kF };

std::string to_string(HeadVariant variant);
HeadVariant parse_variant(std::string_view id);
bool has_distortion_head(HeadVariant variant);

struct BackboneConfig {
  std::vector<int> stage_channels{64, 128, 256, 512, 512};
  std::vector<int> convs_per_stage{2, 2, 3, 3, 3};
  int kernel_size = 3;
  double in_epsilon = 1e-5;

  static BackboneConfig full();
  static BackboneConfig tiny();
  void validate() const;
};

struct ModelConfig {
  BackboneConfig backbone = BackboneConfig::tiny();
  HeadVariant variant = HeadVariant::kF;
  int num_distortions = 4;
  int patch_side = 128;
  std::uint64_t seed = 0;
  // Distortion class names in index order; optional, used for cross-set name matching.
  std::vector<std::string> class_names;

  void validate() const;
};

void to_json(nlohmann::json& j, const BackboneConfig& c);
void from_json(const nlohmann::json& j, BackboneConfig& c);
void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

template <typename T>
struct Parameter {
  std::string name;
  std::vector<int> shape;
  std::vector<T> value;
};

// One gradient buffer per parameter, same order and sizes.
template <typename T>
using Gradients = std::vector<std::vector<T>>;

template <typename T>
struct FeatureTaps {
  Tensor<T> t4;  // C4 x S/16 x S/16, post-pool stage 4
  Tensor<T> t5;  // C5 x S/32 x S/32, post-pool stage 5
};

template <typename T>
struct ForwardOutput {
  std::vector<T> d_logits;  // empty for single-task variants
  T s = T(0);
};

template <typename T>
struct DistortionHeadOutput {
  Tensor<T> logit_map;  // n x m x h x w
  Tensor<T> d_logits;   // n x m x 1 x 1
};

template <typename T>
struct QualityHeadOutput {
  std::vector<Tensor<T>> coarse_maps;  // 1-channel maps at tap-5 resolution (empty for variant a)
  Tensor<T> scores;                    // n x 1 x 1 x 1
};

struct CensusRow {
  std::string name;
  std::vector<int> shape;
  std::size_t count = 0;
};

struct ParameterCensus {
  std::vector<CensusRow> rows;
  std::size_t total = 0;
};

// Activations retained by a training forward pass for the backward pass.
template <typename T>
struct Tape {
  struct Conv {
    std::vector<T> cols;
    Tensor<T> normalized;  // post-IN, pre-ReLU
    std::vector<T> inv_std;
  };
  std::vector<Conv> convs;
  std::vector<std::vector<std::uint32_t>> pool_argmax;
  Tensor<T> t4;
  Tensor<T> t5;
  std::vector<T> dist_cols;
  Tensor<T> dist_map;
  std::vector<T> q4_cols, q5_cols, q5b_cols, fuse_cols;
  Tensor<T> q4_map, fuse_in, fuse_map;
  Tensor<T> fc_hidden;
};

template <typename T>
class Model {
 public:
  // Builds and deterministically initializes all parameters from config.seed.
  explicit Model(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  std::vector<Parameter<T>>& parameters() { return params_; }
  const std::vector<Parameter<T>>& parameters() const { return params_; }
  std::optional<std::size_t> find_parameter(std::string_view name) const;

  Gradients<T> zero_gradients() const;

  FeatureTaps<T> forward_backbone(const Tensor<T>& patches) const;
  DistortionHeadOutput<T> distortion_head(const Tensor<T>& tap) const;
  QualityHeadOutput<T> quality_head(const FeatureTaps<T>& taps) const;

  // Batched forward; returns one output per sample. Pass a tape to keep the
  // activations needed by backward().
  std::vector<ForwardOutput<T>> forward(const Tensor<T>& patches, Tape<T>* tape = nullptr) const;
  ForwardOutput<T> forward_one(const Tensor<T>& patch) const;

  // Accumulates dLoss/dparam given dLoss/d_logits (n*m, sample-major; ignored for
  // single-task variants) and dLoss/ds (n).
  void backward(const Tape<T>& tape, std::span<const T> grad_logits,
                std::span<const T> grad_scores, Gradients<T>& grads) const;

  ParameterCensus census() const;

 private:
  struct ConvSpec {
    int in_channels = 0;
    int out_channels = 0;
    int kernel = 1;
    std::size_t weight = 0;
    std::size_t bias = 0;
  };
  struct LinearSpec {
    int in_features = 0;
    int out_features = 0;
    std::size_t weight = 0;
    std::size_t bias = 0;
  };

  ConvSpec add_conv(const std::string& name, int in_channels, int out_channels, int kernel);
  LinearSpec add_linear(const std::string& name, int in_features, int out_features);
  void check_input(const Tensor<T>& patches) const;
  void conv(const ConvSpec& spec, const Tensor<T>& in, Tensor<T>& out, std::vector<T>& cols) const;
  void conv_backward(const ConvSpec& spec, const Tensor<T>& grad_out, const std::vector<T>& cols,
                     Gradients<T>& grads, Tensor<T>* grad_in) const;
  Tensor<T> quality_forward(const Tensor<T>& t4, const Tensor<T>& t5, Tape<T>* tape,
                            std::vector<Tensor<T>>* coarse) const;

  ModelConfig config_;
  std::vector<Parameter<T>> params_;
  std::vector<std::vector<ConvSpec>> stages_;
  std::optional<ConvSpec> distortion_;
  std::optional<ConvSpec> quality4_;
  std::optional<ConvSpec> quality5_;
  std::optional<ConvSpec> quality5b_;
  std::optional<ConvSpec> fusion_;
  std::optional<LinearSpec> fc1_;
  std::optional<LinearSpec> fc2_;
};

// Copies parameter values across precisions; shapes must match.
template <typename To, typename From>
void copy_parameters(const Model<From>& src, Model<To>& dst);

extern template class Model<float>;
extern template class Model<double>;

}  // namespace qualnet
