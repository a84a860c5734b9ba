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
#include <string_view>
#include <vector>

#include "qualnet/model.hpp"

namespace qualnet {

enum class OptimizerKind { kAdam, kSgd };

std::string to_string(OptimizerKind kind);
OptimizerKind parse_optimizer(std::string_view name);

// Per-parameter moment buffers. SGD uses only `first` (momentum velocity).
template <typename T>
struct MomentState {
  std::int64_t step = 0;
  Gradients<T> first;
  Gradients<T> second;
};

template <typename T>
MomentState<T> make_moments(const std::vector<Parameter<T>>& params);

struct AdamSettings {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Bias-corrected Adam update. Throws DataError naming the first parameter with
// a non-finite gradient; parameters are untouched in that case.
template <typename T>
void adam_step(std::vector<Parameter<T>>& params, const Gradients<T>& grads,
               MomentState<T>& state, double rate, const AdamSettings& settings = {});

// Heavy-ball SGD: v = momentum * v + g; p -= rate * v.
template <typename T>
void sgd_step(std::vector<Parameter<T>>& params, const Gradients<T>& grads, MomentState<T>& state,
              double rate, double momentum);

// Rescales all gradients so their global L2 norm is at most max_norm.
template <typename T>
void clip_gradient_norm(Gradients<T>& grads, double max_norm);

}  // namespace qualnet
