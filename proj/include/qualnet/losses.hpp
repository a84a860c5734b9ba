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

#include <span>
#include <vector>

namespace qualnet {

// -log softmax(logits)[class_index - 1], evaluated with max subtraction.
// class_index is 1-based.
template <typename T>
double cross_entropy(std::span<const T> logits, int class_index);

// d cross_entropy / d logits = softmax(logits) - onehot(class_index).
template <typename T>
std::vector<T> cross_entropy_gradient(std::span<const T> logits, int class_index);

template <typename T>
std::vector<double> softmax(std::span<const T> logits);

inline double l2_loss(double score, double target) {
  const double d = score - target;
  return d * d;
}

struct LossBreakdown {
  double distortion = 0.0;  // L_d, zero for single-task variants
  double quality = 0.0;     // L_s
  double total = 0.0;
};

// L_d + lambda * L_s. With empty logits (single-task variants) the total is L_s.
template <typename T>
LossBreakdown total_loss(std::span<const T> logits, int class_index, double score, double target,
                         double lambda);

}  // namespace qualnet
