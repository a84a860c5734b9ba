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

#include "qualnet/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "qualnet/errors.hpp"

namespace qualnet {

namespace {

template <typename T>
void check_class(std::span<const T> logits, int class_index) {
  if (class_index < 1 || class_index > static_cast<int>(logits.size())) {
    throw ConfigError("class index " + std::to_string(class_index) + " outside 1.." +
                      std::to_string(logits.size()));
  }
}

}  // namespace

template <typename T>
std::vector<double> softmax(std::span<const T> logits) {
  std::vector<double> p(logits.size());
  if (logits.empty()) return p;
  const double mx = static_cast<double>(*std::max_element(logits.begin(), logits.end()));
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(static_cast<double>(logits[i]) - mx);
    sum += p[i];
  }
  for (auto& v : p) v /= sum;
  return p;
}

template <typename T>
double cross_entropy(std::span<const T> logits, int class_index) {
  check_class(logits, class_index);
  const double mx = static_cast<double>(*std::max_element(logits.begin(), logits.end()));
  double sum = 0.0;
  for (T v : logits) sum += std::exp(static_cast<double>(v) - mx);
  return std::log(sum) - (static_cast<double>(logits[class_index - 1]) - mx);
}

template <typename T>
std::vector<T> cross_entropy_gradient(std::span<const T> logits, int class_index) {
  check_class(logits, class_index);
  const auto p = softmax(logits);
  std::vector<T> g(logits.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = static_cast<T>(p[i]);
  g[class_index - 1] -= T(1);
  return g;
}

template <typename T>
LossBreakdown total_loss(std::span<const T> logits, int class_index, double score, double target,
                         double lambda) {
  LossBreakdown out;
  out.quality = l2_loss(score, target);
  if (logits.empty()) {
    out.total = out.quality;
    return out;
  }
  out.distortion = cross_entropy(logits, class_index);
  out.total = out.distortion + lambda * out.quality;
  return out;
}

template std::vector<double> softmax(std::span<const float>);
template std::vector<double> softmax(std::span<const double>);
template double cross_entropy(std::span<const float>, int);
template double cross_entropy(std::span<const double>, int);
template std::vector<float> cross_entropy_gradient(std::span<const float>, int);
template std::vector<double> cross_entropy_gradient(std::span<const double>, int);
template LossBreakdown total_loss(std::span<const float>, int, double, double, double);
template LossBreakdown total_loss(std::span<const double>, int, double, double, double);

}  // namespace qualnet
