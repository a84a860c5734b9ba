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
#include <span>
#include <string>
#include <vector>

namespace qualnet {

// Dense NCHW tensor. Batch-major so a single sample is a contiguous block.
template <typename T>
struct Tensor {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;
  std::vector<T> data;

  Tensor() = default;
  Tensor(int batch, int channels, int height, int width, T fill = T(0))
      : n(batch), c(channels), h(height), w(width),
        data(static_cast<std::size_t>(batch) * channels * height * width, fill) {}

  std::size_t size() const { return data.size(); }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  std::size_t sample_size() const { return static_cast<std::size_t>(c) * h * w; }

  T& at(int ni, int ci, int y, int x) {
    return data[((static_cast<std::size_t>(ni) * c + ci) * h + y) * w + x];
  }
  const T& at(int ni, int ci, int y, int x) const {
    return data[((static_cast<std::size_t>(ni) * c + ci) * h + y) * w + x];
  }

  std::span<T> sample(int ni) { return {data.data() + ni * sample_size(), sample_size()}; }
  std::span<const T> sample(int ni) const {
    return {data.data() + ni * sample_size(), sample_size()};
  }

  bool same_shape(const Tensor& o) const { return n == o.n && c == o.c && h == o.h && w == o.w; }
  std::string shape_string() const;
};

template <typename T>
std::string Tensor<T>::shape_string() const {
  return std::to_string(n) + "x" + std::to_string(c) + "x" + std::to_string(h) + "x" +
         std::to_string(w);
}

// Cast between precisions, used to run the double-precision gradient checks on
// the same inputs as the float training path.
template <typename To, typename From>
Tensor<To> tensor_cast(const Tensor<From>& src) {
  Tensor<To> out(src.n, src.c, src.h, src.w);
  for (std::size_t i = 0; i < src.size(); ++i) out.data[i] = static_cast<To>(src.data[i]);
  return out;
}

// Stacks single-sample tensors of identical shape into one batch.
template <typename T>
Tensor<T> stack(std::span<const Tensor<T>> samples);

}  // namespace qualnet
