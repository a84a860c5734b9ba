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

#include <filesystem>
#include <vector>

#include "qualnet/tensor.hpp"

namespace qualnet {

// Planar RGB image with samples in [0, 1].
struct Image {
  int width = 0;
  int height = 0;
  std::vector<float> pixels;  // 3 * height * width, channel-major

  Image() = default;
  Image(int w, int h, float fill = 0.0f)
      : width(w), height(h), pixels(static_cast<std::size_t>(3) * w * h, fill) {}

  float& at(int c, int y, int x) {
    return pixels[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  float at(int c, int y, int x) const {
    return pixels[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  std::size_t plane() const { return static_cast<std::size_t>(width) * height; }
};

// Round every sample to the nearest of 256 levels, i.e. what an 8-bit file holds.
Image quantize_8bit(const Image& img);

// Crop [x, x+side) x [y, y+side) into a 1 x 3 x side x side tensor.
Tensor<float> crop_to_tensor(const Image& img, int x, int y, int side);

// Reads 8-bit RGB/gray PNG (any PNG libpng can expand) or binary PPM (P6).
Image read_image(const std::filesystem::path& path);

// Writes an 8-bit RGB PNG. Encoding is deterministic for identical pixels.
void write_png(const std::filesystem::path& path, const Image& img);

}  // namespace qualnet
