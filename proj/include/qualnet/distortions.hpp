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

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "qualnet/image.hpp"

namespace qualnet {

enum class DistortionType { kGaussianBlur, kWhiteNoise, kJpeg, kContrastChange, kBlockCorruption };

inline constexpr int kSeverityLevels = 4;

std::string_view distortion_name(DistortionType type);
DistortionType parse_distortion(std::string_view name);
const std::vector<DistortionType>& all_distortions();

// Strength parameter for levels 1..4 (level 0 is the identity probe):
//   gaussian_blur     sigma in pixels
//   white_noise       standard deviation on [0,1] samples
//   jpeg              quality-factor-equivalent scale (quality = 100 * scale)
//   contrast_change   gain about the mean intensity
//   block_corruption  fraction of 16x16 blocks replaced by a flat random colour
double severity_parameter(DistortionType type, int level);

// A class of the dataset: one distortion, or several applied in order at the
// same level (composite classes, named "a+b").
struct DistortionSpec {
  std::vector<DistortionType> parts;
  std::string name() const;
};

DistortionSpec parse_distortion_spec(std::string_view name);

// Deterministic in (image, type, level, seed); output clipped to [0,1].
Image apply_distortion(const Image& image, DistortionType type, int level, std::uint64_t seed);
Image apply_distortion(const Image& image, const DistortionSpec& spec, int level,
                       std::uint64_t seed);

// DMOS-like proxy: 100 * level / levels (higher is worse), shared by all types.
double severity_to_score(int level, int levels = kSeverityLevels);

// Parameter-level primitives.
Image gaussian_blur(const Image& image, double sigma);
std::vector<double> gaussian_kernel(double sigma);
Image add_white_noise(const Image& image, double stddev, std::uint64_t seed);
Image jpeg_quantize(const Image& image, double quality_scale);
std::array<int, 64> scaled_luminance_table(double quality_scale);
Image change_contrast(const Image& image, double gain);
Image corrupt_blocks(const Image& image, double fraction, std::uint64_t seed);

}  // namespace qualnet
