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

#include "qualnet/distortions.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "qualnet/errors.hpp"
#include "qualnet/random.hpp"

namespace qualnet {

namespace {

constexpr std::array<double, kSeverityLevels> kBlurSigma{0.5, 1.0, 2.0, 4.0};
constexpr std::array<double, kSeverityLevels> kNoiseStd{0.02, 0.05, 0.1, 0.2};
constexpr std::array<double, kSeverityLevels> kJpegScale{0.9, 0.7, 0.4, 0.15};
constexpr std::array<double, kSeverityLevels> kContrastGain{0.8, 0.6, 0.4, 0.25};
constexpr std::array<double, kSeverityLevels> kBlockFraction{0.02, 0.05, 0.1, 0.2};

// ITU-T T.81 Annex K luminance table, natural (row-major) order.
constexpr std::array<int, 64> kLuminanceTable{
    16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,
    14, 13, 16, 24, 40,  57,  69,  56,  14, 17, 22, 29, 51,  87,  80,  62,
    18, 22, 37, 56, 68,  109, 103, 77,  24, 35, 55, 64, 81,  104, 113, 92,
    49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};

constexpr int kBlockSide = 16;

void clip(Image& img) {
  for (auto& v : img.pixels) v = std::clamp(v, 0.0f, 1.0f);
}

void check_level(int level) {
  if (level < 0 || level > kSeverityLevels) {
    throw ConfigError("severity level " + std::to_string(level) + " outside 0.." +
                      std::to_string(kSeverityLevels));
  }
}

// Orthonormal 8-point DCT-II basis, basis[k][n].
const std::array<std::array<double, 8>, 8>& dct_basis() {
  static const auto basis = [] {
    std::array<std::array<double, 8>, 8> b{};
    for (int k = 0; k < 8; ++k) {
      const double scale = k == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
      for (int n = 0; n < 8; ++n) {
        b[k][n] = scale * std::cos(std::numbers::pi * (2 * n + 1) * k / 16.0);
      }
    }
    return b;
  }();
  return basis;
}

using Mat3 = std::array<std::array<double, 3>, 3>;

constexpr Mat3 kRgbToYcc{{{0.299, 0.587, 0.114},
                          {-0.168735892, -0.331264108, 0.5},
                          {0.5, -0.418687589, -0.081312411}}};

Mat3 invert(const Mat3& m) {
  const double det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
                     m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                     m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
  Mat3 r{};
  r[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) / det;
  r[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) / det;
  r[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) / det;
  r[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) / det;
  r[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) / det;
  r[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) / det;
  r[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) / det;
  r[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) / det;
  r[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / det;
  return r;
}

}  // namespace

std::string_view distortion_name(DistortionType type) {
  switch (type) {
    case DistortionType::kGaussianBlur: return "gaussian_blur";
    case DistortionType::kWhiteNoise: return "white_noise";
    case DistortionType::kJpeg: return "jpeg";
    case DistortionType::kContrastChange: return "contrast_change";
    case DistortionType::kBlockCorruption: return "block_corruption";
  }
  return "?";
}

const std::vector<DistortionType>& all_distortions() {
  static const std::vector<DistortionType> all{
      DistortionType::kGaussianBlur, DistortionType::kWhiteNoise, DistortionType::kJpeg,
      DistortionType::kContrastChange, DistortionType::kBlockCorruption};
  return all;
}

DistortionType parse_distortion(std::string_view name) {
  for (auto t : all_distortions()) {
    if (distortion_name(t) == name) return t;
  }
  throw ConfigError("unknown distortion type '" + std::string(name) + "'");
}

std::string DistortionSpec::name() const {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i > 0) out += '+';
    out += distortion_name(parts[i]);
  }
  return out;
}

DistortionSpec parse_distortion_spec(std::string_view name) {
  DistortionSpec spec;
  std::size_t start = 0;
  while (start <= name.size()) {
    const auto plus = name.find('+', start);
    const auto part = name.substr(start, plus == std::string_view::npos ? name.npos : plus - start);
    spec.parts.push_back(parse_distortion(part));
    if (plus == std::string_view::npos) break;
    start = plus + 1;
  }
  return spec;
}

double severity_parameter(DistortionType type, int level) {
  check_level(level);
  if (level == 0) {
    switch (type) {
      case DistortionType::kGaussianBlur: return 0.0;
      case DistortionType::kWhiteNoise: return 0.0;
      case DistortionType::kJpeg: return 1.0;
      case DistortionType::kContrastChange: return 1.0;
      case DistortionType::kBlockCorruption: return 0.0;
    }
  }
  const auto i = static_cast<std::size_t>(level - 1);
  switch (type) {
    case DistortionType::kGaussianBlur: return kBlurSigma[i];
    case DistortionType::kWhiteNoise: return kNoiseStd[i];
    case DistortionType::kJpeg: return kJpegScale[i];
    case DistortionType::kContrastChange: return kContrastGain[i];
    case DistortionType::kBlockCorruption: return kBlockFraction[i];
  }
  throw ConfigError("unknown distortion type");
}

double severity_to_score(int level, int levels) {
  if (levels < 1 || level < 0 || level > levels) {
    throw ConfigError("severity level " + std::to_string(level) + " outside 0.." +
                      std::to_string(levels));
  }
  return 100.0 * static_cast<double>(level) / static_cast<double>(levels);
}

Image apply_distortion(const Image& image, DistortionType type, int level, std::uint64_t seed) {
  const double p = severity_parameter(type, level);
  if (level == 0) return image;
  switch (type) {
    case DistortionType::kGaussianBlur: return gaussian_blur(image, p);
    case DistortionType::kWhiteNoise: return add_white_noise(image, p, seed);
    case DistortionType::kJpeg: return jpeg_quantize(image, p);
    case DistortionType::kContrastChange: return change_contrast(image, p);
    case DistortionType::kBlockCorruption: return corrupt_blocks(image, p, seed);
  }
  throw ConfigError("unknown distortion type");
}

Image apply_distortion(const Image& image, const DistortionSpec& spec, int level,
                       std::uint64_t seed) {
  if (spec.parts.empty()) throw ConfigError("empty distortion spec");
  Image out = image;
  for (std::size_t i = 0; i < spec.parts.size(); ++i) {
    out = apply_distortion(out, spec.parts[i], level, derive_seed(seed, {i}));
  }
  return out;
}

std::vector<double> gaussian_kernel(double sigma) {
  if (sigma < 0.0) throw ConfigError("blur sigma must be non-negative");
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  if (radius == 0) {
    k[0] = 1.0;
    return k;
  }
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * i * i / (sigma * sigma));
    k[static_cast<std::size_t>(i + radius)] = v;
    sum += v;
  }
  for (auto& v : k) v /= sum;
  return k;
}

Image gaussian_blur(const Image& image, double sigma) {
  const auto k = gaussian_kernel(sigma);
  const int radius = static_cast<int>(k.size() / 2);
  if (radius == 0) return image;
  const int w = image.width;
  const int h = image.height;
  Image tmp(w, h);
  Image out(w, h);
  // Separable; clamp-to-edge borders.
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          acc += k[static_cast<std::size_t>(i + radius)] * image.at(c, y, std::clamp(x + i, 0, w - 1));
        }
        tmp.at(c, y, x) = static_cast<float>(acc);
      }
    }
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          acc += k[static_cast<std::size_t>(i + radius)] * tmp.at(c, std::clamp(y + i, 0, h - 1), x);
        }
        out.at(c, y, x) = static_cast<float>(acc);
      }
    }
  }
  clip(out);
  return out;
}

Image add_white_noise(const Image& image, double stddev, std::uint64_t seed) {
  if (stddev < 0.0) throw ConfigError("noise standard deviation must be non-negative");
  if (stddev == 0.0) return image;
  Image out = image;
  std::mt19937_64 rng(seed);
  for (auto& v : out.pixels) v = static_cast<float>(v + stddev * standard_normal(rng));
  clip(out);
  return out;
}

std::array<int, 64> scaled_luminance_table(double quality_scale) {
  if (!(quality_scale > 0.0) || quality_scale > 1.0) {
    throw ConfigError("jpeg quality scale must be in (0, 1]");
  }
  const double quality = std::clamp(100.0 * quality_scale, 1.0, 100.0);
  const double factor = quality < 50.0 ? 5000.0 / quality : 200.0 - 2.0 * quality;
  std::array<int, 64> table{};
  for (std::size_t i = 0; i < 64; ++i) {
    const int q = static_cast<int>(std::floor((kLuminanceTable[i] * factor + 50.0) / 100.0));
    table[i] = std::clamp(q, 1, 255);
  }
  return table;
}

Image jpeg_quantize(const Image& image, double quality_scale) {
  const auto table = scaled_luminance_table(quality_scale);
  const auto& basis = dct_basis();
  static const Mat3 ycc_to_rgb = invert(kRgbToYcc);
  const int w = image.width;
  const int h = image.height;
  const int pw = (w + 7) / 8 * 8;
  const int ph = (h + 7) / 8 * 8;

  // YCbCr planes on a 0..255 scale, level-shifted by 128, edge-replicated to
  // whole blocks.
  std::vector<double> planes(static_cast<std::size_t>(3) * pw * ph);
  auto plane_at = [&](int c, int y, int x) -> double& {
    return planes[(static_cast<std::size_t>(c) * ph + y) * pw + x];
  };
  for (int y = 0; y < ph; ++y) {
    for (int x = 0; x < pw; ++x) {
      const int sy = std::min(y, h - 1);
      const int sx = std::min(x, w - 1);
      const double rgb[3] = {image.at(0, sy, sx), image.at(1, sy, sx), image.at(2, sy, sx)};
      for (int c = 0; c < 3; ++c) {
        const double v = kRgbToYcc[c][0] * rgb[0] + kRgbToYcc[c][1] * rgb[1] +
                         kRgbToYcc[c][2] * rgb[2];
        plane_at(c, y, x) = 255.0 * v - (c == 0 ? 128.0 : 0.0);
      }
    }
  }

  double block[8][8];
  double coef[8][8];
  for (int c = 0; c < 3; ++c) {
    for (int by = 0; by < ph; by += 8) {
      for (int bx = 0; bx < pw; bx += 8) {
        for (int y = 0; y < 8; ++y) {
          for (int x = 0; x < 8; ++x) block[y][x] = plane_at(c, by + y, bx + x);
        }
        for (int u = 0; u < 8; ++u) {
          for (int v = 0; v < 8; ++v) {
            double acc = 0.0;
            for (int y = 0; y < 8; ++y) {
              for (int x = 0; x < 8; ++x) acc += basis[u][y] * basis[v][x] * block[y][x];
            }
            coef[u][v] = acc;
          }
        }
        // AC terms only; the DC term passes through so flat content survives exactly.
        for (int u = 0; u < 8; ++u) {
          for (int v = 0; v < 8; ++v) {
            if (u == 0 && v == 0) continue;
            const double q = table[static_cast<std::size_t>(u * 8 + v)];
            coef[u][v] = std::round(coef[u][v] / q) * q;
          }
        }
        for (int y = 0; y < 8; ++y) {
          for (int x = 0; x < 8; ++x) {
            double acc = 0.0;
            for (int u = 0; u < 8; ++u) {
              for (int v = 0; v < 8; ++v) acc += basis[u][y] * basis[v][x] * coef[u][v];
            }
            plane_at(c, by + y, bx + x) = acc;
          }
        }
      }
    }
  }

  Image out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double ycc[3] = {(plane_at(0, y, x) + 128.0) / 255.0, plane_at(1, y, x) / 255.0,
                             plane_at(2, y, x) / 255.0};
      for (int c = 0; c < 3; ++c) {
        out.at(c, y, x) = static_cast<float>(ycc_to_rgb[c][0] * ycc[0] +
                                             ycc_to_rgb[c][1] * ycc[1] +
                                             ycc_to_rgb[c][2] * ycc[2]);
      }
    }
  }
  clip(out);
  return out;
}

Image change_contrast(const Image& image, double gain) {
  if (gain < 0.0) throw ConfigError("contrast gain must be non-negative");
  if (gain == 1.0) return image;
  double mean = 0.0;
  for (float v : image.pixels) mean += v;
  mean /= static_cast<double>(image.pixels.size());
  Image out = image;
  for (auto& v : out.pixels) v = static_cast<float>(mean + gain * (v - mean));
  clip(out);
  return out;
}

Image corrupt_blocks(const Image& image, double fraction, std::uint64_t seed) {
  if (fraction < 0.0 || fraction > 1.0) throw ConfigError("block fraction must be in [0, 1]");
  const int bw = image.width / kBlockSide;
  const int bh = image.height / kBlockSide;
  const std::size_t total = static_cast<std::size_t>(bw) * bh;
  if (fraction == 0.0 || total == 0) return image;
  const auto count = std::min(
      total, static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(total) - 1e-9)));
  Image out = image;
  std::mt19937_64 rng(seed);
  const auto order = seeded_permutation(total, rng());
  for (std::size_t i = 0; i < count; ++i) {
    const int bx = static_cast<int>(order[i] % static_cast<std::size_t>(bw)) * kBlockSide;
    const int by = static_cast<int>(order[i] / static_cast<std::size_t>(bw)) * kBlockSide;
    for (int c = 0; c < 3; ++c) {
      const auto colour = static_cast<float>(uniform01(rng));
      for (int y = by; y < by + kBlockSide; ++y) {
        for (int x = bx; x < bx + kBlockSide; ++x) out.at(c, y, x) = colour;
      }
    }
  }
  return out;
}

}  // namespace qualnet
