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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "qualnet/losses.hpp"
#include "qualnet/model.hpp"
#include "qualnet/trainer.hpp"

namespace qualnet::testing {

// Fresh, empty directory under the system temp dir; removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("qualnet-" + tag + "-" + std::to_string(rd()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& leaf) const { return path_ / leaf; }

 private:
  std::filesystem::path path_;
};

template <typename T>
Tensor<T> random_tensor(int n, int c, int h, int w, std::uint64_t seed, double lo = 0.0,
                        double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor<T> t(n, c, h, w);
  for (auto& v : t.data) v = static_cast<T>(u(rng));
  return t;
}

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst;
  std::size_t checked = 0;   // entries with |grad| above the floor
  std::size_t skipped = 0;   // entries below the floor
  std::size_t kinked = 0;    // entries whose stencil crossed a ReLU or pooling switch
  std::vector<std::string> parameters;  // names with at least one checked entry
};

// Signs of every pre-ReLU activation plus every max-pool winner. Inside a region
// where this pattern is constant the loss is smooth.
template <typename T>
std::vector<std::uint32_t> activation_pattern(const Model<T>& model, const Tensor<T>& batch) {
  Tape<T> tape;
  model.forward(batch, &tape);
  std::vector<std::uint32_t> pattern;
  for (const auto& c : tape.convs) {
    for (T v : c.normalized.data) pattern.push_back(v > T(0) ? 1u : 0u);
  }
  for (const auto& a : tape.pool_argmax) pattern.insert(pattern.end(), a.begin(), a.end());
  for (T v : tape.fc_hidden.data) pattern.push_back(v > T(0) ? 1u : 0u);
  return pattern;
}

// Central finite differences of the mean batch loss against the analytic gradient.
// Every entry of every convolutional head parameter is checked (fully connected
// layers are subsampled); backbone convs contribute
// `backbone_samples` evenly spaced weight entries each. A central difference is
// only a valid oracle when the stencil stays inside one smooth region, so entries
// whose +-step moves a ReLU sign or a pooling winner are counted as kinked; a
// kinked or zero-gradient backbone sample moves on to a nearby entry.
inline GradCheckReport gradient_check(HeadVariant variant, std::uint64_t seed, double lambda = 1.0,
                                      double step = 1e-4, double floor = 1e-6,
                                      int backbone_samples = 4, double target = 25.0) {
  ModelConfig mc;
  mc.variant = variant;
  mc.patch_side = 32;
  mc.num_distortions = 4;
  mc.seed = seed;
  Model<double> model(mc);
  const auto batch = random_tensor<double>(1, 3, 32, 32, seed + 17);
  const std::vector<int> classes{2};
  const std::vector<double> scores{target};

  auto grads = model.zero_gradients();
  loss_and_gradients<double>(model, batch, classes, scores, lambda, grads);

  auto loss_at = [&]() {
    auto scratch = model.zero_gradients();
    return loss_and_gradients<double>(model, batch, classes, scores, lambda, scratch).total;
  };

  const auto base_pattern = activation_pattern(model, batch);

  GradCheckReport report;
  auto& params = model.parameters();
  for (std::size_t p = 0; p < params.size(); ++p) {
    const bool head = params[p].name.rfind("head.", 0) == 0;
    std::vector<std::size_t> entries;
    const std::size_t count = params[p].value.size();
    if (head && count <= 4096) {
      for (std::size_t k = 0; k < count; ++k) entries.push_back(k);
    } else if (head) {
      // Fully connected layers: an evenly spaced subset plus the bias block at the end.
      for (std::size_t k = 0; k < count; k += count / 256) entries.push_back(k);
      entries.push_back(count - 1);
    } else if (params[p].name.find(".weight") != std::string::npos) {
      for (int k = 0; k < backbone_samples; ++k) {
        entries.push_back((count * (2 * k + 1)) / (2 * backbone_samples));
      }
    }
    const bool backbone = !head;
    bool any = false;
    for (std::size_t e = 0; e < entries.size(); ++e) {
      const std::size_t k = entries[e];
      double& x = params[p].value[k];
      const double saved = x;
      x = saved + step;
      const double up = loss_at();
      const bool smooth_up = activation_pattern(model, batch) == base_pattern;
      x = saved - step;
      const double down = loss_at();
      const bool smooth_down = activation_pattern(model, batch) == base_pattern;
      x = saved;
      if (!smooth_up || !smooth_down) {
        ++report.kinked;
        if (backbone && entries.size() < 64) entries.push_back((k + 10) % count);
        continue;
      }
      const double numeric = (up - down) / (2.0 * step);
      const double analytic = grads[p][k];
      const double scale = std::max(std::abs(numeric), std::abs(analytic));
      if (scale <= floor) {
        ++report.skipped;
        if (backbone && entries.size() < 64) entries.push_back((k + 10) % count);
        continue;
      }
      any = true;
      ++report.checked;
      const double rel = std::abs(numeric - analytic) / scale;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst = params[p].name + "[" + std::to_string(k) + "]";
      }
    }
    if (any) report.parameters.push_back(params[p].name);
  }
  return report;
}

}  // namespace qualnet::testing
