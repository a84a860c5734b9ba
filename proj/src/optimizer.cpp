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

#include "qualnet/optimizer.hpp"

#include <cmath>

#include "qualnet/errors.hpp"

namespace qualnet {

namespace {

template <typename T>
void check_finite(const std::vector<Parameter<T>>& params, const Gradients<T>& grads) {
  if (grads.size() != params.size()) throw ShapeError("gradient list does not match parameters");
  for (std::size_t i = 0; i < grads.size(); ++i) {
    // g * 0 is NaN exactly when g is NaN or infinite, and the sum vectorizes.
    T probe = 0;
    for (T g : grads[i]) probe += g * T(0);
    if (probe != probe) throw DataError("non-finite gradient for parameter " + params[i].name);
  }
}

}  // namespace

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::kAdam ? "adam" : "sgd"; }

OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "adam") return OptimizerKind::kAdam;
  if (name == "sgd") return OptimizerKind::kSgd;
  throw ConfigError("unknown optimizer '" + std::string(name) + "' (expected adam or sgd)");
}

template <typename T>
MomentState<T> make_moments(const std::vector<Parameter<T>>& params) {
  MomentState<T> s;
  for (const auto& p : params) {
    s.first.emplace_back(p.value.size(), T(0));
    s.second.emplace_back(p.value.size(), T(0));
  }
  return s;
}

template <typename T>
void adam_step(std::vector<Parameter<T>>& params, const Gradients<T>& grads,
               MomentState<T>& state, double rate, const AdamSettings& settings) {
  check_finite(params, grads);
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(settings.beta1, t);
  const double c2 = 1.0 - std::pow(settings.beta2, t);
  // Bias corrections folded into the step size and the denominator scale.
  const T step_size = static_cast<T>(rate / c1);
  const T inv_sqrt_c2 = static_cast<T>(1.0 / std::sqrt(c2));
  const T b1 = static_cast<T>(settings.beta1);
  const T b2 = static_cast<T>(settings.beta2);
  const T eps = static_cast<T>(settings.epsilon);
  for (std::size_t i = 0; i < params.size(); ++i) {
    T* value = params[i].value.data();
    T* m = state.first[i].data();
    T* v = state.second[i].data();
    const T* g = grads[i].data();
    const std::size_t count = params[i].value.size();
    for (std::size_t k = 0; k < count; ++k) {
      const T mk = b1 * m[k] + (T(1) - b1) * g[k];
      const T vk = b2 * v[k] + (T(1) - b2) * g[k] * g[k];
      m[k] = mk;
      v[k] = vk;
      value[k] -= step_size * mk / (std::sqrt(vk) * inv_sqrt_c2 + eps);
    }
  }
}
template <typename T>
void sgd_step(std::vector<Parameter<T>>& params, const Gradients<T>& grads, MomentState<T>& state,
              double rate, double momentum) {
  check_finite(params, grads);
  ++state.step;
  const T mu = static_cast<T>(momentum);
  const T lr = static_cast<T>(rate);
  for (std::size_t i = 0; i < params.size(); ++i) {
    T* value = params[i].value.data();
    T* vel = state.first[i].data();
    const T* g = grads[i].data();
    const std::size_t count = params[i].value.size();
    for (std::size_t k = 0; k < count; ++k) {
      vel[k] = mu * vel[k] + g[k];
      value[k] -= lr * vel[k];
    }
  }
}

template <typename T>
void clip_gradient_norm(Gradients<T>& grads, double max_norm) {
  if (!(max_norm > 0.0)) throw ConfigError("clip norm must be positive");
  double sq = 0.0;
  for (const auto& g : grads) {
    for (T x : g) sq += static_cast<double>(x) * x;
  }
  const double norm = std::sqrt(sq);
  if (norm <= max_norm) return;
  const T scale = static_cast<T>(max_norm / norm);
  for (auto& g : grads) {
    for (T& x : g) x *= scale;
  }
}

template MomentState<float> make_moments(const std::vector<Parameter<float>>&);
template MomentState<double> make_moments(const std::vector<Parameter<double>>&);
template void adam_step(std::vector<Parameter<float>>&, const Gradients<float>&,
                        MomentState<float>&, double, const AdamSettings&);
template void adam_step(std::vector<Parameter<double>>&, const Gradients<double>&,
                        MomentState<double>&, double, const AdamSettings&);
template void sgd_step(std::vector<Parameter<float>>&, const Gradients<float>&, MomentState<float>&,
                       double, double);
template void sgd_step(std::vector<Parameter<double>>&, const Gradients<double>&,
                       MomentState<double>&, double, double);
template void clip_gradient_norm(Gradients<float>&, double);
template void clip_gradient_norm(Gradients<double>&, double);

}  // namespace qualnet
