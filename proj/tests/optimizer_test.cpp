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

#include <gtest/gtest.h>

#include <cmath>

#include "qualnet/errors.hpp"

namespace qualnet {
namespace {

std::vector<Parameter<double>> scalar(double v) { return {{"p", {1}, {v}}}; }

TEST(Adam, FirstStepHasMagnitudeRate) {
  for (double g : {3.0, -0.02, 1e-3}) {
    auto p = scalar(1.0);
    auto state = make_moments(p);
    adam_step(p, Gradients<double>{{g}}, state, 0.01);
    // m_hat = g and v_hat = g^2, so the step is rate * g / (|g| + eps).
    EXPECT_NEAR(p[0].value[0], 1.0 - 0.01 * g / (std::abs(g) + 1e-8), 1e-15);
  }
}

TEST(Adam, ZeroGradientIsFixedPoint) {
  auto p = scalar(0.5);
  auto state = make_moments(p);
  for (int i = 0; i < 3; ++i) adam_step(p, Gradients<double>{{0.0}}, state, 0.1);
  EXPECT_EQ(p[0].value[0], 0.5);
}

TEST(Adam, TwoStepsByHand) {
  auto p = scalar(0.0);
  auto state = make_moments(p);
  const double g1 = 2.0;
  const double g2 = -1.0;
  const double rate = 0.1;
  adam_step(p, Gradients<double>{{g1}}, state, rate);
  adam_step(p, Gradients<double>{{g2}}, state, rate);
  const double m1 = 0.1 * g1;
  const double v1 = 0.001 * g1 * g1;
  const double m2 = 0.9 * m1 + 0.1 * g2;
  const double v2 = 0.999 * v1 + 0.001 * g2 * g2;
  EXPECT_NEAR(state.first[0][0], m2, 1e-15);
  EXPECT_NEAR(state.second[0][0], v2, 1e-15);
  const double step1 = rate * (m1 / 0.1) / (std::sqrt(v1 / 0.001) + 1e-8);
  const double step2 = rate * (m2 / (1 - 0.81)) / (std::sqrt(v2 / (1 - 0.999 * 0.999)) + 1e-8);
  EXPECT_NEAR(p[0].value[0], -step1 - step2, 1e-12);
  EXPECT_EQ(state.step, 2);
}

TEST(Adam, NonFiniteGradientNamesParameter) {
  std::vector<Parameter<float>> p{{"head.fusion.weight", {2}, {1.0f, 2.0f}}};
  auto state = make_moments(p);
  try {
    adam_step(p, Gradients<float>{{1.0f, std::nanf("")}}, state, 0.1);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("head.fusion.weight"), std::string::npos);
  }
  EXPECT_EQ(p[0].value[0], 1.0f);  // untouched
  EXPECT_THROW(adam_step(p, Gradients<float>{{INFINITY, 0.0f}}, state, 0.1), DataError);
}

TEST(Sgd, MomentumRecurrence) {
  auto p = scalar(1.0);
  auto state = make_moments(p);
  sgd_step(p, Gradients<double>{{1.0}}, state, 0.1, 0.9);
  EXPECT_DOUBLE_EQ(p[0].value[0], 0.9);
  sgd_step(p, Gradients<double>{{1.0}}, state, 0.1, 0.9);
  EXPECT_DOUBLE_EQ(p[0].value[0], 0.9 - 0.1 * 1.9);
}

TEST(Clip, RescalesOnlyAboveThreshold) {
  Gradients<double> g{{3.0}, {4.0}};
  clip_gradient_norm(g, 10.0);
  EXPECT_EQ(g[0][0], 3.0);
  clip_gradient_norm(g, 1.0);
  EXPECT_NEAR(g[0][0], 0.6, 1e-15);
  EXPECT_NEAR(g[1][0], 0.8, 1e-15);
}

}  // namespace
}  // namespace qualnet
