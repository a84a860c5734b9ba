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

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "qualnet/errors.hpp"
#include "qualnet/trainer.hpp"

namespace qualnet {
namespace {

double ce(std::vector<double> d, int c) { return cross_entropy<double>(d, c); }

TEST(CrossEntropy, UniformLogitsGiveLogM) {
  for (int m : {2, 5, 24}) {
    EXPECT_NEAR(ce(std::vector<double>(m, 0.37), 1), std::log(m), 1e-10);
    EXPECT_NEAR(ce(std::vector<double>(m, -4.0), m), std::log(m), 1e-10);
  }
}

TEST(CrossEntropy, WorkedValues) {
  EXPECT_NEAR(ce({2, 0, 0}, 1), -std::log(std::exp(2.0) / (std::exp(2.0) + 2.0)), 1e-12);
  EXPECT_NEAR(ce({2, 0, 0}, 1), 0.2395, 5e-5);
  EXPECT_NEAR(ce({1000, 0}, 1), 0.0, 1e-12);
  EXPECT_TRUE(std::isfinite(ce({1000, 0}, 2)));
  EXPECT_NEAR(ce({1000, 0}, 2), 1000.0, 1e-9);
}

TEST(CrossEntropy, ShiftInvariance) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 3.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> d(6);
    for (auto& v : d) v = n(rng);
    const double k = n(rng) * 10.0;
    auto shifted = d;
    for (auto& v : shifted) v += k;
    const int c = 1 + trial % 6;
    EXPECT_NEAR(ce(d, c), ce(shifted, c), 1e-10);
    const auto p = softmax<double>(d);
    const auto q = softmax<double>(shifted);
    EXPECT_EQ(std::max_element(p.begin(), p.end()) - p.begin(),
              std::max_element(q.begin(), q.end()) - q.begin());
  }
}

TEST(CrossEntropy, GradientIsSoftmaxMinusOneHot) {
  const std::vector<double> d{0.5, -1.0, 2.0};
  const auto g = cross_entropy_gradient<double>(d, 2);
  const auto p = softmax<double>(d);
  EXPECT_NEAR(g[0], p[0], 1e-15);
  EXPECT_NEAR(g[1], p[1] - 1.0, 1e-15);
  EXPECT_NEAR(g[2], p[2], 1e-15);
}

TEST(CrossEntropy, RejectsBadClass) {
  EXPECT_THROW(ce({1, 2}, 0), ConfigError);
  EXPECT_THROW(ce({1, 2}, 3), ConfigError);
}

TEST(L2Loss, ClosedForm) {
  EXPECT_EQ(l2_loss(3.0, 1.0), 4.0);
  EXPECT_EQ(l2_loss(1.0, 1.0), 0.0);
  EXPECT_EQ(l2_loss(-2.5, 4.0), l2_loss(4.0, -2.5));
  EXPECT_EQ(l2_loss(-2.5, 4.0), 42.25);
}

TEST(TotalLoss, Composition) {
  // Logits whose cross entropy is exactly ln 2 for either class.
  const std::vector<double> two{0.0, 0.0};
  const auto t = total_loss<double>(two, 1, 3.0, 2.0, 1.0);
  EXPECT_NEAR(t.total, std::log(2.0) + 1.0, 1e-15);
  const auto zero_lambda = total_loss<double>(two, 1, 3.0, 2.0, 0.0);
  EXPECT_EQ(zero_lambda.total, zero_lambda.distortion);
  // Single-task variants carry no logits: L_s alone.
  const auto single = total_loss<double>({}, 0, 3.0, 2.5, 0.7);
  EXPECT_EQ(single.total, 0.25);
  EXPECT_GE(t.total, 0.0);
}

TEST(TotalLoss, WorkedComposition) {
  // L_d = 0.5 with lambda 1 and L_s = 0.25: pick logits with CE exactly 0.5.
  const double gap = std::log(std::exp(0.5) - 1.0);  // -log(e^g/(e^g+1)) = 0.5 for g = -gap
  const std::vector<double> d{-gap, 0.0};
  ASSERT_NEAR(ce(d, 1), 0.5, 1e-12);
  EXPECT_NEAR(total_loss<double>(d, 1, 1.5, 1.0, 1.0).total, 0.75, 1e-12);
}

TEST(LearningRate, ClosedForm) {
  TrainConfig c;
  EXPECT_EQ(lr_at(1, c), 2e-4);
  EXPECT_EQ(lr_at(3, c), 2e-4);
  EXPECT_EQ(lr_at(4, c), 2e-4 * 0.98);
  double manual = 2e-4;
  for (int i = 0; i < 16; ++i) manual *= 0.98;  // floor(49 / 3) = 16 decays
  EXPECT_NEAR(lr_at(50, c), manual, 1e-18);
  EXPECT_NEAR(lr_at(50, c), 1.44760e-4, 1e-9);
  for (int e = 1; e < 100; ++e) EXPECT_LE(lr_at(e + 1, c), lr_at(e, c));
  EXPECT_THROW(lr_at(0, c), ConfigError);
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.lr0 = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.lambda = -1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.epochs = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(parse_optimizer("rmsprop"), ConfigError);
}

}  // namespace
}  // namespace qualnet
