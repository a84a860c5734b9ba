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

#include "qualnet/model.hpp"

#include <gtest/gtest.h>

#include "qualnet/errors.hpp"
#include "support.hpp"

namespace qualnet {
namespace {

using testing::random_tensor;

ModelConfig tiny(HeadVariant v, int side, std::uint64_t seed = 1) {
  ModelConfig c;
  c.variant = v;
  c.patch_side = side;
  c.seed = seed;
  return c;
}

const std::vector<HeadVariant> kAll{HeadVariant::kA, HeadVariant::kB, HeadVariant::kC,
                                    HeadVariant::kD, HeadVariant::kE, HeadVariant::kF};

TEST(Model, TinyVariantFHeadShapes) {
  Model<float> m(tiny(HeadVariant::kF, 128));
  auto shape = [&](const char* name) {
    const auto idx = m.find_parameter(name);
    EXPECT_TRUE(idx.has_value()) << name;
    return idx ? m.parameters()[*idx].shape : std::vector<int>{};
  };
  EXPECT_EQ(shape("head.distortion.weight"), (std::vector<int>{4, 64, 1, 1}));
  EXPECT_EQ(shape("head.quality4.weight"), (std::vector<int>{1, 64, 1, 1}));
  EXPECT_EQ(shape("head.quality5.weight"), (std::vector<int>{1, 64, 1, 1}));
  EXPECT_EQ(shape("head.fusion.weight"), (std::vector<int>{1, 2, 1, 1}));
}

TEST(Model, FullScaleTapsAt128) {
  ModelConfig c = tiny(HeadVariant::kF, 128);
  c.backbone = BackboneConfig::full();
  c.num_distortions = 5;
  Model<float> m(c);
  const auto x = random_tensor<float>(1, 3, 128, 128, 2);
  const auto taps = m.forward_backbone(x);
  EXPECT_EQ(taps.t4.shape_string(), "1x512x8x8");
  EXPECT_EQ(taps.t5.shape_string(), "1x512x4x4");
  const auto d = m.distortion_head(taps.t4);
  EXPECT_EQ(d.logit_map.shape_string(), "1x5x8x8");
  EXPECT_EQ(d.d_logits.shape_string(), "1x5x1x1");
}

class ShapeContract : public ::testing::TestWithParam<int> {};

TEST_P(ShapeContract, TapAndMapSides) {
  const int s = GetParam();
  for (auto v : kAll) {
    Model<float> m(tiny(v, s));
    const auto x = random_tensor<float>(2, 3, s, s, s);
    const auto taps = m.forward_backbone(x);
    EXPECT_EQ(taps.t4.h, s / 16);
    EXPECT_EQ(taps.t4.w, s / 16);
    EXPECT_EQ(taps.t5.h, s / 32);
    EXPECT_EQ(taps.t5.w, s / 32);
    EXPECT_EQ(taps.t4.c, 64);
    EXPECT_EQ(taps.t5.c, 64);
    const auto q = m.quality_head(taps);
    EXPECT_EQ(q.scores.shape_string(), "2x1x1x1");
    for (const auto& map : q.coarse_maps) {
      EXPECT_EQ(map.c, 1);
      EXPECT_EQ(map.h, s / 32);
      EXPECT_EQ(map.w, s / 32);
    }
    if (has_distortion_head(v)) {
      const bool on_t4 = v == HeadVariant::kD || v == HeadVariant::kF;
      const auto d = m.distortion_head(on_t4 ? taps.t4 : taps.t5);
      EXPECT_EQ(d.logit_map.h, on_t4 ? s / 16 : s / 32);
      EXPECT_EQ(d.logit_map.c, 4);
    }
    const auto outs = m.forward(x);
    ASSERT_EQ(outs.size(), 2u);
    EXPECT_EQ(outs[0].d_logits.size(), has_distortion_head(v) ? 4u : 0u);
  }
}

INSTANTIATE_TEST_SUITE_P(Sides, ShapeContract, ::testing::Values(32, 64, 128, 160));

TEST(Model, VariantFCoarseMapsAt128) {
  Model<float> m(tiny(HeadVariant::kF, 128));
  const auto taps = m.forward_backbone(random_tensor<float>(1, 3, 128, 128, 4));
  const auto q = m.quality_head(taps);
  ASSERT_EQ(q.coarse_maps.size(), 2u);
  EXPECT_EQ(q.coarse_maps[0].shape_string(), "1x1x4x4");
  EXPECT_EQ(q.coarse_maps[1].shape_string(), "1x1x4x4");
}

TEST(Model, ZeroTapsGiveZeroScore) {
  for (auto v : kAll) {
    Model<double> m(tiny(v, 64));
    FeatureTaps<double> taps{Tensor<double>(1, 64, 4, 4), Tensor<double>(1, 64, 2, 2)};
    EXPECT_EQ(m.quality_head(taps).scores.data[0], 0.0) << to_string(v);
  }
}

TEST(Model, VariantBConstantMapGivesItsValue) {
  Model<double> m(tiny(HeadVariant::kB, 64));
  auto& w = m.parameters()[*m.find_parameter("head.quality5.weight")].value;
  std::fill(w.begin(), w.end(), 0.0);
  w[3] = 2.0;
  FeatureTaps<double> taps{Tensor<double>(1, 64, 4, 4), Tensor<double>(1, 64, 2, 2)};
  for (int i = 0; i < 4; ++i) taps.t5.data[3 * 4 + i] = 1.25;
  EXPECT_DOUBLE_EQ(m.quality_head(taps).scores.data[0], 2.5);
}

TEST(Model, ZeroImageGivesFiniteOutput) {
  for (auto v : kAll) {
    Model<float> m(tiny(v, 32));
    const auto out = m.forward_one(Tensor<float>(1, 3, 32, 32));
    EXPECT_TRUE(std::isfinite(out.s));
    for (float d : out.d_logits) EXPECT_TRUE(std::isfinite(d));
  }
}

TEST(Model, DeterministicInitialization) {
  Model<float> a(tiny(HeadVariant::kF, 32, 9));
  Model<float> b(tiny(HeadVariant::kF, 32, 9));
  Model<float> c(tiny(HeadVariant::kF, 32, 10));
  ASSERT_EQ(a.parameters().size(), b.parameters().size());
  bool differs = false;
  for (std::size_t i = 0; i < a.parameters().size(); ++i) {
    EXPECT_EQ(a.parameters()[i].value, b.parameters()[i].value);
    differs = differs || a.parameters()[i].value != c.parameters()[i].value;
  }
  EXPECT_TRUE(differs);
}

TEST(Model, InitializationStatistics) {
  Model<double> m(tiny(HeadVariant::kF, 32, 3));
  const auto& p = m.parameters()[*m.find_parameter("backbone.conv4_1.weight")];
  const double fan_in = 32 * 9;
  double sum = 0.0;
  double sq = 0.0;
  for (double v : p.value) {
    sum += v;
    sq += v * v;
  }
  const double n = static_cast<double>(p.value.size());
  EXPECT_NEAR(sum / n, 0.0, 4.0 * std::sqrt(2.0 / fan_in / n));
  EXPECT_NEAR(sq / n, 2.0 / fan_in, 0.1 * 2.0 / fan_in);
  for (const auto& q : m.parameters()) {
    if (q.name.find(".bias") == std::string::npos) continue;
    for (double v : q.value) EXPECT_EQ(v, 0.0) << q.name;
  }
}

TEST(Model, ForwardIsRepeatable) {
  Model<float> m(tiny(HeadVariant::kF, 64));
  const auto x = random_tensor<float>(1, 3, 64, 64, 6);
  const auto a = m.forward_one(x);
  const auto b = m.forward_one(x);
  EXPECT_EQ(a.s, b.s);
  EXPECT_EQ(a.d_logits, b.d_logits);
}

TEST(Model, BatchedEqualsLooped) {
  for (auto v : kAll) {
    Model<double> m(tiny(v, 32));
    const auto x = random_tensor<double>(3, 3, 32, 32, 8);
    const auto batched = m.forward(x);
    for (int i = 0; i < 3; ++i) {
      Tensor<double> one(1, 3, 32, 32);
      std::copy(x.sample(i).begin(), x.sample(i).end(), one.data.begin());
      const auto single = m.forward_one(one);
      EXPECT_NEAR(batched[i].s, single.s, 1e-12);
      for (std::size_t k = 0; k < single.d_logits.size(); ++k) {
        EXPECT_NEAR(batched[i].d_logits[k], single.d_logits[k], 1e-12);
      }
    }
  }
}

TEST(Model, RejectsInvalidConfigs) {
  EXPECT_THROW(Model<float>(tiny(HeadVariant::kF, 48)), ConfigError);
  ModelConfig c = tiny(HeadVariant::kC, 32);
  c.num_distortions = 0;
  EXPECT_THROW(Model<float>{c}, ConfigError);
  c.variant = HeadVariant::kB;  // single-task variants ignore m
  EXPECT_NO_THROW(Model<float>{c});
  ModelConfig bad = tiny(HeadVariant::kF, 32);
  bad.backbone.kernel_size = 2;
  EXPECT_THROW(Model<float>{bad}, ConfigError);
  bad = tiny(HeadVariant::kF, 32);
  bad.backbone.stage_channels = {8, 16, 32, 64};
  EXPECT_THROW(Model<float>{bad}, ConfigError);
  EXPECT_THROW(parse_variant("g"), ConfigError);
}

TEST(Model, RejectsWrongInputShape) {
  Model<float> m(tiny(HeadVariant::kF, 64));
  EXPECT_THROW(m.forward(Tensor<float>(1, 3, 32, 32)), ShapeError);
  EXPECT_THROW(m.forward(Tensor<float>(1, 1, 64, 64)), ShapeError);
  EXPECT_THROW(m.forward_backbone(Tensor<float>(1, 3, 40, 40)), ShapeError);
}

TEST(Census, ClosedFormCounts) {
  Model<float> f(tiny(HeadVariant::kF, 128));
  const auto census = f.census();
  ASSERT_FALSE(census.rows.empty());
  EXPECT_EQ(census.rows[0].name, "backbone.conv1_1.weight");
  EXPECT_EQ(census.rows[0].count + census.rows[1].count, 224u);
  std::size_t total = 0;
  for (const auto& r : census.rows) {
    total += r.count;
    EXPECT_EQ(r.name.find("norm"), std::string::npos);  // no normalization parameters
  }
  EXPECT_EQ(total, census.total);
}

TEST(Census, FullyConnectedHeadIsHeavier) {
  const auto a = Model<float>(tiny(HeadVariant::kA, 128)).census().total;
  const auto b = Model<float>(tiny(HeadVariant::kB, 128)).census().total;
  EXPECT_LT(b, a);
  // a adds flatten(64 x 4 x 4) -> 512 -> 1 where b has a 64 -> 1 conv.
  EXPECT_EQ(a - b, (1024u * 512 + 512 + 512 + 1) - (64 + 1));
}

TEST(Gradients, VariantFMatchesFiniteDifferences) {
  const auto r = testing::gradient_check(HeadVariant::kF, 5);
  EXPECT_LE(r.max_rel_error, 1e-4) << r.worst;
  EXPECT_GT(r.checked, 300u);
  const Model<double> m(tiny(HeadVariant::kF, 32));
  for (const auto& p : m.parameters()) {
    if (p.name.rfind("head.", 0) != 0) continue;
    EXPECT_NE(std::find(r.parameters.begin(), r.parameters.end(), p.name), r.parameters.end())
        << p.name;
  }
  for (int stage = 1; stage <= 5; ++stage) {
    const std::string prefix = "backbone.conv" + std::to_string(stage) + "_";
    EXPECT_TRUE(std::any_of(r.parameters.begin(), r.parameters.end(),
                            [&](const std::string& n) { return n.rfind(prefix, 0) == 0; }))
        << prefix;
  }
  RecordProperty("kinked", static_cast<int>(r.kinked));
}

class GradientVariants : public ::testing::TestWithParam<HeadVariant> {};

TEST_P(GradientVariants, MatchFiniteDifferences) {
  const auto r = testing::gradient_check(GetParam(), 7);
  EXPECT_LE(r.max_rel_error, 1e-4) << r.worst;
  for (int stage = 1; stage <= 5; ++stage) {
    const std::string prefix = "backbone.conv" + std::to_string(stage) + "_";
    EXPECT_TRUE(std::any_of(r.parameters.begin(), r.parameters.end(),
                            [&](const std::string& n) { return n.rfind(prefix, 0) == 0; }))
        << prefix;
  }
}

TEST(Gradients, BatchGradientIsMeanOfSampleGradients) {
  const Model<double> m(tiny(HeadVariant::kF, 32, 9));
  const auto batch = testing::random_tensor<double>(3, 3, 32, 32, 4);
  const std::vector<int> classes{1, 3, 4};
  const std::vector<double> scores{10.0, 50.0, 90.0};
  auto joint = m.zero_gradients();
  const auto loss = loss_and_gradients<double>(m, batch, classes, scores, 1.0, joint);
  auto mean = m.zero_gradients();
  double mean_loss = 0.0;
  const std::size_t per = batch.sample_size();
  for (int i = 0; i < 3; ++i) {
    Tensor<double> one(1, 3, 32, 32);
    std::copy(batch.data.begin() + i * per, batch.data.begin() + (i + 1) * per, one.data.begin());
    auto g = m.zero_gradients();
    mean_loss += loss_and_gradients<double>(m, one, std::span(classes).subspan(i, 1),
                                            std::span(scores).subspan(i, 1), 1.0, g)
                     .total /
                 3.0;
    for (std::size_t p = 0; p < g.size(); ++p) {
      for (std::size_t k = 0; k < g[p].size(); ++k) mean[p][k] += g[p][k] / 3.0;
    }
  }
  EXPECT_NEAR(loss.total, mean_loss, 1e-9 * std::abs(mean_loss));
  for (std::size_t p = 0; p < mean.size(); ++p) {
    for (std::size_t k = 0; k < mean[p].size(); ++k) {
      ASSERT_NEAR(joint[p][k], mean[p][k], 1e-9 * (1.0 + std::abs(mean[p][k])))
          << m.parameters()[p].name << "[" << k << "]";
    }
  }
}

INSTANTIATE_TEST_SUITE_P(AllVariants, GradientVariants,
                         ::testing::Values(HeadVariant::kA, HeadVariant::kB, HeadVariant::kC,
                                           HeadVariant::kD, HeadVariant::kE),
                         [](const auto& info) { return "variant_" + to_string(info.param); });

}  // namespace
}  // namespace qualnet
