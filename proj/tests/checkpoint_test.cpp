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

#include "qualnet/checkpoint.hpp"

#include <gtest/gtest.h>

#include <fstream>

#include "qualnet/errors.hpp"
#include "support.hpp"

namespace qualnet {
namespace {

using testing::TempDir;

ModelConfig config(HeadVariant v, std::uint64_t seed) {
  ModelConfig c;
  c.variant = v;
  c.patch_side = 64;
  c.seed = seed;
  c.class_names = {"gaussian_blur", "white_noise", "jpeg", "contrast_change"};
  return c;
}

TEST(Checkpoint, RoundTripPreservesEverything) {
  TempDir dir("ckpt");
  Model<float> m(config(HeadVariant::kF, 4));
  write_checkpoint(dir / "m.qnet", m, {}, {{"note", "x"}});
  const auto contents = read_checkpoint(dir / "m.qnet");
  EXPECT_EQ(contents.format_version, kCheckpointFormatVersion);
  EXPECT_EQ(contents.extra.at("note"), "x");
  EXPECT_EQ(contents.model_tensor_count, m.parameters().size());
  const auto back = model_from_checkpoint(contents);
  EXPECT_EQ(back.config().class_names, m.config().class_names);
  EXPECT_EQ(back.config().patch_side, 64);
  ASSERT_EQ(back.parameters().size(), m.parameters().size());
  for (std::size_t i = 0; i < m.parameters().size(); ++i) {
    EXPECT_EQ(back.parameters()[i].name, m.parameters()[i].name);
    EXPECT_EQ(back.parameters()[i].value, m.parameters()[i].value);
  }
  const auto x = testing::random_tensor<float>(1, 3, 64, 64, 3);
  EXPECT_EQ(back.forward_one(x).s, m.forward_one(x).s);
}

TEST(Checkpoint, PayloadIsLittleEndianFloat32) {
  TempDir dir("ckpt");
  Model<float> m(config(HeadVariant::kB, 1));
  write_checkpoint(dir / "m.qnet", m);
  std::ifstream in(dir / "m.qnet", std::ios::binary);
  std::string magic(8, '\0');
  in.read(magic.data(), 8);
  EXPECT_EQ(magic, "QNETCKPT");
  unsigned char len[4];
  in.read(reinterpret_cast<char*>(len), 4);
  const std::uint32_t header = len[0] | len[1] << 8 | len[2] << 16 | static_cast<std::uint32_t>(len[3]) << 24;
  in.seekg(12 + header);
  unsigned char first[4];
  in.read(reinterpret_cast<char*>(first), 4);
  const std::uint32_t bits = first[0] | first[1] << 8 | first[2] << 16 | static_cast<std::uint32_t>(first[3]) << 24;
  float v;
  std::memcpy(&v, &bits, 4);
  EXPECT_EQ(v, m.parameters()[0].value[0]);
  const auto size = std::filesystem::file_size(dir / "m.qnet");
  EXPECT_EQ(size, 12 + header + 4 * m.census().total);
}

TEST(Checkpoint, DetectsCorruption) {
  TempDir dir("ckpt");
  Model<float> m(config(HeadVariant::kF, 1));
  write_checkpoint(dir / "m.qnet", m);
  std::filesystem::resize_file(dir / "m.qnet", std::filesystem::file_size(dir / "m.qnet") - 4);
  EXPECT_THROW(read_checkpoint(dir / "m.qnet"), IoError);
  {
    std::ofstream out(dir / "junk.qnet", std::ios::binary);
    out << "NOTACKPTxxxxxxxx";
  }
  EXPECT_THROW(read_checkpoint(dir / "junk.qnet"), IoError);
  EXPECT_THROW(read_checkpoint(dir / "missing.qnet"), IoError);
}

TEST(BackboneImport, CopiesBackboneOnly) {
  TempDir dir("ckpt");
  Model<float> donor(config(HeadVariant::kF, 1));
  write_backbone(dir / "bb.qnet", donor);
  Model<float> target(config(HeadVariant::kC, 2));
  const auto head_before = target.parameters()[*target.find_parameter("head.distortion.weight")].value;
  import_backbone(dir / "bb.qnet", target);
  for (const auto& p : donor.parameters()) {
    if (p.name.rfind("backbone.", 0) != 0) continue;
    EXPECT_EQ(target.parameters()[*target.find_parameter(p.name)].value, p.value) << p.name;
  }
  EXPECT_EQ(target.parameters()[*target.find_parameter("head.distortion.weight")].value, head_before);
}

TEST(BackboneImport, ShapeMismatchListsTensors) {
  TempDir dir("ckpt");
  Model<float> donor(config(HeadVariant::kF, 1));
  write_backbone(dir / "bb.qnet", donor);
  ModelConfig wide = config(HeadVariant::kF, 1);
  wide.backbone.stage_channels = {8, 16, 32, 64, 32};
  Model<float> target(wide);
  try {
    import_backbone(dir / "bb.qnet", target);
    FAIL() << "expected a shape error";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("backbone.conv5_1.weight"), std::string::npos) << msg;
    EXPECT_NE(msg.find("backbone.conv5_3.weight"), std::string::npos) << msg;
  }
}

}  // namespace
}  // namespace qualnet
