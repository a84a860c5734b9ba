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

#include "qualnet/experiment.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <regex>

#include "qualnet/errors.hpp"
#include "qualnet/image.hpp"
#include "support.hpp"

namespace qualnet {
namespace {

using testing::TempDir;

TEST(Config, DefaultsValidate) {
  const auto c = config_from_json(nlohmann::json::object());
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.model.num_distortions, 4);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(config_from_json({{"sede", 1}}), ConfigError);
  EXPECT_THROW(config_from_json({{"train", {{"epoch", 3}}}}), ConfigError);
  EXPECT_THROW(config_from_json({{"model", {{"variant", "g"}}}}), ConfigError);
  EXPECT_THROW(config_from_json({{"train", {{"seed", 3}}}}), ConfigError);
  try {
    config_from_json({{"patches", {{"strid", 8}}}});
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("strid"), std::string::npos) << e.what();
  }
}

TEST(Config, TopLevelSeedReachesModelAndTrainer) {
  const auto c = config_from_json({{"seed", 17}, {"dataset", {{"types", {"jpeg", "white_noise"}}}}});
  EXPECT_EQ(c.model.seed, 17u);
  EXPECT_EQ(c.train.seed, 17u);
  EXPECT_EQ(c.model.num_distortions, 2);
}

TEST(Config, RoundTripAndRelativePaths) {
  TempDir dir("exp");
  std::filesystem::create_directories(dir / "cfg");
  auto c = config_from_json({{"seed", 3}, {"dataset", {{"corpus", "refs"}}}, {"model", {{"patch_side", 32}}}});
  EXPECT_EQ(config_to_json(config_from_json(config_to_json(c))), config_to_json(c));
  std::ofstream(dir / "cfg/run.json") << config_to_json(c).dump();
  const auto loaded = load_config(dir / "cfg/run.json");
  EXPECT_EQ(loaded.dataset.corpus, dir / "cfg/refs");
  EXPECT_EQ(loaded.model.patch_side, 32);
}

TEST(Output, EnvironmentRootAndRunNames) {
  TempDir dir("exp");
  ::setenv("QUALNET_OUTPUT_ROOT", (dir / "env").c_str(), 1);
  EXPECT_EQ(output_root(""), dir / "env");
  EXPECT_EQ(output_root(dir / "explicit"), dir / "explicit");
  ::unsetenv("QUALNET_OUTPUT_ROOT");
  EXPECT_EQ(output_root(""), "runs");
  const auto a = make_run_dir(dir / "root", 5);
  const auto b = make_run_dir(dir / "root", 5);
  EXPECT_NE(a, b);
  EXPECT_TRUE(std::filesystem::is_directory(a));
  EXPECT_TRUE(std::regex_match(a.filename().string(), std::regex(R"(\d{8}-\d{6}-seed5(-\d+)?)")))
      << a;
}

TEST(Ablation, MatrixLabels) {
  ExperimentConfig c;
  std::vector<std::string> labels;
  for (const auto& row : ablation_matrix(c)) labels.push_back(row.label);
  EXPECT_EQ(labels, (std::vector<std::string>{"a", "b", "c", "d", "e", "f", "f-V2-sgd", "f-V3-p64",
                                               "f-V4-p32", "f-deeper"}));
  c.model.patch_side = 32;
  c.ablation.deeper = false;
  labels.clear();
  for (const auto& row : ablation_matrix(c)) labels.push_back(row.label);
  EXPECT_EQ(labels.back(), "f-V3-p64");
  EXPECT_EQ(labels.size(), 8u);
}

TEST(Plots, MontageKeepsTopChannels) {
  auto t = testing::random_tensor<float>(1, 12, 6, 6, 3);
  for (float& v : t.data) v *= 0.1f;
  for (int i = 0; i < 36; ++i) t.data[7 * 36 + i] += 5.0f;
  const auto m = render_montage(t, 4);
  EXPECT_EQ(m.channels.size(), 4u);
  EXPECT_EQ(m.channels.front(), 7);
  EXPECT_GT(m.image.width, 0);
  EXPECT_EQ(render_montage(t, 50).channels.size(), 12u);
}

TEST(Plots, ScatterIsDeterministic) {
  EvalReport r;
  for (int i = 0; i < 12; ++i) {
    ImageRow row;
    row.distortion_true = 1 + i % 3;
    row.severity = 1 + i % 4;
    row.score_pred = 8.0 * i;
    r.images.push_back(row);
  }
  r.n_images = r.images.size();
  const auto a = render_scatter(r);
  const auto b = render_scatter(report_from_json(report_to_json(r)));
  EXPECT_EQ(a.width, b.width);
  EXPECT_EQ(a.pixels, b.pixels);
}

TEST(Commands, SynthNamesMissingCorpus) {
  TempDir dir("exp");
  std::ofstream(dir / "c.json") << nlohmann::json{{"dataset", {{"corpus", "nowhere"}}}}.dump();
  CommandOptions o;
  o.config = dir / "c.json";
  o.out = dir / "runs";
  try {
    cmd_synth(o);
    FAIL();
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("nowhere"), std::string::npos) << e.what();
  }
}

TEST(Commands, EndToEndPipeline) {
  TempDir dir("exp");
  generate_reference_corpus(dir / "refs", 5, 32, 8);
  const nlohmann::json cfg{{"seed", 2},
                           {"dataset", {{"corpus", "refs"}, {"types", {"jpeg", "white_noise"}}, {"levels", 2}}},
                           {"model", {{"patch_side", 32}}},
                           {"train", {{"epochs", 2}, {"lr0", 1e-3}}}};
  std::ofstream(dir / "c.json") << cfg.dump();
  CommandOptions o;
  o.config = dir / "c.json";
  o.out = dir / "runs";

  const auto synth = cmd_synth(o);
  EXPECT_EQ(synth.summary.at("records"), 5 * 2 * 2);

  const auto trained = cmd_train(o);
  for (const char* f : {"config.json", "split.json", "checkpoint.qnet", "train_log.jsonl"}) {
    EXPECT_TRUE(std::filesystem::exists(trained.run_dir / f)) << f;
  }

  o.checkpoint = trained.run_dir / "checkpoint.qnet";
  const auto evaluated = cmd_eval(o);
  EXPECT_TRUE(std::filesystem::exists(evaluated.run_dir / "report.json"));
  EXPECT_TRUE(std::filesystem::exists(evaluated.run_dir / "images.csv"));

  CommandOptions p;
  p.out = dir / "runs";
  p.report = evaluated.run_dir / "report.json";
  p.checkpoint = o.checkpoint;
  p.image = dir / "refs" / std::filesystem::directory_iterator(dir / "refs")->path().filename();
  p.top_k = 3;
  const auto plotted = cmd_plot(p);
  EXPECT_TRUE(std::filesystem::exists(plotted.run_dir / "scatter.png"));
  EXPECT_EQ(plotted.summary.at("montage_tap4").at("channels").size(), 3u);

  CommandOptions resume = o;
  resume.checkpoint.clear();
  resume.resume = trained.run_dir / "checkpoint.qnet";
  EXPECT_THROW(cmd_train(resume), ConfigError);
}

#ifdef QUALNET_CLI
int run_cli(const std::string& args) {
  const int status = std::system((std::string(QUALNET_CLI) + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST(Cli, ExitCodes) {
  TempDir dir("exp");
  EXPECT_EQ(run_cli("corpus --out " + (dir / "refs").string() + " --count 2 --side 32"), 0);
  std::ofstream(dir / "bad.json") << R"({"model": {"variant": "z"}})";
  EXPECT_EQ(run_cli("train --config " + (dir / "bad.json").string()), 2);
  std::ofstream(dir / "missing.json") << R"({"dataset": {"corpus": "absent"}})";
  EXPECT_EQ(run_cli("synth --out " + (dir / "runs").string() + " --config " +
                    (dir / "missing.json").string()),
            1);
}
#endif

}  // namespace
}  // namespace qualnet
