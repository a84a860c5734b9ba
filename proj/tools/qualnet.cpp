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

// qualnet command-line tool: corpus, synth, train, eval, ablate, plot.

#include <cstdio>
#include <exception>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "qualnet/dataset.hpp"
#include "qualnet/errors.hpp"
#include "qualnet/experiment.hpp"

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

void add_common(CLI::App* cmd, qualnet::CommandOptions& o, std::uint64_t& seed) {
  cmd->add_option("--config", o.config, "Experiment configuration (JSON)");
  cmd->add_option("--seed", seed, "Seed for splits, initialization and shuffling");
  cmd->add_option("--out", o.out, "Output root (default $QUALNET_OUTPUT_ROOT or ./runs)");
  cmd->add_option("--jobs", o.jobs, "Worker threads")->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-task no-reference image quality toolkit"};
  app.require_subcommand(1);

  qualnet::CommandOptions opts;
  std::uint64_t seed = 0;

  std::string corpus_out;
  int corpus_count = 24;
  int corpus_side = 64;
  std::uint64_t corpus_seed = 0;
  auto* corpus = app.add_subcommand("corpus", "Write a procedural reference corpus");
  corpus->add_option("--out", corpus_out, "Directory for the reference images")->required();
  corpus->add_option("--count", corpus_count, "Number of references")->check(CLI::PositiveNumber);
  corpus->add_option("--side", corpus_side, "Image side in pixels")->check(CLI::Range(16, 4096));
  corpus->add_option("--seed", corpus_seed, "Generator seed");

  auto* synth = app.add_subcommand("synth", "Build a distorted dataset and manifest");
  add_common(synth, opts, seed);

  auto* train = app.add_subcommand("train", "Train a model on the training split");
  add_common(train, opts, seed);
  train->add_option("--resume", opts.resume, "Training checkpoint to continue from");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint or run repeated splits");
  add_common(eval, opts, seed);
  eval->add_option("--checkpoint", opts.checkpoint, "Model checkpoint");
  eval->add_option("--cross-set", opts.cross_set, "Foreign manifest for cross-set evaluation");

  auto* ablate = app.add_subcommand("ablate", "Run the architecture ablation matrix");
  add_common(ablate, opts, seed);

  auto* plot = app.add_subcommand("plot", "Render score scatters and feature-map montages");
  plot->add_option("--report", opts.report, "Evaluation report (report.json)");
  plot->add_option("--checkpoint", opts.checkpoint, "Model checkpoint for feature maps");
  plot->add_option("--image", opts.image, "Image for feature maps");
  plot->add_option("--top-k", opts.top_k, "Channels per montage")->check(CLI::PositiveNumber);
  plot->add_option("--out", opts.out, "Output root");

  CLI11_PARSE(app, argc, argv);

  for (auto* cmd : {synth, train, eval, ablate}) {
    if (cmd->parsed() && cmd->count("--seed") > 0) opts.seed = seed;
  }

  try {
    if (corpus->parsed()) {
      qualnet::generate_reference_corpus(corpus_out, corpus_count, corpus_side, corpus_seed);
      std::printf("wrote %d reference images to %s\n", corpus_count, corpus_out.c_str());
      return 0;
    }
    qualnet::CommandResult result;
    if (synth->parsed()) {
      result = qualnet::cmd_synth(opts);
      std::printf("wrote %zu records to %s (digest %s)\n",
                  result.summary["records"].get<std::size_t>(),
                  result.summary["manifest"].get<std::string>().c_str(),
                  result.summary["digest"].get<std::string>().c_str());
    } else if (train->parsed()) {
      result = qualnet::cmd_train(opts);
    } else if (eval->parsed()) {
      result = qualnet::cmd_eval(opts);
    } else if (ablate->parsed()) {
      result = qualnet::cmd_ablate(opts);
    } else if (plot->parsed()) {
      result = qualnet::cmd_plot(opts);
    }
    if (!synth->parsed()) std::printf("%s\n", result.summary.dump(2).c_str());
    std::printf("run directory: %s\n", result.run_dir.string().c_str());
    return 0;
  } catch (const qualnet::ConfigError& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
}
