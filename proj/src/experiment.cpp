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

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <mutex>
#include <numeric>
#include <set>
#include <thread>

#include "qualnet/checkpoint.hpp"
#include "qualnet/distortions.hpp"
#include "qualnet/errors.hpp"
#include "qualnet/image.hpp"
#include "qualnet/metrics.hpp"

namespace qualnet {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::string& section, const std::set<std::string>& allowed) {
  if (!j.is_object()) throw ConfigError("section '" + section + "' must be an object");
  for (const auto& [key, value] : j.items()) {
    if (allowed.count(key) == 0) {
      throw ConfigError("unknown key '" + key + "' in section '" + section + "'");
    }
  }
}

template <typename F>
auto config_field(const std::string& where, F&& read) {
  try {
    return read();
  } catch (const json::exception& e) {
    throw ConfigError("bad value in " + where + ": " + e.what());
  }
}

std::string timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  localtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y%m%d-%H%M%S", &tm);
  return buf;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw IoError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

std::optional<double> median_of(const std::vector<double>& v) {
  if (v.empty()) return std::nullopt;
  return median(v);
}

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> opt_from(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

// Manifest of a reference split with paths made absolute, so it can live anywhere.
DatasetManifest detached(DatasetManifest m) {
  for (auto& r : m.records) r.path = fs::absolute(m.resolve(r)).string();
  m.base_dir.clear();
  return m;
}

void fill_rect(Image& img, int x0, int y0, int x1, int y1, float r, float g, float b) {
  x0 = std::max(x0, 0);
  y0 = std::max(y0, 0);
  x1 = std::min(x1, img.width);
  y1 = std::min(y1, img.height);
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) {
      img.at(0, y, x) = r;
      img.at(1, y, x) = g;
      img.at(2, y, x) = b;
    }
  }
}

}  // namespace

void ExperimentConfig::validate() const {
  if (dataset.manifest.empty()) {
    if (dataset.types.empty()) throw ConfigError("dataset.types must not be empty");
    std::set<std::string> seen;
    for (const auto& t : dataset.types) {
      parse_distortion_spec(t);
      if (!seen.insert(t).second) throw ConfigError("dataset.types lists '" + t + "' twice");
    }
    if (dataset.levels < 1 || dataset.levels > kSeverityLevels) {
      throw ConfigError("dataset.levels must be in 1.." + std::to_string(kSeverityLevels));
    }
    if (has_distortion_head(model.variant) &&
        model.num_distortions != static_cast<int>(dataset.types.size())) {
      throw ConfigError("model.num_distortions (" + std::to_string(model.num_distortions) +
                        ") does not match the " + std::to_string(dataset.types.size()) +
                        " dataset types");
    }
  }
  if (!(dataset.train_fraction > 0.0 && dataset.train_fraction < 1.0)) {
    throw ConfigError("dataset.train_fraction must lie in (0, 1)");
  }
  model.validate();
  train.validate();
  if (patches.stride < 0) throw ConfigError("patches.stride must be >= 0");
  if (eval.n_splits < 1) throw ConfigError("eval.n_splits must be >= 1");
  for (const auto& v : ablation.variants) parse_variant(v);
  for (const auto& o : ablation.optimizers) parse_optimizer(o);
  for (int p : ablation.patch_sizes) {
    if (p < 32 || p % 32 != 0) {
      throw ConfigError("ablation patch size " + std::to_string(p) + " is not a positive multiple of 32");
    }
  }
  if (ablation.deeper) {
    BackboneConfig deeper = model.backbone;
    deeper.convs_per_stage = ablation.deeper_convs;
    deeper.validate();
  }
  if (ablation.seeds < 1) throw ConfigError("ablation.seeds must be >= 1");
}

ExperimentConfig config_from_json(const json& j) {
  reject_unknown(j, "top level", {"seed", "dataset", "model", "train", "patches", "eval", "ablation"});
  ExperimentConfig c;
  c.seed = config_field("seed", [&] { return j.value("seed", std::uint64_t{0}); });
  if (j.contains("dataset")) {
    const auto& d = j.at("dataset");
    reject_unknown(d, "dataset", {"corpus", "manifest", "types", "levels", "seed", "train_fraction"});
    config_field("dataset", [&] {
      c.dataset.corpus = d.value("corpus", std::string());
      c.dataset.manifest = d.value("manifest", std::string());
      c.dataset.types = d.value("types", c.dataset.types);
      c.dataset.levels = d.value("levels", c.dataset.levels);
      c.dataset.seed = d.value("seed", c.dataset.seed);
      c.dataset.train_fraction = d.value("train_fraction", c.dataset.train_fraction);
      return 0;
    });
  }
  if (j.contains("model")) {
    const auto& m = j.at("model");
    reject_unknown(m, "model", {"backbone", "variant", "num_distortions", "patch_side", "class_names"});
    c.model = config_field("model", [&] { return m.get<ModelConfig>(); });
    if (!m.contains("num_distortions")) c.model.num_distortions = static_cast<int>(c.dataset.types.size());
  } else {
    c.model.num_distortions = static_cast<int>(c.dataset.types.size());
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    reject_unknown(t, "train",
                   {"epochs", "lr0", "adam_beta1", "adam_beta2", "adam_epsilon", "lr_decay",
                    "decay_every", "lambda", "batch_size", "optimizer", "sgd_momentum", "clip_norm",
                    "checkpoint_every"});
    c.train = config_field("train", [&] { return t.get<TrainConfig>(); });
  }
  if (j.contains("patches")) {
    const auto& p = j.at("patches");
    reject_unknown(p, "patches", {"stride", "hflip"});
    config_field("patches", [&] {
      c.patches.stride = p.value("stride", c.patches.stride);
      c.patches.hflip = p.value("hflip", c.patches.hflip);
      return 0;
    });
  }
  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    reject_unknown(e, "eval", {"n_splits", "cross_set", "shared_types"});
    config_field("eval", [&] {
      c.eval.n_splits = e.value("n_splits", c.eval.n_splits);
      c.eval.cross_set = e.value("cross_set", std::string());
      c.eval.shared_types = e.value("shared_types", c.eval.shared_types);
      return 0;
    });
  }
  if (j.contains("ablation")) {
    const auto& a = j.at("ablation");
    reject_unknown(a, "ablation",
                   {"variants", "optimizers", "patch_sizes", "deeper", "deeper_convs", "seeds"});
    config_field("ablation", [&] {
      c.ablation.variants = a.value("variants", c.ablation.variants);
      c.ablation.optimizers = a.value("optimizers", c.ablation.optimizers);
      c.ablation.patch_sizes = a.value("patch_sizes", c.ablation.patch_sizes);
      c.ablation.deeper = a.value("deeper", c.ablation.deeper);
      c.ablation.deeper_convs = a.value("deeper_convs", c.ablation.deeper_convs);
      c.ablation.seeds = a.value("seeds", c.ablation.seeds);
      return 0;
    });
  }
  c.model.seed = c.seed;
  c.train.seed = c.seed;
  return c;
}

json config_to_json(const ExperimentConfig& c) {
  json model = c.model;
  model.erase("seed");
  json train = c.train;
  train.erase("seed");
  return {{"seed", c.seed},
          {"dataset",
           {{"corpus", c.dataset.corpus.string()},
            {"manifest", c.dataset.manifest.string()},
            {"types", c.dataset.types},
            {"levels", c.dataset.levels},
            {"seed", c.dataset.seed},
            {"train_fraction", c.dataset.train_fraction}}},
          {"model", model},
          {"train", train},
          {"patches", {{"stride", c.patches.stride}, {"hflip", c.patches.hflip}}},
          {"eval",
           {{"n_splits", c.eval.n_splits},
            {"cross_set", c.eval.cross_set.string()},
            {"shared_types", c.eval.shared_types}}},
          {"ablation",
           {{"variants", c.ablation.variants},
            {"optimizers", c.ablation.optimizers},
            {"patch_sizes", c.ablation.patch_sizes},
            {"deeper", c.ablation.deeper},
            {"deeper_convs", c.ablation.deeper_convs},
            {"seeds", c.ablation.seeds}}}};
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("malformed config file " + path.string() + ": " + e.what());
  }
  auto c = config_from_json(j);
  // Relative data paths are taken relative to the config file.
  const auto base = path.parent_path();
  auto anchor = [&](fs::path& p) {
    if (!p.empty() && p.is_relative()) p = base / p;
  };
  anchor(c.dataset.corpus);
  anchor(c.dataset.manifest);
  anchor(c.eval.cross_set);
  return c;
}

fs::path output_root(const fs::path& explicit_root) {
  if (!explicit_root.empty()) return explicit_root;
  if (const char* env = std::getenv("QUALNET_OUTPUT_ROOT"); env != nullptr && *env != '\0') {
    return env;
  }
  return "runs";
}

fs::path make_run_dir(const fs::path& root, std::uint64_t seed) {
  const std::string base = timestamp() + "-seed" + std::to_string(seed);
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw IoError("cannot create output root " + root.string() + ": " + ec.message());
  for (int k = 1; k < 10000; ++k) {
    const fs::path dir = root / (k == 1 ? base : base + "-" + std::to_string(k));
    if (fs::create_directory(dir, ec)) return dir;
    if (ec) throw IoError("cannot create run directory " + dir.string() + ": " + ec.message());
  }
  throw IoError("too many run directories named " + base + " under " + root.string());
}

std::string file_digest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::uint64_t h = 1469598103934665603ULL;
  char buf[1 << 16];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ULL;
    }
  }
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

DatasetManifest obtain_manifest(const ExperimentConfig& config, const fs::path& out_dir, int jobs) {
  if (!config.dataset.manifest.empty()) return read_manifest(config.dataset.manifest);
  if (config.dataset.corpus.empty()) throw ConfigError("dataset.corpus or dataset.manifest is required");
  DatasetBuildSpec spec;
  spec.corpus_dir = config.dataset.corpus;
  spec.types = config.dataset.types;
  spec.levels = config.dataset.levels;
  spec.seed = config.dataset.seed;
  spec.out_dir = out_dir;
  spec.jobs = jobs;
  return build_dataset(spec);
}

ModelConfig model_for(const ExperimentConfig& config, const DatasetManifest& manifest) {
  ModelConfig mc = config.model;
  mc.seed = config.seed;
  mc.class_names = manifest.classes;
  if (has_distortion_head(mc.variant)) mc.num_distortions = manifest.num_classes();
  mc.validate();
  return mc;
}

std::vector<AblationRow> ablation_matrix(const ExperimentConfig& config) {
  std::vector<AblationRow> rows;
  auto add = [&](std::string label, ModelConfig mc, TrainConfig tc) {
    AblationRow row;
    row.label = std::move(label);
    row.model = std::move(mc);
    row.train = tc;
    rows.push_back(std::move(row));
  };
  for (const auto& v : config.ablation.variants) {
    ModelConfig mc = config.model;
    mc.variant = parse_variant(v);
    add(to_string(mc.variant), mc, config.train);
  }
  ModelConfig f = config.model;
  f.variant = HeadVariant::kF;
  int k = 2;
  for (const auto& o : config.ablation.optimizers) {
    TrainConfig tc = config.train;
    tc.optimizer = parse_optimizer(o);
    if (tc.optimizer == config.train.optimizer) continue;
    add("f-V" + std::to_string(k++) + "-" + o, f, tc);
  }
  for (int p : config.ablation.patch_sizes) {
    if (p == config.model.patch_side) continue;
    ModelConfig mc = f;
    mc.patch_side = p;
    add("f-V" + std::to_string(k++) + "-p" + std::to_string(p), mc, config.train);
  }
  if (config.ablation.deeper) {
    ModelConfig mc = f;
    mc.backbone.convs_per_stage = config.ablation.deeper_convs;
    add("f-deeper", mc, config.train);
  }
  return rows;
}

std::vector<AblationRow> run_ablation(const ExperimentConfig& config, const DatasetManifest& manifest,
                                      int jobs) {
  auto rows = ablation_matrix(config);
  const int n_seeds = config.ablation.seeds;
  std::vector<std::pair<DatasetManifest, DatasetManifest>> splits;
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < n_seeds; ++i) {
    seeds.push_back(config.seed + static_cast<std::uint64_t>(i));
    splits.push_back(split_by_reference(manifest, {config.dataset.train_fraction, seeds.back()}));
  }
  for (auto& row : rows) {
    row.seeds = seeds;
    row.model.class_names = manifest.classes;
    if (has_distortion_head(row.model.variant)) row.model.num_distortions = manifest.num_classes();
    try {
      row.parameter_count = Model<float>(row.model).census().total;
    } catch (const std::exception& e) {
      row.error = e.what();
    }
  }

  struct Outcome {
    std::optional<EvalReport> report;
    std::string error;
    double seconds = 0.0;
  };
  const std::size_t n_tasks = rows.size() * static_cast<std::size_t>(n_seeds);
  std::vector<Outcome> outcomes(n_tasks);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t t = next++; t < n_tasks; t = next++) {
      const auto& row = rows[t / n_seeds];
      const std::size_t s = t % n_seeds;
      auto& out = outcomes[t];
      if (!row.error.empty()) continue;
      const auto start = std::chrono::steady_clock::now();
      try {
        ModelConfig mc = row.model;
        mc.seed = seeds[s];
        TrainConfig tc = row.train;
        tc.seed = seeds[s];
        auto state = train(Model<float>(mc), splits[s].first, config.patches, tc);
        out.report = evaluate(state.model, splits[s].second, config.patches);
      } catch (const std::exception& e) {
        out.error = e.what();
      }
      out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
  };
  const int n_workers = std::max(1, std::min<int>(jobs, static_cast<int>(n_tasks)));
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  for (std::size_t r = 0; r < rows.size(); ++r) {
    auto& row = rows[r];
    if (!row.error.empty()) continue;
    std::vector<std::string> errors;
    for (int s = 0; s < n_seeds; ++s) {
      const auto& out = outcomes[r * n_seeds + s];
      row.wall_seconds += out.seconds;
      const std::string tag = "seed " + std::to_string(seeds[s]) + ": ";
      if (!out.report) {
        errors.push_back(tag + out.error);
        continue;
      }
      if (out.report->degenerate) {
        errors.push_back(tag + out.report->degenerate_reason);
        continue;
      }
      row.srocc.push_back(*out.report->srocc);
      if (out.report->lcc_mapped) row.lcc.push_back(*out.report->lcc_mapped);
      if (out.report->accuracy) row.accuracy.push_back(*out.report->accuracy);
    }
    row.median_srocc = median_of(row.srocc);
    row.median_lcc = median_of(row.lcc);
    row.median_accuracy = median_of(row.accuracy);
    for (const auto& e : errors) row.error += (row.error.empty() ? "" : "; ") + e;
  }
  return rows;
}

json ablation_to_json(const std::vector<AblationRow>& rows) {
  json out = json::array();
  for (const auto& r : rows) {
    json model = r.model;
    model.erase("seed");
    out.push_back({{"label", r.label},
                   {"median_srocc", opt(r.median_srocc)},
                   {"median_lcc", opt(r.median_lcc)},
                   {"median_accuracy", opt(r.median_accuracy)},
                   {"srocc", r.srocc},
                   {"lcc", r.lcc},
                   {"accuracy", r.accuracy},
                   {"parameter_count", r.parameter_count},
                   {"seeds", r.seeds},
                   {"wall_seconds", r.wall_seconds},
                   {"optimizer", to_string(r.train.optimizer)},
                   {"model", model},
                   {"error", r.error.empty() ? json(nullptr) : json(r.error)}});
  }
  return {{"aggregation", "median over paired seeds"}, {"rows", out}};
}

void write_ablation_csv(const fs::path& path, const std::vector<AblationRow>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "label,srocc,lcc,accuracy,parameters,wall_seconds,seeds_ok,error\n";
  auto cell = [](const std::optional<double>& v) {
    if (!v) return std::string();
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", *v);
    return std::string(buf);
  };
  for (const auto& r : rows) {
    std::string err = r.error;
    std::replace(err.begin(), err.end(), ',', ';');
    std::replace(err.begin(), err.end(), '\n', ' ');
    char secs[32];
    std::snprintf(secs, sizeof(secs), "%.1f", r.wall_seconds);
    out << r.label << ',' << cell(r.median_srocc) << ',' << cell(r.median_lcc) << ','
        << cell(r.median_accuracy) << ',' << r.parameter_count << ',' << secs << ','
        << r.srocc.size() << ',' << err << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

EvalReport report_from_json(const json& j) {
  EvalReport r;
  try {
    r.degenerate = j.value("degenerate", false);
    r.degenerate_reason = j.value("degenerate_reason", std::string());
    r.srocc = opt_from(j, "srocc");
    r.lcc_raw = opt_from(j, "lcc_raw");
    r.lcc_mapped = opt_from(j, "lcc_mapped");
    r.accuracy = opt_from(j, "accuracy");
    for (const auto& row : j.at("images")) {
      ImageRow ir;
      ir.path = row.value("path", std::string());
      ir.reference_id = row.at("reference_id").get<int>();
      ir.distortion_true = row.at("distortion_true").get<int>();
      ir.distortion_pred = row.at("distortion_pred").get<int>();
      ir.severity = row.at("severity").get<int>();
      ir.score_true = row.at("score_true").get<double>();
      ir.score_pred = row.at("score_pred").get<double>();
      r.images.push_back(ir);
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed report: ") + e.what());
  }
  r.n_images = r.images.size();
  return r;
}

Image render_scatter(const EvalReport& report) {
  if (report.images.empty()) throw DataError("report has no images to plot");
  std::vector<int> classes;
  int max_level = 1;
  double lo = report.images.front().score_pred;
  double hi = lo;
  for (const auto& r : report.images) {
    classes.push_back(r.distortion_true);
    max_level = std::max(max_level, r.severity);
    lo = std::min(lo, r.score_pred);
    hi = std::max(hi, r.score_pred);
  }
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  if (hi - lo < 1e-9) {
    lo -= 1.0;
    hi += 1.0;
  }

  constexpr int kPanel = 200;
  constexpr int kMargin = 16;
  constexpr int kGap = 8;
  const int n = static_cast<int>(classes.size());
  Image img(n * kPanel + (n - 1) * kGap, kPanel, 1.0f);
  static const float kPalette[][3] = {{0.12f, 0.47f, 0.71f}, {0.84f, 0.15f, 0.16f},
                                      {0.17f, 0.63f, 0.17f}, {0.58f, 0.40f, 0.74f},
                                      {1.00f, 0.50f, 0.05f}, {0.55f, 0.34f, 0.29f}};
  for (int p = 0; p < n; ++p) {
    const int x0 = p * (kPanel + kGap);
    const int plot_w = kPanel - 2 * kMargin;
    const int plot_h = kPanel - 2 * kMargin;
    fill_rect(img, x0 + kMargin, kPanel - kMargin, x0 + kPanel - kMargin, kPanel - kMargin + 1, 0, 0, 0);
    fill_rect(img, x0 + kMargin - 1, kMargin, x0 + kMargin, kPanel - kMargin + 1, 0, 0, 0);
    const float* colour = kPalette[p % 6];
    // Points at the same severity are spread horizontally in record order.
    std::vector<int> seen(static_cast<std::size_t>(max_level) + 1, 0);
    std::vector<int> count(static_cast<std::size_t>(max_level) + 1, 0);
    for (const auto& r : report.images) {
      if (r.distortion_true == classes[p]) ++count[static_cast<std::size_t>(std::max(r.severity, 0))];
    }
    for (const auto& r : report.images) {
      if (r.distortion_true != classes[p]) continue;
      const auto lvl = static_cast<std::size_t>(std::max(r.severity, 0));
      const double slot = (seen[lvl]++ + 0.5) / std::max(count[lvl], 1) - 0.5;
      const double fx = (r.severity + 0.35 * slot) / (max_level + 1.0);
      const double fy = (r.score_pred - lo) / (hi - lo);
      const int cx = x0 + kMargin + static_cast<int>(std::lround(fx * plot_w));
      const int cy = kPanel - kMargin - static_cast<int>(std::lround(fy * (plot_h - 4))) - 2;
      fill_rect(img, cx - 1, cy - 1, cx + 2, cy + 2, colour[0], colour[1], colour[2]);
    }
  }
  return img;
}

Montage render_montage(const Tensor<float>& features, int top_k) {
  if (features.n != 1) throw ShapeError("montage expects a single feature map, got " + features.shape_string());
  if (top_k < 1) throw ConfigError("top-k must be >= 1");
  const int k = std::min(top_k, features.c);
  const std::size_t plane = static_cast<std::size_t>(features.h) * features.w;
  std::vector<double> mean(static_cast<std::size_t>(features.c), 0.0);
  for (int c = 0; c < features.c; ++c) {
    const float* p = features.data.data() + c * plane;
    mean[c] = std::accumulate(p, p + plane, 0.0) / static_cast<double>(plane);
  }
  std::vector<int> order(static_cast<std::size_t>(features.c));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return mean[a] > mean[b]; });
  order.resize(static_cast<std::size_t>(k));

  const int scale = std::max(1, 48 / std::max(features.h, features.w));
  const int tile_w = features.w * scale;
  const int tile_h = features.h * scale;
  const int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(k))));
  const int rows = (k + cols - 1) / cols;
  Montage m;
  m.channels = order;
  m.image = Image(cols * tile_w + (cols - 1), rows * tile_h + (rows - 1), 1.0f);
  for (int i = 0; i < k; ++i) {
    const float* p = features.data.data() + order[i] * plane;
    const auto [mn, mx] = std::minmax_element(p, p + plane);
    const float range = *mx - *mn;
    const int ox = (i % cols) * (tile_w + 1);
    const int oy = (i / cols) * (tile_h + 1);
    for (int y = 0; y < tile_h; ++y) {
      for (int x = 0; x < tile_w; ++x) {
        const float v = p[(y / scale) * features.w + x / scale];
        const float g = range > 0.0f ? (v - *mn) / range : 0.0f;
        for (int c = 0; c < 3; ++c) m.image.at(c, oy + y, ox + x) = g;
      }
    }
  }
  return m;
}

ExperimentConfig resolve_config(const CommandOptions& options) {
  ExperimentConfig c = options.config.empty() ? config_from_json(json::object())
                                              : load_config(options.config);
  if (options.seed) {
    c.seed = *options.seed;
    c.model.seed = c.seed;
    c.train.seed = c.seed;
  }
  if (!options.cross_set.empty()) c.eval.cross_set = options.cross_set;
  if (options.jobs < 1) throw ConfigError("--jobs must be >= 1");
  c.validate();
  return c;
}

namespace {

fs::path start_run(const ExperimentConfig& config, const CommandOptions& options) {
  const auto dir = make_run_dir(output_root(options.out), config.seed);
  write_json(dir / "config.json", config_to_json(config));
  return dir;
}

std::vector<int> ids_of(const DatasetManifest& m) { return m.reference_ids(); }

}  // namespace

CommandResult cmd_synth(const CommandOptions& options) {
  const auto config = resolve_config(options);
  if (config.dataset.manifest.empty()) {
    if (config.dataset.corpus.empty()) throw ConfigError("dataset.corpus is required");
    if (!fs::is_directory(config.dataset.corpus)) {
      throw IoError("corpus directory not found: " + config.dataset.corpus.string());
    }
  }
  const auto dir = start_run(config, options);
  const auto manifest = obtain_manifest(config, dir / "dataset", options.jobs);
  const auto path = dir / "dataset" / "manifest.jsonl";
  CommandResult result{dir, {{"records", manifest.records.size()},
                             {"manifest", path.string()},
                             {"digest", fs::exists(path) ? file_digest(path) : std::string()}}};
  write_json(dir / "synth_summary.json", result.summary);
  return result;
}

CommandResult cmd_train(const CommandOptions& options) {
  const auto config = resolve_config(options);
  std::optional<TrainState> resumed;
  if (!options.resume.empty()) {
    resumed.emplace(load_train_state(options.resume));
    if (resumed->epoch >= config.train.epochs) {
      throw ConfigError("checkpoint already completed " + std::to_string(resumed->epoch) +
                        " epochs; raise train.epochs to continue");
    }
  }
  const auto dir = start_run(config, options);
  const auto manifest = obtain_manifest(config, dir / "dataset", options.jobs);
  const auto [train_set, test_set] =
      split_by_reference(manifest, {config.dataset.train_fraction, config.seed});
  write_json(dir / "split.json", {{"train_references", ids_of(train_set)},
                                  {"test_references", ids_of(test_set)}});
  write_manifest(dir / "test_manifest.jsonl", detached(test_set));

  const int side = config.model.patch_side;
  const auto patches = hflip_augment(
      load_patches(train_set, side, effective_stride(config.patches, side)), config.patches.hflip);
  TrainState state = resumed ? std::move(*resumed) : TrainState(Model<float>(model_for(config, manifest)));
  TrainHooks hooks;
  hooks.checkpoint_path = dir / "checkpoint.qnet";
  hooks.log_path = dir / "train_log.jsonl";
  hooks.on_epoch = [](const EpochStats& s) {
    std::fprintf(stderr, "epoch %d  L_d %.4f  L_s %.4f  total %.4f  lr %.3g\n", s.epoch, s.mean_ld,
                 s.mean_ls, s.mean_total, s.lr);
  };
  train(state, patches, config.train, hooks);
  CommandResult result{dir, {{"epochs", state.epoch},
                             {"checkpoint", hooks.checkpoint_path.string()},
                             {"train_patches", patches.size()},
                             {"final", state.history.empty() ? json(nullptr) : json(state.history.back())}}};
  return result;
}

CommandResult cmd_eval(const CommandOptions& options) {
  const auto config = resolve_config(options);
  const bool repeated = config.eval.n_splits > 1 && config.eval.cross_set.empty();
  if (!repeated && options.checkpoint.empty()) throw ConfigError("--checkpoint is required");
  if (!options.checkpoint.empty() && !fs::exists(options.checkpoint)) {
    throw IoError("checkpoint not found: " + options.checkpoint.string());
  }
  if (!config.eval.cross_set.empty() && !fs::exists(config.eval.cross_set)) {
    throw IoError("cross-set manifest not found: " + config.eval.cross_set.string());
  }
  const auto dir = start_run(config, options);
  CommandResult result{dir, {}};

  if (repeated) {
    const auto manifest = obtain_manifest(config, dir / "dataset", options.jobs);
    const auto summary = run_repeated_splits(
        manifest, model_for(config, manifest), config.train, config.patches,
        {config.eval.n_splits, config.dataset.train_fraction, config.seed, options.jobs});
    result.summary = summary_to_json(summary);
    write_json(dir / "repeated_splits.json", result.summary);
    return result;
  }

  const auto model = load_model(options.checkpoint);
  EvalReport report;
  if (!config.eval.cross_set.empty()) {
    const auto foreign = read_manifest(config.eval.cross_set);
    auto shared = config.eval.shared_types;
    if (shared.empty()) shared = model.config().class_names;
    report = cross_dataset_eval(model, foreign, shared, config.patches);
  } else {
    const auto manifest = obtain_manifest(config, dir / "dataset", options.jobs);
    const auto test_set =
        split_by_reference(manifest, {config.dataset.train_fraction, config.seed}).second;
    report = evaluate(model, test_set, config.patches);
  }
  write_json(dir / "report.json", report_to_json(report));
  write_image_csv(dir / "images.csv", report);
  result.summary = report_to_json(report);
  result.summary.erase("images");
  return result;
}

CommandResult cmd_ablate(const CommandOptions& options) {
  const auto config = resolve_config(options);
  if (config.ablation.variants.empty() && config.ablation.optimizers.empty() &&
      config.ablation.patch_sizes.empty() && !config.ablation.deeper) {
    throw ConfigError("ablation section is empty");
  }
  const auto dir = start_run(config, options);
  const auto manifest = obtain_manifest(config, dir / "dataset", options.jobs);
  const auto rows = run_ablation(config, manifest, options.jobs);
  const auto table = ablation_to_json(rows);
  write_json(dir / "ablation.json", table);
  write_ablation_csv(dir / "ablation.csv", rows);
  return {dir, table};
}

CommandResult cmd_plot(const CommandOptions& options) {
  if (options.report.empty() && options.checkpoint.empty()) {
    throw ConfigError("plot needs --report or --checkpoint with --image");
  }
  if (!options.checkpoint.empty() && options.image.empty()) {
    throw ConfigError("--image is required with --checkpoint");
  }
  if (options.top_k < 1) throw ConfigError("--top-k must be >= 1");
  if (!options.report.empty() && !fs::exists(options.report)) {
    throw IoError("report not found: " + options.report.string());
  }
  if (!options.checkpoint.empty() && !fs::exists(options.checkpoint)) {
    throw IoError("checkpoint not found: " + options.checkpoint.string());
  }
  if (!options.image.empty() && !fs::exists(options.image)) {
    throw IoError("image not found: " + options.image.string());
  }
  const auto dir = make_run_dir(output_root(options.out), options.seed.value_or(0));
  CommandResult result{dir, json::object()};
  if (!options.report.empty()) {
    const auto report = report_from_json(read_json(options.report));
    const auto path = dir / "scatter.png";
    write_png(path, render_scatter(report));
    result.summary["scatter"] = path.string();
  }
  if (!options.checkpoint.empty()) {
    const auto model = load_model(options.checkpoint);
    const int side = model.config().patch_side;
    const Image img = read_image(options.image);
    if (img.width < side || img.height < side) {
      throw DataError("image " + options.image.string() + " is smaller than the patch side " +
                      std::to_string(side));
    }
    const auto patch =
        crop_to_tensor(img, (img.width - side) / 2, (img.height - side) / 2, side);
    Tape<float> tape;
    model.forward(patch, &tape);
    // First stage output: the last conv of stage 1 after ReLU.
    const int first_stage_convs = model.config().backbone.convs_per_stage.front();
    Tensor<float> stage1 = tape.convs[static_cast<std::size_t>(first_stage_convs - 1)].normalized;
    for (auto& v : stage1.data) v = std::max(v, 0.0f);
    const auto m1 = render_montage(stage1, options.top_k);
    const auto m4 = render_montage(tape.t4, options.top_k);
    write_png(dir / "montage_stage1.png", m1.image);
    write_png(dir / "montage_tap4.png", m4.image);
    result.summary["montage_stage1"] = {{"path", (dir / "montage_stage1.png").string()},
                                        {"channels", m1.channels}};
    result.summary["montage_tap4"] = {{"path", (dir / "montage_tap4.png").string()},
                                      {"channels", m4.channels}};
  }
  write_json(dir / "plot_summary.json", result.summary);
  return result;
}

}  // namespace qualnet
