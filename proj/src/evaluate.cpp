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

#include "qualnet/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <future>
#include <limits>
#include <map>
#include <set>

#include "qualnet/errors.hpp"
#include "qualnet/losses.hpp"

namespace qualnet {

namespace {

std::optional<double> opt_median(const std::vector<double>& v) {
  if (v.empty()) return std::nullopt;
  return median(v);
}

nlohmann::json opt_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

bool all_equal(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
}

EvalReport evaluate_records(const Model<float>& model, const DatasetManifest& manifest,
                            const PatchingConfig& patching,
                            const std::vector<std::size_t>& records,
                            const std::vector<int>& model_to_manifest_class) {
  const int side = model.config().patch_side;
  const int stride = effective_stride(patching, side);
  const bool has_classes = has_distortion_head(model.config().variant);
  std::vector<ImageRow> rows;
  rows.reserve(records.size());
  for (std::size_t idx : records) {
    const auto& r = manifest.records[idx];
    const auto path = manifest.resolve(r);
    const auto patches = extract_patches(read_image(path), side, stride, r, idx, path.string());
    auto preds = predict_patches(model, patches);
    if (has_classes) {
      // Classes without a counterpart in the manifest take no part in the vote.
      for (auto& p : preds) {
        for (std::size_t k = 0; k < p.logits.size(); ++k) {
          if (model_to_manifest_class[k] == 0) p.logits[k] = -std::numeric_limits<double>::infinity();
        }
      }
    }
    const auto image = aggregate_image(preds);
    ImageRow row;
    row.path = r.path;
    row.reference_id = r.reference_id;
    row.distortion_true = r.distortion_index;
    row.distortion_pred =
        has_classes ? model_to_manifest_class[static_cast<std::size_t>(image.predicted_class - 1)] : 0;
    row.severity = r.severity_level;
    row.score_true = r.score;
    row.score_pred = image.score;
    rows.push_back(row);
  }
  return summarize(std::move(rows), has_classes);
}

}  // namespace

ImagePrediction aggregate_image(std::span<const PatchPrediction> patches) {
  if (patches.empty()) throw DataError("cannot aggregate an image without patches");
  ImagePrediction out;
  out.patches.assign(patches.begin(), patches.end());
  double sum = 0.0;
  for (const auto& p : patches) sum += p.score;
  out.score = sum / static_cast<double>(patches.size());

  const std::size_t m = patches.front().logits.size();
  if (m == 0) return out;
  std::vector<int> votes(m, 0);
  std::vector<double> prob_sum(m, 0.0);
  for (const auto& p : patches) {
    if (p.logits.size() != m) throw ShapeError("patches disagree on the number of classes");
    const auto best = std::max_element(p.logits.begin(), p.logits.end()) - p.logits.begin();
    ++votes[static_cast<std::size_t>(best)];
    const auto probs = softmax(std::span<const double>(p.logits));
    for (std::size_t k = 0; k < m; ++k) prob_sum[k] += probs[k];
  }
  std::size_t winner = 0;
  for (std::size_t k = 1; k < m; ++k) {
    if (votes[k] > votes[winner] || (votes[k] == votes[winner] && prob_sum[k] > prob_sum[winner])) {
      winner = k;
    }
  }
  out.predicted_class = static_cast<int>(winner) + 1;
  return out;
}

std::vector<PatchPrediction> predict_patches(const Model<float>& model,
                                             const std::vector<PatchRecord>& patches) {
  std::vector<PatchPrediction> out;
  out.reserve(patches.size());
  for (const auto& p : patches) {
    const auto f = model.forward_one(p.pixels);
    out.push_back({std::vector<double>(f.d_logits.begin(), f.d_logits.end()), f.s});
  }
  return out;
}

EvalReport summarize(std::vector<ImageRow> rows, bool has_classes) {
  EvalReport report;
  report.n_images = rows.size();
  report.images = std::move(rows);
  if (report.images.empty()) {
    report.degenerate = true;
    report.degenerate_reason = "no images";
    return report;
  }
  std::vector<double> pred;
  std::vector<double> truth;
  std::size_t correct = 0;
  for (const auto& r : report.images) {
    pred.push_back(r.score_pred);
    truth.push_back(r.score_true);
    if (r.distortion_pred == r.distortion_true) ++correct;
  }
  if (has_classes) {
    report.accuracy = static_cast<double>(correct) / static_cast<double>(report.images.size());
  }
  if (pred.size() < 3) {
    report.degenerate = true;
    report.degenerate_reason = "fewer than 3 images";
    return report;
  }
  if (all_equal(pred)) {
    report.degenerate = true;
    report.degenerate_reason = "degenerate predictions";
    return report;
  }
  if (all_equal(truth)) {
    report.degenerate = true;
    report.degenerate_reason = "constant ground truth";
    return report;
  }
  report.srocc = srocc(pred, truth);
  report.lcc_raw = pcc(pred, truth);
  if (pred.size() >= 6) {
    try {
      const auto fit = fit_logistic(pred, truth);
      std::vector<double> mapped(pred.size());
      for (std::size_t i = 0; i < pred.size(); ++i) mapped[i] = fit(pred[i]);
      report.logistic = fit;
      report.lcc_mapped = pcc(mapped, truth);
    } catch (const DataError&) {
      // Remapped LCC stays absent when the fit or the mapped vector degenerates.
    }
  }
  return report;
}

EvalReport evaluate(const Model<float>& model, const DatasetManifest& test,
                    const PatchingConfig& patching) {
  if (test.records.empty()) throw DataError("test manifest is empty");
  const auto& mc = model.config();
  if (has_distortion_head(mc.variant) && mc.num_distortions != test.num_classes()) {
    throw ConfigError("model predicts " + std::to_string(mc.num_distortions) +
                      " classes but the manifest has " + std::to_string(test.num_classes()));
  }
  std::vector<std::size_t> records(test.records.size());
  for (std::size_t i = 0; i < records.size(); ++i) records[i] = i;
  std::vector<int> identity(static_cast<std::size_t>(std::max(mc.num_distortions, 0)));
  for (std::size_t k = 0; k < identity.size(); ++k) identity[k] = static_cast<int>(k) + 1;
  return evaluate_records(model, test, patching, records, identity);
}

EvalReport cross_dataset_eval(const Model<float>& model, const DatasetManifest& foreign,
                              const std::vector<std::string>& shared_types,
                              const PatchingConfig& patching) {
  const auto& mc = model.config();
  const bool has_classes = has_distortion_head(mc.variant);
  if (has_classes && mc.class_names.empty()) {
    throw ConfigError("model carries no class names; cannot match classes by name");
  }
  auto check_unique = [](const std::vector<std::string>& names, const std::string& what) {
    std::set<std::string> seen;
    for (const auto& n : names) {
      if (!seen.insert(n).second) throw ConfigError("ambiguous class name '" + n + "' in " + what);
    }
  };
  check_unique(foreign.classes, "foreign manifest");
  if (has_classes) check_unique(mc.class_names, "model");

  std::set<std::string> shared;
  for (const auto& t : shared_types) {
    const bool in_foreign = foreign.class_index(t) != 0;
    const bool in_model = !has_classes || std::find(mc.class_names.begin(), mc.class_names.end(),
                                                    t) != mc.class_names.end();
    if (in_foreign && in_model) shared.insert(t);
  }
  if (shared.empty()) throw ConfigError("no shared distortion types between model and manifest");

  std::vector<std::size_t> records;
  for (std::size_t i = 0; i < foreign.records.size(); ++i) {
    const auto& name = foreign.classes[static_cast<std::size_t>(foreign.records[i].distortion_index - 1)];
    if (shared.count(name) != 0) records.push_back(i);
  }
  if (records.empty()) throw DataError("foreign manifest has no records of the shared types");

  std::vector<int> translate(mc.class_names.size(), 0);
  for (std::size_t k = 0; k < mc.class_names.size(); ++k) {
    if (shared.count(mc.class_names[k]) != 0) translate[k] = foreign.class_index(mc.class_names[k]);
  }
  return evaluate_records(model, foreign, patching, records, translate);
}

RepeatedSplitSummary run_repeated_splits(const DatasetManifest& manifest, ModelConfig model_config,
                                         TrainConfig train_config, const PatchingConfig& patching,
                                         const RepeatedSplitSpec& spec) {
  if (spec.n < 1) throw ConfigError("number of splits must be >= 1");
  model_config.validate();
  train_config.validate();
  if (model_config.class_names.empty() && has_distortion_head(model_config.variant)) {
    model_config.class_names = manifest.classes;
    model_config.num_distortions = manifest.num_classes();
  }

  auto run_one = [&](int i) {
    SplitRun run;
    run.index = i;
    run.seed = spec.seed + static_cast<std::uint64_t>(i);
    try {
      const auto [train_set, test_set] =
          split_by_reference(manifest, {spec.train_fraction, run.seed});
      ModelConfig mc = model_config;
      mc.seed = run.seed;
      TrainConfig tc = train_config;
      tc.seed = run.seed;
      auto state = train(Model<float>(mc), train_set, patching, tc);
      run.report = evaluate(state.model, test_set, patching);
    } catch (const std::exception& e) {
      run.error = "run " + std::to_string(i) + ": " + e.what();
    }
    return run;
  };

  RepeatedSplitSummary summary;
  const int jobs = std::max(1, spec.jobs);
  for (int begin = 0; begin < spec.n; begin += jobs) {
    std::vector<std::future<SplitRun>> pending;
    for (int i = begin; i < std::min(spec.n, begin + jobs); ++i) {
      pending.push_back(std::async(jobs > 1 ? std::launch::async : std::launch::deferred, run_one, i));
    }
    for (auto& f : pending) summary.runs.push_back(f.get());
  }

  std::vector<double> sroccs;
  std::vector<double> lccs;
  std::vector<double> accs;
  for (const auto& r : summary.runs) {
    if (!r.report) continue;
    ++summary.successes;
    if (r.report->srocc) sroccs.push_back(*r.report->srocc);
    if (r.report->lcc_mapped) lccs.push_back(*r.report->lcc_mapped);
    if (r.report->accuracy) accs.push_back(*r.report->accuracy);
  }
  if (2 * summary.successes < static_cast<std::size_t>(spec.n)) {
    std::string detail;
    for (const auto& r : summary.runs) {
      if (!r.error.empty()) detail += "\n  " + r.error;
    }
    throw DataError("only " + std::to_string(summary.successes) + " of " + std::to_string(spec.n) +
                    " split runs succeeded:" + detail);
  }
  summary.median_srocc = opt_median(sroccs);
  summary.median_lcc = opt_median(lccs);
  summary.median_accuracy = opt_median(accs);
  return summary;
}

nlohmann::json report_to_json(const EvalReport& report) {
  nlohmann::json images = nlohmann::json::array();
  for (const auto& r : report.images) {
    images.push_back({{"path", r.path},
                      {"reference_id", r.reference_id},
                      {"distortion_true", r.distortion_true},
                      {"distortion_pred", r.distortion_pred},
                      {"severity", r.severity},
                      {"score_true", r.score_true},
                      {"score_pred", r.score_pred}});
  }
  return {{"n_images", report.n_images},
          {"degenerate", report.degenerate},
          {"degenerate_reason", report.degenerate_reason},
          {"srocc", opt_json(report.srocc)},
          {"lcc_raw", opt_json(report.lcc_raw)},
          {"lcc_mapped", opt_json(report.lcc_mapped)},
          {"accuracy", opt_json(report.accuracy)},
          {"logistic", report.logistic ? nlohmann::json(*report.logistic) : nlohmann::json(nullptr)},
          {"images", images}};
}

nlohmann::json summary_to_json(const RepeatedSplitSummary& summary) {
  nlohmann::json runs = nlohmann::json::array();
  for (const auto& r : summary.runs) {
    nlohmann::json j{{"index", r.index}, {"seed", r.seed}};
    if (r.report) {
      j["srocc"] = opt_json(r.report->srocc);
      j["lcc_mapped"] = opt_json(r.report->lcc_mapped);
      j["accuracy"] = opt_json(r.report->accuracy);
      j["degenerate"] = r.report->degenerate;
    } else {
      j["error"] = r.error;
    }
    runs.push_back(j);
  }
  return {{"runs", runs},
          {"successes", summary.successes},
          {"median_srocc", opt_json(summary.median_srocc)},
          {"median_lcc", opt_json(summary.median_lcc)},
          {"median_accuracy", opt_json(summary.median_accuracy)}};
}

void write_image_csv(const std::filesystem::path& path, const EvalReport& report) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "reference_id,distortion_true,distortion_pred,severity,score_true,score_pred\n";
  char buf[64];
  for (const auto& r : report.images) {
    std::snprintf(buf, sizeof(buf), "%.9g", r.score_pred);
    out << r.reference_id << ',' << r.distortion_true << ',' << r.distortion_pred << ','
        << r.severity << ',' << r.score_true << ',' << buf << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace qualnet
