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

#include "qualnet/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <future>
#include <numbers>
#include <random>
#include <set>
#include <tuple>

#include "qualnet/errors.hpp"
#include "qualnet/random.hpp"

namespace qualnet {

namespace fs = std::filesystem;

void to_json(nlohmann::json& j, const ImageRecord& r) {
  j = nlohmann::json{{"path", r.path},
                     {"reference_id", r.reference_id},
                     {"distortion_index", r.distortion_index},
                     {"severity_level", r.severity_level},
                     {"score", r.score}};
}

void from_json(const nlohmann::json& j, ImageRecord& r) {
  r.path = j.at("path").get<std::string>();
  r.reference_id = j.at("reference_id").get<int>();
  r.distortion_index = j.at("distortion_index").get<int>();
  r.severity_level = j.at("severity_level").get<int>();
  r.score = j.at("score").get<double>();
}

namespace {

constexpr const char* kManifestFormat = "qualnet-manifest";
constexpr int kManifestVersion = 1;

std::string lower_ext(const fs::path& p) {
  std::string e = p.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char ch) { return std::tolower(ch); });
  return e;
}

}  // namespace

std::vector<int> DatasetManifest::reference_ids() const {
  std::set<int> ids;
  for (const auto& r : records) ids.insert(r.reference_id);
  return {ids.begin(), ids.end()};
}

int DatasetManifest::class_index(const std::string& name) const {
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (classes[i] == name) return static_cast<int>(i) + 1;
  }
  return 0;
}

void DatasetManifest::validate() const {
  std::set<std::tuple<int, int, int>> seen;
  for (const auto& r : records) {
    if (r.distortion_index < 1 || r.distortion_index > num_classes()) {
      throw DataError("record " + r.path + " has distortion index " +
                      std::to_string(r.distortion_index) + " outside 1.." +
                      std::to_string(num_classes()));
    }
    if (!seen.insert({r.reference_id, r.distortion_index, r.severity_level}).second) {
      throw DataError("duplicate record for reference " + std::to_string(r.reference_id) +
                      ", class " + std::to_string(r.distortion_index) + ", level " +
                      std::to_string(r.severity_level));
    }
  }
}

void write_manifest(const fs::path& path, const DatasetManifest& manifest) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write manifest: " + path.string());
  nlohmann::json classes = nlohmann::json::array();
  for (std::size_t i = 0; i < manifest.classes.size(); ++i) {
    classes.push_back({{"index", i + 1}, {"name", manifest.classes[i]}});
  }
  const nlohmann::json header{{"format", kManifestFormat},
                              {"version", kManifestVersion},
                              {"classes", classes},
                              {"levels", manifest.levels},
                              {"generator", manifest.generator}};
  out << header.dump() << '\n';
  for (const auto& r : manifest.records) out << nlohmann::json(r).dump() << '\n';
  if (!out) throw IoError("failed writing manifest: " + path.string());
}

DatasetManifest read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest: " + path.string());
  DatasetManifest m;
  m.base_dir = path.parent_path();
  std::string line;
  int line_no = 0;
  try {
    if (!std::getline(in, line)) throw IoError("empty manifest: " + path.string());
    ++line_no;
    const auto header = nlohmann::json::parse(line);
    if (header.value("format", std::string()) != kManifestFormat) {
      throw IoError("not a dataset manifest: " + path.string());
    }
    const auto& classes = header.at("classes");
    m.classes.resize(classes.size());
    for (const auto& c : classes) {
      const auto idx = c.at("index").get<std::size_t>();
      if (idx < 1 || idx > classes.size()) throw IoError("bad class index in " + path.string());
      m.classes[idx - 1] = c.at("name").get<std::string>();
    }
    m.levels = header.value("levels", kSeverityLevels);
    m.generator = header.value("generator", nlohmann::json::object());
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      m.records.push_back(nlohmann::json::parse(line).get<ImageRecord>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
  }
  m.validate();
  return m;
}

std::vector<fs::path> list_corpus(const fs::path& corpus_dir) {
  if (!fs::is_directory(corpus_dir)) {
    throw IoError("corpus directory not found: " + corpus_dir.string());
  }
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(corpus_dir)) {
    if (!entry.is_regular_file()) continue;
    const auto ext = lower_ext(entry.path());
    if (ext == ".png" || ext == ".ppm") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

DatasetManifest build_dataset(const DatasetBuildSpec& spec) {
  if (spec.types.empty()) throw ConfigError("dataset needs at least one distortion type");
  if (spec.levels < 1 || spec.levels > kSeverityLevels) {
    throw ConfigError("levels must be in 1.." + std::to_string(kSeverityLevels));
  }
  std::vector<DistortionSpec> classes;
  for (const auto& t : spec.types) classes.push_back(parse_distortion_spec(t));
  {
    std::set<std::string> names;
    for (const auto& c : classes) {
      if (!names.insert(c.name()).second) throw ConfigError("duplicate distortion type " + c.name());
    }
  }
  const auto files = list_corpus(spec.corpus_dir);
  if (files.size() < 2) {
    throw IoError("corpus " + spec.corpus_dir.string() + " needs at least 2 reference images, found " +
                  std::to_string(files.size()));
  }
  std::error_code ec;
  fs::create_directories(spec.out_dir / "images", ec);
  if (ec) throw IoError("cannot create output directory " + spec.out_dir.string() + ": " + ec.message());

  DatasetManifest m;
  m.base_dir = spec.out_dir;
  m.levels = spec.levels;
  for (const auto& c : classes) m.classes.push_back(c.name());

  auto work = [&](std::size_t ref) {
    std::vector<ImageRecord> out;
    const Image reference = read_image(files[ref]);
    for (std::size_t c = 0; c < classes.size(); ++c) {
      for (int level = 1; level <= spec.levels; ++level) {
        const auto seed = derive_seed(spec.seed, {ref, c, static_cast<std::uint64_t>(level)});
        const Image distorted = apply_distortion(reference, classes[c], level, seed);
        char name[96];
        std::snprintf(name, sizeof(name), "images/ref%03zu_c%zu_l%d.png", ref, c + 1, level);
        write_png(spec.out_dir / name, distorted);
        out.push_back({name, static_cast<int>(ref), static_cast<int>(c) + 1, level,
                       severity_to_score(level, spec.levels)});
      }
    }
    return out;
  };

  // Work items may run concurrently; assembly is serial in reference order.
  std::vector<std::vector<ImageRecord>> per_ref(files.size());
  const std::size_t jobs = static_cast<std::size_t>(std::max(1, spec.jobs));
  for (std::size_t begin = 0; begin < files.size(); begin += jobs) {
    std::vector<std::future<std::vector<ImageRecord>>> pending;
    for (std::size_t r = begin; r < std::min(files.size(), begin + jobs); ++r) {
      pending.push_back(std::async(jobs > 1 ? std::launch::async : std::launch::deferred, work, r));
    }
    for (std::size_t i = 0; i < pending.size(); ++i) per_ref[begin + i] = pending[i].get();
  }
  for (auto& recs : per_ref) {
    m.records.insert(m.records.end(), recs.begin(), recs.end());
  }

  nlohmann::json corpus = nlohmann::json::array();
  for (const auto& f : files) corpus.push_back(f.filename().string());
  nlohmann::json params = nlohmann::json::object();
  for (const auto& c : classes) {
    for (auto t : c.parts) {
      std::vector<double> table;
      for (int level = 1; level <= spec.levels; ++level) table.push_back(severity_parameter(t, level));
      params[std::string(distortion_name(t))] = table;
    }
  }
  m.generator = {{"seed", spec.seed}, {"corpus", corpus}, {"parameters", params}};
  m.validate();
  write_manifest(spec.out_dir / "manifest.jsonl", m);
  return m;
}

Image generate_reference_image(int side, std::uint64_t seed) {
  if (side < 8) throw ConfigError("reference images need a side of at least 8 pixels");
  std::mt19937_64 rng(seed);
  auto uni = [&](double lo, double hi) { return lo + (hi - lo) * uniform01(rng); };
  Image img(side, side);

  // Background: two-colour linear gradient.
  double c0[3];
  double c1[3];
  for (int c = 0; c < 3; ++c) {
    c0[c] = uni(0.15, 0.85);
    c1[c] = uni(0.15, 0.85);
  }
  const double angle = uni(0.0, 2.0 * std::numbers::pi);
  const double ux = std::cos(angle);
  const double uy = std::sin(angle);
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      const double t = 0.5 + ((x - side / 2.0) * ux + (y - side / 2.0) * uy) / (1.5 * side);
      for (int c = 0; c < 3; ++c) img.at(c, y, x) = static_cast<float>(c0[c] + (c1[c] - c0[c]) * t);
    }
  }

  // Shapes: filled ellipses and rectangles, some with stripe texture.
  const int shapes = 6 + static_cast<int>(bounded_draw(rng, 7));
  for (int s = 0; s < shapes; ++s) {
    const bool ellipse = uniform01(rng) < 0.5;
    const double cx = uni(0.0, side);
    const double cy = uni(0.0, side);
    const double rx = uni(0.06, 0.3) * side;
    const double ry = uni(0.06, 0.3) * side;
    double col[3];
    for (double& v : col) v = uni(0.05, 0.95);
    const bool striped = uniform01(rng) < 0.35;
    const double freq = uni(0.15, 0.6);
    const double stripe_angle = uni(0.0, std::numbers::pi);
    for (int y = 0; y < side; ++y) {
      for (int x = 0; x < side; ++x) {
        const double dx = (x - cx) / rx;
        const double dy = (y - cy) / ry;
        const bool inside = ellipse ? dx * dx + dy * dy <= 1.0 : std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0;
        if (!inside) continue;
        double mod = 1.0;
        if (striped) {
          const double p = x * std::cos(stripe_angle) + y * std::sin(stripe_angle);
          mod = 0.75 + 0.25 * std::sin(freq * p);
        }
        for (int c = 0; c < 3; ++c) img.at(c, y, x) = static_cast<float>(col[c] * mod);
      }
    }
  }

  // Multi-octave value noise for fine texture.
  for (int octave = 0; octave < 4; ++octave) {
    const int cells = 4 << octave;
    const double amp = 0.12 / (1 << octave);
    std::vector<double> grid(static_cast<std::size_t>(cells + 1) * (cells + 1) * 3);
    for (auto& g : grid) g = uni(-1.0, 1.0);
    for (int y = 0; y < side; ++y) {
      for (int x = 0; x < side; ++x) {
        const double gx = static_cast<double>(x) * cells / side;
        const double gy = static_cast<double>(y) * cells / side;
        const int ix = static_cast<int>(gx);
        const int iy = static_cast<int>(gy);
        const double fx = gx - ix;
        const double fy = gy - iy;
        for (int c = 0; c < 3; ++c) {
          auto g = [&](int yy, int xx) {
            return grid[(static_cast<std::size_t>(yy) * (cells + 1) + xx) * 3 + c];
          };
          const double v = (1 - fy) * ((1 - fx) * g(iy, ix) + fx * g(iy, ix + 1)) +
                           fy * ((1 - fx) * g(iy + 1, ix) + fx * g(iy + 1, ix + 1));
          img.at(c, y, x) += static_cast<float>(amp * v);
        }
      }
    }
  }
  for (auto& v : img.pixels) v = std::clamp(v, 0.02f, 0.98f);
  return quantize_8bit(img);
}

void generate_reference_corpus(const fs::path& dir, int count, int side, std::uint64_t seed) {
  if (count < 1) throw ConfigError("corpus size must be positive");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create corpus directory " + dir.string() + ": " + ec.message());
  for (int i = 0; i < count; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "ref_%03d.png", i);
    write_png(dir / name, generate_reference_image(side, derive_seed(seed, {static_cast<std::uint64_t>(i)})));
  }
}

}  // namespace qualnet
