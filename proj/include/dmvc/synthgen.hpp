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

// Synthetic multi-view datasets where each view only tells some classes
// apart.
//
// In a view with resolved set S (sorted), class S[p] is centered at
// separation * e_p and every class outside S sits at the origin, so those
// classes are indistinguishable in that view. Samples get isotropic Gaussian
// noise. Sample i belongs to class i mod K.

#pragma once

#include <algorithm>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dmvc/dataio.hpp"

namespace dmvc {

struct SynthView {
  std::string name;
  std::vector<std::size_t> resolved;  // may be empty: a pure-noise view
  std::size_t dim = 2;
  double separation = 10.0;
  double noise_std = 1.0;
};

struct SynthConfig {
  std::string name = "synthetic";
  std::size_t n_classes = 4;
  std::size_t samples_per_class = 50;
  std::vector<SynthView> views;
  Seed seed = 0;

  void validate() const {
    if (n_classes < 1) fail_config("synth: n_classes must be >= 1");
    if (samples_per_class < 1) fail_config("synth: samples_per_class must be >= 1");
    if (views.empty()) fail_config("synth: at least one view is required");
    std::set<std::size_t> covered;
    std::set<std::string> names;
    for (const auto& v : views) {
      if (!names.insert(v.name).second) fail_config("synth: duplicate view name '", v.name, "'");
      std::set<std::size_t> unique(v.resolved.begin(), v.resolved.end());
      if (unique.size() != v.resolved.size()) fail_config("synth: view '", v.name, "' lists a class twice");
      for (auto c : v.resolved) {
        if (c >= n_classes) fail_config("synth: view '", v.name, "' resolves class ", c, " but n_classes=", n_classes);
        covered.insert(c);
      }
      if (v.dim < 1) fail_config("synth: view '", v.name, "' needs dim >= 1");
      if (!v.resolved.empty() && v.dim < v.resolved.size() + 1)
        fail_config("synth: view '", v.name, "' has dim ", v.dim, " but resolving ", v.resolved.size(),
                    " classes needs dim >= ", v.resolved.size() + 1);
      if (!(v.separation > 0.0)) fail_config("synth: view '", v.name, "' needs separation > 0");
      if (!(v.noise_std >= 0.0)) fail_config("synth: view '", v.name, "' needs noise_std >= 0");
    }
    std::string missing;
    for (std::size_t c = 0; c < n_classes; ++c)
      if (!covered.count(c)) missing += (missing.empty() ? "" : ",") + std::to_string(c);
    if (!missing.empty()) fail_config("synth: classes not resolved by any view: ", missing);
  }

  std::size_t num_samples() const { return n_classes * samples_per_class; }
};

// Row c is the mean of class c in view v.
inline Matrix class_means(const SynthConfig& cfg, const SynthView& v) {
  Matrix means = Matrix::Zero(static_cast<Index>(cfg.n_classes), static_cast<Index>(v.dim));
  auto sorted = v.resolved;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t p = 0; p < sorted.size(); ++p) means(static_cast<Index>(sorted[p]), static_cast<Index>(p)) = v.separation;
  return means;
}

inline MultiViewDataset generate(const SynthConfig& cfg) {
  cfg.validate();
  const std::size_t n = cfg.num_samples();
  MultiViewDataset ds;
  ds.name = cfg.name;
  std::vector<std::size_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = i % cfg.n_classes;
  for (std::size_t vi = 0; vi < cfg.views.size(); ++vi) {
    const auto& v = cfg.views[vi];
    const Matrix means = class_means(cfg, v);
    std::mt19937_64 rng(derive_seed(cfg.seed, vi));
    std::normal_distribution<double> noise(0.0, 1.0);
    Matrix data(static_cast<Index>(n), static_cast<Index>(v.dim));
    for (std::size_t i = 0; i < n; ++i)
      for (Index j = 0; j < data.cols(); ++j)
        data(static_cast<Index>(i), j) = means(static_cast<Index>(labels[i]), j) + v.noise_std * noise(rng);
    ds.views.push_back({v.name, std::move(data)});
  }
  for (std::size_t c = 0; c < cfg.n_classes; ++c) ds.label_names.push_back("class" + std::to_string(c));
  ds.labels = Partition(std::move(labels), cfg.n_classes);
  return ds;
}

// ---------------------------------------------------------------------------
// Presets

/// "easy": two views that each resolve all four classes.
inline SynthConfig preset_easy(Seed seed = 0) {
  return {"easy", 4, 50, {{"v0", {0, 1, 2, 3}, 5, 10.0, 1.0}, {"v1", {0, 1, 2, 3}, 5, 10.0, 1.0}}, seed};
}

/// "complementary": two views with disjoint resolved sets.
inline SynthConfig preset_complementary(Seed seed = 0) {
  return {"complementary", 4, 50, {{"v0", {0, 1}, 4, 10.0, 1.0}, {"v1", {2, 3}, 4, 10.0, 1.0}}, seed};
}

/// "hard": overlapping resolved sets with closer means, plus a pure-noise view.
inline SynthConfig preset_hard(Seed seed = 0) {
  return {"hard",
          4,
          50,
          {{"v0", {0, 1, 2}, 4, 5.0, 1.0}, {"v1", {1, 2, 3}, 4, 5.0, 1.0}, {"noise", {}, 4, 1.0, 1.0}},
          seed};
}

inline SynthConfig preset(const std::string& name, Seed seed = 0) {
  if (name == "easy") return preset_easy(seed);
  if (name == "complementary") return preset_complementary(seed);
  if (name == "hard") return preset_hard(seed);
  fail_config("unknown synth preset '", name, "' (expected easy, complementary or hard)");
}

// Either {"preset": name, "seed": s} or a full description:
// {name, n_classes, samples_per_class, seed,
//  views: [{name, resolved: [...], dim, separation, noise_std}]}
inline SynthConfig parse_synth_config(const nlohmann::json& j) {
  try {
    if (j.contains("preset")) return preset(j.at("preset").get<std::string>(), j.value("seed", Seed{0}));
    SynthConfig c;
    c.name = j.value("name", c.name);
    c.n_classes = j.at("n_classes").get<std::size_t>();
    c.samples_per_class = j.at("samples_per_class").get<std::size_t>();
    c.seed = j.value("seed", Seed{0});
    for (const auto& jv : j.at("views")) {
      SynthView v;
      v.name = jv.value("name", "v" + std::to_string(c.views.size()));
      v.resolved = jv.at("resolved").get<std::vector<std::size_t>>();
      v.dim = jv.at("dim").get<std::size_t>();
      v.separation = jv.value("separation", v.separation);
      v.noise_std = jv.value("noise_std", v.noise_std);
      c.views.push_back(std::move(v));
    }
    return c;
  } catch (const nlohmann::json::exception& e) {
    fail_config("malformed synth config: ", e.what());
  }
}

/// Writes one MVCV file per view, labels.txt and manifest.json into `dir`.
inline Manifest write_dataset(const MultiViewDataset& ds, const fs::path& dir, Seed seed,
                              nlohmann::json methods = nlohmann::json::object()) {
  validate_dataset(ds);
  fs::create_directories(dir);
  Manifest m;
  m.name = ds.name;
  m.seed = seed;
  m.methods = std::move(methods);
  m.base_dir = dir;
  for (const auto& v : ds.views) {
    const std::string file = v.name + ".mvcv";
    save_view(v, dir / file);
    m.views.push_back({v.name, file, static_cast<std::uint64_t>(v.rows()), static_cast<std::uint64_t>(v.cols())});
  }
  if (ds.labels) {
    save_labels(*ds.labels, ds.label_names, dir / "labels.txt");
    m.labels_path = "labels.txt";
  }
  save_manifest(m, dir / "manifest.json");
  return m;
}

}  // namespace dmvc
