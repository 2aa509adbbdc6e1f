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

// Multi-view baselines built from a single-view clusterer:
//   cc   - cluster the column-wise concatenation of all views
//   mvec - cluster each view, accumulate a co-association matrix, and cut an
//          average-linkage tree over the distance 1 - CAM

#pragma once

#include <functional>
#include <string>
#include <variant>
#include <vector>

#include "dmvc/agglomerative.hpp"
#include "dmvc/deepclust.hpp"
#include "dmvc/kmeans.hpp"
#include "dmvc/mvnet.hpp"

namespace dmvc {

struct KMeansClusterer {
  KMeansConfig config;  // k and seed are overridden per call
};

struct WardClusterer {};

struct IdecClusterer {
  std::vector<std::size_t> hidden = kSmallHidden;  // encoder is d-hidden...-k
  IdecConfig config;
};

using ClustererSpec = std::variant<KMeansClusterer, WardClusterer, IdecClusterer>;

inline std::string clusterer_name(const ClustererSpec& c) {
  return std::visit(
      [](const auto& s) -> std::string {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, KMeansClusterer>) return "km";
        else if constexpr (std::is_same_v<T, WardClusterer>) return "ac";
        else return "idec";
      },
      c);
}

// Token "km" | "ac" | "idec"; anything else is a ConfigError.
inline ClustererSpec parse_clusterer(const std::string& token) {
  if (token == "km" || token == "kmeans") return KMeansClusterer{};
  if (token == "ac" || token == "agglomerative-ward") return WardClusterer{};
  if (token == "idec") return IdecClusterer{};
  fail_config("unknown clusterer '", token, "' (expected km, ac or idec)");
}

inline Partition run_clusterer(const ClustererSpec& spec, const Matrix& data, std::size_t k, Seed seed) {
  return std::visit(
      [&](const auto& s) -> Partition {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, KMeansClusterer>) {
          auto cfg = s.config;
          cfg.k = k;
          cfg.seed = seed;
          return kmeans(data, cfg).partition;
        } else if constexpr (std::is_same_v<T, WardClusterer>) {
          return agglomerative_features(data, {k, Linkage::ward});
        } else {
          MlpSpec enc{{static_cast<std::size_t>(data.cols())}};
          enc.layer_dims.insert(enc.layer_dims.end(), s.hidden.begin(), s.hidden.end());
          enc.layer_dims.push_back(k);
          return idec_train(data, k, enc, detail::seeded(s.config, seed)).partition;
        }
      },
      spec);
}

/// Views stacked column-wise, in view order.
inline FeatureView concat_views(const MultiViewDataset& ds) {
  validate_dataset(ds);
  std::string name;
  for (const auto& v : ds.views) name += (name.empty() ? "" : "+") + v.name;
  return {name, detail::concat_columns(ds.matrices())};
}

inline Partition cc(const MultiViewDataset& ds, const ClustererSpec& clusterer, std::size_t k, Seed seed = 0) {
  const auto joined = concat_views(ds);
  if (k < 1 || static_cast<Index>(k) > joined.rows()) fail_config("cc: k=", k, " invalid for n=", joined.rows());
  return run_clusterer(clusterer, joined.data, k, seed);
}

struct CoassociationMatrix {
  Matrix values;  // n x n, entries count / m
  std::size_t m_partitions = 0;
};

inline CoassociationMatrix coassociation(const std::vector<Partition>& partitions) {
  if (partitions.empty()) fail_config("coassociation needs at least one partition");
  const std::size_t n = partitions.front().size();
  for (const auto& p : partitions)
    if (p.size() != n) fail_config("partition length mismatch: ", n, " vs ", p.size());
  std::vector<std::vector<std::size_t>> counts(n, std::vector<std::size_t>(n, 0));
  for (const auto& p : partitions)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i; j < n; ++j)
        if (p[i] == p[j]) ++counts[i][j];
  const double m = static_cast<double>(partitions.size());
  CoassociationMatrix cam{Matrix(static_cast<Index>(n), static_cast<Index>(n)), partitions.size()};
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j)
      cam.values(static_cast<Index>(i), static_cast<Index>(j)) = cam.values(static_cast<Index>(j), static_cast<Index>(i)) =
          static_cast<double>(counts[i][j]) / m;
  return cam;
}

// CAM to linkage distance. Default 1 - CAM.
using CamTransform = std::function<Matrix(const Matrix&)>;

inline Matrix one_minus(const Matrix& cam) {
  return (Matrix::Ones(cam.rows(), cam.cols()) - cam).cwiseMax(0.0);
}

struct MvecResult {
  Partition partition;
  std::vector<Partition> view_partitions;
  CoassociationMatrix cam;
};

/// Each view is clustered with a seed derived from the run seed and the view
/// name, so the result does not depend on view order.
inline MvecResult mvec_detailed(const MultiViewDataset& ds, const ClustererSpec& clusterer, std::size_t k, Seed seed = 0,
                                const CamTransform& to_distance = one_minus) {
  validate_dataset(ds);
  if (k < 1 || static_cast<Index>(k) > ds.num_samples()) fail_config("mvec: k=", k, " invalid for n=", ds.num_samples());
  MvecResult r;
  for (std::size_t i = 0; i < ds.num_views(); ++i)
    r.view_partitions.push_back(run_clusterer(clusterer, ds.views[i].data, k, derive_seed(seed, fnv1a(ds.views[i].name))));
  r.cam = coassociation(r.view_partitions);
  r.partition = agglomerative_distance(to_distance(r.cam.values), {k, Linkage::average});
  return r;
}

inline Partition mvec(const MultiViewDataset& ds, const ClustererSpec& clusterer, std::size_t k, Seed seed = 0) {
  return mvec_detailed(ds, clusterer, k, seed).partition;
}

}  // namespace dmvc
