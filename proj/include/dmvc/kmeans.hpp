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

#pragma once

#include <algorithm>
#include <limits>
#include <random>
#include <vector>

#include "dmvc/metrics.hpp"

namespace dmvc {

struct KMeansConfig {
  std::size_t k = 8;
  std::size_t n_init = 10;
  std::size_t max_iter = 300;
  double tol = 1e-4;  // stop when inertia improves by less than tol * inertia
  Seed seed = 0;

  void validate() const {
    if (k < 1) fail_config("kmeans: k must be >= 1");
    if (n_init < 1) fail_config("kmeans: n_init must be >= 1");
    if (max_iter < 1) fail_config("kmeans: max_iter must be >= 1");
    if (!(tol >= 0.0)) fail_config("kmeans: tol must be >= 0");
  }
};

struct KMeansResult {
  Partition partition;
  Matrix centroids;  // k x d
  double inertia = 0.0;
  std::size_t iterations_run = 0;
  std::vector<double> inertia_history;  // per Lloyd step of the winning restart
};

namespace detail {

struct Assignment {
  std::vector<std::size_t> labels;
  std::vector<double> sq_dist;
  double inertia = 0.0;
};

inline Assignment assign_nearest(const Matrix& data, const Matrix& centers) {
  Assignment a;
  const auto n = static_cast<std::size_t>(data.rows());
  a.labels.resize(n);
  a.sq_dist.resize(n);
  for (Index i = 0; i < data.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    Index arg = 0;
    for (Index c = 0; c < centers.rows(); ++c) {
      const double dist = (data.row(i) - centers.row(c)).squaredNorm();
      if (dist < best) {
        best = dist;
        arg = c;
      }
    }
    a.labels[static_cast<std::size_t>(i)] = static_cast<std::size_t>(arg);
    a.sq_dist[static_cast<std::size_t>(i)] = best;
    a.inertia += best;
  }
  return a;
}

// D^2 sampling; the first center is drawn uniformly.
inline Matrix kmeanspp_seed(const Matrix& data, std::size_t k, std::mt19937_64& rng) {
  const auto n = static_cast<std::size_t>(data.rows());
  Matrix centers(static_cast<Index>(k), data.cols());
  std::vector<bool> chosen(n, false);
  std::vector<double> min_d2(n, std::numeric_limits<double>::infinity());
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  auto take = [&](std::size_t c, std::size_t idx) {
    chosen[idx] = true;
    centers.row(static_cast<Index>(c)) = data.row(static_cast<Index>(idx));
    for (std::size_t i = 0; i < n; ++i)
      min_d2[i] = std::min(min_d2[i], (data.row(static_cast<Index>(i)) - centers.row(static_cast<Index>(c))).squaredNorm());
  };
  // Uniform pick among points not yet used as centers.
  auto uniform_unchosen = [&]() {
    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < n; ++i)
      if (!chosen[i]) pool.push_back(i);
    const auto r = static_cast<std::size_t>(unif(rng) * static_cast<double>(pool.size()));
    return pool[std::min(r, pool.size() - 1)];
  };

  take(0, uniform_unchosen());
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (auto d : min_d2) total += d;
    if (total <= 0.0) {
      take(c, uniform_unchosen());
      continue;
    }
    const double target = unif(rng) * total;
    double acc = 0.0;
    std::size_t pick = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (min_d2[i] <= 0.0) continue;
      acc += min_d2[i];
      pick = i;
      if (acc > target) break;
    }
    take(c, pick);
  }
  return centers;
}

// Cluster means. An empty cluster takes over the point farthest from its
// current centroid, which is then removed from its old cluster.
inline Matrix update_centers(const Matrix& data, Assignment& a, std::size_t k) {
  const Index d = data.cols();
  Matrix sums = Matrix::Zero(static_cast<Index>(k), d);
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t i = 0; i < a.labels.size(); ++i) {
    sums.row(static_cast<Index>(a.labels[i])) += data.row(static_cast<Index>(i));
    ++counts[a.labels[i]];
  }
  for (std::size_t c = 0; c < k; ++c) {
    if (counts[c] > 0) continue;
    std::size_t far = a.labels.size();
    double far_d = -1.0;
    for (std::size_t i = 0; i < a.labels.size(); ++i)
      if (counts[a.labels[i]] > 1 && a.sq_dist[i] > far_d) {
        far_d = a.sq_dist[i];
        far = i;
      }
    if (far == a.labels.size()) continue;  // unreachable while k <= n
    const auto old = a.labels[far];
    sums.row(static_cast<Index>(old)) -= data.row(static_cast<Index>(far));
    --counts[old];
    sums.row(static_cast<Index>(c)) = data.row(static_cast<Index>(far));
    counts[c] = 1;
    a.labels[far] = c;
    a.sq_dist[far] = 0.0;
  }
  for (std::size_t c = 0; c < k; ++c) sums.row(static_cast<Index>(c)) /= static_cast<double>(counts[c]);
  return sums;
}

inline KMeansResult kmeans_single(const Matrix& data, const KMeansConfig& cfg, std::mt19937_64& rng) {
  KMeansResult r;
  Matrix centers = kmeanspp_seed(data, cfg.k, rng);
  Assignment a = assign_nearest(data, centers);
  r.inertia_history.push_back(a.inertia);
  for (std::size_t it = 1; it <= cfg.max_iter; ++it) {
    Assignment moved = a;
    Matrix next_centers = update_centers(data, moved, cfg.k);
    Assignment next = assign_nearest(data, next_centers);
    r.iterations_run = it;
    const bool unchanged = next.labels == a.labels;
    const double improvement = a.inertia - next.inertia;
    centers = std::move(next_centers);
    a = std::move(next);
    r.inertia_history.push_back(a.inertia);
    if (unchanged || improvement < cfg.tol * a.inertia) break;
  }
  // Coincident centers leave a cluster empty after the last assignment.
  std::vector<std::size_t> sizes(cfg.k, 0);
  for (auto l : a.labels) ++sizes[l];
  if (std::find(sizes.begin(), sizes.end(), std::size_t{0}) != sizes.end()) centers = update_centers(data, a, cfg.k);
  r.partition = Partition(std::move(a.labels), cfg.k);
  r.centroids = std::move(centers);
  r.inertia = inertia(data, r.partition, r.centroids);
  return r;
}

}  // namespace detail

/// k-means++ seeding followed by Lloyd refinement, best of `n_init` restarts
/// by inertia. Restart r draws from its own substream derived from the seed,
/// so the result does not depend on the order restarts are executed in.
inline KMeansResult kmeans(const Matrix& data, const KMeansConfig& cfg) {
  cfg.validate();
  if (data.rows() < 1) fail_config("kmeans: empty data");
  if (static_cast<Index>(cfg.k) > data.rows())
    fail_config("kmeans: k=", cfg.k, " exceeds n=", data.rows());
  check_finite(data, "kmeans input");

  KMeansResult best;
  bool have = false;
  for (std::size_t r = 0; r < cfg.n_init; ++r) {
    std::mt19937_64 rng(derive_seed(cfg.seed, r));
    auto res = detail::kmeans_single(data, cfg, rng);
    if (!have || res.inertia < best.inertia) {
      best = std::move(res);
      have = true;
    }
  }
  return best;
}

inline KMeansResult kmeans(const FeatureView& view, const KMeansConfig& cfg) { return kmeans(view.data, cfg); }

}  // namespace dmvc
