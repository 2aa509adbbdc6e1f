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

// Bottom-up hierarchical clustering, naive O(n^3).
//
// Clusters are held in slots; a slot is named by the smallest sample index it
// contains, and a merge of slots i < j always keeps i. Among equal merge
// costs the lexicographically smallest (i, j) wins, so results are fully
// deterministic.

#pragma once

#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "dmvc/dataio.hpp"

namespace dmvc {

enum class Linkage { ward, average };

struct LinkageConfig {
  std::size_t k = 2;
  Linkage linkage = Linkage::ward;
};

struct Merge {
  std::size_t a;  // surviving slot
  std::size_t b;  // absorbed slot, a < b
  double cost;
};

// The n-1 merges of a full agglomeration over n samples, in order.
struct MergeTree {
  std::size_t n = 0;
  std::vector<Merge> merges;

  /// Flat partition after the first n-k merges. Labels are numbered by first
  /// appearance in sample order.
  Partition cut(std::size_t k) const {
    if (k < 1 || k > n) fail_config("cannot cut ", n, " samples into k=", k, " clusters");
    std::vector<std::size_t> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](std::size_t x) {
      while (parent[x] != x) x = parent[x] = parent[parent[x]];
      return x;
    };
    for (std::size_t m = 0; m < n - k; ++m) parent[find(merges[m].b)] = find(merges[m].a);
    std::vector<std::size_t> label_of(n, n);
    std::vector<std::size_t> out(n);
    std::size_t next = 0;
    for (std::size_t i = 0; i < n; ++i) {
      auto& l = label_of[find(i)];
      if (l == n) l = next++;
      out[i] = l;
    }
    return Partition(std::move(out), k);
  }
};

namespace detail {

// Greedy merging over a dense cost matrix; `merge_update(i, j, active)`
// refreshes row/column i after j is folded into it.
template <typename Update>
MergeTree agglomerate(Matrix cost, Update&& merge_update) {
  const auto n = static_cast<std::size_t>(cost.rows());
  MergeTree tree;
  tree.n = n;
  std::vector<bool> active(n, true);
  for (std::size_t step = 0; step + 1 < n; ++step) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t bi = n, bj = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (!active[i]) continue;
      for (std::size_t j = i + 1; j < n; ++j) {
        if (!active[j]) continue;
        const double c = cost(static_cast<Index>(i), static_cast<Index>(j));
        if (c < best || bi == n) {
          best = c;
          bi = i;
          bj = j;
        }
      }
    }
    tree.merges.push_back({bi, bj, best});
    merge_update(cost, bi, bj, active);
    active[bj] = false;
  }
  return tree;
}

}  // namespace detail

/// Ward linkage on raw features: each step merges the pair whose union
/// increases the within-cluster sum of squares the least.
inline MergeTree ward_tree(const Matrix& data) {
  const Index n = data.rows();
  if (n < 1) fail_config("ward: empty data");
  check_finite(data, "ward input");
  Matrix centroids = data;
  std::vector<double> size(static_cast<std::size_t>(n), 1.0);
  auto ward_cost = [&](Index i, Index j) {
    const double si = size[static_cast<std::size_t>(i)], sj = size[static_cast<std::size_t>(j)];
    return si * sj / (si + sj) * (centroids.row(i) - centroids.row(j)).squaredNorm();
  };
  Matrix cost = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j) cost(i, j) = cost(j, i) = ward_cost(i, j);

  return detail::agglomerate(std::move(cost), [&](Matrix& c, std::size_t a, std::size_t b, const std::vector<bool>& active) {
    const auto ia = static_cast<Index>(a), ib = static_cast<Index>(b);
    const double sa = size[a], sb = size[b];
    centroids.row(ia) = (sa * centroids.row(ia) + sb * centroids.row(ib)) / (sa + sb);
    size[a] = sa + sb;
    for (std::size_t l = 0; l < active.size(); ++l) {
      if (!active[l] || l == a || l == b) continue;
      const auto il = static_cast<Index>(l);
      c(ia, il) = c(il, ia) = ward_cost(ia, il);
    }
  });
}

inline void validate_distance_matrix(const Matrix& dist) {
  if (dist.rows() < 1 || dist.rows() != dist.cols())
    fail_config("distance matrix must be square and non-empty, got ", dist.rows(), "x", dist.cols());
  check_finite(dist, "distance matrix");
  for (Index i = 0; i < dist.rows(); ++i) {
    if (dist(i, i) != 0.0) fail_config("distance matrix diagonal must be zero at ", i);
    for (Index j = 0; j < dist.cols(); ++j) {
      if (dist(i, j) < 0.0) fail_config("negative distance at (", i, ",", j, ")");
      if (std::abs(dist(i, j) - dist(j, i)) > 1e-12 * (1.0 + std::abs(dist(i, j))))
        fail_config("distance matrix is asymmetric at (", i, ",", j, ")");
    }
  }
}

/// Average linkage (UPGMA) on a precomputed distance matrix.
inline MergeTree average_linkage_tree(const Matrix& dist) {
  validate_distance_matrix(dist);
  std::vector<double> size(static_cast<std::size_t>(dist.rows()), 1.0);
  return detail::agglomerate(dist, [&](Matrix& c, std::size_t a, std::size_t b, const std::vector<bool>& active) {
    const auto ia = static_cast<Index>(a), ib = static_cast<Index>(b);
    const double sa = size[a], sb = size[b];
    for (std::size_t l = 0; l < active.size(); ++l) {
      if (!active[l] || l == a || l == b) continue;
      const auto il = static_cast<Index>(l);
      c(ia, il) = c(il, ia) = (sa * c(ia, il) + sb * c(ib, il)) / (sa + sb);
    }
    size[a] = sa + sb;
  });
}

inline Partition agglomerative_features(const Matrix& data, const LinkageConfig& cfg) {
  if (cfg.linkage != Linkage::ward) fail_config("feature-space agglomeration supports Ward linkage only");
  if (cfg.k < 1 || static_cast<Index>(cfg.k) > data.rows())
    fail_config("agglomerative: k=", cfg.k, " invalid for n=", data.rows());
  return ward_tree(data).cut(cfg.k);
}

inline Partition agglomerative_features(const FeatureView& view, const LinkageConfig& cfg) {
  return agglomerative_features(view.data, cfg);
}

inline Partition agglomerative_distance(const Matrix& dist, const LinkageConfig& cfg) {
  if (cfg.linkage != Linkage::average) fail_config("distance-matrix agglomeration supports average linkage only");
  if (cfg.k < 1 || static_cast<Index>(cfg.k) > dist.rows())
    fail_config("agglomerative: k=", cfg.k, " invalid for n=", dist.rows());
  return average_linkage_tree(dist).cut(cfg.k);
}

}  // namespace dmvc
