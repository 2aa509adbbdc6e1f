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
#include <cmath>
#include <vector>

#include "dmvc/dataio.hpp"

namespace dmvc {

struct ContingencyTable {
  // counts[a][b] = number of samples with u = a and v = b
  std::vector<std::vector<std::size_t>> counts;
  std::size_t n = 0;

  std::vector<std::size_t> row_sums() const {
    std::vector<std::size_t> s(counts.size(), 0);
    for (std::size_t a = 0; a < counts.size(); ++a)
      for (auto c : counts[a]) s[a] += c;
    return s;
  }

  std::vector<std::size_t> col_sums() const {
    std::vector<std::size_t> s(counts.empty() ? 0 : counts.front().size(), 0);
    for (const auto& row : counts)
      for (std::size_t b = 0; b < row.size(); ++b) s[b] += row[b];
    return s;
  }
};

inline ContingencyTable contingency(const Partition& u, const Partition& v) {
  if (u.size() != v.size()) fail_config("partition length mismatch: ", u.size(), " vs ", v.size());
  ContingencyTable t;
  t.n = u.size();
  t.counts.assign(u.k(), std::vector<std::size_t>(v.k(), 0));
  for (std::size_t i = 0; i < u.size(); ++i) ++t.counts[u[i]][v[i]];
  return t;
}

namespace detail {

// Terms are added in sorted order so the result does not depend on how the
// clusters are numbered or which partition comes first.
inline double sorted_sum(std::vector<double> terms) {
  std::sort(terms.begin(), terms.end());
  double s = 0.0;
  for (double t : terms) s += t;
  return s;
}

// Entropy of a count vector in nats; 0 log 0 = 0.
inline double entropy(const std::vector<std::size_t>& counts, double n) {
  std::vector<double> terms;
  for (auto c : counts)
    if (c > 0) {
      const double p = static_cast<double>(c) / n;
      terms.push_back(-p * std::log(p));
    }
  return sorted_sum(std::move(terms));
}

}  // namespace detail

inline double mutual_information(const ContingencyTable& t) {
  const double n = static_cast<double>(t.n);
  const auto ru = t.row_sums();
  const auto cv = t.col_sums();
  std::vector<double> terms;
  for (std::size_t a = 0; a < t.counts.size(); ++a)
    for (std::size_t b = 0; b < t.counts[a].size(); ++b) {
      const auto c = t.counts[a][b];
      if (c == 0) continue;
      const double nab = static_cast<double>(c);
      terms.push_back(nab / n * std::log(nab * n / (static_cast<double>(ru[a]) * static_cast<double>(cv[b]))));
    }
  return std::max(detail::sorted_sum(std::move(terms)), 0.0);
}

/// Normalized mutual information, I(U;V) / ((H(U) + H(V)) / 2).
///
/// Conventions: 1 when both partitions are a single cluster, 0 when exactly
/// one of them is. The result is clamped to [0, 1].
inline double nmi(const Partition& u, const Partition& v) {
  const auto t = contingency(u, v);
  if (t.n == 0) fail_config("nmi of empty partitions");
  const double n = static_cast<double>(t.n);
  const double hu = detail::entropy(t.row_sums(), n);
  const double hv = detail::entropy(t.col_sums(), n);
  if (hu == 0.0 && hv == 0.0) return 1.0;
  if (hu == 0.0 || hv == 0.0) return 0.0;
  const double value = mutual_information(t) / (0.5 * (hu + hv));
  return std::clamp(value, 0.0, 1.0);
}

/// Sum of squared distances of every sample to its assigned centroid.
inline double inertia(const Matrix& data, const Partition& partition, const Matrix& centroids) {
  if (static_cast<Index>(partition.size()) != data.rows())
    fail_config("inertia: partition has ", partition.size(), " entries for ", data.rows(), " rows");
  if (centroids.cols() != data.cols())
    fail_config("inertia: centroid dim ", centroids.cols(), " vs data dim ", data.cols());
  if (static_cast<Index>(partition.k()) > centroids.rows())
    fail_config("inertia: ", centroids.rows(), " centroids for k=", partition.k());
  double total = 0.0;
  for (Index i = 0; i < data.rows(); ++i)
    total += (data.row(i) - centroids.row(static_cast<Index>(partition[static_cast<std::size_t>(i)]))).squaredNorm();
  return total;
}

inline double inertia(const FeatureView& view, const Partition& partition, const Matrix& centroids) {
  return inertia(view.data, partition, centroids);
}

}  // namespace dmvc
