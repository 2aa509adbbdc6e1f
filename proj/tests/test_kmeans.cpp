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

#include <algorithm>
#include <limits>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "dmvc/kmeans.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace dmvc;

namespace {

KMeansConfig config(std::size_t k, Seed seed = 0, std::size_t n_init = 10) {
  KMeansConfig c;
  c.k = k;
  c.seed = seed;
  c.n_init = n_init;
  return c;
}

}  // namespace

TEST(KMeans, ForcedOptimum) {
  Matrix x(4, 2);
  x << 0, 0, 0, 0.1, 10, 10, 10, 10.1;
  const auto r = kmeans(x, config(2));
  EXPECT_EQ(r.partition.canonical().assignments(), (std::vector<std::size_t>{0, 0, 1, 1}));
  const Index first = static_cast<Index>(r.partition[0]);
  EXPECT_NEAR(r.centroids(first, 0), 0.0, 1e-12);
  EXPECT_NEAR(r.centroids(first, 1), 0.05, 1e-12);
  EXPECT_NEAR(r.centroids(1 - first, 0), 10.0, 1e-12);
  EXPECT_NEAR(r.centroids(1 - first, 1), 10.05, 1e-12);
  EXPECT_NEAR(r.inertia, 0.01, 1e-12);
}

TEST(KMeans, KEqualsN) {
  std::mt19937_64 rng(5);
  const Matrix x = oracle::random_matrix(7, 3, rng);
  const auto r = kmeans(x, config(7));
  EXPECT_EQ(r.inertia, 0.0);
  auto sorted = r.partition.assignments();
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i) EXPECT_EQ(sorted[i], i);
}

TEST(KMeans, MatchesExhaustiveTwoPartition) {
  std::mt19937_64 rng(77);
  const Matrix x = oracle::random_matrix(8, 2, rng);
  const auto best = oracle::exhaustive_two_means(x);
  const auto r = kmeans(x, config(2, 9));
  // same summation order on both sides: compare canonical label vectors
  EXPECT_EQ(oracle::partition_sse(x, r.partition.canonical().assignments(), 2),
            oracle::partition_sse(x, Partition(best.labels, 2).canonical().assignments(), 2));
  EXPECT_NEAR(r.inertia, best.sse, 1e-12 * best.sse);
}

TEST(KMeans, InertiaMatchesRecomputation) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 10; ++t) {
    const Matrix x = oracle::random_matrix(40, 3, rng);
    const auto r = kmeans(x, config(4, static_cast<Seed>(t)));
    EXPECT_NEAR(r.inertia, inertia(x, r.partition, r.centroids), 1e-9 * r.inertia);
  }
}

TEST(KMeans, InertiaNonIncreasingAcrossIterations) {
  std::mt19937_64 rng(8);
  for (int t = 0; t < 20; ++t) {
    const Matrix x = oracle::random_matrix(60, 2, rng);
    auto cfg = config(5, static_cast<Seed>(t), 1);
    cfg.tol = 0.0;
    const auto r = kmeans(x, cfg);
    ASSERT_GE(r.inertia_history.size(), 2u);
    for (std::size_t i = 1; i < r.inertia_history.size(); ++i)
      EXPECT_LE(r.inertia_history[i], r.inertia_history[i - 1] * (1 + 1e-12));
  }
}

TEST(KMeans, InertiaInvariantUnderRowPermutation) {
  std::mt19937_64 rng(21);
  Matrix x(60, 2);
  // three well separated blobs so every restart reaches the same optimum
  for (Index i = 0; i < 60; ++i) {
    x.row(i) = oracle::random_matrix(1, 2, rng, 0.3);
    x(i, 0) += 10.0 * static_cast<double>(i % 3);
  }
  std::vector<Index> perm(60);
  std::iota(perm.begin(), perm.end(), Index{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  const auto a = kmeans(x, config(3, 1));
  const auto b = kmeans(take_rows(x, perm), config(3, 2));
  EXPECT_NEAR(a.inertia, b.inertia, 1e-9 * a.inertia);
}

TEST(KMeans, DeterministicAndSeedSensitive) {
  std::mt19937_64 rng(4);
  const Matrix x = oracle::random_matrix(50, 2, rng);
  const auto a = kmeans(x, config(6, 10, 1));
  const auto b = kmeans(x, config(6, 10, 1));
  EXPECT_EQ(a.partition, b.partition);
  EXPECT_EQ(a.centroids, b.centroids);
}

TEST(KMeans, DuplicatePointsStillFillEveryCluster) {
  Matrix x = Matrix::Zero(6, 2);
  x(5, 0) = 1.0;
  const auto r = kmeans(x, config(3));
  std::vector<std::size_t> counts(3, 0);
  for (auto a : r.partition.assignments()) ++counts[a];
  for (auto c : counts) EXPECT_GT(c, 0u);
  EXPECT_EQ(r.inertia, 0.0);
}

TEST(KMeans, Errors) {
  EXPECT_THROW_MSG(kmeans(Matrix::Zero(3, 2), config(4)), ConfigError, "exceeds n=3");
  Matrix bad = Matrix::Zero(3, 2);
  bad(0, 0) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(kmeans(bad, config(2)), ConfigError);
  auto c = config(2);
  c.n_init = 0;
  EXPECT_THROW(kmeans(Matrix::Zero(3, 2), c), ConfigError);
}
