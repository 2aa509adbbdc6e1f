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

#include <random>

#include <gtest/gtest.h>

#include "dmvc/agglomerative.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace dmvc;

namespace {

using Labels = std::vector<std::size_t>;

// Every cluster of `fine` lies inside one cluster of `coarse`.
bool nested(const Partition& fine, const Partition& coarse) {
  std::vector<std::size_t> parent(fine.k(), coarse.k());
  for (std::size_t i = 0; i < fine.size(); ++i) {
    auto& p = parent[fine[i]];
    if (p == coarse.k()) p = coarse[i];
    if (p != coarse[i]) return false;
  }
  return true;
}

}  // namespace

TEST(Ward, NearestPairFirst) {
  Matrix x(3, 1);
  x << 0, 1, 5;
  EXPECT_EQ(agglomerative_features(x, {2, Linkage::ward}).assignments(), (Labels{0, 0, 1}));
}

TEST(Ward, KEqualsNIsSingletons) {
  std::mt19937_64 rng(1);
  const Matrix x = oracle::random_matrix(5, 2, rng);
  EXPECT_EQ(agglomerative_features(x, {5, Linkage::ward}).assignments(), (Labels{0, 1, 2, 3, 4}));
}

TEST(Ward, TwoBlobsMatchNaiveMergeSequence) {
  Matrix x(6, 2);
  x << 0, 0, 0.3, 0.1, 0.1, 0.4, 8, 8, 8.2, 7.9, 7.7, 8.3;
  EXPECT_EQ(agglomerative_features(x, {2, Linkage::ward}).assignments(), (Labels{0, 0, 0, 1, 1, 1}));
  const auto expected = oracle::ward(x);
  const auto tree = ward_tree(x);
  for (std::size_t k = 1; k <= 6; ++k) EXPECT_EQ(tree.cut(k), expected[k]) << "k=" << k;
}

TEST(Ward, RandomPointsMatchNaiveOracle) {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix x = oracle::random_matrix(7, 3, rng);
    const auto expected = oracle::ward(x);
    const auto tree = ward_tree(x);
    for (std::size_t k = 1; k <= 7; ++k) EXPECT_EQ(tree.cut(k), expected[k]) << "trial " << trial << " k=" << k;
  }
}

TEST(AverageLinkage, Examples) {
  Matrix d(3, 3);
  d << 0, 1, 9, 1, 0, 9, 9, 9, 0;
  EXPECT_EQ(agglomerative_distance(d, {2, Linkage::average}).assignments(), (Labels{0, 0, 1}));
}

TEST(AverageLinkage, EqualDistancesTieBreakByIndex) {
  const Matrix d = Matrix::Ones(5, 5) - Matrix::Identity(5, 5);
  const auto a = agglomerative_distance(d, {2, Linkage::average});
  // (0,1) merge first; {0,1} vs 2 stays at 1, so 2 joins, then 3; 4 is last
  EXPECT_EQ(a.assignments(), (Labels{0, 0, 0, 0, 1}));
  EXPECT_EQ(agglomerative_distance(d, {2, Linkage::average}), a);
}

TEST(AverageLinkage, HandTraceFivePoints) {
  Matrix d(5, 5);
  d << 0, 2, 6, 10, 9,  //
      2, 0, 5, 9, 8,    //
      6, 5, 0, 4, 5,    //
      10, 9, 4, 0, 3,   //
      9, 8, 5, 3, 0;
  // UPGMA by hand: {0,1}@2, {3,4}@3, {2,3,4}@4.5, all @7.8333
  const auto tree = average_linkage_tree(d);
  ASSERT_EQ(tree.merges.size(), 4u);
  EXPECT_EQ(tree.merges[0].a, 0u);
  EXPECT_EQ(tree.merges[0].b, 1u);
  EXPECT_DOUBLE_EQ(tree.merges[0].cost, 2.0);
  EXPECT_EQ(tree.merges[1].a, 3u);
  EXPECT_EQ(tree.merges[1].b, 4u);
  EXPECT_DOUBLE_EQ(tree.merges[1].cost, 3.0);
  EXPECT_EQ(tree.merges[2].a, 2u);
  EXPECT_EQ(tree.merges[2].b, 3u);
  EXPECT_DOUBLE_EQ(tree.merges[2].cost, 4.5);
  EXPECT_NEAR(tree.merges[3].cost, 47.0 / 6.0, 1e-12);
  EXPECT_EQ(tree.cut(3).assignments(), (Labels{0, 0, 1, 2, 2}));
  EXPECT_EQ(tree.cut(2).assignments(), (Labels{0, 0, 1, 1, 1}));
}

TEST(AverageLinkage, RandomMatricesMatchNaiveOracle) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const Index n = 5 + trial % 3;
    const Matrix d = oracle::random_distances(n, rng);
    const auto expected = oracle::upgma(d);
    const auto tree = average_linkage_tree(d);
    for (std::size_t k = 1; k <= static_cast<std::size_t>(n); ++k) EXPECT_EQ(tree.cut(k), expected[k]);
  }
}

TEST(AverageLinkage, RecoversPartitionFromSameClusterDistance) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 10; ++trial) {
    const auto labels = oracle::random_labels(30, 4, rng);
    const auto truth = Partition::from_labels(labels).canonical();
    Matrix d(30, 30);
    for (Index i = 0; i < 30; ++i)
      for (Index j = 0; j < 30; ++j) d(i, j) = labels[static_cast<std::size_t>(i)] == labels[static_cast<std::size_t>(j)] ? 0.0 : 1.0;
    EXPECT_EQ(agglomerative_distance(d, {truth.k(), Linkage::average}), truth);
  }
}

TEST(Agglomerative, CutsAreNested) {
  std::mt19937_64 rng(3);
  const Matrix x = oracle::random_matrix(25, 2, rng);
  const auto ward = ward_tree(x);
  const auto avg = average_linkage_tree(oracle::random_distances(25, rng));
  for (std::size_t k = 1; k < 25; ++k) {
    EXPECT_TRUE(nested(ward.cut(k + 1), ward.cut(k)));
    EXPECT_TRUE(nested(avg.cut(k + 1), avg.cut(k)));
  }
}

TEST(Agglomerative, Errors) {
  Matrix d(2, 2);
  d << 0, 1, 2, 0;
  EXPECT_THROW_MSG(agglomerative_distance(d, {1, Linkage::average}), ConfigError, "asymmetric");
  d << 0, -1, -1, 0;
  EXPECT_THROW_MSG(agglomerative_distance(d, {1, Linkage::average}), ConfigError, "negative");
  EXPECT_THROW(agglomerative_distance(Matrix::Zero(2, 2), {3, Linkage::average}), ConfigError);
  EXPECT_THROW(agglomerative_features(Matrix::Zero(2, 2), {3, Linkage::ward}), ConfigError);
  EXPECT_THROW(agglomerative_features(Matrix::Zero(2, 2), {1, Linkage::average}), ConfigError);
}
