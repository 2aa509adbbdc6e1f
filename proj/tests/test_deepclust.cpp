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

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "dmvc/deepclust.hpp"
#include "dmvc/metrics.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace dmvc;

namespace {

Matrix random_stochastic(Index n, Index k, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  Matrix q(n, k);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < k; ++j) q(i, j) = u(rng);
    q.row(i) /= q.row(i).sum();
  }
  return q;
}

Vector flat(const Matrix& m) { return Eigen::Map<const Vector>(m.data(), m.size()); }
Matrix unflat(const Vector& v, Index rows, Index cols) { return Eigen::Map<const Matrix>(v.data(), rows, cols); }

// Blobs with centers 10 apart on the first axes, unit noise; label = i % k.
struct Blobs {
  Matrix x;
  Partition labels;
};

Blobs blobs(std::size_t k, Index per, Index d, double sep, Seed seed) {
  std::mt19937_64 rng(seed);
  const Index n = static_cast<Index>(k) * per;
  Blobs b{oracle::random_matrix(n, d, rng), {}};
  std::vector<std::size_t> labels(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    labels[static_cast<std::size_t>(i)] = static_cast<std::size_t>(i) % k;
    b.x(i, static_cast<Index>(labels[static_cast<std::size_t>(i)] % static_cast<std::size_t>(d))) += sep;
  }
  b.labels = Partition(labels, k);
  return b;
}

IdecConfig quick_config(Seed seed) {
  IdecConfig cfg;
  cfg.pretrain.epochs = 150;
  cfg.pretrain.batch_size = 32;
  cfg.pretrain.seed = derive_seed(seed, 1);
  cfg.clustering.batch_size = 32;
  cfg.clustering.max_iter = 400;
  cfg.clustering.seed = derive_seed(seed, 2);
  return cfg;
}

}  // namespace

TEST(SoftAssign, Examples) {
  Matrix z = Matrix::Zero(1, 2);
  Matrix mu(2, 2);
  mu << 0, 0, std::sqrt(3.0), 0;
  const Matrix q = soft_assign(z, mu);
  EXPECT_NEAR(q(0, 0), 0.8, 1e-12);
  EXPECT_NEAR(q(0, 1), 0.2, 1e-12);

  std::mt19937_64 rng(1);
  const Matrix zs = oracle::random_matrix(5, 3, rng);
  const Matrix same = Matrix::Ones(2, 3);
  EXPECT_TRUE(soft_assign(zs, same).isApprox(Matrix::Constant(5, 2, 0.5), 1e-15));
  EXPECT_EQ(soft_assign(zs, Matrix::Ones(1, 3)), Matrix::Ones(5, 1));
  EXPECT_THROW(soft_assign(zs, Matrix::Ones(2, 2)), ConfigError);
}

TEST(SoftAssign, RowsAreStochasticForAnyAlpha) {
  std::mt19937_64 rng(2);
  for (double alpha : {0.5, 1.0, 3.0}) {
    const Matrix q = soft_assign(oracle::random_matrix(20, 4, rng, 3.0), oracle::random_matrix(5, 4, rng, 3.0), alpha);
    for (Index i = 0; i < q.rows(); ++i) {
      EXPECT_NEAR(q.row(i).sum(), 1.0, 1e-9);
      EXPECT_GT(q.row(i).minCoeff(), 0.0);
    }
  }
}

TEST(TargetDistribution, HandComputedExample) {
  Matrix q(2, 2);
  q << 0.8, 0.2, 0.6, 0.4;
  const Matrix p = target_distribution(q);
  EXPECT_NEAR(p(0, 0), 0.8727272727272727, 1e-12);
  EXPECT_NEAR(p(0, 1), 0.12727272727272723, 1e-12);
  EXPECT_NEAR(p(1, 0), 0.49090909090909096, 1e-12);
  EXPECT_NEAR(p(1, 1), 0.509090909090909, 1e-12);
}

TEST(TargetDistribution, OneHotRowsAreFixed) {
  Matrix q(3, 3);
  q << 1, 0, 0, 0, 0, 1, 0, 1, 0;
  EXPECT_EQ(target_distribution(q), q);
}

TEST(TargetDistribution, Identities) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const Matrix one = random_stochastic(1, 4, rng);
    EXPECT_TRUE(target_distribution(one).isApprox(one, 1e-15));
    const Matrix q = random_stochastic(12, 4, rng);
    const Matrix p = target_distribution(q);
    const Vector freq = q.colwise().sum().transpose();
    for (Index i = 0; i < q.rows(); ++i) {
      EXPECT_NEAR(p.row(i).sum(), 1.0, 1e-9);
      // the entry with the largest q_ij / f_j never loses mass
      Index j = 0;
      (q.row(i).transpose().array() / freq.array()).maxCoeff(&j);
      EXPECT_GE(p(i, j), q(i, j) - 1e-15);
    }
    EXPECT_EQ(kl_cluster_loss(q, q), 0.0);
  }
}

TEST(TargetDistribution, RowMaximumCanShrink) {
  // row 0 peaks on the crowded column 2, so its peak is damped
  Matrix q(2, 3);
  q << 0.1, 0.3, 0.6, 0.1, 0.1, 0.8;
  const Matrix p = target_distribution(q);
  // column masses (0.2, 0.4, 1.4): p_02 = (0.36/1.4) / (0.01/0.2 + 0.09/0.4 + 0.36/1.4) = 72/149
  EXPECT_NEAR(p(0, 2), 72.0 / 149.0, 1e-12);
  EXPECT_LT(p.row(0).maxCoeff(), q.row(0).maxCoeff());
}

TEST(KlLoss, Examples) {
  Matrix p(1, 2), q(1, 2);
  p << 1, 0;
  q << 0.5, 0.5;
  EXPECT_NEAR(kl_cluster_loss(p, q), 0.6931471805599453, 1e-15);
  Matrix p2(2, 2), q2(2, 2);
  p2 << p, p;
  q2 << q, q;
  EXPECT_NEAR(kl_cluster_loss(p2, q2), 2 * 0.6931471805599453, 1e-15);
  Matrix flipped(1, 2);
  flipped << 0, 1;
  EXPECT_THROW_MSG(kl_cluster_loss(p, flipped), ConfigError, "q is zero");
  EXPECT_THROW(kl_cluster_loss(p, Matrix::Ones(2, 2)), ConfigError);
}

TEST(KlLoss, NonNegativeOnRandomInputs) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 50; ++trial) EXPECT_GE(kl_cluster_loss(random_stochastic(6, 3, rng), random_stochastic(6, 3, rng)), 0.0);
}

TEST(ClusterLoss, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(5);
  for (double alpha : {1.0, 2.5}) {
    const Matrix z = oracle::random_matrix(6, 3, rng);
    const Matrix mu = oracle::random_matrix(4, 3, rng);
    const Matrix p = random_stochastic(6, 4, rng);
    const auto g = cluster_loss(z, mu, p, alpha, 1.0 / 6.0);
    const Vector dz = oracle::numeric_gradient(
        [&](const Vector& v) { return kl_cluster_loss(p, soft_assign(unflat(v, 6, 3), mu, alpha)) / 6.0; }, flat(z));
    const Vector dmu = oracle::numeric_gradient(
        [&](const Vector& v) { return kl_cluster_loss(p, soft_assign(z, unflat(v, 4, 3), alpha)) / 6.0; }, flat(mu));
    EXPECT_LT(oracle::relative_error(flat(g.d_embeddings), dz), 1e-4);
    EXPECT_LT(oracle::relative_error(flat(g.d_centroids), dmu), 1e-4);
    EXPECT_NEAR(g.value, kl_cluster_loss(p, soft_assign(z, mu, alpha)) / 6.0, 1e-15);
  }
}

TEST(IdecLoss, CombinedGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(6);
  const auto enc = Mlp::init(MlpSpec{{5, 6, 3}}, 1);
  const auto dec = Mlp::init(MlpSpec{{3, 6, 5}}, 2);
  const Matrix mu = oracle::random_matrix(4, 3, rng);
  const Matrix x = oracle::random_matrix(7, 5, rng);
  const Matrix p = random_stochastic(7, 4, rng);
  const double gamma = 0.1;
  const auto g = idec_loss(enc, dec, mu, x, p, 1.0, gamma);

  const Index ne = static_cast<Index>(enc.parameter_count());
  const Index nd = static_cast<Index>(dec.parameter_count());
  Vector theta(ne + nd + mu.size());
  theta << enc.flat_parameters(), dec.flat_parameters(), flat(mu);
  Vector analytic(theta.size());
  analytic << Mlp::flatten(g.encoder), Mlp::flatten(g.decoder), flat(g.centroids);

  Mlp e = enc, d = dec;
  const Vector numeric = oracle::numeric_gradient(
      [&](const Vector& t) {
        e.set_flat_parameters(t.head(ne));
        d.set_flat_parameters(t.segment(ne, nd));
        const Matrix m = unflat(t.tail(mu.size()), 4, 3);
        const Matrix z = e.forward(x);
        return mse_loss(d.forward(z), x).value + gamma * kl_cluster_loss(p, soft_assign(z, m)) / 7.0;
      },
      theta);
  EXPECT_LT(oracle::relative_error(analytic, numeric), 1e-4);
  EXPECT_NEAR(g.loss.total, g.loss.recon + gamma * g.loss.cluster, 1e-15);
}

TEST(DecLoss, MlpGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(7);
  const auto model = Mlp::init(MlpSpec{{4, 5, 2}}, 3);
  const Matrix mu = oracle::random_matrix(3, 2, rng);
  const Matrix x = oracle::random_matrix(6, 4, rng);
  const Matrix p = random_stochastic(6, 3, rng);
  const auto g = dec_loss(model, x, mu, p, 1.0);
  Mlp probe = model;
  const Vector numeric = oracle::numeric_gradient(
      [&](const Vector& t) {
        probe.set_flat_parameters(t);
        return kl_cluster_loss(p, soft_assign(probe.forward(x), mu)) / 6.0;
      },
      model.flat_parameters());
  EXPECT_LT(oracle::relative_error(Mlp::flatten(g.model), numeric), 1e-4);
}

TEST(HardLabels, InvariantUnderPositiveRescaling) {
  std::mt19937_64 rng(8);
  const Matrix q = random_stochastic(30, 5, rng);
  EXPECT_EQ(row_argmax(q), row_argmax(Matrix(q * 7.25)));
}

TEST(Idec, SeparatedBlobsAreRecovered) {
  for (Seed seed = 0; seed < 5; ++seed) {
    const auto b = blobs(3, 40, 4, 10.0, seed);
    const auto r = idec_train(b.x, 3, MlpSpec{{4, 16, 3}}, quick_config(seed));
    EXPECT_EQ(nmi(r.partition, b.labels), 1.0) << "seed " << seed;
    EXPECT_EQ(r.centroids.rows(), 3);
    ASSERT_FALSE(r.run.log.empty());
    EXPECT_EQ(r.run.log.front().iteration, 0u);
  }
}

TEST(Idec, ZeroGammaIsKMeansOnFinalEmbeddings) {
  const auto b = blobs(3, 30, 4, 4.0, 11);
  auto cfg = quick_config(11);
  cfg.state.gamma = 0.0;
  const auto r = idec_train(b.x, 3, MlpSpec{{4, 8, 3}}, cfg);
  KMeansConfig km;
  km.k = 3;
  km.n_init = cfg.state.kmeans_n_init;
  km.seed = derive_seed(cfg.clustering.seed, 11);
  EXPECT_EQ(r.partition, kmeans(r.encoder.forward(b.x), km).partition);
}

TEST(Idec, DeterministicGivenSeeds) {
  const auto b = blobs(3, 20, 3, 3.0, 2);
  const auto a = idec_train(b.x, 3, MlpSpec{{3, 8, 3}}, quick_config(2));
  const auto c = idec_train(b.x, 3, MlpSpec{{3, 8, 3}}, quick_config(2));
  EXPECT_EQ(a.partition, c.partition);
  EXPECT_EQ(a.encoder.flat_parameters(), c.encoder.flat_parameters());
  EXPECT_EQ(a.centroids, c.centroids);
}

TEST(Idec, Errors) {
  EXPECT_THROW(idec_train(Matrix::Zero(3, 2), 4, MlpSpec{{2, 2}}, IdecConfig{}), ConfigError);
  IdecConfig bad;
  bad.state.alpha = 0.0;
  EXPECT_THROW(idec_train(Matrix::Zero(3, 2), 2, MlpSpec{{2, 2}}, bad), ConfigError);
}

TEST(DecFinetune, ZeroLearningRateKeepsInitLabels) {
  std::mt19937_64 rng(9);
  const auto model = Mlp::init(MlpSpec{{4, 3}}, 5);
  const Matrix x = oracle::random_matrix(40, 4, rng);
  TrainConfig cfg{0.0, 16, 0, 1, 3, {}};
  const auto r = dec_finetune(model, x, 3, cfg, DecState{});
  EXPECT_EQ(r.partition, r.init_partition);
  EXPECT_EQ(r.model.flat_parameters(), model.flat_parameters());
}

TEST(DecFinetune, PerfectEmbeddingIsAFixedPoint) {
  // identity network on one-hot-like clusters
  Mlp id(MlpSpec{{3, 3}});
  id.layers()[0].weight = Matrix::Identity(3, 3);
  Matrix x(30, 3);
  for (Index i = 0; i < 30; ++i) x.row(i) = 10.0 * Matrix::Identity(3, 3).row(i % 3);
  TrainConfig cfg{1e-4, 8, 0, 200, 0, {}};
  const auto r = dec_finetune(id, x, 3, cfg, DecState{});
  EXPECT_EQ(r.partition, r.init_partition);
  EXPECT_EQ(nmi(r.partition, Partition::from_labels({0, 1, 2, 0, 1, 2, 0, 1, 2, 0, 1, 2, 0, 1, 2, 0, 1, 2, 0, 1, 2, 0, 1, 2,
                                                      0, 1, 2, 0, 1, 2})),
            1.0);
}

TEST(DecFinetune, GivenCentroidsAreUsed) {
  std::mt19937_64 rng(10);
  const auto model = Mlp::init(MlpSpec{{2, 2}}, 1);
  const Matrix x = oracle::random_matrix(10, 2, rng);
  DecState st;
  st.centroids = oracle::random_matrix(2, 2, rng);
  const auto r = dec_finetune(model, x, 2, TrainConfig{0.0, 4, 0, 0, 0, {}}, st);
  EXPECT_EQ(r.centroids, st.centroids);
  st.centroids = Matrix::Zero(3, 2);
  EXPECT_THROW_MSG(dec_finetune(model, x, 2, TrainConfig{}, st), ConfigError, "initial centroids");
}
