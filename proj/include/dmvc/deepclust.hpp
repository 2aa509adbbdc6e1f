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

// Centroid-based deep clustering with a KL objective (DEC), optionally
// combined with the autoencoder reconstruction loss (IDEC).
//
// Soft assignments use a Student-t kernel,
//
//   q_ij = (1 + |z_i - mu_j|^2 / alpha)^(-(alpha+1)/2) / sum_l (...)
//
// and the target sharpens them, p_ij = (q_ij^2 / f_j) / sum_l (q_il^2 / f_l)
// with f_j = sum_i q_ij. During optimization p is held fixed between
// refreshes; each refresh recomputes it from the full dataset.

#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "dmvc/kmeans.hpp"
#include "dmvc/nnet.hpp"

namespace dmvc {

struct DecState {
  Matrix centroids;             // k x e; empty means "initialize with kmeans"
  double alpha = 1.0;           // Student-t degrees of freedom
  double gamma = 0.1;           // clustering-loss weight in the IDEC objective
  std::size_t update_interval = 0;  // batches between target refreshes; 0 = one epoch
  double stop_delta = 0.001;    // stop when fewer labels than this fraction change
  std::size_t kmeans_n_init = 20;

  void validate() const {
    if (!(alpha > 0.0)) fail_config("alpha must be > 0");
    if (!(gamma >= 0.0)) fail_config("gamma must be >= 0");
    if (!(stop_delta >= 0.0)) fail_config("stop_delta must be >= 0");
    if (kmeans_n_init < 1) fail_config("kmeans_n_init must be >= 1");
    if (centroids.size() > 0) check_finite(centroids, "centroids");
  }
};

inline Matrix soft_assign(const Matrix& embeddings, const Matrix& centroids, double alpha = 1.0) {
  if (embeddings.cols() != centroids.cols())
    fail_config("soft_assign: embedding dim ", embeddings.cols(), " vs centroid dim ", centroids.cols());
  if (centroids.rows() < 1) fail_config("soft_assign: no centroids");
  const double power = -(alpha + 1.0) / 2.0;
  Matrix q(embeddings.rows(), centroids.rows());
  for (Index i = 0; i < embeddings.rows(); ++i) {
    for (Index j = 0; j < centroids.rows(); ++j)
      q(i, j) = std::pow(1.0 + (embeddings.row(i) - centroids.row(j)).squaredNorm() / alpha, power);
    q.row(i) /= q.row(i).sum();
  }
  return q;
}

// p_ij = q_ij^2 / f_j renormalized to the mass of row i of q. When f = q
// (a single sample) the scale factor is exactly 1 and p reproduces q bit for bit.
inline Matrix target_distribution(const Matrix& q) {
  const Vector freq = q.colwise().sum().transpose();
  Matrix p(q.rows(), q.cols());
  for (Index i = 0; i < q.rows(); ++i) {
    for (Index j = 0; j < q.cols(); ++j) p(i, j) = q(i, j) * (q(i, j) / freq(j));
    p.row(i) *= q.row(i).sum() / p.row(i).sum();
  }
  return p;
}

/// sum_i sum_j p_ij log(p_ij / q_ij), with 0 log 0 = 0.
inline double kl_cluster_loss(const Matrix& p, const Matrix& q) {
  if (p.rows() != q.rows() || p.cols() != q.cols()) fail_config("kl: shape mismatch");
  double total = 0.0;
  for (Index i = 0; i < p.rows(); ++i)
    for (Index j = 0; j < p.cols(); ++j) {
      if (p(i, j) == 0.0) continue;
      if (q(i, j) <= 0.0) fail_config("kl: q is zero where p is positive at (", i, ",", j, ")");
      total += p(i, j) * std::log(p(i, j) / q(i, j));
    }
  return total;
}

struct ClusterLossGrad {
  double value = 0.0;
  Matrix d_embeddings;
  Matrix d_centroids;
};

/// `scale` * KL(p || q(z, mu)) and its gradients w.r.t. z and mu, p fixed.
inline ClusterLossGrad cluster_loss(const Matrix& z, const Matrix& centroids, const Matrix& p, double alpha, double scale) {
  const Matrix q = soft_assign(z, centroids, alpha);
  if (p.rows() != q.rows() || p.cols() != q.cols()) fail_config("cluster_loss: target shape mismatch");
  ClusterLossGrad g;
  g.value = scale * kl_cluster_loss(p, q);
  g.d_embeddings = Matrix::Zero(z.rows(), z.cols());
  g.d_centroids = Matrix::Zero(centroids.rows(), centroids.cols());
  for (Index i = 0; i < z.rows(); ++i)
    for (Index j = 0; j < centroids.rows(); ++j) {
      const auto diff = z.row(i) - centroids.row(j);
      const double coeff = scale * (p(i, j) - q(i, j)) * (alpha + 1.0) / (alpha + diff.squaredNorm());
      g.d_embeddings.row(i) += coeff * diff;
      g.d_centroids.row(j) -= coeff * diff;
    }
  return g;
}

// ---------------------------------------------------------------------------
// Training objectives

inline Index input_rows(const Matrix& m) { return m.rows(); }
inline Index input_rows(const std::vector<Matrix>& ms) { return ms.empty() ? 0 : ms.front().rows(); }

// Per-batch losses: L_recon + gamma * L_cluster for IDEC, L_cluster for DEC.
// The clustering term is the batch mean of the per-sample KL divergence.
struct StepLoss {
  double recon = 0.0;
  double cluster = 0.0;
  double total = 0.0;
};

struct IdecLossGrads {
  StepLoss loss;
  MlpGrads encoder;
  MlpGrads decoder;
  Matrix centroids;
};

inline IdecLossGrads idec_loss(const Mlp& encoder, const Mlp& decoder, const Matrix& centroids, const Matrix& x_batch,
                               const Matrix& p_batch, double alpha, double gamma) {
  MlpCache enc_cache, dec_cache;
  const Matrix z = encoder.forward(x_batch, enc_cache);
  const Matrix rec = decoder.forward(z, dec_cache);
  const auto recon = mse_loss(rec, x_batch);
  const auto clus = cluster_loss(z, centroids, p_batch, alpha, 1.0 / static_cast<double>(x_batch.rows()));
  IdecLossGrads g;
  g.loss = {recon.value, clus.value, recon.value + gamma * clus.value};
  g.decoder = decoder.backward(dec_cache, recon.grad);
  g.encoder = encoder.backward(enc_cache, g.decoder.input + gamma * clus.d_embeddings);
  g.centroids = gamma * clus.d_centroids;
  return g;
}

template <typename Model>
struct DecLossGrads {
  StepLoss loss;
  typename Model::Grads model;
  Matrix centroids;
};

template <typename Model>
DecLossGrads<Model> dec_loss(const Model& model, const typename Model::Input& batch, const Matrix& centroids,
                             const Matrix& p_batch, double alpha) {
  typename Model::Cache cache;
  const Matrix z = model.forward(batch, cache);
  const auto clus = cluster_loss(z, centroids, p_batch, alpha, 1.0 / static_cast<double>(z.rows()));
  DecLossGrads<Model> g;
  g.loss = {0.0, clus.value, clus.value};
  g.model = model.backward(cache, clus.d_embeddings);
  g.centroids = clus.d_centroids;
  return g;
}

// ---------------------------------------------------------------------------
// Alternating optimization

struct TrainLogRow {
  std::size_t iteration = 0;
  double recon = 0.0;          // full-data reconstruction MSE (0 without a decoder)
  double cluster = 0.0;        // full-data mean KL
  double label_change = 0.0;   // fraction of hard labels changed since last refresh
};

struct ClusteringRun {
  std::vector<std::size_t> labels;
  std::size_t iterations = 0;
  std::vector<TrainLogRow> log;
};

namespace detail {

// Drives the refresh / minibatch loop. `embed()` maps the full dataset,
// `step(idx, p_batch, iteration)` takes one optimizer step on the rows `idx`
// and returns its loss, `recon_full()` reports full-data reconstruction.
template <typename Embed, typename Step, typename Recon>
ClusteringRun alternate(Index n, const Matrix& centroids, const TrainConfig& cfg, const DecState& state,
                        const std::string& stage, Embed&& embed, Step&& step, Recon&& recon_full) {
  ClusteringRun run;
  const std::size_t interval =
      state.update_interval > 0 ? state.update_interval
                                : (static_cast<std::size_t>(n) + cfg.batch_size - 1) / cfg.batch_size;
  std::mt19937_64 rng(derive_seed(cfg.seed, 7));
  std::vector<std::vector<Index>> batches;
  std::size_t next_batch = 0;
  Matrix p;
  std::vector<std::size_t> prev = row_argmax(soft_assign(embed(), centroids, state.alpha));

  for (std::size_t it = 0; it < cfg.max_iter; ++it) {
    if (it % interval == 0) {
      const Matrix q = soft_assign(embed(), centroids, state.alpha);
      p = target_distribution(q);
      auto labels = row_argmax(q);
      std::size_t changed = 0;
      for (std::size_t i = 0; i < labels.size(); ++i) changed += labels[i] != prev[i];
      const double delta = static_cast<double>(changed) / static_cast<double>(labels.size());
      prev = std::move(labels);
      run.log.push_back({it, recon_full(), kl_cluster_loss(p, q) / static_cast<double>(n), delta});
      if (it > 0 && delta < state.stop_delta) break;
    }
    if (next_batch == batches.size()) {
      batches = epoch_batches(n, cfg.batch_size, rng);
      next_batch = 0;
    }
    const auto& idx = batches[next_batch++];
    const StepLoss loss = step(idx, take_rows(p, idx), it);
    if (!std::isfinite(loss.total)) throw DivergenceError(stage, it);
    run.iterations = it + 1;
  }
  run.labels = row_argmax(soft_assign(embed(), centroids, state.alpha));
  return run;
}

inline Matrix init_centroids(const Matrix& z, std::size_t k, const DecState& state, Seed seed) {
  if (state.centroids.size() > 0) {
    if (state.centroids.rows() != static_cast<Index>(k) || state.centroids.cols() != z.cols())
      fail_config("initial centroids have shape ", state.centroids.rows(), "x", state.centroids.cols(), ", expected ", k,
                  "x", z.cols());
    return state.centroids;
  }
  KMeansConfig km;
  km.k = k;
  km.n_init = state.kmeans_n_init;
  km.seed = seed;
  return kmeans(z, km).centroids;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// IDEC

struct IdecConfig {
  TrainConfig pretrain{1e-3, 256, 200, 0, 0, {}};
  TrainConfig clustering{1e-4, 256, 0, 20000, 0, {}};
  DecState state;
};

struct IdecResult {
  Partition partition;
  Mlp encoder;
  Mlp decoder;
  Matrix centroids;
  Partition init_partition;  // kmeans labels on the pretrained embeddings
  double pretrain_mse = 0.0;
  ClusteringRun run;
};

/// Autoencoder pretraining, kmeans centroid initialization on the embeddings,
/// then joint optimization of encoder, decoder and centroids on
/// L_recon + gamma * L_cluster. With gamma = 0 the final partition is kmeans
/// on the final embeddings.
inline IdecResult idec_train(const Matrix& x, std::size_t k, const MlpSpec& encoder_spec, const IdecConfig& cfg) {
  cfg.state.validate();
  cfg.clustering.validate();
  if (k < 1 || static_cast<Index>(k) > x.rows()) fail_config("idec: k=", k, " invalid for n=", x.rows());
  check_finite(x, "idec input");

  auto ae = train_autoencoder(x, encoder_spec, cfg.pretrain);
  IdecResult r;
  r.encoder = std::move(ae.encoder);
  r.decoder = std::move(ae.decoder);
  r.pretrain_mse = ae.final_mse;
  const Seed seed = cfg.clustering.seed;
  r.centroids = detail::init_centroids(r.encoder.forward(x), k, cfg.state, derive_seed(seed, 10));
  r.init_partition = Partition(row_argmax(soft_assign(r.encoder.forward(x), r.centroids, cfg.state.alpha)), k);

  Adam opt(cfg.clustering.adam);
  const double lr = cfg.clustering.learning_rate;
  const auto& st = cfg.state;
  r.run = detail::alternate(
      x.rows(), r.centroids, cfg.clustering, st, "idec clustering", [&] { return r.encoder.forward(x); },
      [&](const std::vector<Index>& idx, const Matrix& pb, std::size_t) {
        auto g = idec_loss(r.encoder, r.decoder, r.centroids, take_rows(x, idx), pb, st.alpha, st.gamma);
        if (!std::isfinite(g.loss.total)) return g.loss;
        opt.step();
        r.encoder.apply(g.encoder, opt, lr, 0);
        r.decoder.apply(g.decoder, opt, lr, r.encoder.slot_count());
        opt.update(r.encoder.slot_count() + r.decoder.slot_count(), r.centroids, g.centroids, lr);
        return g.loss;
      },
      [&] { return reconstruction_mse(r.encoder, r.decoder, x); });

  if (st.gamma == 0.0) {
    KMeansConfig km;
    km.k = k;
    km.n_init = st.kmeans_n_init;
    km.seed = derive_seed(seed, 11);
    auto res = kmeans(r.encoder.forward(x), km);
    r.centroids = std::move(res.centroids);
    r.partition = std::move(res.partition);
  } else {
    r.partition = Partition(std::move(r.run.labels), k);
  }
  return r;
}

inline IdecResult idec_train(const FeatureView& view, std::size_t k, const MlpSpec& encoder_spec, const IdecConfig& cfg) {
  return idec_train(view.data, k, encoder_spec, cfg);
}

// ---------------------------------------------------------------------------
// DEC fine-tuning of an already pretrained model

template <typename Model>
struct DecResult {
  Partition partition;
  Model model;
  Matrix centroids;
  Partition init_partition;
  ClusteringRun run;
};

/// Clustering-loss-only fine-tuning of `model` (an Mlp or an MvNet). Starts
/// from `state.centroids` when given, otherwise from kmeans on the current
/// embeddings.
template <typename Model>
DecResult<Model> dec_finetune(Model model, const typename Model::Input& data, std::size_t k, const TrainConfig& cfg,
                              const DecState& state) {
  state.validate();
  cfg.validate();
  const Index n = input_rows(data);
  if (k < 1 || static_cast<Index>(k) > n) fail_config("dec: k=", k, " invalid for n=", n);

  DecResult<Model> r{Partition{}, std::move(model), Matrix{}, Partition{}, {}};
  const Matrix z0 = r.model.forward(data);
  r.centroids = detail::init_centroids(z0, k, state, derive_seed(cfg.seed, 10));
  r.init_partition = Partition(row_argmax(soft_assign(z0, r.centroids, state.alpha)), k);

  Adam opt(cfg.adam);
  r.run = detail::alternate(
      n, r.centroids, cfg, state, "dec fine-tuning", [&] { return r.model.forward(data); },
      [&](const std::vector<Index>& idx, const Matrix& pb, std::size_t) {
        auto g = dec_loss(r.model, take_rows(data, idx), r.centroids, pb, state.alpha);
        if (!std::isfinite(g.loss.total)) return g.loss;
        opt.step();
        r.model.apply(g.model, opt, cfg.learning_rate, 0);
        opt.update(r.model.slot_count(), r.centroids, g.centroids, cfg.learning_rate);
        return g.loss;
      },
      [] { return 0.0; });
  r.partition = Partition(std::move(r.run.labels), k);
  return r;
}

}  // namespace dmvc
