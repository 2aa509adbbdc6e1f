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

// Fully connected networks with analytic backprop and Adam.
//
// Batches are row-major in the sense that each row is one sample. Hidden
// layers use ReLU (subgradient 0 at 0), the last layer is linear.

#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "dmvc/dataio.hpp"

namespace dmvc {

struct MlpSpec {
  std::vector<std::size_t> layer_dims;  // input first, output last

  void validate() const {
    if (layer_dims.size() < 2) fail_config("MLP spec needs at least an input and an output dim");
    for (auto d : layer_dims)
      if (d < 1) fail_config("MLP dims must be >= 1");
  }
  std::size_t input_dim() const { return layer_dims.front(); }
  std::size_t output_dim() const { return layer_dims.back(); }
  std::size_t num_layers() const { return layer_dims.size() - 1; }

  // Decoder shape for an autoencoder built on this encoder.
  MlpSpec mirrored() const { return {{layer_dims.rbegin(), layer_dims.rend()}}; }

  bool operator==(const MlpSpec&) const = default;
};

struct DenseLayer {
  Matrix weight;  // out x in
  Vector bias;    // out
};

// Layer inputs and pre-activations saved by a training forward pass.
struct MlpCache {
  std::vector<Matrix> inputs;
  std::vector<Matrix> pre;
};

struct MlpGrads {
  std::vector<DenseLayer> layers;
  Matrix input;  // d loss / d batch
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam optimizer state. Each parameter tensor owns a slot id; moments are
/// created lazily on first update. Call `step()` once per optimizer step,
/// before the `update()` calls of that step.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  void step() { ++t_; }
  std::size_t steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

  template <typename Param, typename Grad>
  void update(std::size_t slot, Eigen::MatrixBase<Param>& param, const Eigen::MatrixBase<Grad>& grad, double lr) {
    if (t_ == 0) fail_config("Adam::update called before step()");
    if (slot >= moments_.size()) moments_.resize(slot + 1);
    auto& [m, v] = moments_[slot];
    if (m.rows() != param.rows() || m.cols() != param.cols()) {
      m = Matrix::Zero(param.rows(), param.cols());
      v = Matrix::Zero(param.rows(), param.cols());
    }
    m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * grad;
    v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    param.derived().array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg_.epsilon);
  }

 private:
  AdamConfig cfg_;
  std::size_t t_ = 0;
  std::vector<std::pair<Matrix, Matrix>> moments_;
};

class Mlp {
 public:
  using Input = Matrix;
  using Cache = MlpCache;
  using Grads = MlpGrads;

  Mlp() = default;

  // All parameters zero.
  explicit Mlp(MlpSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
    for (std::size_t l = 0; l < spec_.num_layers(); ++l)
      layers_.push_back({Matrix::Zero(static_cast<Index>(spec_.layer_dims[l + 1]), static_cast<Index>(spec_.layer_dims[l])),
                         Vector::Zero(static_cast<Index>(spec_.layer_dims[l + 1]))});
  }

  /// Glorot-uniform weights, zero biases.
  static Mlp init(const MlpSpec& spec, Seed seed) {
    Mlp m(spec);
    for (std::size_t l = 0; l < m.layers_.size(); ++l) {
      auto& w = m.layers_[l].weight;
      const double limit = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
      std::mt19937_64 rng(derive_seed(seed, l));
      std::uniform_real_distribution<double> unif(-limit, limit);
      for (Index i = 0; i < w.rows(); ++i)
        for (Index j = 0; j < w.cols(); ++j) w(i, j) = unif(rng);
    }
    return m;
  }

  const MlpSpec& spec() const { return spec_; }
  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::size_t input_dim() const { return spec_.input_dim(); }
  std::size_t output_dim() const { return spec_.output_dim(); }

  Matrix forward(const Matrix& x) const {
    check_input(x);
    Matrix h = x;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      Matrix z = h * layers_[l].weight.transpose();
      z.rowwise() += layers_[l].bias.transpose();
      h = is_last(l) ? std::move(z) : Matrix(z.cwiseMax(0.0));
    }
    return h;
  }

  Matrix forward(const Matrix& x, MlpCache& cache) const {
    check_input(x);
    cache.inputs.clear();
    cache.pre.clear();
    Matrix h = x;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      cache.inputs.push_back(h);
      Matrix z = h * layers_[l].weight.transpose();
      z.rowwise() += layers_[l].bias.transpose();
      h = is_last(l) ? z : Matrix(z.cwiseMax(0.0));
      cache.pre.push_back(std::move(z));
    }
    return h;
  }

  /// Gradients of a loss w.r.t. all parameters and the batch, given
  /// `d_out` = d loss / d output for the cached forward pass.
  MlpGrads backward(const MlpCache& cache, const Matrix& d_out) const {
    if (cache.inputs.size() != layers_.size()) fail_config("backward: cache does not match model");
    MlpGrads g;
    g.layers.resize(layers_.size());
    Matrix delta = d_out;
    for (std::size_t l = layers_.size(); l-- > 0;) {
      if (!is_last(l)) delta = delta.cwiseProduct((cache.pre[l].array() > 0.0).cast<double>().matrix());
      g.layers[l].weight = delta.transpose() * cache.inputs[l];
      g.layers[l].bias = delta.colwise().sum().transpose();
      delta = delta * layers_[l].weight;
    }
    g.input = std::move(delta);
    return g;
  }

  std::size_t parameter_count() const {
    std::size_t c = 0;
    for (const auto& l : layers_) c += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    return c;
  }

  // Layer by layer: weight (row-major) then bias.
  Vector flat_parameters() const { return flatten(layers_); }

  void set_flat_parameters(const Vector& flat) {
    if (static_cast<std::size_t>(flat.size()) != parameter_count()) fail_config("parameter vector has wrong length");
    Index p = 0;
    for (auto& l : layers_) {
      for (Index i = 0; i < l.weight.rows(); ++i)
        for (Index j = 0; j < l.weight.cols(); ++j) l.weight(i, j) = flat(p++);
      for (Index i = 0; i < l.bias.size(); ++i) l.bias(i) = flat(p++);
    }
  }

  static Vector flatten(const std::vector<DenseLayer>& layers) {
    Index total = 0;
    for (const auto& l : layers) total += l.weight.size() + l.bias.size();
    Vector out(total);
    Index p = 0;
    for (const auto& l : layers) {
      for (Index i = 0; i < l.weight.rows(); ++i)
        for (Index j = 0; j < l.weight.cols(); ++j) out(p++) = l.weight(i, j);
      for (Index i = 0; i < l.bias.size(); ++i) out(p++) = l.bias(i);
    }
    return out;
  }

  static Vector flatten(const MlpGrads& g) { return flatten(g.layers); }

  // Slots used: [slot_base, slot_base + slot_count()).
  void apply(const MlpGrads& g, Adam& opt, double lr, std::size_t slot_base = 0) {
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      opt.update(slot_base + 2 * l, layers_[l].weight, g.layers[l].weight, lr);
      opt.update(slot_base + 2 * l + 1, layers_[l].bias, g.layers[l].bias, lr);
    }
  }

  std::size_t slot_count() const { return 2 * layers_.size(); }

  bool all_finite() const {
    for (const auto& l : layers_)
      if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
    return true;
  }

 private:
  bool is_last(std::size_t l) const { return l + 1 == layers_.size(); }

  void check_input(const Matrix& x) const {
    if (static_cast<std::size_t>(x.cols()) != spec_.input_dim())
      fail_config("MLP expects ", spec_.input_dim(), " input columns, got ", x.cols());
  }

  MlpSpec spec_;
  std::vector<DenseLayer> layers_;
};

/// One optimizer step on a single MLP.
inline void adam_step(Mlp& model, const MlpGrads& grads, Adam& opt, double lr) {
  opt.step();
  model.apply(grads, opt, lr);
}

// ---------------------------------------------------------------------------
// Losses

struct LossValue {
  double value = 0.0;
  Matrix grad;  // d value / d prediction
};

/// Mean over every entry of (pred - target)^2.
inline LossValue mse_loss(const Matrix& pred, const Matrix& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) fail_config("mse: shape mismatch");
  const double count = static_cast<double>(pred.size());
  Matrix diff = pred - target;
  return {diff.squaredNorm() / count, 2.0 * diff / count};
}

// ---------------------------------------------------------------------------
// Autoencoder pretraining

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 256;
  std::size_t epochs = 200;
  std::size_t max_iter = 20000;  // update cap for clustering stages
  Seed seed = 0;
  AdamConfig adam;

  void validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) fail_config("learning rate must be >= 0");
    if (batch_size < 1) fail_config("batch size must be >= 1");
  }
};

// Shuffled minibatch index lists for one epoch; the last one may be short.
inline std::vector<std::vector<Index>> epoch_batches(Index n, std::size_t batch_size, std::mt19937_64& rng) {
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<Index>> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size)
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + batch_size)));
  return batches;
}

struct AutoencoderResult {
  Mlp encoder;
  Mlp decoder;
  double final_mse = 0.0;           // full-data reconstruction error after training
  std::vector<double> epoch_mse;    // mean minibatch loss per epoch
};

inline double reconstruction_mse(const Mlp& encoder, const Mlp& decoder, const Matrix& x) {
  return mse_loss(decoder.forward(encoder.forward(x)), x).value;
}

/// Trains encoder and mirrored decoder jointly on reconstruction MSE.
inline AutoencoderResult train_autoencoder(const Matrix& x, const MlpSpec& encoder_spec, const TrainConfig& cfg) {
  encoder_spec.validate();
  cfg.validate();
  if (static_cast<std::size_t>(x.cols()) != encoder_spec.input_dim())
    fail_config("autoencoder: encoder input dim ", encoder_spec.input_dim(), " does not match data dim ", x.cols());
  if (x.rows() < 1) fail_config("autoencoder: empty data");

  AutoencoderResult r{Mlp::init(encoder_spec, derive_seed(cfg.seed, 1)),
                      Mlp::init(encoder_spec.mirrored(), derive_seed(cfg.seed, 2)), 0.0, {}};
  Adam opt(cfg.adam);
  std::mt19937_64 rng(derive_seed(cfg.seed, 3));
  MlpCache enc_cache, dec_cache;
  std::size_t iteration = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    double sum = 0.0;
    double weight = 0.0;
    for (const auto& idx : epoch_batches(x.rows(), cfg.batch_size, rng)) {
      const Matrix xb = take_rows(x, idx);
      const Matrix z = r.encoder.forward(xb, enc_cache);
      const Matrix rec = r.decoder.forward(z, dec_cache);
      const auto loss = mse_loss(rec, xb);
      if (!std::isfinite(loss.value)) throw DivergenceError("autoencoder pretraining", iteration);
      const auto dg = r.decoder.backward(dec_cache, loss.grad);
      const auto eg = r.encoder.backward(enc_cache, dg.input);
      opt.step();
      r.encoder.apply(eg, opt, cfg.learning_rate, 0);
      r.decoder.apply(dg, opt, cfg.learning_rate, r.encoder.slot_count());
      sum += loss.value * static_cast<double>(idx.size());
      weight += static_cast<double>(idx.size());
      ++iteration;
    }
    r.epoch_mse.push_back(sum / weight);
  }
  r.final_mse = reconstruction_mse(r.encoder, r.decoder, x);
  if (!std::isfinite(r.final_mse)) throw DivergenceError("autoencoder pretraining", iteration);
  return r;
}

inline AutoencoderResult train_autoencoder(const FeatureView& view, const MlpSpec& encoder_spec, const TrainConfig& cfg) {
  return train_autoencoder(view.data, encoder_spec, cfg);
}

// ---------------------------------------------------------------------------
// Checkpoints: "MVNN", u16 version, u16 reserved, u64 dim count, u64 dims,
// then per layer the weight (row-major) and bias as float64, all little-endian.

inline std::string encode_mlp(const Mlp& m) {
  std::string buf = "MVNN";
  detail::put_le<std::uint16_t>(buf, 1);
  detail::put_le<std::uint16_t>(buf, 0);
  detail::put_le<std::uint64_t>(buf, m.spec().layer_dims.size());
  for (auto d : m.spec().layer_dims) detail::put_le<std::uint64_t>(buf, d);
  const Vector flat = m.flat_parameters();
  for (Index i = 0; i < flat.size(); ++i) detail::put_le<std::uint64_t>(buf, std::bit_cast<std::uint64_t>(flat(i)));
  return buf;
}

// Parses one model starting at `offset`; advances it past the model.
inline Mlp decode_mlp(const std::string& bytes, std::size_t& offset) {
  auto need = [&](std::size_t count) {
    if (bytes.size() < offset + count) throw IoError("truncated model checkpoint");
  };
  need(16);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data()) + offset;
  if (bytes.compare(offset, 4, "MVNN") != 0) throw IoError("unrecognized format");
  if (detail::get_le<std::uint16_t>(p + 4) != 1) throw IoError("unsupported checkpoint version");
  const auto ndims = detail::get_le<std::uint64_t>(p + 8);
  offset += 16;
  if (ndims > (bytes.size() - offset) / 8) throw IoError("truncated model checkpoint");
  MlpSpec spec;
  for (std::uint64_t i = 0; i < ndims; ++i, offset += 8)
    spec.layer_dims.push_back(detail::get_le<std::uint64_t>(reinterpret_cast<const unsigned char*>(bytes.data()) + offset));
  try {
    spec.validate();
  } catch (const ConfigError& e) {
    throw IoError(std::string("bad checkpoint spec: ") + e.what());
  }
  Mlp m(spec);
  const auto count = m.parameter_count();
  need(count * 8);
  Vector flat(static_cast<Index>(count));
  for (std::size_t i = 0; i < count; ++i, offset += 8)
    flat(static_cast<Index>(i)) =
        std::bit_cast<double>(detail::get_le<std::uint64_t>(reinterpret_cast<const unsigned char*>(bytes.data()) + offset));
  m.set_flat_parameters(flat);
  return m;
}

inline void save_mlp(const Mlp& m, const fs::path& path) { detail::write_file(path, encode_mlp(m)); }

inline Mlp load_mlp(const fs::path& path) {
  const auto bytes = detail::read_file(path);
  std::size_t offset = 0;
  auto m = decode_mlp(bytes, offset);
  if (offset != bytes.size()) throw IoError("trailing bytes in model checkpoint");
  return m;
}

}  // namespace dmvc
