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

// Multi-input network: one independent MLP branch per view, a concatenation
// of the branch outputs in view order, and an MLP head on top.
//
// Training is staged. Each branch is first trained with IDEC on its own
// view, then the head is trained with IDEC on the concatenated branch
// embeddings ("fix" variant stops here), and finally the assembled network is
// refined end-to-end with the DEC clustering loss.

#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <vector>

#include "dmvc/deepclust.hpp"
#include "dmvc/metrics.hpp"

namespace dmvc {

struct MvNetSpec {
  std::vector<MlpSpec> branches;
  MlpSpec head;

  void validate() const {
    if (branches.empty()) fail_config("MvNet needs at least one branch");
    std::size_t concat = 0;
    for (const auto& b : branches) {
      b.validate();
      concat += b.output_dim();
    }
    head.validate();
    if (head.input_dim() != concat)
      fail_config("MvNet head input dim ", head.input_dim(), " != sum of branch output dims ", concat);
  }

  /// d_i-hidden...-embed branches and (m*embed)-hidden...-embed head.
  static MvNetSpec uniform(const std::vector<std::size_t>& view_dims, const std::vector<std::size_t>& hidden,
                           std::size_t embed_dim) {
    MvNetSpec s;
    for (auto d : view_dims) {
      MlpSpec b{{d}};
      b.layer_dims.insert(b.layer_dims.end(), hidden.begin(), hidden.end());
      b.layer_dims.push_back(embed_dim);
      s.branches.push_back(std::move(b));
    }
    s.head.layer_dims = {embed_dim * view_dims.size()};
    s.head.layer_dims.insert(s.head.layer_dims.end(), hidden.begin(), hidden.end());
    s.head.layer_dims.push_back(embed_dim);
    return s;
  }
};

// Hidden layer widths of the reference encoder, d-500-500-2000-N.
inline const std::vector<std::size_t> kPaperHidden = {500, 500, 2000};
// Desk-scale profile, d-32-16-N.
inline const std::vector<std::size_t> kSmallHidden = {32, 16};

struct MvNetCache {
  std::vector<MlpCache> branches;
  MlpCache head;
  std::vector<Index> offsets;  // column offset of each branch in the concat
};

struct MvNetGrads {
  std::vector<MlpGrads> branches;
  MlpGrads head;
};

namespace detail {

inline void check_views(const std::vector<Matrix>& views, std::size_t m) {
  if (views.size() != m) fail_config("MvNet expects ", m, " views, got ", views.size());
  for (const auto& v : views)
    if (v.rows() != views.front().rows())
      fail_config("MvNet inputs are not row-aligned: ", views.front().rows(), " vs ", v.rows(), " rows");
}

inline Matrix concat_columns(const std::vector<Matrix>& blocks) {
  Index cols = 0;
  for (const auto& b : blocks) cols += b.cols();
  Matrix out(blocks.empty() ? 0 : blocks.front().rows(), cols);
  Index at = 0;
  for (const auto& b : blocks) {
    out.middleCols(at, b.cols()) = b;
    at += b.cols();
  }
  return out;
}

}  // namespace detail

class MvNet {
 public:
  using Input = std::vector<Matrix>;
  using Cache = MvNetCache;
  using Grads = MvNetGrads;

  MvNet() = default;

  MvNet(std::vector<Mlp> branches, Mlp head) : branches_(std::move(branches)), head_(std::move(head)) {
    spec().validate();
  }

  static MvNet init(const MvNetSpec& spec, Seed seed) {
    spec.validate();
    std::vector<Mlp> branches;
    for (std::size_t i = 0; i < spec.branches.size(); ++i) branches.push_back(Mlp::init(spec.branches[i], derive_seed(seed, i)));
    return MvNet(std::move(branches), Mlp::init(spec.head, derive_seed(seed, spec.branches.size())));
  }

  MvNetSpec spec() const {
    MvNetSpec s;
    for (const auto& b : branches_) s.branches.push_back(b.spec());
    s.head = head_.spec();
    return s;
  }

  std::size_t num_branches() const { return branches_.size(); }
  std::vector<Mlp>& branches() { return branches_; }
  const std::vector<Mlp>& branches() const { return branches_; }
  Mlp& head() { return head_; }
  const Mlp& head() const { return head_; }
  std::size_t output_dim() const { return head_.output_dim(); }

  // The concatenated branch embeddings fed to the head.
  Matrix branch_embeddings(const Input& views) const {
    detail::check_views(views, branches_.size());
    std::vector<Matrix> outs;
    for (std::size_t i = 0; i < branches_.size(); ++i) outs.push_back(branches_[i].forward(views[i]));
    return detail::concat_columns(outs);
  }

  Matrix forward(const Input& views) const { return head_.forward(branch_embeddings(views)); }

  Matrix forward(const Input& views, MvNetCache& cache) const {
    detail::check_views(views, branches_.size());
    cache.branches.assign(branches_.size(), {});
    cache.offsets.clear();
    std::vector<Matrix> outs;
    Index at = 0;
    for (std::size_t i = 0; i < branches_.size(); ++i) {
      outs.push_back(branches_[i].forward(views[i], cache.branches[i]));
      cache.offsets.push_back(at);
      at += outs.back().cols();
    }
    return head_.forward(detail::concat_columns(outs), cache.head);
  }

  // Head input gradients are split by column block and pushed into the
  // branches. Branch input gradients are left in each branch's `input`.
  MvNetGrads backward(const MvNetCache& cache, const Matrix& d_out) const {
    MvNetGrads g;
    g.head = head_.backward(cache.head, d_out);
    for (std::size_t i = 0; i < branches_.size(); ++i) {
      const auto width = static_cast<Index>(branches_[i].output_dim());
      g.branches.push_back(branches_[i].backward(cache.branches[i], g.head.input.middleCols(cache.offsets[i], width)));
    }
    return g;
  }

  void apply(const MvNetGrads& g, Adam& opt, double lr, std::size_t slot_base = 0) {
    std::size_t slot = slot_base;
    for (std::size_t i = 0; i < branches_.size(); ++i) {
      branches_[i].apply(g.branches[i], opt, lr, slot);
      slot += branches_[i].slot_count();
    }
    head_.apply(g.head, opt, lr, slot);
  }

  std::size_t slot_count() const {
    std::size_t c = head_.slot_count();
    for (const auto& b : branches_) c += b.slot_count();
    return c;
  }

  std::size_t parameter_count() const {
    std::size_t c = head_.parameter_count();
    for (const auto& b : branches_) c += b.parameter_count();
    return c;
  }

  // Branches in order, then the head.
  Vector flat_parameters() const {
    Vector out(static_cast<Index>(parameter_count()));
    Index at = 0;
    for (const auto& b : branches_) {
      const auto v = b.flat_parameters();
      out.segment(at, v.size()) = v;
      at += v.size();
    }
    out.tail(static_cast<Index>(head_.parameter_count())) = head_.flat_parameters();
    return out;
  }

  void set_flat_parameters(const Vector& flat) {
    if (static_cast<std::size_t>(flat.size()) != parameter_count()) fail_config("parameter vector has wrong length");
    Index at = 0;
    for (auto& b : branches_) {
      const auto c = static_cast<Index>(b.parameter_count());
      b.set_flat_parameters(flat.segment(at, c));
      at += c;
    }
    head_.set_flat_parameters(flat.tail(static_cast<Index>(head_.parameter_count())));
  }

  static Vector flatten(const MvNetGrads& g) {
    std::vector<Vector> parts;
    Index total = 0;
    for (const auto& b : g.branches) {
      parts.push_back(Mlp::flatten(b));
      total += parts.back().size();
    }
    parts.push_back(Mlp::flatten(g.head));
    total += parts.back().size();
    Vector out(total);
    Index at = 0;
    for (const auto& p : parts) {
      out.segment(at, p.size()) = p;
      at += p.size();
    }
    return out;
  }

 private:
  std::vector<Mlp> branches_;
  Mlp head_;
};

/// Final-layer embeddings of every sample.
inline FeatureView embed(const MvNet& model, const MultiViewDataset& ds) {
  return {"embedding", model.forward(ds.matrices())};
}

// Checkpoint: "MVNT", u16 version, u16 reserved, u64 branch count, then the
// branch models and the head model in the single-MLP checkpoint format.
inline void save_mvnet(const MvNet& m, const fs::path& path) {
  std::string buf = "MVNT";
  detail::put_le<std::uint16_t>(buf, 1);
  detail::put_le<std::uint16_t>(buf, 0);
  detail::put_le<std::uint64_t>(buf, m.num_branches());
  for (const auto& b : m.branches()) buf += encode_mlp(b);
  buf += encode_mlp(m.head());
  detail::write_file(path, buf);
}

inline MvNet load_mvnet(const fs::path& path) {
  const auto bytes = detail::read_file(path);
  if (bytes.size() < 16 || bytes.compare(0, 4, "MVNT") != 0) throw IoError("unrecognized format");
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (detail::get_le<std::uint16_t>(p + 4) != 1) throw IoError("unsupported checkpoint version");
  const auto m = detail::get_le<std::uint64_t>(p + 8);
  std::size_t offset = 16;
  std::vector<Mlp> branches;
  for (std::uint64_t i = 0; i < m; ++i) branches.push_back(decode_mlp(bytes, offset));
  Mlp head = decode_mlp(bytes, offset);
  if (offset != bytes.size()) throw IoError("trailing bytes in model checkpoint");
  try {
    return MvNet(std::move(branches), std::move(head));
  } catch (const ConfigError& e) {
    throw IoError(std::string("inconsistent checkpoint: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Staged training

struct DmvcConfig {
  IdecConfig branch;          // stage 1, per view
  IdecConfig head;            // stage 2, on concatenated branch embeddings
  TrainConfig refine{1e-4, 256, 0, 20000, 0, {}};  // stage 3, end-to-end
  DecState refine_state;
  Seed seed = 0;
};

struct StageReport {
  std::string stage;  // "branch:<view>", "head", "refine", "scratch"
  std::optional<double> nmi;
  double seconds = 0.0;
  std::size_t iterations = 0;
  std::vector<TrainLogRow> log;
};

struct DmvcResult {
  Partition partition;
  MvNet model;
  Matrix centroids;
  std::vector<StageReport> report;
};

namespace detail {

inline IdecConfig seeded(IdecConfig c, Seed seed) {
  c.pretrain.seed = derive_seed(seed, 1);
  c.clustering.seed = derive_seed(seed, 2);
  return c;
}

inline std::optional<double> maybe_nmi(const MultiViewDataset& ds, const Partition& p) {
  if (!ds.labels) return std::nullopt;
  return nmi(*ds.labels, p);
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

}  // namespace detail

/// Stages 1 and 2 only; the assembled network is not refined.
inline DmvcResult dmvc_fix(const MultiViewDataset& ds, std::size_t k, const MvNetSpec& spec, const DmvcConfig& cfg) {
  validate_dataset(ds);
  spec.validate();
  if (spec.branches.size() != ds.num_views())
    fail_config("MvNet has ", spec.branches.size(), " branches for ", ds.num_views(), " views");
  if (k < 1 || static_cast<Index>(k) > ds.num_samples()) fail_config("dmvc: k=", k, " invalid for n=", ds.num_samples());

  DmvcResult r;
  std::vector<Mlp> branches;
  std::vector<Matrix> embeddings;
  for (std::size_t i = 0; i < ds.num_views(); ++i) {
    detail::Stopwatch sw;
    auto res = idec_train(ds.views[i], k, spec.branches[i], detail::seeded(cfg.branch, derive_seed(cfg.seed, 100 + i)));
    embeddings.push_back(res.encoder.forward(ds.views[i].data));
    r.report.push_back({"branch:" + ds.views[i].name, detail::maybe_nmi(ds, res.partition), sw.seconds(),
                        res.run.iterations, std::move(res.run.log)});
    branches.push_back(std::move(res.encoder));
  }

  detail::Stopwatch sw;
  auto head = idec_train(detail::concat_columns(embeddings), k, spec.head, detail::seeded(cfg.head, derive_seed(cfg.seed, 200)));
  r.model = MvNet(std::move(branches), std::move(head.encoder));
  r.centroids = std::move(head.centroids);
  r.partition = Partition(row_argmax(soft_assign(r.model.forward(ds.matrices()), r.centroids, cfg.head.state.alpha)), k);
  r.report.push_back({"head", detail::maybe_nmi(ds, r.partition), sw.seconds(), head.run.iterations, std::move(head.run.log)});
  return r;
}

/// Full pipeline: `dmvc_fix`, then end-to-end DEC refinement of the whole
/// network starting from the head's centroids.
inline DmvcResult dmvc(const MultiViewDataset& ds, std::size_t k, const MvNetSpec& spec, const DmvcConfig& cfg) {
  auto r = dmvc_fix(ds, k, spec, cfg);
  detail::Stopwatch sw;
  DecState st = cfg.refine_state;
  st.centroids = r.centroids;
  TrainConfig tc = cfg.refine;
  tc.seed = derive_seed(cfg.seed, 300);
  auto ref = [&] {
    try {
      return dec_finetune(std::move(r.model), ds.matrices(), k, tc, st);
    } catch (const DivergenceError& e) {
      throw DivergenceError("refine stage: " + e.stage(), e.iteration());
    }
  }();
  r.model = std::move(ref.model);
  r.centroids = std::move(ref.centroids);
  r.partition = std::move(ref.partition);
  r.report.push_back({"refine", detail::maybe_nmi(ds, r.partition), sw.seconds(), ref.run.iterations, std::move(ref.run.log)});
  return r;
}

/// Diagnostic: DEC on a randomly initialized network, no staged pretraining.
inline DmvcResult dmvc_from_scratch(const MultiViewDataset& ds, std::size_t k, const MvNetSpec& spec, const DmvcConfig& cfg) {
  validate_dataset(ds);
  detail::Stopwatch sw;
  TrainConfig tc = cfg.refine;
  tc.seed = derive_seed(cfg.seed, 300);
  DecState st = cfg.refine_state;
  st.centroids = Matrix{};
  auto ref = dec_finetune(MvNet::init(spec, derive_seed(cfg.seed, 400)), ds.matrices(), k, tc, st);
  DmvcResult r{std::move(ref.partition), std::move(ref.model), std::move(ref.centroids), {}};
  r.report.push_back({"scratch", detail::maybe_nmi(ds, r.partition), sw.seconds(), ref.run.iterations, std::move(ref.run.log)});
  return r;
}

}  // namespace dmvc
