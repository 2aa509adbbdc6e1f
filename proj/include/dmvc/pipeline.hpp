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

// Method dispatch and reporting behind the command line tool.

#pragma once

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dmvc/ensemble.hpp"
#include "dmvc/mvnet.hpp"
#include "dmvc/synthgen.hpp"

namespace dmvc {

inline const std::vector<std::string> kMethods = {"km", "ac", "idec", "cc", "mvec", "dmvc-fix", "dmvc", "dmvc-scratch"};

inline bool is_per_view(const std::string& method) { return method == "km" || method == "ac" || method == "idec"; }

/// Tunables shared by all methods. Read from the manifest's "methods" block
/// and overridable from the command line.
struct MethodOptions {
  std::string profile = "small";   // "small" (d-32-16-N) or "paper" (d-500-500-2000-N)
  std::string clusterer = "km";    // single-view clusterer inside cc / mvec
  std::size_t pretrain_epochs = 200;
  double pretrain_lr = 1e-3;
  double finetune_lr = 1e-4;
  double refine_lr = 1e-4;
  std::size_t max_iter = 20000;
  std::size_t refine_iter = 20000;
  std::size_t batch_size = 256;
  double gamma = 0.1;

  const std::vector<std::size_t>& hidden() const {
    if (profile == "small") return kSmallHidden;
    if (profile == "paper") return kPaperHidden;
    fail_config("unknown network profile '", profile, "' (expected small or paper)");
  }

  IdecConfig idec() const {
    IdecConfig c;
    c.pretrain = {pretrain_lr, batch_size, pretrain_epochs, 0, 0, {}};
    c.clustering = {finetune_lr, batch_size, 0, max_iter, 0, {}};
    c.state.gamma = gamma;
    return c;
  }

  DmvcConfig dmvc(Seed seed) const {
    DmvcConfig c;
    c.branch = idec();
    c.head = idec();
    c.refine = {refine_lr, batch_size, 0, refine_iter, 0, {}};
    c.seed = seed;
    return c;
  }

  ClustererSpec clusterer_spec() const {
    auto spec = parse_clusterer(clusterer);
    if (auto* s = std::get_if<IdecClusterer>(&spec)) {
      s->hidden = hidden();
      s->config = idec();
    }
    return spec;
  }

  static MethodOptions from_json(const nlohmann::json& j) {
    MethodOptions o;
    if (!j.is_object()) return o;
    try {
      o.profile = j.value("profile", o.profile);
      o.clusterer = j.value("clusterer", o.clusterer);
      o.pretrain_epochs = j.value("pretrain_epochs", o.pretrain_epochs);
      o.pretrain_lr = j.value("pretrain_lr", o.pretrain_lr);
      o.finetune_lr = j.value("finetune_lr", o.finetune_lr);
      o.refine_lr = j.value("refine_lr", o.refine_lr);
      o.max_iter = j.value("max_iter", o.max_iter);
      o.refine_iter = j.value("refine_iter", o.refine_iter);
      o.batch_size = j.value("batch_size", o.batch_size);
      o.gamma = j.value("gamma", o.gamma);
    } catch (const nlohmann::json::exception& e) {
      fail_config("malformed methods block: ", e.what());
    }
    return o;
  }
};

struct ReportRow {
  std::string scope;  // "view", "stage" or "final"
  std::string name;
  std::optional<double> nmi;
  double seconds = 0.0;
  std::size_t iterations = 0;
};

struct RunReport {
  std::string method;
  std::string dataset;
  Seed seed = 0;
  std::size_t k = 0;
  std::vector<ReportRow> rows;
  double seconds = 0.0;

  std::optional<double> final_nmi() const {
    for (const auto& r : rows)
      if (r.scope == "final") return r.nmi;
    return std::nullopt;
  }

  std::optional<double> view_nmi(const std::string& view) const {
    for (const auto& r : rows)
      if (r.scope == "view" && r.name == view) return r.nmi;
    return std::nullopt;
  }

  std::string to_tsv() const {
    std::ostringstream out;
    out << "method\tdataset\tseed\tk\tscope\tname\tnmi\tseconds\titerations\n";
    auto line = [&](const ReportRow& r) {
      out << method << '\t' << dataset << '\t' << seed << '\t' << k << '\t' << r.scope << '\t' << r.name << '\t';
      if (r.nmi) out << std::fixed << std::setprecision(6) << *r.nmi;
      else out << "NA";
      out << '\t' << std::fixed << std::setprecision(3) << r.seconds << '\t' << r.iterations << '\n';
    };
    for (const auto& r : rows) line(r);
    line({"total", method, final_nmi(), seconds, 0});
    return out.str();
  }
};

struct ClusterRequest {
  std::string method;
  std::optional<std::string> view;
  std::optional<std::size_t> k;
  Seed seed = 0;
  bool nmi = false;
  MethodOptions options;
};

// Partitions and embeddings produced by a run, keyed by output file stem.
struct ClusterOutput {
  RunReport report;
  std::vector<std::pair<std::string, Partition>> partitions;
  std::vector<FeatureView> embeddings;
  std::optional<MvNet> model;
};

namespace detail {

inline std::size_t resolve_k(const MultiViewDataset& ds, const std::optional<std::size_t>& k) {
  if (k) {
    if (*k < 1 || static_cast<Index>(*k) > ds.num_samples())
      fail_config("k=", *k, " is invalid for n=", ds.num_samples());
    return *k;
  }
  if (ds.labels) return ds.labels->k();
  fail_config("--k is required when the dataset has no labels");
}

}  // namespace detail

inline ClusterOutput run_method(const MultiViewDataset& ds, const ClusterRequest& req) {
  if (std::find(kMethods.begin(), kMethods.end(), req.method) == kMethods.end())
    fail_config("unknown method '", req.method, "'");
  if (req.nmi && !ds.labels) fail_config("--nmi requested but the dataset has no labels");
  if (req.view && !is_per_view(req.method)) fail_config("--view only applies to km, ac and idec");
  const std::size_t k = detail::resolve_k(ds, req.k);
  const auto& opt = req.options;
  auto score = [&](const Partition& p) -> std::optional<double> {
    if (!req.nmi) return std::nullopt;
    return nmi(*ds.labels, p);
  };

  ClusterOutput out;
  out.report.method = req.method;
  out.report.dataset = ds.name;
  out.report.seed = req.seed;
  out.report.k = k;
  detail::Stopwatch total;

  if (is_per_view(req.method)) {
    std::vector<const FeatureView*> views;
    if (req.view) views.push_back(&ds.view(*req.view));
    else
      for (const auto& v : ds.views) views.push_back(&v);
    for (const auto* v : views) {
      detail::Stopwatch sw;
      const Seed seed = derive_seed(req.seed, fnv1a(v->name));
      Partition p;
      std::size_t iterations = 0;
      if (req.method == "km") {
        KMeansConfig km;
        km.k = k;
        km.seed = seed;
        auto res = kmeans(*v, km);
        iterations = res.iterations_run;
        p = std::move(res.partition);
      } else if (req.method == "ac") {
        p = agglomerative_features(*v, {k, Linkage::ward});
      } else {
        MlpSpec enc{{static_cast<std::size_t>(v->cols())}};
        enc.layer_dims.insert(enc.layer_dims.end(), opt.hidden().begin(), opt.hidden().end());
        enc.layer_dims.push_back(k);
        auto res = idec_train(*v, k, enc, detail::seeded(opt.idec(), seed));
        iterations = res.run.iterations;
        out.embeddings.push_back({"embeddings_" + v->name, res.encoder.forward(v->data)});
        p = std::move(res.partition);
      }
      out.report.rows.push_back({"view", v->name, score(p), sw.seconds(), iterations});
      out.partitions.emplace_back(views.size() == 1 ? "partition" : "partition_" + v->name, std::move(p));
    }
  } else if (req.method == "cc" || req.method == "mvec") {
    const auto spec = opt.clusterer_spec();
    Partition p;
    if (req.method == "cc") {
      p = cc(ds, spec, k, req.seed);
    } else {
      auto res = mvec_detailed(ds, spec, k, req.seed);
      for (std::size_t i = 0; i < ds.num_views(); ++i)
        out.report.rows.push_back({"view", ds.views[i].name, score(res.view_partitions[i]), 0.0, 0});
      p = std::move(res.partition);
    }
    out.report.method += ":" + clusterer_name(spec);
    out.report.rows.push_back({"final", out.report.method, score(p), total.seconds(), 0});
    out.partitions.emplace_back("partition", std::move(p));
  } else {
    std::vector<std::size_t> dims;
    for (const auto& v : ds.views) dims.push_back(static_cast<std::size_t>(v.cols()));
    const auto spec = MvNetSpec::uniform(dims, opt.hidden(), k);
    const auto cfg = opt.dmvc(req.seed);
    DmvcResult res = req.method == "dmvc-fix" ? dmvc_fix(ds, k, spec, cfg)
                     : req.method == "dmvc"   ? dmvc(ds, k, spec, cfg)
                                              : dmvc_from_scratch(ds, k, spec, cfg);
    for (const auto& st : res.report)
      out.report.rows.push_back({"stage", st.stage, req.nmi ? st.nmi : std::nullopt, st.seconds, st.iterations});
    out.report.rows.push_back({"final", req.method, score(res.partition), total.seconds(), 0});
    out.embeddings.push_back(embed(res.model, ds));
    out.embeddings.back().name = "embeddings";
    out.partitions.emplace_back("partition", std::move(res.partition));
    out.model = std::move(res.model);
  }
  out.report.seconds = total.seconds();
  return out;
}

/// Writes <stem>.txt partitions, <name>.mvcv embeddings, model.mvnt and
/// report.tsv into `dir`.
inline void write_outputs(const ClusterOutput& out, const fs::path& dir) {
  fs::create_directories(dir);
  for (const auto& [stem, p] : out.partitions) save_partition(p, dir / (stem + ".txt"));
  for (const auto& e : out.embeddings) save_view(e, dir / (e.name + ".mvcv"));
  if (out.model) save_mvnet(*out.model, dir / "model.mvnt");
  detail::write_file(dir / "report.tsv", out.report.to_tsv());
}

// ---------------------------------------------------------------------------
// Benchmark grid

struct BenchCell {
  double mean = 0.0;
  double stddev = 0.0;
  std::vector<double> values;
  std::string detail;  // e.g. which view was best
};

struct BenchTable {
  std::vector<std::string> datasets;
  std::vector<std::string> methods;
  std::map<std::pair<std::string, std::string>, BenchCell> cells;  // (method, dataset)

  std::string to_tsv() const;
};

namespace detail {

inline BenchCell summarize(std::vector<double> values) {
  BenchCell c;
  c.values = std::move(values);
  for (double v : c.values) c.mean += v;
  c.mean /= static_cast<double>(c.values.size());
  for (double v : c.values) c.stddev += (v - c.mean) * (v - c.mean);
  c.stddev = std::sqrt(c.stddev / static_cast<double>(c.values.size()));
  return c;
}

// "km-best-view" -> ("km", true); "cc-ac" -> ("cc", clusterer "ac").
struct BenchMethod {
  std::string method;
  std::optional<std::string> clusterer;
};

inline BenchMethod parse_bench_method(const std::string& token) {
  for (const std::string m : {"km", "ac", "idec"})
    if (token == m || token == m + "-best-view") return {m, std::nullopt};
  for (const std::string m : {"cc", "mvec"}) {
    if (token == m) return {m, std::nullopt};
    for (const std::string c : {"km", "ac", "idec"})
      if (token == m + "-" + c) return {m, c};
  }
  for (const std::string m : {"dmvc-fix", "dmvc", "dmvc-scratch"})
    if (token == m) return {m, std::nullopt};
  fail_config("unknown bench method '", token, "'");
}

}  // namespace detail

/// Mean and standard deviation of NMI over seeds for every (method, dataset).
/// Per-view methods report the view with the best mean NMI.
inline BenchTable run_bench(const std::vector<MultiViewDataset>& datasets, const std::vector<std::string>& methods,
                            const std::vector<Seed>& seeds, const std::vector<MethodOptions>& options) {
  if (datasets.empty()) fail_config("bench: no datasets");
  if (methods.empty()) fail_config("bench: no methods");
  if (seeds.empty()) fail_config("bench: no seeds");
  for (const auto& m : methods) detail::parse_bench_method(m);
  for (const auto& ds : datasets)
    if (!ds.labels) fail_config("bench: dataset '", ds.name, "' has no labels");

  BenchTable t;
  t.methods = methods;
  for (std::size_t di = 0; di < datasets.size(); ++di) {
    const auto& ds = datasets[di];
    t.datasets.push_back(ds.name);
    for (const auto& token : methods) {
      const auto bm = detail::parse_bench_method(token);
      ClusterRequest req;
      req.method = bm.method;
      req.nmi = true;
      req.options = options.at(di);
      if (bm.clusterer) req.options.clusterer = *bm.clusterer;
      std::map<std::string, std::vector<double>> per_view;
      std::vector<double> finals;
      for (auto seed : seeds) {
        req.seed = seed;
        const auto out = run_method(ds, req);
        if (is_per_view(bm.method)) {
          for (const auto& r : out.report.rows)
            if (r.scope == "view") per_view[r.name].push_back(*r.nmi);
        } else {
          finals.push_back(*out.report.final_nmi());
        }
      }
      BenchCell cell;
      if (is_per_view(bm.method)) {
        bool first = true;
        for (const auto& v : ds.views) {
          auto c = detail::summarize(per_view[v.name]);
          if (first || c.mean > cell.mean) {
            cell = std::move(c);
            cell.detail = v.name;
            first = false;
          }
        }
      } else {
        cell = detail::summarize(std::move(finals));
      }
      t.cells[{token, ds.name}] = std::move(cell);
    }
  }
  return t;
}

/// Rows are methods, columns datasets plus their average. The best mean in
/// every column carries a trailing '*'.
inline std::string BenchTable::to_tsv() const {
  std::vector<std::string> columns = datasets;
  columns.push_back("average");
  std::map<std::pair<std::string, std::string>, double> means;
  for (const auto& m : methods) {
    double sum = 0.0;
    for (const auto& d : datasets) {
      means[{m, d}] = cells.at({m, d}).mean;
      sum += cells.at({m, d}).mean;
    }
    means[{m, "average"}] = sum / static_cast<double>(datasets.size());
  }
  std::map<std::string, double> best;
  for (const auto& c : columns)
    for (const auto& m : methods) best[c] = std::max(best.count(c) ? best[c] : -1.0, means[{m, c}]);

  std::ostringstream out;
  out << "method";
  for (const auto& c : columns) out << '\t' << c;
  out << '\n';
  out << std::fixed << std::setprecision(4);
  for (const auto& m : methods) {
    out << m;
    for (const auto& c : columns) {
      out << '\t' << means[{m, c}];
      if (c != "average") {
        const auto& cell = cells.at({m, c});
        out << "±" << cell.stddev;
        if (!cell.detail.empty()) out << '[' << cell.detail << ']';
      }
      if (means[{m, c}] == best[c]) out << '*';
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace dmvc
