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

// dmvc - multi-view clustering from the command line.
//
//   dmvc synth   --config <preset|file.json> --out DIR [--seed S]
//   dmvc cluster --manifest FILE --method M [--view V] [--k K] [--seed S]
//                [--nmi] --out-dir DIR
//   dmvc bench   --manifests A,B --methods M1,M2 --seeds 1,2,3 [--out FILE]
//
// Exit codes: 0 success, 1 runtime or numeric failure, 2 usage or config error.

#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dmvc/dmvc.hpp"

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

// Overrides for MethodOptions; unset flags keep the manifest's values.
struct OptionFlags {
  std::optional<std::string> profile;
  std::optional<std::string> clusterer;
  std::optional<std::size_t> pretrain_epochs;
  std::optional<std::size_t> max_iter;
  std::optional<std::size_t> refine_iter;
  std::optional<double> finetune_lr;
  std::optional<double> refine_lr;
  std::optional<double> gamma;

  void add_to(CLI::App* app) {
    app->add_option("--profile", profile, "Network profile: small (d-32-16-N) or paper (d-500-500-2000-N)");
    app->add_option("--clusterer", clusterer, "Single-view clusterer for cc/mvec: km, ac or idec");
    app->add_option("--pretrain-epochs", pretrain_epochs, "Autoencoder pretraining epochs");
    app->add_option("--max-iter", max_iter, "Update cap for IDEC clustering stages");
    app->add_option("--refine-iter", refine_iter, "Update cap for end-to-end refinement");
    app->add_option("--finetune-lr", finetune_lr, "Learning rate of IDEC clustering stages");
    app->add_option("--refine-lr", refine_lr, "Learning rate of end-to-end refinement");
    app->add_option("--gamma", gamma, "Clustering-loss weight in the IDEC objective");
  }

  dmvc::MethodOptions apply(dmvc::MethodOptions o) const {
    if (profile) o.profile = *profile;
    if (clusterer) o.clusterer = *clusterer;
    if (pretrain_epochs) o.pretrain_epochs = *pretrain_epochs;
    if (max_iter) o.max_iter = *max_iter;
    if (refine_iter) o.refine_iter = *refine_iter;
    if (finetune_lr) o.finetune_lr = *finetune_lr;
    if (refine_lr) o.refine_lr = *refine_lr;
    if (gamma) o.gamma = *gamma;
    return o;
  }
};

int cmd_synth(const std::string& config, const std::string& out, std::optional<dmvc::Seed> seed) {
  dmvc::SynthConfig cfg;
  if (dmvc::fs::is_regular_file(config)) {
    std::ifstream in(config);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      dmvc::fail_config(config, ": ", e.what());
    }
    cfg = dmvc::parse_synth_config(j);
  } else {
    cfg = dmvc::preset(config);
  }
  if (seed) cfg.seed = *seed;
  const auto ds = dmvc::generate(cfg);
  dmvc::write_dataset(ds, out, cfg.seed);
  std::cout << "wrote " << ds.num_views() << " views of " << ds.num_samples() << " samples to " << out << "\n";
  return 0;
}

int cmd_cluster(const std::string& manifest_path, dmvc::ClusterRequest req, std::optional<dmvc::Seed> seed,
                const OptionFlags& flags, const std::string& out_dir) {
  const auto manifest = dmvc::load_manifest(manifest_path);
  req.options = flags.apply(dmvc::MethodOptions::from_json(manifest.methods));
  req.seed = seed.value_or(manifest.seed);
  const auto ds = dmvc::load_dataset(manifest);
  const auto out = dmvc::run_method(ds, req);
  dmvc::write_outputs(out, out_dir);
  std::cout << out.report.to_tsv();
  return 0;
}

int cmd_bench(const std::vector<std::string>& manifests, const std::vector<std::string>& methods,
              const std::vector<dmvc::Seed>& seeds, const OptionFlags& flags, const std::string& out) {
  if (methods.empty()) dmvc::fail_config("bench: empty methods list");
  if (seeds.empty()) dmvc::fail_config("bench: empty seeds list");
  if (manifests.empty()) dmvc::fail_config("bench: empty manifests list");
  std::vector<dmvc::MultiViewDataset> datasets;
  std::vector<dmvc::MethodOptions> options;
  for (const auto& path : manifests) {
    const auto m = dmvc::load_manifest(path);
    options.push_back(flags.apply(dmvc::MethodOptions::from_json(m.methods)));
    datasets.push_back(dmvc::load_dataset(m));
  }
  const auto table = dmvc::run_bench(datasets, methods, seeds, options).to_tsv();
  if (!out.empty()) {
    std::ofstream f(out, std::ios::binary);
    if (!f) throw dmvc::IoError("cannot open '" + out + "' for writing");
    f << table;
  }
  std::cout << table;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-view clustering over precomputed feature views"};
  app.require_subcommand(1);

  std::string synth_config, synth_out;
  std::optional<dmvc::Seed> synth_seed;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic multi-view dataset");
  synth->add_option("--config", synth_config, "Preset name (easy, complementary, hard) or JSON config file")->required();
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--seed", synth_seed, "Override the config seed");

  std::string manifest, out_dir;
  dmvc::ClusterRequest req;
  std::optional<std::string> view;
  std::optional<std::size_t> k;
  std::optional<dmvc::Seed> cluster_seed;
  OptionFlags cluster_flags;
  auto* cluster = app.add_subcommand("cluster", "Run one clustering method on a dataset");
  cluster->add_option("--manifest", manifest, "Dataset manifest (JSON)")->required();
  cluster->add_option("--method", req.method, "km, ac, idec, cc, mvec, dmvc-fix, dmvc or dmvc-scratch")->required();
  cluster->add_option("--view", view, "Restrict km/ac/idec to one view");
  cluster->add_option("--k", k, "Cluster count (defaults to the number of label classes)");
  cluster->add_option("--seed", cluster_seed, "Run seed (defaults to the manifest seed)");
  cluster->add_flag("--nmi", req.nmi, "Score against the manifest labels");
  cluster->add_option("--out-dir", out_dir, "Directory for partitions, embeddings and report")->required();
  cluster_flags.add_to(cluster);

  std::vector<std::string> bench_manifests, bench_methods;
  std::vector<dmvc::Seed> bench_seeds;
  std::string bench_out;
  OptionFlags bench_flags;
  auto* bench = app.add_subcommand("bench", "Mean and std NMI over seeds for a grid of datasets and methods");
  bench->add_option("--manifests", bench_manifests, "Comma-separated manifests")->delimiter(',')->required();
  bench->add_option("--methods", bench_methods,
                    "Comma-separated: km, ac, idec (best view), cc[-ac|-idec], mvec[-ac|-idec], dmvc-fix, dmvc")
      ->delimiter(',')
      ->required();
  bench->add_option("--seeds", bench_seeds, "Comma-separated seeds")->delimiter(',')->required();
  bench->add_option("--out", bench_out, "Write the table here as well as to stdout");
  bench_flags.add_to(bench);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*synth) return cmd_synth(synth_config, synth_out, synth_seed);
    if (*cluster) {
      req.view = view;
      req.k = k;
      return cmd_cluster(manifest, req, cluster_seed, cluster_flags, out_dir);
    }
    if (*bench) {
      std::erase_if(bench_methods, [](const std::string& s) { return s.empty(); });
      return cmd_bench(bench_manifests, bench_methods, bench_seeds, bench_flags, bench_out);
    }
  } catch (const dmvc::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
