/*
 * Copyright 2026 The instret Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// instret: aggregate feature maps, fit whitening, ensemble descriptor sets and
// evaluate retrieval pipelines.

#include <functional>
#include <iostream>
#include <map>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "instret/workflow.hpp"

namespace {

using namespace instret;

// Options shared by every subcommand. Values parsed from flags are applied on
// top of the optional --config file, so flags always win.
class Flags {
 public:
  explicit Flags(CLI::App* app) : app_(app) {
    app->add_option("--config", config_path_, "JSON run configuration");
    app->add_option("--threads", threads_, "worker threads (default: all cores)");
    app->add_flag("--quiet", quiet_, "suppress progress output");
  }

  template <typename T>
  void add(const std::string& flag, const std::string& help, std::function<void(RunConfig&, const T&)> apply) {
    auto value = std::make_shared<T>();
    CLI::Option* opt = app_->add_option(flag, *value, help);
    setters_.push_back([opt, value, apply](RunConfig& c) {
      if (opt->count() > 0) apply(c, *value);
    });
  }

  void add_switch(const std::string& flag, const std::string& help, std::function<void(RunConfig&)> apply) {
    CLI::Option* opt = app_->add_flag(flag, help);
    setters_.push_back([opt, apply](RunConfig& c) {
      if (opt->count() > 0) apply(c);
    });
  }

  RunConfig resolve() const {
    RunConfig config = config_path_.empty() ? RunConfig{} : load_run_config(config_path_);
    for (const auto& set : setters_) set(config);
    if (app_->get_option("--threads")->count() > 0) config.threads = threads_;
    if (quiet_) config.quiet = true;
    return config;
  }

 private:
  CLI::App* app_;
  std::string config_path_;
  unsigned threads_ = 0;
  bool quiet_ = false;
  std::vector<std::function<void(RunConfig&)>> setters_;
};

bool parse_on_off(const std::string& s) {
  if (s == "on") return true;
  if (s == "off") return false;
  throw CLI::ValidationError("--rmac-region-norm", "expected on or off");
}

void add_rmac_flags(Flags& f) {
  f.add<std::uint32_t>("--rmac-L", "R-MAC scale count (default 3)",
                       [](RunConfig& c, const std::uint32_t& v) { c.rmac.levels = v; });
  f.add<std::string>("--rmac-region-norm", "on|off: L2-normalize each region (default on)",
                     [](RunConfig& c, const std::string& v) { c.rmac.region_norm = parse_on_off(v); });
  f.add<std::uint32_t>("--downsample", "pool feature maps to NxN before R-MAC",
                       [](RunConfig& c, const std::uint32_t& v) { c.rmac.downsample = v; });
  f.add<std::string>("--downsample-mode", "max|avg (default max)", [](RunConfig& c, const std::string& v) {
    if (v != "max" && v != "avg") throw CLI::ValidationError("--downsample-mode", "expected max or avg");
    c.rmac.pool = v == "avg" ? PoolMode::average : PoolMode::max;
  });
}

void add_whiten_flags(Flags& f) {
  f.add<std::string>("--pca", "PCA dimension, 'true' for none, or a comma list (default 512)",
                     [](RunConfig& c, const std::string& v) { c.pca = parse_pca_list(v); });
  f.add<double>("--whiten-eps", "regularizer inside the whitening square root",
                [](RunConfig& c, const double& v) { c.whiten_eps = v; });
  f.add<std::string>("--whiten-train", "fit whitening on this DSET/FMAP dir instead of the database",
                     [](RunConfig& c, const std::string& v) { c.whiten_train = v; });
}

void add_common_paths(Flags& f) {
  f.add<std::string>("--features", "database DSET file or FMAP directory",
                     [](RunConfig& c, const std::string& v) { c.features = v; });
  f.add<std::string>("--out", "output path", [](RunConfig& c, const std::string& v) { c.out = v; });
}

void add_eval_flags(Flags& f) {
  f.add<std::string>("--queries", "query DSET file or FMAP directory",
                     [](RunConfig& c, const std::string& v) { c.queries = v; });
  f.add<std::string>("--dataset", "dataset label for reports",
                     [](RunConfig& c, const std::string& v) { c.dataset = v; });
  f.add<std::string>("--gt", "ground truth (JSON file or Oxford-style directory)",
                     [](RunConfig& c, const std::string& v) { c.gt = v; });
  f.add<std::string>("--gt-format", "oxford|json (default json)", [](RunConfig& c, const std::string& v) {
    if (v != "oxford" && v != "json") throw CLI::ValidationError("--gt-format", "expected oxford or json");
    c.gt_format = v == "oxford" ? GroundTruthFormat::oxford : GroundTruthFormat::json;
  });
  f.add_switch("--strip-prefix", "drop the leading token of Oxford query image names",
               [](RunConfig& c) { c.strip_prefix = true; });
  f.add_switch("--strict-gt", "reject ground-truth names absent from the database",
               [](RunConfig& c) { c.strict_gt = true; });
  f.add<std::string>("--whiten-model", "pre-fitted WHTN model",
                     [](RunConfig& c, const std::string& v) { c.whiten_model = v; });
  f.add<std::string>("--pipeline", "pipeline name(s), e.g. \"G+DBA+AQE+DFS\"; comma list or 'all'",
                     [](RunConfig& c, const std::string& v) {
                       c.pipelines.clear();
                       if (v == "all") {
                         for (const auto name : kPipelineNames) c.pipelines.emplace_back(name);
                         return;
                       }
                       std::string item;
                       for (const char ch : v + ",") {
                         if (ch == ',') {
                           if (!item.empty()) c.pipelines.push_back(item);
                           item.clear();
                         } else {
                           item.push_back(ch);
                         }
                       }
                     });
  f.add<std::size_t>("--aqe-n", "AQE depth (default 10, or 1 with DBA)",
                     [](RunConfig& c, const std::size_t& v) { c.params.aqe_n = v; });
  f.add<std::size_t>("--dba-n", "DBA neighbors (default 20)",
                     [](RunConfig& c, const std::size_t& v) { c.params.dba_n = v; });
  f.add_switch("--dba-weighted", "rank-weighted DBA", [](RunConfig& c) { c.params.dba_weighted = true; });
  f.add<std::size_t>("--dfs-k", "diffusion graph neighbors (default 50)",
                     [](RunConfig& c, const std::size_t& v) { c.params.dfs_k = v; });
  f.add<std::size_t>("--dfs-kq", "diffusion query seeds (default 10)",
                     [](RunConfig& c, const std::size_t& v) { c.params.dfs_kq = v; });
  f.add<double>("--dfs-alpha", "diffusion alpha in [0,1) (default 0.99)",
                [](RunConfig& c, const double& v) { c.params.dfs_alpha = v; });
  f.add<double>("--dfs-gamma", "similarity exponent (default 3)",
                [](RunConfig& c, const double& v) { c.params.dfs_gamma = v; });
  f.add<double>("--dfs-tol", "CG relative residual (default 1e-6)",
                [](RunConfig& c, const double& v) { c.params.dfs_tol = v; });
  f.add<std::size_t>("--dfs-max-iter", "CG iteration cap (default 100)",
                     [](RunConfig& c, const std::size_t& v) { c.params.dfs_max_iter = v; });
  f.add<std::string>("--dfs-graph", "mutual|union kNN graph (default mutual)", [](RunConfig& c, const std::string& v) {
    if (v != "mutual" && v != "union") throw CLI::ValidationError("--dfs-graph", "expected mutual or union");
    c.params.dfs_graph = v == "union" ? GraphMode::union_ : GraphMode::mutual;
  });
  f.add_switch("--dfs-on-original", "diffuse over the database before DBA",
               [](RunConfig& c) { c.params.dfs_on_original = true; });
  f.add<std::string>("--protocol", "classic|easy|medium|hard, comma list (default: auto)",
                     [](RunConfig& c, const std::string& v) {
                       c.protocols.clear();
                       for (const auto& item : CLI::detail::split(v, ',')) c.protocols.push_back(parse_protocol(item));
                     });
  f.add<std::string>("--ap", "trapezoid|oxford|plain (default trapezoid)",
                     [](RunConfig& c, const std::string& v) { c.eval.ap = parse_ap_mode(v); });
  f.add_switch("--mp-raw", "count mP@k over the list before junk removal",
               [](RunConfig& c) { c.eval.precision_removes_junk = false; });
  f.add<std::string>("--rankings", "write TSV rankings here",
                     [](RunConfig& c, const std::string& v) { c.rankings = v; });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Instance retrieval: R-MAC aggregation, whitening, re-ranking and evaluation"};
  app.require_subcommand(1);

  auto* aggregate = app.add_subcommand("aggregate", "R-MAC aggregate a directory of FMAP files into a DSET");
  Flags aggregate_flags(aggregate);
  add_common_paths(aggregate_flags);
  add_rmac_flags(aggregate_flags);

  auto* fit = app.add_subcommand("fit-whiten", "fit L2 + PCA-whitening and write a WHTN model");
  Flags fit_flags(fit);
  add_common_paths(fit_flags);
  add_rmac_flags(fit_flags);
  add_whiten_flags(fit_flags);

  auto* ensemble = app.add_subcommand("ensemble", "concatenate two DSETs and reduce them with PCA-whitening");
  Flags ensemble_flags(ensemble);
  std::vector<std::string> ensemble_inputs;
  ensemble->add_option("inputs", ensemble_inputs, "two DSET files")->expected(2)->required();
  ensemble_flags.add<std::string>("--out", "output DSET", [](RunConfig& c, const std::string& v) { c.out = v; });
  add_whiten_flags(ensemble_flags);

  auto* eval = app.add_subcommand("eval", "whiten, rank and score queries against a database");
  Flags eval_flags(eval);
  add_common_paths(eval_flags);
  add_rmac_flags(eval_flags);
  add_whiten_flags(eval_flags);
  add_eval_flags(eval_flags);

  CLI11_PARSE(app, argc, argv);

  try {
    if (aggregate->parsed()) {
      RunConfig config = aggregate_flags.resolve();
      if (config.out.empty()) throw std::invalid_argument("aggregate needs --out");
      cmd_aggregate(config, config.quiet ? nullptr : &std::cerr);
    } else if (fit->parsed()) {
      RunConfig config = fit_flags.resolve();
      if (config.out.empty()) throw std::invalid_argument("fit-whiten needs --out");
      cmd_fit_whiten(config, config.quiet ? nullptr : &std::cerr);
    } else if (ensemble->parsed()) {
      RunConfig config = ensemble_flags.resolve();
      if (config.out.empty()) throw std::invalid_argument("ensemble needs --out");
      if (config.pca.size() != 1) throw std::invalid_argument("ensemble takes a single --pca value");
      const DescriptorSet a = read_dset_file(ensemble_inputs[0]);
      const DescriptorSet b = read_dset_file(ensemble_inputs[1]);
      const DescriptorSet joined = cmd_ensemble(a, b, config.pca.front(), config.whiten_eps);
      write_dset_file(joined, config.out);
      if (!config.quiet) {
        fmt::print(stderr, "ensembled {} + {} -> {} dims for {} images\n", a.dim(), b.dim(),
                   joined.dim(), joined.size());
      }
    } else if (eval->parsed()) {
      RunConfig config = eval_flags.resolve();
      const EvalRun run = cmd_eval(config, config.quiet ? nullptr : &std::cerr);
      std::cout << eval_run_table(run);
    }
  } catch (const std::exception& e) {
    fmt::print(stderr, "instret: {}\n", e.what());
    return 1;
  }
  return 0;
}
