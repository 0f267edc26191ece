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

#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "instret/aggregation.hpp"
#include "instret/evaluation.hpp"
#include "instret/groundtruth.hpp"
#include "instret/pipeline.hpp"
#include "instret/postprocess.hpp"

namespace instret {

/// Error from one workflow stage; what() starts with the stage name.
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& message);
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

struct RmacOptions {
  std::uint32_t levels = 3;
  bool region_norm = true;
  std::optional<std::uint32_t> downsample;
  PoolMode pool = PoolMode::max;
};

/// PCA target dimension; nullopt means the unreduced ("true") dimension.
using PcaSetting = std::optional<std::size_t>;

PcaSetting parse_pca_setting(std::string_view text);
std::vector<PcaSetting> parse_pca_list(std::string_view text);
std::string to_string(const PcaSetting& pca);

struct RunConfig {
  std::string dataset = "dataset";
  /// DSET file or directory of FMAP files.
  std::filesystem::path features;
  std::filesystem::path queries;
  std::filesystem::path gt;
  GroundTruthFormat gt_format = GroundTruthFormat::json;
  bool strip_prefix = false;
  bool strict_gt = false;
  RmacOptions rmac;
  std::vector<PcaSetting> pca{kDefaultPcaDim};
  double whiten_eps = kDefaultWhiteningEps;
  /// External corpus (DSET or FMAP directory) to fit whitening on instead of
  /// the database.
  std::filesystem::path whiten_train;
  /// Pre-fitted WHTN model; used as-is for every numeric PCA entry.
  std::filesystem::path whiten_model;
  std::vector<std::string> pipelines{"G"};
  PipelineParams params;
  /// Empty: classic, or easy/medium/hard when every query is revisited.
  std::vector<Protocol> protocols;
  EvalOptions eval;
  std::filesystem::path out;
  std::filesystem::path rankings;
  unsigned threads = 0;
  bool quiet = false;
};

/// Reads a JSON config whose keys mirror the long command-line flags with
/// '-' replaced by '_' (e.g. "rmac_L", "dfs_alpha", "pca": [512, "true"]).
RunConfig load_run_config(const std::filesystem::path& path);
void apply_config_json(RunConfig& config, std::string_view json_text);

/// Every *.fmap file under `dir` (sorted by name) through optional
/// downsampling and R-MAC. Throws when the directory holds none.
DescriptorSet aggregate_directory(const std::filesystem::path& dir, const RmacOptions& rmac,
                                  unsigned threads, std::ostream* log = nullptr);

/// DSET file as-is, or an FMAP directory aggregated on the fly.
DescriptorSet load_descriptors(const std::filesystem::path& path, const RmacOptions& rmac,
                               unsigned threads, std::ostream* log = nullptr);

DescriptorSet cmd_aggregate(const RunConfig& config, std::ostream* log = nullptr);

WhiteningModel cmd_fit_whiten(const RunConfig& config, std::ostream* log = nullptr);

/// L2-normalizes both inputs, concatenates them, then reduces with
/// L2 -> PCA-whitening -> L2 (or a single L2 for the true dimension).
DescriptorSet cmd_ensemble(const DescriptorSet& a, const DescriptorSet& b, const PcaSetting& pca,
                           double eps = kDefaultWhiteningEps);

struct EvalEntry {
  std::string dataset;
  std::string pipeline;
  PcaSetting pca;
  EvalReport report;
  std::vector<RankedList> rankings;
};

struct EvalRun {
  std::vector<EvalEntry> entries;
};

EvalRun cmd_eval(const RunConfig& config, std::ostream* log = nullptr);

/// One report object per entry, or an array when there are several.
std::string eval_run_to_json(const EvalRun& run);
/// Fixed-width table with 2-decimal percentages, from the same numbers.
std::string eval_run_table(const EvalRun& run);

}  // namespace instret
