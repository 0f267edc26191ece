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

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "instret/diffusion.hpp"
#include "instret/ranking.hpp"

namespace instret {

enum class Stage { G, AQE, DBA, DFS };

/// The eight ranking configurations, in table order.
inline constexpr std::array<std::string_view, 8> kPipelineNames = {
    "G", "G+AQE", "G+DFS", "G+DBA", "G+AQE+DFS", "G+DBA+AQE", "G+DBA+DFS", "G+DBA+AQE+DFS"};

struct PipelineParams {
  /// Unset: 10, or 1 when DBA is also active.
  std::optional<std::size_t> aqe_n;
  std::size_t dba_n = 20;
  bool dba_weighted = false;
  std::size_t dfs_k = 50;
  std::size_t dfs_kq = 10;
  double dfs_alpha = 0.99;
  double dfs_gamma = 3.0;
  double dfs_tol = 1e-6;
  std::size_t dfs_max_iter = 100;
  GraphMode dfs_graph = GraphMode::mutual;
  /// Diffuse over the un-augmented database even when DBA runs.
  bool dfs_on_original = false;
  unsigned threads = 1;

  std::size_t effective_aqe_n(bool with_dba) const { return aqe_n.value_or(with_dba ? 1 : 10); }
};

/// Stages in execution order: DBA, G, AQE, DFS.
struct PipelineSpec {
  std::vector<Stage> stages;

  bool has(Stage s) const;
  /// Canonical table name, e.g. "G+DBA+AQE+DFS".
  std::string name() const;

  /// Accepts exactly the eight table names, case-insensitively, ignoring
  /// whitespace around '+'.
  static PipelineSpec parse(std::string_view text);
};

struct PipelineResult {
  std::vector<RankedList> rankings;
  std::size_t diffusion_unconverged = 0;
  std::size_t diffusion_fallbacks = 0;
};

/// Both sets must already be post-processed (unit rows).
PipelineResult run_pipeline(const PipelineSpec& spec, const PipelineParams& params,
                            const DescriptorSet& queries, const DescriptorSet& db);

}  // namespace instret
