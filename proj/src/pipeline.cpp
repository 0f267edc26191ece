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

#include "instret/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>

#include <fmt/format.h>

#include "instret/parallel.hpp"

namespace instret {

namespace {

std::string canonical(std::string_view text) {
  std::string out;
  for (const char c : text) {
    if (!std::isspace(static_cast<unsigned char>(c))) {
      out.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
    }
  }
  return out;
}

}  // namespace

bool PipelineSpec::has(Stage s) const {
  return std::find(stages.begin(), stages.end(), s) != stages.end();
}

std::string PipelineSpec::name() const {
  std::string out = "G";
  if (has(Stage::DBA)) out += "+DBA";
  if (has(Stage::AQE)) out += "+AQE";
  if (has(Stage::DFS)) out += "+DFS";
  return out;
}

PipelineSpec PipelineSpec::parse(std::string_view text) {
  const std::string key = canonical(text);
  const auto it = std::find(kPipelineNames.begin(), kPipelineNames.end(), key);
  if (it == kPipelineNames.end()) {
    throw RankingError(fmt::format("unknown pipeline '{}'; expected one of: {}", text,
                                   fmt::join(kPipelineNames, ", ")));
  }
  PipelineSpec spec;
  if (key.find("DBA") != std::string::npos) spec.stages.push_back(Stage::DBA);
  spec.stages.push_back(Stage::G);
  if (key.find("AQE") != std::string::npos) spec.stages.push_back(Stage::AQE);
  if (key.find("DFS") != std::string::npos) spec.stages.push_back(Stage::DFS);
  return spec;
}

PipelineResult run_pipeline(const PipelineSpec& spec, const PipelineParams& params,
                            const DescriptorSet& queries, const DescriptorSet& db) {
  if (std::count(spec.stages.begin(), spec.stages.end(), Stage::G) != 1) {
    throw RankingError("pipeline must contain global search exactly once");
  }
  if (queries.dim() != db.dim()) {
    throw RankingError(fmt::format("query dim {} differs from database dim {}", queries.dim(),
                                   db.dim()));
  }
  const bool use_dba = spec.has(Stage::DBA);
  const bool use_aqe = spec.has(Stage::AQE);
  const bool use_dfs = spec.has(Stage::DFS);

  const DescriptorSet searched = use_dba ? dba(db, params.dba_n, params.dba_weighted, params.threads) : db;
  const DescriptorSet& diffused = params.dfs_on_original ? db : searched;

  std::optional<DiffusionGraph> graph;
  if (use_dfs) {
    graph = build_diffusion_graph(diffused, params.dfs_k, params.dfs_gamma, params.dfs_graph,
                                  params.threads);
  }
  const std::size_t aqe_n = params.effective_aqe_n(use_dba);
  if (use_aqe && aqe_n > searched.size()) {
    throw RankingError(fmt::format("AQE depth {} exceeds database size {}", aqe_n, searched.size()));
  }
  const DiffusionParams dfs{params.dfs_kq, params.dfs_alpha, params.dfs_tol, params.dfs_max_iter};
  const auto name_rank = name_order(searched);

  PipelineResult result;
  result.rankings.resize(queries.size());
  std::atomic<std::size_t> unconverged{0};
  std::atomic<std::size_t> fallbacks{0};
  parallel_for(queries.size(), params.threads, [&](std::size_t q) {
    const std::string& name = queries.names()[q];
    Descriptor query = queries.row(q).transpose();
    RankedList ranked = rank_scores(name, similarity_scores(query, searched), searched, name_rank);
    if (use_aqe) {
      query = aqe(query, searched, ranked, aqe_n);
      if (!use_dfs) ranked = rank_scores(name, similarity_scores(query, searched), searched, name_rank);
    }
    if (use_dfs) {
      DiffusionResult d = diffuse(*graph, name, query, diffused, dfs);
      if (!d.converged) ++unconverged;
      if (d.fallback) ++fallbacks;
      ranked = std::move(d.ranking);
    }
    result.rankings[q] = std::move(ranked);
  });
  result.diffusion_unconverged = unconverged;
  result.diffusion_fallbacks = fallbacks;
  return result;
}

}  // namespace instret
