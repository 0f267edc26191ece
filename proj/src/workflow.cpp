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

#include "instret/workflow.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <ostream>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ostream.h>
#include <json.hpp>

#include "instret/parallel.hpp"

namespace instret {

namespace {

using nlohmann::json;

template <typename Fn>
auto run_stage(const std::string& stage, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

void log_line(std::ostream* log, const std::string& line) {
  if (log) *log << line << '\n';
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::vector<std::string> split_list(std::string_view text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const auto end = comma == std::string_view::npos ? text.size() : comma;
    std::string item(text.substr(start, end - start));
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) out.push_back(item);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string rmac_tag(const RmacOptions& rmac) {
  return fmt::format("rmac-L{}{}", rmac.levels, rmac.region_norm ? "" : "-noregionnorm");
}

std::filesystem::path with_suffix(const std::filesystem::path& path, const std::string& suffix) {
  auto out = path;
  out.replace_filename(path.stem().string() + suffix + path.extension().string());
  return out;
}

}  // namespace

StageError::StageError(std::string stage, const std::string& message)
    : std::runtime_error(fmt::format("[{}] {}", stage, message)), stage_(std::move(stage)) {}

// ---------------------------------------------------------------------------
// configuration

PcaSetting parse_pca_setting(std::string_view text) {
  const std::string s = lower(text);
  if (s == "true") return std::nullopt;
  std::size_t d = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), d);
  if (ec != std::errc() || ptr != s.data() + s.size() || d == 0) {
    throw std::invalid_argument(
        fmt::format("PCA dimension must be a positive integer or 'true', got '{}'", text));
  }
  return d;
}

std::vector<PcaSetting> parse_pca_list(std::string_view text) {
  std::vector<PcaSetting> out;
  for (const auto& item : split_list(text)) out.push_back(parse_pca_setting(item));
  if (out.empty()) throw std::invalid_argument("empty PCA list");
  return out;
}

std::string to_string(const PcaSetting& pca) { return pca ? std::to_string(*pca) : "true"; }

void apply_config_json(RunConfig& c, std::string_view json_text) {
  const json doc = json::parse(json_text);
  if (!doc.is_object()) throw std::invalid_argument("config must be a JSON object");
  auto str_or_list = [](const json& v) {
    std::vector<std::string> out;
    if (v.is_array()) {
      for (const auto& item : v) out.push_back(item.is_string() ? item.get<std::string>() : item.dump());
    } else {
      for (auto& s : split_list(v.is_string() ? v.get<std::string>() : v.dump())) out.push_back(s);
    }
    return out;
  };
  auto on_off = [](const json& v) {
    if (v.is_boolean()) return v.get<bool>();
    const std::string s = lower(v.get<std::string>());
    if (s == "on" || s == "true") return true;
    if (s == "off" || s == "false") return false;
    throw std::invalid_argument(fmt::format("expected on/off, got '{}'", s));
  };
  for (const auto& [key, v] : doc.items()) {
    if (key == "dataset") c.dataset = v.get<std::string>();
    else if (key == "features") c.features = v.get<std::string>();
    else if (key == "queries") c.queries = v.get<std::string>();
    else if (key == "gt") c.gt = v.get<std::string>();
    else if (key == "gt_format") c.gt_format = v.get<std::string>() == "oxford" ? GroundTruthFormat::oxford : GroundTruthFormat::json;
    else if (key == "strip_prefix") c.strip_prefix = v.get<bool>();
    else if (key == "strict_gt") c.strict_gt = v.get<bool>();
    else if (key == "rmac_L") c.rmac.levels = v.get<std::uint32_t>();
    else if (key == "rmac_region_norm") c.rmac.region_norm = on_off(v);
    else if (key == "downsample") c.rmac.downsample = v.is_null() ? std::nullopt : std::optional(v.get<std::uint32_t>());
    else if (key == "downsample_mode") c.rmac.pool = v.get<std::string>() == "avg" ? PoolMode::average : PoolMode::max;
    else if (key == "pca") {
      c.pca.clear();
      for (const auto& s : str_or_list(v)) c.pca.push_back(parse_pca_setting(s));
    }
    else if (key == "whiten_eps") c.whiten_eps = v.get<double>();
    else if (key == "whiten_train") c.whiten_train = v.get<std::string>();
    else if (key == "whiten_model") c.whiten_model = v.get<std::string>();
    else if (key == "pipeline") c.pipelines = str_or_list(v);
    else if (key == "aqe_n") c.params.aqe_n = v.get<std::size_t>();
    else if (key == "dba_n") c.params.dba_n = v.get<std::size_t>();
    else if (key == "dba_weighted") c.params.dba_weighted = v.get<bool>();
    else if (key == "dfs_k") c.params.dfs_k = v.get<std::size_t>();
    else if (key == "dfs_kq") c.params.dfs_kq = v.get<std::size_t>();
    else if (key == "dfs_alpha") c.params.dfs_alpha = v.get<double>();
    else if (key == "dfs_gamma") c.params.dfs_gamma = v.get<double>();
    else if (key == "dfs_tol") c.params.dfs_tol = v.get<double>();
    else if (key == "dfs_max_iter") c.params.dfs_max_iter = v.get<std::size_t>();
    else if (key == "dfs_graph") c.params.dfs_graph = v.get<std::string>() == "union" ? GraphMode::union_ : GraphMode::mutual;
    else if (key == "dfs_on_original") c.params.dfs_on_original = v.get<bool>();
    else if (key == "protocol") {
      c.protocols.clear();
      for (const auto& s : str_or_list(v)) c.protocols.push_back(parse_protocol(s));
    }
    else if (key == "ap") c.eval.ap = parse_ap_mode(v.get<std::string>());
    else if (key == "mp_raw") c.eval.precision_removes_junk = !v.get<bool>();
    else if (key == "out") c.out = v.get<std::string>();
    else if (key == "rankings") c.rankings = v.get<std::string>();
    else if (key == "threads") c.threads = v.get<unsigned>();
    else if (key == "quiet") c.quiet = v.get<bool>();
    else throw std::invalid_argument(fmt::format("unknown config key '{}'", key));
  }
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument(fmt::format("cannot open config '{}'", path.string()));
  std::stringstream buf;
  buf << in.rdbuf();
  RunConfig c;
  apply_config_json(c, buf.str());
  // Relative paths in a config file are relative to the file itself.
  const auto base = path.parent_path();
  for (auto* p : {&c.features, &c.queries, &c.gt, &c.whiten_train, &c.whiten_model, &c.out, &c.rankings}) {
    if (!p->empty() && p->is_relative()) *p = base / *p;
  }
  return c;
}

// ---------------------------------------------------------------------------
// aggregation

DescriptorSet aggregate_directory(const std::filesystem::path& dir, const RmacOptions& rmac,
                                  unsigned threads, std::ostream* log) {
  if (!std::filesystem::is_directory(dir)) {
    throw IoError(IoErrc::missing_file, fmt::format("feature directory '{}' not found", dir.string()));
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".fmap") files.push_back(entry.path());
  }
  if (files.empty()) {
    throw IoError(IoErrc::missing_file, fmt::format("no feature maps found in '{}'", dir.string()));
  }
  std::sort(files.begin(), files.end());

  std::vector<Descriptor> rows(files.size());
  parallel_for(files.size(), threads, [&](std::size_t i) {
    FeatureMap map = read_fmap_file(files[i]);
    if (rmac.downsample) {
      const std::uint32_t side = *rmac.downsample;
      if (map.height() != side || map.width() != side) {
        map = downsample(map, side, side, rmac.pool);
      }
    }
    rows[i] = instret::rmac(map, rmac.levels, rmac.region_norm);
  });

  const auto dim = rows.front().size();
  RowMatrix matrix(static_cast<Eigen::Index>(rows.size()), dim);
  std::vector<std::string> names;
  names.reserve(files.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != dim) {
      throw IoError(IoErrc::shape_mismatch,
                    fmt::format("'{}' has {} channels, expected {}", files[i].string(),
                                rows[i].size(), dim));
    }
    matrix.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
    names.push_back(files[i].stem().string());
  }
  std::vector<std::string> tags;
  if (rmac.downsample) {
    tags.push_back(fmt::format("{}pool-{}", rmac.pool == PoolMode::max ? "max" : "avg", *rmac.downsample));
  }
  tags.push_back(rmac_tag(rmac));
  log_line(log, fmt::format("aggregated {} feature maps from {} (dim {})", files.size(),
                            dir.string(), dim));
  return DescriptorSet(std::move(names), std::move(matrix), std::move(tags));
}

DescriptorSet load_descriptors(const std::filesystem::path& path, const RmacOptions& rmac,
                               unsigned threads, std::ostream* log) {
  if (std::filesystem::is_directory(path)) return aggregate_directory(path, rmac, threads, log);
  return read_dset_file(path);
}

DescriptorSet cmd_aggregate(const RunConfig& config, std::ostream* log) {
  DescriptorSet set = run_stage("aggregate", [&] {
    return aggregate_directory(config.features, config.rmac, config.threads, log);
  });
  if (!config.out.empty()) {
    run_stage("write", [&] { write_dset_file(set, config.out); });
    log_line(log, fmt::format("wrote {} descriptors to {}", set.size(), config.out.string()));
  }
  return set;
}

// ---------------------------------------------------------------------------
// whitening and ensembling

WhiteningModel cmd_fit_whiten(const RunConfig& config, std::ostream* log) {
  if (config.pca.size() != 1 || !config.pca.front()) {
    throw StageError("fit-whiten", "fit-whiten needs a single numeric --pca dimension");
  }
  const auto train_path = config.whiten_train.empty() ? config.features : config.whiten_train;
  const DescriptorSet train = run_stage("load", [&] {
    return load_descriptors(train_path, config.rmac, config.threads, log);
  });
  WhiteningModel model = run_stage("whiten", [&] {
    return fit_post_process_whitening(train, *config.pca.front(), config.whiten_eps);
  });
  log_line(log, fmt::format("fitted whitening {} -> {} on {} descriptors", model.input_dim,
                            model.output_dim, train.size()));
  if (!config.out.empty()) run_stage("write", [&] { write_whitening_file(model, config.out); });
  return model;
}

DescriptorSet cmd_ensemble(const DescriptorSet& a, const DescriptorSet& b, const PcaSetting& pca,
                           double eps) {
  const DescriptorSet joined = run_stage("ensemble", [&] {
    return ensemble_concat(l2_normalize_rows(a), l2_normalize_rows(b));
  });
  return run_stage("whiten", [&] {
    std::optional<WhiteningModel> model;
    if (pca) model = fit_post_process_whitening(joined, *pca, eps);
    return post_process(joined, model);
  });
}

// ---------------------------------------------------------------------------
// evaluation

EvalRun cmd_eval(const RunConfig& config, std::ostream* log) {
  const unsigned threads = config.threads;
  const DescriptorSet db = run_stage("load-database", [&] {
    return load_descriptors(config.features, config.rmac, threads, log);
  });
  const DescriptorSet queries = run_stage("load-queries", [&] {
    return load_descriptors(config.queries, config.rmac, threads, log);
  });
  const GroundTruth gt = run_stage("groundtruth", [&] {
    return load_groundtruth(config.gt, config.gt_format, config.strip_prefix, config.strict_gt);
  });
  std::vector<PipelineSpec> specs;
  run_stage("pipeline", [&] {
    for (const auto& p : config.pipelines) specs.push_back(PipelineSpec::parse(p));
  });

  std::vector<Protocol> protocols = config.protocols;
  if (protocols.empty()) {
    const bool revisited = !gt.queries.empty() &&
        std::all_of(gt.queries.begin(), gt.queries.end(), [](const QueryTruth& q) { return q.revisited(); });
    protocols = revisited ? std::vector{Protocol::easy, Protocol::medium, Protocol::hard}
                          : std::vector{Protocol::classic};
  }

  std::optional<DescriptorSet> external_train;
  if (!config.whiten_train.empty()) {
    external_train = run_stage("load-whiten-train", [&] {
      return load_descriptors(config.whiten_train, config.rmac, threads, log);
    });
  }
  std::optional<WhiteningModel> fixed_model;
  if (!config.whiten_model.empty()) {
    fixed_model = run_stage("load-whiten-model", [&] { return read_whitening_file(config.whiten_model); });
  }

  PipelineParams params = config.params;
  params.threads = threads;

  EvalRun run;
  for (const auto& pca : config.pca) {
    std::optional<WhiteningModel> model;
    if (pca) {
      model = run_stage("whiten", [&] {
        if (fixed_model) return *fixed_model;
        if (*pca > db.dim()) {
          throw PostprocessError(fmt::format("PCA dimension {} exceeds descriptor dim {}", *pca, db.dim()));
        }
        return fit_post_process_whitening(external_train ? *external_train : db, *pca, config.whiten_eps);
      });
    }
    const auto [pdb, pq] = run_stage("postprocess", [&] {
      return std::pair{post_process(db, model), post_process(queries, model)};
    });
    for (const auto& spec : specs) {
      PipelineResult result = run_stage("rank", [&] { return run_pipeline(spec, params, pq, pdb); });
      if (result.diffusion_unconverged > 0) {
        log_line(log, fmt::format("warning: diffusion did not reach tolerance for {} queries",
                                  result.diffusion_unconverged));
      }
      for (const auto protocol : protocols) {
        EvalReport report = run_stage("evaluate", [&] {
          return evaluate(result.rankings, gt, protocol, config.eval);
        });
        if (report.missing_positives > 0) {
          log_line(log, fmt::format("warning: {} ground-truth positives are not in the database",
                                    report.missing_positives));
        }
        run.entries.push_back({config.dataset, spec.name(), pca, std::move(report), result.rankings});
      }
    }
  }

  if (!config.out.empty()) {
    run_stage("write-report", [&] {
      std::ofstream out(config.out, std::ios::binary | std::ios::trunc);
      if (!out) throw IoError(IoErrc::io_failure, fmt::format("cannot write '{}'", config.out.string()));
      out << eval_run_to_json(run) << '\n';
      if (!out) throw IoError(IoErrc::io_failure, fmt::format("cannot write '{}'", config.out.string()));
    });
  }
  if (!config.rankings.empty()) {
    run_stage("write-rankings", [&] {
      const bool many = config.pca.size() * specs.size() > 1;
      for (std::size_t i = 0; i < run.entries.size(); i += protocols.size()) {
        const auto& e = run.entries[i];
        const auto path = many ? with_suffix(config.rankings, fmt::format(".{}.pca{}", e.pipeline, to_string(e.pca)))
                               : config.rankings;
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError(IoErrc::io_failure, fmt::format("cannot write '{}'", path.string()));
        write_rankings_tsv(e.rankings, out);
      }
    });
  }
  return run;
}

std::string eval_run_to_json(const EvalRun& run) {
  auto entry_json = [](const EvalEntry& e) {
    auto doc = nlohmann::ordered_json::parse(report_to_json(e.report));
    nlohmann::ordered_json out;
    out["dataset"] = e.dataset;
    out["pipeline"] = e.pipeline;
    out["pca"] = to_string(e.pca);
    for (auto& [k, v] : doc.items()) out[k] = v;
    return out;
  };
  if (run.entries.size() == 1) return entry_json(run.entries.front()).dump(2);
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& e : run.entries) arr.push_back(entry_json(e));
  return arr.dump(2);
}

std::string eval_run_table(const EvalRun& run) {
  std::string out = fmt::format("{:<12} {:<16} {:<9} {:>6} {:>8} {:>8} {:>8} {:>4}\n", "dataset",
                                "pipeline", "protocol", "pca", "mAP", "mP@5", "mP@10", "nq");
  for (const auto& e : run.entries) {
    out += fmt::format("{:<12} {:<16} {:<9} {:>6} {:>8.2f} {:>8.2f} {:>8.2f} {:>4}\n", e.dataset,
                       e.pipeline, to_string(e.report.protocol), to_string(e.pca),
                       100.0 * e.report.map, 100.0 * e.report.mp5, 100.0 * e.report.mp10,
                       e.report.n_queries);
  }
  return out;
}

}  // namespace instret
