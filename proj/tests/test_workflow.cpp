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

#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>

#include <doctest.h>
#include <json.hpp>

#include "fixtures.hpp"
#include "instret/workflow.hpp"
#include "oracles.hpp"

using namespace instret;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// A planted-cluster benchmark written to disk as DSET files plus JSON ground truth.
struct BenchDir {
  std::filesystem::path dir = fixture::temp_dir("wf");
  fixture::PlantedClusters bench = fixture::planted_clusters();
  BenchDir() {
    write_dset_file(bench.db, dir / "db.dset");
    write_dset_file(bench.queries, dir / "q.dset");
    std::ofstream(dir / "gt.json") << groundtruth_to_json(bench.gt);
  }
  ~BenchDir() { std::filesystem::remove_all(dir); }

  RunConfig config() const {
    RunConfig c;
    c.features = dir / "db.dset";
    c.queries = dir / "q.dset";
    c.gt = dir / "gt.json";
    c.pca = {std::nullopt};
    c.threads = 1;
    c.quiet = true;
    return c;
  }
};

int run_cli(const std::string& args, const std::filesystem::path& log) {
  const std::string cmd = fmt::format("\"{}\" {} > \"{}\" 2>&1", INSTRET_CLI_PATH, args, log.string());
  const int status = std::system(cmd.c_str());
  return status == 0 ? 0 : 1;
}

}  // namespace

TEST_CASE("aggregating a directory of feature maps") {
  const auto dir = fixture::temp_dir("agg");
  std::mt19937_64 rng(81);
  std::vector<FeatureMap> maps;
  for (const char* name : {"b_img", "a_img", "c_img"}) {
    maps.push_back(fixture::random_map(6, 10, 13, rng, name));
    write_fmap_file(maps.back(), dir / (std::string(name) + ".fmap"));
  }
  std::ofstream(dir / "notes.txt") << "ignored";

  const DescriptorSet set = aggregate_directory(dir, {}, 2);
  CHECK(set.names() == std::vector<std::string>{"a_img", "b_img", "c_img"});
  CHECK(set.dim() == 6);
  CHECK(set.provenance() == std::vector<std::string>{"rmac-L3"});
  CHECK((set.row(0).transpose() - oracle::rmac(maps[1], 3)).cwiseAbs().maxCoeff() < 1e-12);

  RmacOptions opts;
  opts.downsample = 8;
  opts.pool = PoolMode::average;
  opts.region_norm = false;
  const DescriptorSet pooled = aggregate_directory(dir, opts, 1);
  CHECK(pooled.provenance() == std::vector<std::string>{"avgpool-8", "rmac-L3-noregionnorm"});
  const FeatureMap small = downsample(maps[0], 8, 8, PoolMode::average);
  CHECK((pooled.row(1).transpose() - oracle::rmac(small, 3, false)).cwiseAbs().maxCoeff() < 1e-9);

  opts.downsample = 20;
  CHECK_THROWS_AS(aggregate_directory(dir, opts, 1), AggregationError);

  RunConfig c;
  c.features = dir;
  c.out = dir / "out.dset";
  c.quiet = true;
  cmd_aggregate(c);
  CHECK(read_dset_file(c.out).names() == set.names());
  std::filesystem::remove_all(dir);
}

TEST_CASE("aggregating an empty directory fails with a stage-tagged error") {
  const auto dir = fixture::temp_dir("agg-empty");
  RunConfig c;
  c.features = dir;
  try {
    cmd_aggregate(c);
    FAIL("no error");
  } catch (const StageError& e) {
    CHECK(e.stage() == "aggregate");
    CHECK(std::string(e.what()).find("no feature maps found") != std::string::npos);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("PCA settings") {
  CHECK(parse_pca_setting("256") == PcaSetting{256});
  CHECK(parse_pca_setting("true") == PcaSetting{});
  CHECK_THROWS(parse_pca_setting("0"));
  CHECK_THROWS(parse_pca_setting("abc"));
  const auto list = parse_pca_list("512, true,64");
  REQUIRE(list.size() == 3);
  CHECK(to_string(list[1]) == "true");
  CHECK(to_string(list[2]) == "64");
}

TEST_CASE("config files") {
  const auto dir = fixture::temp_dir("cfg");
  std::ofstream(dir / "run.json") << R"({"features": "db.dset", "pca": [512, "true"], "pipeline": "G+DBA,G+DFS",
    "dfs_alpha": 0.8, "rmac_region_norm": "off", "protocol": "medium", "mp_raw": true, "threads": 2})";
  const RunConfig c = load_run_config(dir / "run.json");
  CHECK(c.features == dir / "db.dset");
  REQUIRE(c.pca.size() == 2);
  CHECK(c.pca[0] == PcaSetting{512});
  CHECK_FALSE(c.pca[1].has_value());
  CHECK(c.pipelines == std::vector<std::string>{"G+DBA", "G+DFS"});
  CHECK(c.params.dfs_alpha == 0.8);
  CHECK_FALSE(c.rmac.region_norm);
  CHECK(c.protocols == std::vector<Protocol>{Protocol::medium});
  CHECK_FALSE(c.eval.precision_removes_junk);
  CHECK(c.threads == 2);

  RunConfig d;
  CHECK_THROWS(apply_config_json(d, R"({"dfs_alpah": 0.8})"));
  std::filesystem::remove_all(dir);
}

TEST_CASE("planted clusters are retrieved perfectly by every pipeline") {
  BenchDir fx;
  RunConfig c = fx.config();
  c.pipelines.assign(kPipelineNames.begin(), kPipelineNames.end());
  c.params.dba_n = 5;
  c.params.dfs_k = 5;
  c.params.dfs_kq = 5;
  c.pca = {std::nullopt, std::size_t{4}};
  const EvalRun run = cmd_eval(c);
  CHECK(run.entries.size() == 16);
  for (const auto& e : run.entries) {
    CAPTURE(e.pipeline);
    CHECK(e.report.map == doctest::Approx(1.0));
    CHECK(e.report.mp5 == doctest::Approx(1.0));
    CHECK(e.report.mp10 == doctest::Approx(1.0));
    CHECK(e.report.n_queries == 5);
  }
  const auto doc = nlohmann::json::parse(eval_run_to_json(run));
  CHECK(doc.is_array());
  CHECK(doc[0]["pipeline"] == "G");
  CHECK(doc[0]["pca"] == "true");
  CHECK(doc[0]["map"] == 100.0);
  const std::string table = eval_run_table(run);
  CHECK(table.find("100.00") != std::string::npos);
}

TEST_CASE("evaluation writes reports and rankings") {
  BenchDir fx;
  RunConfig c = fx.config();
  c.out = fx.dir / "report.json";
  c.rankings = fx.dir / "ranks.tsv";
  const EvalRun run = cmd_eval(c);
  const auto doc = nlohmann::json::parse(slurp(c.out));
  CHECK(doc.is_object());
  CHECK(doc["protocol"] == "classic");
  CHECK(doc["n_queries"] == 5);
  const std::string tsv = slurp(c.rankings);
  CHECK(tsv.rfind("query\trank\tname\tscore\n", 0) == 0);
  CHECK(std::count(tsv.begin(), tsv.end(), '\n') == 1 + 5 * 50);
  CHECK(run.entries.size() == 1);
}

TEST_CASE("evaluation picks the revisited protocols automatically") {
  BenchDir fx;
  GroundTruth gt = fx.bench.gt;
  for (auto& q : gt.queries) {
    const std::vector<std::string> pos(q.positive.begin(), q.positive.end());
    q.easy = NameSet(pos.begin(), pos.begin() + 5);
    q.hard = NameSet(pos.begin() + 5, pos.end());
  }
  std::ofstream(fx.dir / "gt.json") << groundtruth_to_json(gt);
  const EvalRun run = cmd_eval(fx.config());
  REQUIRE(run.entries.size() == 3);
  CHECK(run.entries[0].report.protocol == Protocol::easy);
  CHECK(run.entries[1].report.protocol == Protocol::medium);
  CHECK(run.entries[2].report.protocol == Protocol::hard);
  CHECK(run.entries[1].report.map == doctest::Approx(1.0));
}

TEST_CASE("a pre-fitted whitening model is reused") {
  BenchDir fx;
  RunConfig fit = fx.config();
  fit.pca = {std::size_t{8}};
  fit.out = fx.dir / "w.whtn";
  const WhiteningModel m = cmd_fit_whiten(fit);
  CHECK(m.output_dim == 8);

  RunConfig c = fx.config();
  c.pca = {std::size_t{8}};
  const EvalRun fitted = cmd_eval(c);
  c.whiten_model = fit.out;
  const EvalRun reused = cmd_eval(c);
  CHECK(eval_run_to_json(fitted) == eval_run_to_json(reused));

  fit.pca = {std::nullopt};
  CHECK_THROWS_AS(cmd_fit_whiten(fit), StageError);
}

TEST_CASE("stage errors name the failing stage") {
  BenchDir fx;
  RunConfig c = fx.config();
  c.pipelines = {"G+XYZ"};
  try {
    cmd_eval(c);
    FAIL("no error");
  } catch (const StageError& e) {
    CHECK(e.stage() == "pipeline");
  }
  c = fx.config();
  c.pca = {std::size_t{64}};
  CHECK_THROWS_AS(cmd_eval(c), StageError);
}

TEST_CASE("ensembling a set with itself matches whitening it alone") {
  const DescriptorSet a = fixture::random_unit_set(50, 16, 82);
  const DescriptorSet joined = cmd_ensemble(a, a, std::size_t{8});
  const DescriptorSet single = post_process(a, fit_post_process_whitening(a, 8));
  CHECK(joined.dim() == 8);
  CHECK((joined.matrix() - single.matrix()).cwiseAbs().maxCoeff() < 1e-4);
  const DescriptorSet raw = cmd_ensemble(a, a, std::nullopt);
  CHECK(raw.dim() == 32);
}

TEST_CASE("command-line tool") {
  BenchDir fx;
  const auto log = fx.dir / "log.txt";
  const std::string common = fmt::format("--features \"{}\" --queries \"{}\" --gt \"{}\" --pca true --quiet",
                                         (fx.dir / "db.dset").string(), (fx.dir / "q.dset").string(),
                                         (fx.dir / "gt.json").string());

  SUBCASE("eval prints the table and writes JSON") {
    REQUIRE(run_cli(fmt::format("eval {} --pipeline G,G+AQE --aqe-n 3 --out \"{}\"", common,
                                (fx.dir / "r.json").string()),
                    log) == 0);
    CHECK(slurp(log).find("100.00") != std::string::npos);
    const auto doc = nlohmann::json::parse(slurp(fx.dir / "r.json"));
    CHECK(doc.size() == 2);
    CHECK(doc[1]["pipeline"] == "G+AQE");
  }
  SUBCASE("flags override the config file") {
    std::ofstream(fx.dir / "cfg.json") << R"({"pipeline": "G+XYZ"})";
    CHECK(run_cli(fmt::format("eval {} --config \"{}\"", common, (fx.dir / "cfg.json").string()), log) != 0);
    CHECK(run_cli(fmt::format("eval {} --config \"{}\" --pipeline G", common, (fx.dir / "cfg.json").string()),
                  log) == 0);
  }
  SUBCASE("empty feature directory exits nonzero") {
    const auto empty = fx.dir / "empty";
    std::filesystem::create_directories(empty);
    CHECK(run_cli(fmt::format("aggregate --features \"{}\" --out \"{}\"", empty.string(),
                              (fx.dir / "x.dset").string()),
                  log) != 0);
    CHECK(slurp(log).find("no feature maps found") != std::string::npos);
  }
  SUBCASE("ensemble writes a reduced set") {
    REQUIRE(run_cli(fmt::format("ensemble \"{0}\" \"{0}\" --pca 8 --out \"{1}\" --quiet",
                                (fx.dir / "db.dset").string(), (fx.dir / "e.dset").string()),
                    log) == 0);
    CHECK(read_dset_file(fx.dir / "e.dset").dim() == 8);
  }
  SUBCASE("unknown subcommand exits nonzero") { CHECK(run_cli("frobnicate", log) != 0); }
}
