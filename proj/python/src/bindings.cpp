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

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "instret/aggregation.hpp"
#include "instret/diffusion.hpp"
#include "instret/evaluation.hpp"
#include "instret/groundtruth.hpp"
#include "instret/pipeline.hpp"
#include "instret/postprocess.hpp"
#include "instret/ranking.hpp"
#include "instret/tensor_io.hpp"
#include "instret/workflow.hpp"

namespace py = pybind11;
using namespace instret;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

FeatureMap map_from_array(std::string name, const FloatArray& a) {
  if (a.ndim() != 3) throw std::invalid_argument("feature map must be a C x H x W array");
  std::vector<float> data(a.data(), a.data() + a.size());
  return FeatureMap(std::move(name), static_cast<std::uint32_t>(a.shape(0)),
                    static_cast<std::uint32_t>(a.shape(1)), static_cast<std::uint32_t>(a.shape(2)),
                    std::move(data));
}

FloatArray map_to_array(const FeatureMap& m) {
  FloatArray out({m.channels(), m.height(), m.width()});
  std::copy(m.data().begin(), m.data().end(), out.mutable_data());
  return out;
}

GroundTruth groundtruth_from(const py::object& source, bool strict) {
  if (py::isinstance<py::str>(source)) return parse_generic_groundtruth(source.cast<std::string>(), strict);
  const auto json = py::module_::import("json");
  return parse_generic_groundtruth(json.attr("dumps")(source).cast<std::string>(), strict);
}

PipelineParams params_from(const py::kwargs& kw) {
  PipelineParams p;
  for (const auto& [key, value] : kw) {
    const auto k = key.cast<std::string>();
    if (k == "aqe_n") p.aqe_n = value.cast<std::size_t>();
    else if (k == "dba_n") p.dba_n = value.cast<std::size_t>();
    else if (k == "dba_weighted") p.dba_weighted = value.cast<bool>();
    else if (k == "dfs_k") p.dfs_k = value.cast<std::size_t>();
    else if (k == "dfs_kq") p.dfs_kq = value.cast<std::size_t>();
    else if (k == "dfs_alpha") p.dfs_alpha = value.cast<double>();
    else if (k == "dfs_gamma") p.dfs_gamma = value.cast<double>();
    else if (k == "dfs_tol") p.dfs_tol = value.cast<double>();
    else if (k == "dfs_max_iter") p.dfs_max_iter = value.cast<std::size_t>();
    else if (k == "dfs_graph") p.dfs_graph = value.cast<std::string>() == "union" ? GraphMode::union_ : GraphMode::mutual;
    else if (k == "dfs_on_original") p.dfs_on_original = value.cast<bool>();
    else if (k == "threads") p.threads = value.cast<unsigned>();
    else throw std::invalid_argument("unknown pipeline parameter '" + k + "'");
  }
  return p;
}

}  // namespace

PYBIND11_MODULE(_instret, m) {
  m.doc() = "R-MAC aggregation, PCA-whitening, re-ranking and retrieval evaluation.";

  py::register_exception<IoError>(m, "IoError", PyExc_RuntimeError);
  py::register_exception<StageError>(m, "StageError", PyExc_RuntimeError);

  // -- containers --------------------------------------------------------

  py::class_<FeatureMap>(m, "FeatureMap")
      .def(py::init(&map_from_array), py::arg("name"), py::arg("data"))
      .def_property_readonly("name", &FeatureMap::name)
      .def_property_readonly("shape", [](const FeatureMap& f) {
        return py::make_tuple(f.channels(), f.height(), f.width());
      })
      .def("numpy", &map_to_array)
      .def("__eq__", [](const FeatureMap& a, const FeatureMap& b) { return a == b; });

  py::class_<DescriptorSet>(m, "DescriptorSet")
      .def(py::init<std::vector<std::string>, RowMatrix, std::vector<std::string>>(), py::arg("names"),
           py::arg("matrix"), py::arg("provenance") = std::vector<std::string>{})
      .def_property_readonly("names", &DescriptorSet::names)
      .def_property_readonly("matrix", [](const DescriptorSet& s) { return RowMatrix(s.matrix()); })
      .def_property_readonly("provenance", &DescriptorSet::provenance)
      .def_property_readonly("dim", &DescriptorSet::dim)
      .def("__len__", &DescriptorSet::size)
      .def("index_of", &DescriptorSet::index_of)
      .def("__eq__", [](const DescriptorSet& a, const DescriptorSet& b) { return a == b; });

  m.def("read_fmap", &read_fmap_file, py::arg("path"));
  m.def("write_fmap", &write_fmap_file, py::arg("map"), py::arg("path"));
  m.def("read_dset", &read_dset_file, py::arg("path"));
  m.def("write_dset", &write_dset_file, py::arg("set"), py::arg("path"));

  // -- aggregation -------------------------------------------------------

  m.def("rmac_regions", [](std::uint32_t w, std::uint32_t h, std::uint32_t levels) {
        std::vector<std::tuple<std::uint32_t, std::uint32_t, std::uint32_t, std::uint32_t, std::uint32_t>> out;
        for (const auto& r : rmac_regions(w, h, levels)) out.emplace_back(r.x, r.y, r.w, r.h, r.scale);
        return out;
      }, py::arg("width"), py::arg("height"), py::arg("levels") = 3,
      "Regions as (x, y, w, h, scale) tuples.");
  m.def("rmac", &rmac, py::arg("map"), py::arg("levels") = 3, py::arg("region_norm") = true);
  m.def("downsample", [](const FeatureMap& f, std::uint32_t h, std::uint32_t w, const std::string& mode) {
        return downsample(f, h, w, mode == "avg" ? PoolMode::average : PoolMode::max);
      }, py::arg("map"), py::arg("height"), py::arg("width"), py::arg("mode") = "max");
  m.def("aggregate_directory", [](const std::filesystem::path& dir, std::uint32_t levels, bool region_norm,
                                  unsigned threads) {
        RmacOptions opts;
        opts.levels = levels;
        opts.region_norm = region_norm;
        return aggregate_directory(dir, opts, threads);
      }, py::arg("dir"), py::arg("levels") = 3, py::arg("region_norm") = true, py::arg("threads") = 0);

  // -- post-processing ---------------------------------------------------

  py::class_<WhiteningModel>(m, "WhiteningModel")
      .def_readonly("input_dim", &WhiteningModel::input_dim)
      .def_readonly("output_dim", &WhiteningModel::output_dim)
      .def_readonly("mean", &WhiteningModel::mean)
      .def_readonly("projection", &WhiteningModel::projection)
      .def_readonly("eigenvalues", &WhiteningModel::eigenvalues)
      .def_readonly("eps", &WhiteningModel::eps)
      .def("apply", &apply_whitening, py::arg("vector"));

  m.def("l2_normalize", &l2_normalize, py::arg("vector"));
  m.def("fit_whitening", &fit_whitening, py::arg("train"), py::arg("d") = kDefaultPcaDim,
        py::arg("eps") = kDefaultWhiteningEps);
  m.def("fit_post_process_whitening", &fit_post_process_whitening, py::arg("train"),
        py::arg("d") = kDefaultPcaDim, py::arg("eps") = kDefaultWhiteningEps);
  m.def("post_process", &post_process, py::arg("set"), py::arg("model") = py::none());
  m.def("ensemble", &cmd_ensemble, py::arg("a"), py::arg("b"), py::arg("pca") = PcaSetting{kDefaultPcaDim},
        py::arg("eps") = kDefaultWhiteningEps, "pca=None keeps the concatenated dimension.");
  m.def("read_whitening", &read_whitening_file, py::arg("path"));
  m.def("write_whitening", &write_whitening_file, py::arg("model"), py::arg("path"));

  // -- ranking -----------------------------------------------------------

  py::class_<RankedList>(m, "RankedList")
      .def_readonly("query", &RankedList::query)
      .def_property_readonly("names", &RankedList::names)
      .def_property_readonly("scores", [](const RankedList& l) {
        std::vector<double> s;
        for (const auto& e : l.entries) s.push_back(e.score);
        return s;
      })
      .def("__len__", [](const RankedList& l) { return l.entries.size(); });

  m.def("global_search", &global_search, py::arg("queries"), py::arg("db"), py::arg("threads") = 1);
  m.def("aqe", &aqe, py::arg("query"), py::arg("db"), py::arg("ranked"), py::arg("n") = 10);
  m.def("dba", &dba, py::arg("db"), py::arg("n") = 20, py::arg("weighted") = false, py::arg("threads") = 1);

  py::class_<DiffusionGraph>(m, "DiffusionGraph")
      .def_readonly("names", &DiffusionGraph::names)
      .def_property_readonly("S", [](const DiffusionGraph& g) { return g.S.to_dense(); })
      .def_property_readonly("nonzeros", [](const DiffusionGraph& g) { return g.S.nonzeros(); });

  py::class_<DiffusionResult>(m, "DiffusionResult")
      .def_readonly("ranking", &DiffusionResult::ranking)
      .def_readonly("f", &DiffusionResult::f)
      .def_readonly("iterations", &DiffusionResult::iterations)
      .def_readonly("residual_norm", &DiffusionResult::residual_norm)
      .def_readonly("converged", &DiffusionResult::converged)
      .def_readonly("fallback", &DiffusionResult::fallback);

  m.def("build_diffusion_graph", [](const DescriptorSet& db, std::size_t k, double gamma, const std::string& mode) {
        return build_diffusion_graph(db, k, gamma, mode == "union" ? GraphMode::union_ : GraphMode::mutual);
      }, py::arg("db"), py::arg("k") = 50, py::arg("gamma") = 3.0, py::arg("mode") = "mutual");
  m.def("diffuse", [](const DiffusionGraph& g, std::string name, const Descriptor& q, const DescriptorSet& db,
                      std::size_t kq, double alpha, double tol, std::size_t max_iter) {
        return diffuse(g, std::move(name), q, db, {kq, alpha, tol, max_iter});
      }, py::arg("graph"), py::arg("query_name"), py::arg("query"), py::arg("db"), py::arg("kq") = 10,
      py::arg("alpha") = 0.99, py::arg("tol") = 1e-6, py::arg("max_iter") = 100);

  m.attr("PIPELINES") = std::vector<std::string>(kPipelineNames.begin(), kPipelineNames.end());
  m.def("run_pipeline", [](const std::string& spec, const DescriptorSet& queries, const DescriptorSet& db,
                           const py::kwargs& kw) {
        return run_pipeline(PipelineSpec::parse(spec), params_from(kw), queries, db).rankings;
      }, py::arg("spec"), py::arg("queries"), py::arg("db"),
      "Keyword parameters: aqe_n, dba_n, dba_weighted, dfs_k, dfs_kq, dfs_alpha, dfs_gamma, dfs_tol, "
      "dfs_max_iter, dfs_graph, dfs_on_original, threads.");

  // -- evaluation --------------------------------------------------------

  m.def("average_precision", [](const std::vector<std::string>& ranked, const NameSet& pos, const NameSet& junk,
                                const std::string& mode) {
        return average_precision(ranked, pos, junk, parse_ap_mode(mode));
      }, py::arg("ranked"), py::arg("positive"), py::arg("junk") = NameSet{}, py::arg("mode") = "trapezoid");
  m.def("precision_at_k", [](const std::vector<std::string>& ranked, const NameSet& pos, const NameSet& junk,
                             std::size_t k, bool remove_junk) {
        return precision_at_k(ranked, pos, junk, k, remove_junk);
      }, py::arg("ranked"), py::arg("positive"), py::arg("junk") = NameSet{}, py::arg("k") = 5,
      py::arg("remove_junk") = true);
  m.def("evaluate", [](const std::vector<RankedList>& rankings, const py::object& gt, const std::string& protocol,
                       const std::string& ap, bool strict) {
        EvalOptions opts;
        opts.ap = parse_ap_mode(ap);
        const EvalReport r = evaluate(rankings, groundtruth_from(gt, strict), parse_protocol(protocol), opts);
        return py::module_::import("json").attr("loads")(report_to_json(r));
      }, py::arg("rankings"), py::arg("groundtruth"), py::arg("protocol") = "classic",
      py::arg("ap") = "trapezoid", py::arg("strict") = false,
      "groundtruth is a JSON string or dict; returns the report with percentages.");
  m.def("run_eval", [](const std::string& config_json) {
        RunConfig c;
        c.quiet = true;
        apply_config_json(c, config_json);
        return py::module_::import("json").attr("loads")(eval_run_to_json(cmd_eval(c)));
      }, py::arg("config_json"), "Runs the eval command from a JSON configuration.");
}
