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

#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "instret/groundtruth.hpp"
#include "instret/tensor_io.hpp"

namespace instret::fixture {

inline constexpr double kPi = 3.14159265358979323846;

inline std::vector<std::string> numbered(const std::string& prefix, std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(fmt::format("{}{:04}", prefix, i));
  return out;
}

inline RowMatrix gaussian(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double sigma = 1.0) {
  std::normal_distribution<double> nd(0.0, sigma);
  RowMatrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = nd(rng);
  return m;
}

inline RowMatrix unit_rows(RowMatrix m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) m.row(i).normalize();
  return m;
}

inline DescriptorSet random_unit_set(std::size_t n, std::size_t dim, std::uint64_t seed,
                                     const std::string& prefix = "db") {
  std::mt19937_64 rng(seed);
  return DescriptorSet(numbered(prefix, n), unit_rows(gaussian(n, dim, rng)));
}

inline FeatureMap random_map(std::uint32_t c, std::uint32_t h, std::uint32_t w, std::mt19937_64& rng,
                             const std::string& name = "map") {
  std::uniform_real_distribution<float> u(-1.0f, 2.0f);
  std::vector<float> data(static_cast<std::size_t>(c) * h * w);
  for (auto& v : data) v = std::max(0.0f, u(rng));  // ReLU-like, with dead cells
  return FeatureMap(name, c, h, w, std::move(data));
}

/// Queries, database and ground truth for one retrieval experiment.
struct Benchmark {
  DescriptorSet queries;
  DescriptorSet db;
  GroundTruth gt;
};

/// `clusters` groups of `per_cluster` points around orthogonal centers in
/// `dim` dimensions, plus one query per cluster. Positives of a query are its
/// cluster. Every intra-cluster similarity exceeds every inter-cluster one by
/// at least 3 sigma; margin() reports the realized gap.
struct PlantedClusters : Benchmark {
  double sigma = 0;
  double margin = 0;
};

inline PlantedClusters planted_clusters(std::size_t clusters = 5, std::size_t per_cluster = 10,
                                        std::size_t dim = 32, double sigma = 0.03,
                                        std::uint64_t seed = 7) {
  std::mt19937_64 rng(seed);
  const std::size_t n = clusters * per_cluster;
  RowMatrix db = gaussian(n, dim, rng, sigma);
  RowMatrix q = gaussian(clusters, dim, rng, sigma);
  for (std::size_t c = 0; c < clusters; ++c) {
    for (std::size_t i = 0; i < per_cluster; ++i) db(static_cast<Eigen::Index>(c * per_cluster + i), static_cast<Eigen::Index>(c)) += 1.0;
    q(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(c)) += 1.0;
  }
  db = unit_rows(db);
  q = unit_rows(q);

  PlantedClusters out;
  out.sigma = sigma;
  auto db_names = numbered("img", n);
  auto q_names = numbered("query", clusters);
  // Realized margin over queries and database points alike.
  RowMatrix all(static_cast<Eigen::Index>(n + clusters), static_cast<Eigen::Index>(dim));
  all << db, q;
  auto label = [&](std::size_t i) { return i < n ? i / per_cluster : i - n; };
  double min_intra = 1e9, max_inter = -1e9;
  for (Eigen::Index i = 0; i < all.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < all.rows(); ++j) {
      const double s = all.row(i).dot(all.row(j));
      if (label(static_cast<std::size_t>(i)) == label(static_cast<std::size_t>(j))) min_intra = std::min(min_intra, s);
      else max_inter = std::max(max_inter, s);
    }
  }
  out.margin = min_intra - max_inter;

  for (std::size_t c = 0; c < clusters; ++c) {
    QueryTruth t;
    t.name = q_names[c];
    for (std::size_t i = 0; i < per_cluster; ++i) t.positive.insert(db_names[c * per_cluster + i]);
    out.gt.queries.push_back(std::move(t));
  }
  out.gt.database = db_names;
  out.db = DescriptorSet(std::move(db_names), std::move(db));
  out.queries = DescriptorSet(std::move(q_names), std::move(q));
  return out;
}

/// Points along a great-circle arc from 0 to 145 degrees plus a tight
/// distractor cluster that is closer to the query than the far end of the
/// arc. The arc is the positive set, so only transitive similarity recovers
/// it fully.
inline Benchmark chain_manifold(std::size_t dim = 32, std::uint64_t seed = 11) {
  std::mt19937_64 rng(seed);
  const std::size_t chain = 30;
  const std::size_t distractors = 10;
  RowMatrix db = gaussian(chain + distractors, dim, rng, 0.003);
  for (std::size_t i = 0; i < chain; ++i) {
    const double theta = (5.0 * static_cast<double>(i)) * kPi / 180.0;
    db(static_cast<Eigen::Index>(i), 0) += std::cos(theta);
    db(static_cast<Eigen::Index>(i), 1) += std::sin(theta);
  }
  for (std::size_t i = 0; i < distractors; ++i) {
    const auto r = static_cast<Eigen::Index>(chain + i);
    db(r, 0) += 0.5;
    db(r, 2) += std::sqrt(3.0) / 2.0;
  }
  db = unit_rows(db);
  RowMatrix q = RowMatrix::Zero(1, static_cast<Eigen::Index>(dim));
  q(0, 0) = std::cos(-2.0 * kPi / 180.0);
  q(0, 1) = std::sin(-2.0 * kPi / 180.0);

  Benchmark out;
  auto names = numbered("arc", chain);
  for (auto& d : numbered("off", distractors)) names.push_back(d);
  QueryTruth t;
  t.name = "query";
  for (std::size_t i = 0; i < chain; ++i) t.positive.insert(names[i]);
  out.gt.queries.push_back(t);
  out.gt.database = names;
  out.db = DescriptorSet(std::move(names), std::move(db));
  out.queries = DescriptorSet({"query"}, std::move(q));
  return out;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& tag) {
  const auto dir = std::filesystem::temp_directory_path() /
                   fmt::format("instret-{}-{}", tag, std::random_device{}());
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace instret::fixture
