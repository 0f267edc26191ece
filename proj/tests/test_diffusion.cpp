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

#include <random>

#include <Eigen/Eigenvalues>
#include <doctest.h>

#include "fixtures.hpp"
#include "instret/diffusion.hpp"
#include "instret/ranking.hpp"
#include "oracles.hpp"

using namespace instret;

namespace {

Eigen::VectorXd dense_seed(const DescriptorSet& db, const Descriptor& q, std::size_t kq, double gamma) {
  std::vector<double> scores;
  for (std::size_t i = 0; i < db.size(); ++i) scores.push_back(oracle::dot(db.matrix(), i, q));
  const auto order = oracle::rank_by_counting(scores, db.names());
  Eigen::VectorXd y = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(db.size()));
  for (std::size_t t = 0; t < std::min(kq, db.size()); ++t) {
    const auto i = *db.index_of(order[t]);
    y[static_cast<Eigen::Index>(i)] = std::pow(std::max(0.0, scores[i]), gamma);
  }
  return y;
}

}  // namespace

TEST_CASE("sparse matrix assembly") {
  const SparseMatrix m(3, 3, {{0, 1, 2.0}, {2, 0, 1.0}, {0, 1, 3.0}, {1, 1, 0.0}, {2, 2, -1.0}});
  CHECK(m.nonzeros() == 3);
  CHECK(m.coeff(0, 1) == 5.0);
  CHECK(m.coeff(1, 1) == 0.0);
  CHECK(m.row_nonzeros(1) == 0);
  CHECK(m.row_nonzeros(2) == 2);
  Eigen::MatrixXd dense(3, 3);
  dense << 0, 5, 0, 0, 0, 0, 1, 0, -1;
  CHECK(m.to_dense() == dense);
  Eigen::VectorXd x(3), y;
  x << 1, 2, 3;
  m.multiply(x, y);
  CHECK(y == dense * x);
  CHECK_THROWS_AS(SparseMatrix(2, 2, {{2, 0, 1.0}}), RankingError);
}

TEST_CASE("conjugate gradient agrees with a dense solve") {
  std::mt19937_64 rng(51);
  for (int t = 0; t < 20; ++t) {
    const Eigen::MatrixXd g = fixture::gaussian(12, 12, rng);
    const Eigen::MatrixXd a = g * g.transpose() + Eigen::MatrixXd::Identity(12, 12);
    const Eigen::VectorXd b = fixture::gaussian(12, 1, rng);
    const LinearOperator op = [&](const Eigen::VectorXd& x, Eigen::VectorXd& out) { out = a * x; };
    const CgResult r = conjugate_gradient(op, b, Eigen::VectorXd::Zero(12), 1e-12, 200);
    CHECK(r.converged);
    CHECK((r.x - a.ldlt().solve(b)).norm() < 1e-8);
    CHECK(r.residual_norm == doctest::Approx((a * r.x - b).norm()).epsilon(1e-12));
  }
}

TEST_CASE("conjugate gradient reports the true residual when capped") {
  std::mt19937_64 rng(52);
  const Eigen::MatrixXd g = fixture::gaussian(30, 30, rng);
  const Eigen::MatrixXd a = g * g.transpose() + 0.01 * Eigen::MatrixXd::Identity(30, 30);
  const Eigen::VectorXd b = fixture::gaussian(30, 1, rng);
  const LinearOperator op = [&](const Eigen::VectorXd& x, Eigen::VectorXd& out) { out = a * x; };
  const CgResult r = conjugate_gradient(op, b, Eigen::VectorXd::Zero(30), 1e-14, 3);
  CHECK(r.iterations == 3);
  CHECK_FALSE(r.converged);
  CHECK(r.residual_norm == doctest::Approx((a * r.x - b).norm()));
}

TEST_CASE("two-node diffusion has a closed form") {
  RowMatrix m(2, 2);
  m << 1, 0, 0.6, 0.8;
  const DescriptorSet db({"a", "b"}, m);
  const DiffusionGraph g = build_diffusion_graph(db, 1, 1.0);
  CHECK(g.S.coeff(0, 1) == doctest::Approx(1.0));
  CHECK(g.S.coeff(1, 0) == doctest::Approx(1.0));
  const DiffusionResult r = diffuse(g, "q", db.row(0).transpose(), db, {1, 0.5, 1e-14, 100});
  CHECK(r.converged);
  CHECK(std::abs(r.f[0] - 4.0 / 3.0) < 1e-12);
  CHECK(std::abs(r.f[1] - 2.0 / 3.0) < 1e-12);
  CHECK(r.ranking.names() == std::vector<std::string>{"a", "b"});
}

TEST_CASE("orthogonal database has no edges") {
  const DescriptorSet db(fixture::numbered("e", 4), RowMatrix::Identity(4, 4));
  const DiffusionGraph g = build_diffusion_graph(db, 2, 3.0);
  CHECK(g.S.nonzeros() == 0);
  Descriptor q = Descriptor::Zero(4);
  q[2] = 1;
  const DiffusionResult r = diffuse(g, "q", q, db, {});
  CHECK(r.f[2] == doctest::Approx(1.0));
  CHECK(r.ranking.entries[0].name == "e0002");
}

TEST_CASE("normalized affinity is symmetric with spectral radius at most one") {
  for (std::uint64_t seed = 60; seed < 70; ++seed) {
    const DescriptorSet db = fixture::random_unit_set(40, 4, seed);
    for (const GraphMode mode : {GraphMode::mutual, GraphMode::union_}) {
      const SparseMatrix a = knn_affinity(db, 6, 3.0, mode);
      const Eigen::MatrixXd ad = a.to_dense();
      CHECK(ad == ad.transpose());
      CHECK(ad.diagonal().isZero(0));
      CHECK(ad.minCoeff() >= 0);
      for (std::size_t r = 0; r < a.rows(); ++r) {
        if (mode == GraphMode::mutual) CHECK(a.row_nonzeros(r) <= 6);
        else CHECK(a.row_nonzeros(r) >= 1);  // own kNN list has a positive neighbor here or not
      }
      const Eigen::MatrixXd s = normalize_affinity(a).to_dense();
      CHECK((s - s.transpose()).cwiseAbs().maxCoeff() < 1e-15);
      const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s);
      CHECK(es.eigenvalues().cwiseAbs().maxCoeff() <= 1.0 + 1e-12);
    }
  }
}

TEST_CASE("mutual graph is a subgraph of the union graph") {
  const DescriptorSet db = fixture::random_unit_set(50, 5, 71);
  const Eigen::MatrixXd mutual = knn_affinity(db, 5, 2.0, GraphMode::mutual).to_dense();
  const Eigen::MatrixXd uni = knn_affinity(db, 5, 2.0, GraphMode::union_).to_dense();
  for (Eigen::Index i = 0; i < mutual.size(); ++i) {
    if (mutual.data()[i] != 0) CHECK(uni.data()[i] == mutual.data()[i]);
  }
  CHECK((uni.array() != 0).count() >= (mutual.array() != 0).count());
}

TEST_CASE("sparse operator matches the dense oracle") {
  for (std::uint64_t seed = 80; seed < 90; ++seed) {
    const DescriptorSet db = fixture::random_unit_set(30, 5, seed);
    const DiffusionGraph g = build_diffusion_graph(db, 5, 3.0);
    const Eigen::MatrixXd want = oracle::dense_diffusion_operator(db, 5, 3.0);
    CHECK((g.S.to_dense() - want).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("diffusion solves the linear system of the dense oracle") {
  for (std::uint64_t seed = 90; seed < 100; ++seed) {
    const DescriptorSet db = fixture::random_unit_set(30, 5, seed);
    const DescriptorSet qs = fixture::random_unit_set(1, 5, seed + 1000, "q");
    const Descriptor q = qs.row(0).transpose();
    const DiffusionGraph g = build_diffusion_graph(db, 5, 3.0);
    const DiffusionParams p{10, 0.9, 1e-12, 500};
    const DiffusionResult r = diffuse(g, "q", q, db, p);
    const Eigen::MatrixXd S = oracle::dense_diffusion_operator(db, 5, 3.0);
    const Eigen::VectorXd y = dense_seed(db, q, 10, 3.0);
    const Eigen::VectorXd f = (Eigen::MatrixXd::Identity(30, 30) - 0.9 * S).ldlt().solve(y);
    CHECK(r.converged);
    CHECK((r.f - f).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("zero alpha with every row seeded reproduces the global ranking") {
  const DescriptorSet db = fixture::random_unit_set(40, 6, 101);
  const DescriptorSet qs = fixture::random_unit_set(5, 6, 102, "q");
  const DiffusionGraph g = build_diffusion_graph(db, 5, 3.0);
  for (std::size_t i = 0; i < qs.size(); ++i) {
    const Descriptor q = qs.row(i).transpose();
    const DiffusionResult r = diffuse(g, "q", q, db, {db.size(), 0.0, 1e-6, 100});
    CHECK(r.ranking.names() == search("q", q, db).names());
  }
}

TEST_CASE("diffusion scores rows outside the seed set") {
  const auto bench = fixture::chain_manifold();
  const DiffusionGraph g = build_diffusion_graph(bench.db, 3, 3.0);
  const Descriptor q = bench.queries.row(0).transpose();
  const DiffusionResult r = diffuse(g, "query", q, bench.db, {3, 0.99, 1e-8, 1000});
  CHECK(r.converged);
  // The far end of the arc is reached only through the graph.
  CHECK(r.f[29] > 0);
  // Diffusion solution is non-negative for non-negative seeds.
  CHECK(r.f.minCoeff() >= -1e-12);
}

TEST_CASE("a query with no positive similarity falls back to global scores") {
  RowMatrix m(3, 2);
  m << 1, 0, 0.8, 0.6, 0.6, 0.8;
  const DescriptorSet db({"a", "b", "c"}, m);
  const DiffusionGraph g = build_diffusion_graph(db, 1, 3.0);
  Descriptor q(2);
  q << -1, -0.1;
  const DiffusionResult r = diffuse(g, "q", q, db, {});
  CHECK(r.fallback);
  CHECK(r.ranking == search("q", q, db));
}

TEST_CASE("diffusion argument checks") {
  const DescriptorSet db = fixture::random_unit_set(10, 3, 103);
  CHECK_THROWS_AS(knn_affinity(db, 0, 3.0), RankingError);
  CHECK_THROWS_AS(knn_affinity(db, 10, 3.0), RankingError);
  CHECK_THROWS_AS(knn_affinity(db, 3, 0.0), RankingError);
  const DiffusionGraph g = build_diffusion_graph(db, 3, 3.0);
  const Descriptor q = db.row(0).transpose();
  CHECK_THROWS_AS(diffuse(g, "q", q, db, {10, 1.0, 1e-6, 100}), RankingError);
  CHECK_THROWS_AS(diffuse(g, "q", q, db, {10, -0.1, 1e-6, 100}), RankingError);
  const DescriptorSet other = fixture::random_unit_set(10, 3, 104, "other");
  CHECK_THROWS_AS(diffuse(g, "q", q, other, {}), RankingError);
}

TEST_CASE("capped iterations are reported as unconverged") {
  const DescriptorSet db = fixture::random_unit_set(60, 4, 105);
  const DiffusionGraph g = build_diffusion_graph(db, 10, 1.0);
  const DiffusionResult r = diffuse(g, "q", db.row(0).transpose(), db, {10, 0.99, 1e-15, 1});
  CHECK(r.iterations == 1);
  CHECK_FALSE(r.converged);
  CHECK(r.residual_norm > 0);
}
