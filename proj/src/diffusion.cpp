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

#include "instret/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include <fmt/format.h>

namespace instret {

// ---------------------------------------------------------------------------
// SparseMatrix

SparseMatrix::SparseMatrix(std::size_t rows, std::size_t cols, std::vector<Triplet> triplets)
    : rows_(rows), cols_(cols) {
  for (const auto& t : triplets) {
    if (t.row >= rows || t.col >= cols) {
      throw RankingError(fmt::format("sparse entry ({}, {}) outside {}x{}", t.row, t.col, rows, cols));
    }
  }
  std::sort(triplets.begin(), triplets.end(), [](const Triplet& a, const Triplet& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  offsets_.assign(rows + 1, 0);
  for (std::size_t i = 0; i < triplets.size();) {
    const std::size_t r = triplets[i].row;
    const std::size_t c = triplets[i].col;
    double v = 0;
    for (; i < triplets.size() && triplets[i].row == r && triplets[i].col == c; ++i) {
      v += triplets[i].value;
    }
    if (v != 0) {
      columns_.push_back(c);
      values_.push_back(v);
      ++offsets_[r + 1];
    }
  }
  std::partial_sum(offsets_.begin(), offsets_.end(), offsets_.begin());
}

double SparseMatrix::coeff(std::size_t r, std::size_t c) const {
  const auto first = columns_.begin() + static_cast<std::ptrdiff_t>(offsets_[r]);
  const auto last = columns_.begin() + static_cast<std::ptrdiff_t>(offsets_[r + 1]);
  const auto it = std::lower_bound(first, last, c);
  if (it == last || *it != c) return 0;
  return values_[static_cast<std::size_t>(it - columns_.begin())];
}

void SparseMatrix::multiply(const Eigen::VectorXd& x, Eigen::VectorXd& y) const {
  y.resize(static_cast<Eigen::Index>(rows_));
  for (std::size_t r = 0; r < rows_; ++r) {
    double s = 0;
    for (std::size_t p = offsets_[r]; p < offsets_[r + 1]; ++p) {
      s += values_[p] * x[static_cast<Eigen::Index>(columns_[p])];
    }
    y[static_cast<Eigen::Index>(r)] = s;
  }
}

Eigen::MatrixXd SparseMatrix::to_dense() const {
  Eigen::MatrixXd dense = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows_),
                                                static_cast<Eigen::Index>(cols_));
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t p = offsets_[r]; p < offsets_[r + 1]; ++p) {
      dense(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(columns_[p])) = values_[p];
    }
  }
  return dense;
}

// ---------------------------------------------------------------------------
// conjugate gradient

CgResult conjugate_gradient(const LinearOperator& apply, const Eigen::VectorXd& b,
                            Eigen::VectorXd x0, double tol, std::size_t max_iter) {
  CgResult result;
  result.x = std::move(x0);
  const double target = tol * b.norm();

  Eigen::VectorXd q(b.size());
  apply(result.x, q);
  Eigen::VectorXd r = b - q;
  Eigen::VectorXd p = r;
  double rr = r.squaredNorm();

  while (std::sqrt(rr) > target && result.iterations < max_iter) {
    apply(p, q);
    const double pq = p.dot(q);
    if (!(pq > 0)) break;  // operator not positive definite along p
    const double step = rr / pq;
    result.x += step * p;
    r -= step * q;
    const double rr_next = r.squaredNorm();
    p = r + (rr_next / rr) * p;
    rr = rr_next;
    ++result.iterations;
  }

  apply(result.x, q);
  result.residual_norm = (q - b).norm();
  result.converged = result.residual_norm <= target;
  return result;
}

// ---------------------------------------------------------------------------
// graph construction

SparseMatrix knn_affinity(const DescriptorSet& db, std::size_t k, double gamma, GraphMode mode,
                          unsigned threads) {
  const std::size_t n = db.size();
  if (k < 1 || k >= n) {
    throw RankingError(fmt::format("graph neighbor count {} must be in [1, {})", k, n));
  }
  if (!(gamma > 0) || !std::isfinite(gamma)) throw RankingError("gamma must be positive");
  const auto table = knn_table(db, k, threads);

  // Pair (i < j) -> similarity, plus how many endpoints list the other.
  // The similarity is always taken from the lower index's list, so both
  // directions get bit-identical weights.
  struct Edge {
    double similarity = 0;
    int votes = 0;
    bool from_lower = false;
  };
  std::map<std::pair<std::size_t, std::size_t>, Edge> edges;
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& nb : table[i]) {
      const auto key = std::minmax(i, nb.index);
      auto& e = edges[{key.first, key.second}];
      ++e.votes;
      if (i == key.first) {
        e.similarity = nb.similarity;
        e.from_lower = true;
      } else if (!e.from_lower) {
        e.similarity = nb.similarity;
      }
    }
  }

  std::vector<SparseMatrix::Triplet> triplets;
  for (const auto& [key, e] : edges) {
    if (mode == GraphMode::mutual && e.votes < 2) continue;
    const double a = std::pow(std::max(0.0, e.similarity), gamma);
    if (a == 0) continue;
    triplets.push_back({key.first, key.second, a});
    triplets.push_back({key.second, key.first, a});
  }
  return SparseMatrix(n, n, std::move(triplets));
}

SparseMatrix normalize_affinity(const SparseMatrix& affinity) {
  const std::size_t n = affinity.rows();
  std::vector<double> degree(n, 0.0);
  const auto& off = affinity.offsets();
  const auto& cols = affinity.columns();
  const auto& vals = affinity.values();
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t p = off[r]; p < off[r + 1]; ++p) degree[r] += vals[p];
  }
  std::vector<SparseMatrix::Triplet> triplets;
  triplets.reserve(affinity.nonzeros());
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t p = off[r]; p < off[r + 1]; ++p) {
      const std::size_t c = cols[p];
      if (c == r || degree[r] <= 0 || degree[c] <= 0) continue;
      triplets.push_back({r, c, vals[p] / std::sqrt(degree[r] * degree[c])});
    }
  }
  return SparseMatrix(n, n, std::move(triplets));
}

DiffusionGraph build_diffusion_graph(const DescriptorSet& db, std::size_t k, double gamma,
                                     GraphMode mode, unsigned threads) {
  DiffusionGraph graph;
  graph.names = db.names();
  graph.S = normalize_affinity(knn_affinity(db, k, gamma, mode, threads));
  graph.k = k;
  graph.gamma = gamma;
  return graph;
}

// ---------------------------------------------------------------------------
// diffusion

DiffusionResult diffuse(const DiffusionGraph& graph, std::string query_name,
                        const Descriptor& query, const DescriptorSet& db,
                        const DiffusionParams& params) {
  if (!(params.alpha >= 0 && params.alpha < 1)) {
    throw RankingError(fmt::format("diffusion alpha {} outside [0, 1)", params.alpha));
  }
  if (graph.names != db.names()) {
    throw RankingError("diffusion graph was built over a different database");
  }
  const std::size_t n = db.size();
  const auto name_rank = name_order(db);
  const std::vector<double> scores = similarity_scores(query, db);
  const auto order = order_by_score(scores, name_rank);

  Eigen::VectorXd y = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  const std::size_t seeds = std::min(params.kq, n);
  for (std::size_t t = 0; t < seeds; ++t) {
    const std::size_t i = order[t];
    y[static_cast<Eigen::Index>(i)] = std::pow(std::max(0.0, scores[i]), graph.gamma);
  }

  DiffusionResult result;
  if (y.isZero(0)) {
    result.fallback = true;
    result.f = Eigen::Map<const Eigen::VectorXd>(scores.data(), static_cast<Eigen::Index>(n));
    result.ranking = rank_scores(std::move(query_name), scores, db, name_rank);
    return result;
  }

  const double alpha = params.alpha;
  const LinearOperator system = [&](const Eigen::VectorXd& x, Eigen::VectorXd& out) {
    graph.S.multiply(x, out);
    out = x - alpha * out;
  };
  CgResult cg = conjugate_gradient(system, y, y, params.tol, params.max_iter);
  result.iterations = cg.iterations;
  result.residual_norm = cg.residual_norm;
  result.converged = cg.converged;
  result.f = std::move(cg.x);

  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const Eigen::VectorXd& f = result.f;
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    const auto ia = static_cast<Eigen::Index>(a), ib = static_cast<Eigen::Index>(b);
    if (f[ia] != f[ib]) return f[ia] > f[ib];
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return name_rank[a] < name_rank[b];
  });
  result.ranking.query = std::move(query_name);
  result.ranking.entries.reserve(n);
  for (const std::size_t i : idx) {
    result.ranking.entries.push_back({db.names()[i], f[static_cast<Eigen::Index>(i)]});
  }
  return result;
}

}  // namespace instret
