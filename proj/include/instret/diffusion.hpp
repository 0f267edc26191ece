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

#include <cstddef>
#include <functional>
#include <vector>

#include <Eigen/Core>

#include "instret/ranking.hpp"

namespace instret {

/// Compressed sparse row matrix of doubles.
class SparseMatrix {
 public:
  struct Triplet {
    std::size_t row;
    std::size_t col;
    double value;
  };

  SparseMatrix() = default;
  /// Duplicate (row, col) entries are summed; zeros are kept out.
  SparseMatrix(std::size_t rows, std::size_t cols, std::vector<Triplet> triplets);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t nonzeros() const noexcept { return values_.size(); }

  /// Nonzero count of row r.
  std::size_t row_nonzeros(std::size_t r) const { return offsets_[r + 1] - offsets_[r]; }
  double coeff(std::size_t r, std::size_t c) const;

  /// y = A x
  void multiply(const Eigen::VectorXd& x, Eigen::VectorXd& y) const;
  Eigen::MatrixXd to_dense() const;

  const std::vector<std::size_t>& offsets() const noexcept { return offsets_; }
  const std::vector<std::size_t>& columns() const noexcept { return columns_; }
  const std::vector<double>& values() const noexcept { return values_; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::size_t> offsets_{0};
  std::vector<std::size_t> columns_;
  std::vector<double> values_;
};

struct CgResult {
  Eigen::VectorXd x;
  std::size_t iterations = 0;
  /// ||A x - b|| recomputed from the returned x, not the recursive estimate.
  double residual_norm = 0;
  bool converged = false;
};

/// Conjugate gradient for a symmetric positive definite operator, starting
/// from x0. Stops once ||A x - b|| <= tol ||b|| or after max_iter steps.
using LinearOperator = std::function<void(const Eigen::VectorXd&, Eigen::VectorXd&)>;
CgResult conjugate_gradient(const LinearOperator& apply, const Eigen::VectorXd& b,
                            Eigen::VectorXd x0, double tol, std::size_t max_iter);

enum class GraphMode { mutual, union_ };

/// Symmetric kNN affinity a_ij = max(0, s_ij)^gamma, kept when j is among
/// i's k nearest rows and i among j's (mutual) or either (union).
SparseMatrix knn_affinity(const DescriptorSet& db, std::size_t k, double gamma,
                          GraphMode mode = GraphMode::mutual, unsigned threads = 1);

/// S = D^-1/2 A D^-1/2 over the database, plus the parameters it was built with.
struct DiffusionGraph {
  std::vector<std::string> names;
  SparseMatrix S;
  std::size_t k = 0;
  double gamma = 0;
};

DiffusionGraph build_diffusion_graph(const DescriptorSet& db, std::size_t k, double gamma,
                                     GraphMode mode = GraphMode::mutual, unsigned threads = 1);

/// Symmetric normalization of an affinity matrix; rows with zero degree stay zero.
SparseMatrix normalize_affinity(const SparseMatrix& affinity);

struct DiffusionParams {
  std::size_t kq = 10;
  double alpha = 0.99;
  double tol = 1e-6;
  std::size_t max_iter = 100;
};

struct DiffusionResult {
  RankedList ranking;
  Eigen::VectorXd f;
  std::size_t iterations = 0;
  double residual_norm = 0;
  bool converged = true;
  /// True when the seed vector was zero and global scores were used instead.
  bool fallback = false;
};

/// Seeds y_i = max(0, <query, db_i>)^gamma on the kq most similar rows, solves
/// (I - alpha S) f = y by conjugate gradient, and ranks by (f desc, query
/// similarity desc, name asc).
DiffusionResult diffuse(const DiffusionGraph& graph, std::string query_name,
                        const Descriptor& query, const DescriptorSet& db,
                        const DiffusionParams& params);

}  // namespace instret
