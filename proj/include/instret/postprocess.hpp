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

#include "instret/tensor_io.hpp"

namespace instret {

inline constexpr std::size_t kDefaultPcaDim = 512;
inline constexpr double kDefaultWhiteningEps = 1e-10;

class PostprocessError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// PCA-whitening to `output_dim` dimensions:
///   w(x) = diag(1 / sqrt(eigenvalues + eps)) * projection * (x - mean)
/// Projection rows are eigenvectors of the 1/n covariance, by descending
/// eigenvalue, each signed so its largest-magnitude entry is positive.
struct WhiteningModel {
  std::size_t input_dim = 0;
  std::size_t output_dim = 0;
  Eigen::VectorXd mean;
  Eigen::MatrixXd projection;  // output_dim x input_dim
  Eigen::VectorXd eigenvalues;
  double eps = kDefaultWhiteningEps;
};

Descriptor l2_normalize(const Descriptor& v);
/// Row-wise l2_normalize; provenance gains "l2".
DescriptorSet l2_normalize_rows(const DescriptorSet& set);

WhiteningModel fit_whitening(const DescriptorSet& train, std::size_t d = kDefaultPcaDim,
                             double eps = kDefaultWhiteningEps);

Descriptor apply_whitening(const WhiteningModel& model, const Descriptor& v);

/// L2 -> whiten -> L2 per row, or a single L2 when `model` is empty (the
/// unreduced "true dimension" mode).
DescriptorSet post_process(const DescriptorSet& set, const std::optional<WhiteningModel>& model);

/// Fits on the L2-normalized rows of `train`, as post_process expects.
WhiteningModel fit_post_process_whitening(const DescriptorSet& train,
                                          std::size_t d = kDefaultPcaDim,
                                          double eps = kDefaultWhiteningEps);

/// Row-aligned concatenation [a | b], rows ordered as in `a`. Both sets must
/// hold exactly the same names.
DescriptorSet ensemble_concat(const DescriptorSet& a, const DescriptorSet& b);

void write_whitening(const WhiteningModel& model, std::ostream& out);
WhiteningModel read_whitening(std::istream& in);
void write_whitening_file(const WhiteningModel& model, const std::filesystem::path& path);
WhiteningModel read_whitening_file(const std::filesystem::path& path);

}  // namespace instret
