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

#include "instret/postprocess.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>

#include <Eigen/Eigenvalues>
#include <fmt/format.h>

namespace instret {

using namespace detail;

Descriptor l2_normalize(const Descriptor& v) {
  const double norm = v.norm();
  if (norm > 0) return v / norm;
  return v;
}

DescriptorSet l2_normalize_rows(const DescriptorSet& set) {
  RowMatrix m = set.matrix();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double norm = m.row(i).norm();
    if (norm > 0) m.row(i) /= norm;
  }
  auto tags = set.provenance();
  tags.emplace_back("l2");
  return DescriptorSet(set.names(), std::move(m), std::move(tags));
}

WhiteningModel fit_whitening(const DescriptorSet& train, std::size_t d, double eps) {
  const std::size_t n = train.size();
  const std::size_t dim = train.dim();
  if (n < 2) throw PostprocessError(fmt::format("whitening needs >= 2 samples, got {}", n));
  if (d == 0 || d > dim) {
    throw PostprocessError(fmt::format("PCA dimension {} not in [1, {}]", d, dim));
  }
  if (!(eps >= 0) || !std::isfinite(eps)) throw PostprocessError("whitening eps must be >= 0");

  const Eigen::VectorXd mean = train.matrix().colwise().mean().transpose();
  const RowMatrix centered = train.matrix().rowwise() - mean.transpose();
  const Eigen::MatrixXd cov =
      (centered.transpose() * centered) / static_cast<double>(n);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw PostprocessError("eigendecomposition failed");

  // Eigen returns ascending eigenvalues; keep the top d in descending order.
  WhiteningModel model;
  model.input_dim = dim;
  model.output_dim = d;
  model.eps = eps;
  model.mean = mean;
  model.eigenvalues.resize(static_cast<Eigen::Index>(d));
  model.projection.resize(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(dim));
  for (std::size_t k = 0; k < d; ++k) {
    const auto src = static_cast<Eigen::Index>(dim - 1 - k);
    const auto dst = static_cast<Eigen::Index>(k);
    Eigen::VectorXd v = solver.eigenvectors().col(src);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v[arg] < 0) v = -v;
    model.projection.row(dst) = v.transpose();
    model.eigenvalues[dst] = std::max(0.0, solver.eigenvalues()[src]);
  }
  return model;
}

Descriptor apply_whitening(const WhiteningModel& model, const Descriptor& v) {
  if (static_cast<std::size_t>(v.size()) != model.input_dim) {
    throw PostprocessError(fmt::format("descriptor dim {} does not match whitening input dim {}",
                                       v.size(), model.input_dim));
  }
  Descriptor out = model.projection * (v - model.mean);
  out.array() /= (model.eigenvalues.array() + model.eps).sqrt();
  return out;
}

DescriptorSet post_process(const DescriptorSet& set, const std::optional<WhiteningModel>& model) {
  DescriptorSet normalized = l2_normalize_rows(set);
  if (!model) return normalized;
  if (set.dim() != model->input_dim) {
    throw PostprocessError(fmt::format("descriptor dim {} does not match whitening input dim {}",
                                       set.dim(), model->input_dim));
  }
  RowMatrix out(static_cast<Eigen::Index>(set.size()), static_cast<Eigen::Index>(model->output_dim));
  for (std::size_t i = 0; i < set.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) =
        l2_normalize(apply_whitening(*model, normalized.row(i).transpose())).transpose();
  }
  auto tags = normalized.provenance();
  tags.push_back(fmt::format("whiten-{}", model->output_dim));
  tags.emplace_back("l2");
  return DescriptorSet(set.names(), std::move(out), std::move(tags));
}

WhiteningModel fit_post_process_whitening(const DescriptorSet& train, std::size_t d, double eps) {
  return fit_whitening(l2_normalize_rows(train), d, eps);
}

DescriptorSet ensemble_concat(const DescriptorSet& a, const DescriptorSet& b) {
  std::vector<std::string> mismatches;
  for (const auto& name : a.names()) {
    if (!b.index_of(name)) mismatches.push_back(name);
  }
  for (const auto& name : b.names()) {
    if (!a.index_of(name)) mismatches.push_back(name);
  }
  if (!mismatches.empty()) {
    std::sort(mismatches.begin(), mismatches.end());
    const std::size_t shown = std::min<std::size_t>(5, mismatches.size());
    throw PostprocessError(fmt::format(
        "ensemble inputs differ in {} names, first {}: {}", mismatches.size(), shown,
        fmt::join(mismatches.begin(), mismatches.begin() + static_cast<std::ptrdiff_t>(shown), ", ")));
  }
  const auto da = static_cast<Eigen::Index>(a.dim());
  const auto db = static_cast<Eigen::Index>(b.dim());
  RowMatrix out(static_cast<Eigen::Index>(a.size()), da + db);
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    out.row(r).head(da) = a.row(i);
    out.row(r).tail(db) = b.row(*b.index_of(a.names()[i]));
  }
  std::vector<std::string> tags;
  tags.push_back(fmt::format("concat-{}+{}", a.dim(), b.dim()));
  return DescriptorSet(a.names(), std::move(out), std::move(tags));
}

// ---------------------------------------------------------------------------
// WHTN container

void write_whitening(const WhiteningModel& model, std::ostream& out) {
  if (model.input_dim > std::numeric_limits<std::uint32_t>::max() ||
      model.output_dim > std::numeric_limits<std::uint32_t>::max()) {
    throw IoError(IoErrc::size_overflow, "whitening model too large for WHTN");
  }
  put_magic(out, "WHTN");
  put_u32(out, 1);
  put_u32(out, static_cast<std::uint32_t>(model.input_dim));
  put_u32(out, static_cast<std::uint32_t>(model.output_dim));
  put_f64(out, model.eps);
  for (Eigen::Index i = 0; i < model.mean.size(); ++i) put_f64(out, model.mean[i]);
  for (Eigen::Index i = 0; i < model.eigenvalues.size(); ++i) put_f64(out, model.eigenvalues[i]);
  for (Eigen::Index r = 0; r < model.projection.rows(); ++r) {
    for (Eigen::Index c = 0; c < model.projection.cols(); ++c) put_f64(out, model.projection(r, c));
  }
  check_stream(out);
}

WhiteningModel read_whitening(std::istream& in) {
  expect_magic(in, "WHTN");
  const std::uint32_t version = get_u32(in, "version");
  if (version != 1) {
    throw IoError(IoErrc::bad_version, fmt::format("WHTN version {} is not supported", version));
  }
  WhiteningModel model;
  model.input_dim = get_u32(in, "input dim");
  model.output_dim = get_u32(in, "output dim");
  if (model.output_dim > model.input_dim) {
    throw IoError(IoErrc::malformed, "WHTN output dim exceeds input dim");
  }
  model.eps = get_f64(in, "eps");
  const auto din = static_cast<Eigen::Index>(model.input_dim);
  const auto dout = static_cast<Eigen::Index>(model.output_dim);
  model.mean.resize(din);
  for (Eigen::Index i = 0; i < din; ++i) model.mean[i] = get_f64(in, "mean");
  model.eigenvalues.resize(dout);
  for (Eigen::Index i = 0; i < dout; ++i) model.eigenvalues[i] = get_f64(in, "eigenvalues");
  model.projection.resize(dout, din);
  for (Eigen::Index r = 0; r < dout; ++r) {
    for (Eigen::Index c = 0; c < din; ++c) model.projection(r, c) = get_f64(in, "projection");
  }
  return model;
}

void write_whitening_file(const WhiteningModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(IoErrc::io_failure, fmt::format("cannot open '{}' for writing", path.string()));
  write_whitening(model, out);
}

WhiteningModel read_whitening_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(IoErrc::missing_file, fmt::format("cannot open '{}'", path.string()));
  return read_whitening(in);
}

}  // namespace instret
