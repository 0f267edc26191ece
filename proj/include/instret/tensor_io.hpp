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

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

namespace instret {

enum class IoErrc {
  io_failure,
  bad_magic,
  bad_version,
  truncated,
  size_overflow,
  duplicate_name,
  non_finite,
  shape_mismatch,
  missing_file,
  malformed,
  schema,
};

std::string_view to_string(IoErrc code) noexcept;

/// Error raised by every reader, writer and parser in this header.
class IoError : public std::runtime_error {
 public:
  IoError(IoErrc code, const std::string& message);
  IoErrc code() const noexcept { return code_; }
  /// The message without the error-code prefix.
  const std::string& message() const noexcept { return message_; }

 private:
  IoErrc code_;
  std::string message_;
};

/// A C x H x W activation tensor for a single image, stored channel-major
/// then row-major. Immutable after construction.
class FeatureMap {
 public:
  FeatureMap(std::string name, std::uint32_t channels, std::uint32_t height,
             std::uint32_t width, std::vector<float> data);

  const std::string& name() const noexcept { return name_; }
  std::uint32_t channels() const noexcept { return channels_; }
  std::uint32_t height() const noexcept { return height_; }
  std::uint32_t width() const noexcept { return width_; }
  std::span<const float> data() const noexcept { return data_; }

  float at(std::uint32_t c, std::uint32_t y, std::uint32_t x) const noexcept {
    return data_[(static_cast<std::size_t>(c) * height_ + y) * width_ + x];
  }
  std::span<const float> channel(std::uint32_t c) const noexcept {
    const std::size_t plane = static_cast<std::size_t>(height_) * width_;
    return std::span<const float>(data_).subspan(c * plane, plane);
  }

  friend bool operator==(const FeatureMap&, const FeatureMap&) = default;

 private:
  std::string name_;
  std::uint32_t channels_;
  std::uint32_t height_;
  std::uint32_t width_;
  std::vector<float> data_;
};

using Descriptor = Eigen::VectorXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Named n x dim descriptor matrix with the ordered list of processing steps
/// that produced it. Values are held in double precision; the DSET file
/// stores them as f32.
class DescriptorSet {
 public:
  DescriptorSet() = default;
  DescriptorSet(std::vector<std::string> names, RowMatrix matrix,
                std::vector<std::string> provenance = {});

  std::size_t size() const noexcept { return names_.size(); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(matrix_.cols()); }
  bool empty() const noexcept { return names_.empty(); }

  const std::vector<std::string>& names() const noexcept { return names_; }
  const RowMatrix& matrix() const noexcept { return matrix_; }
  const std::vector<std::string>& provenance() const noexcept { return provenance_; }

  auto row(std::size_t i) const { return matrix_.row(static_cast<Eigen::Index>(i)); }
  std::optional<std::size_t> index_of(std::string_view name) const;

  /// Copy with one more provenance tag appended.
  DescriptorSet with_step(std::string tag) const;

 private:
  std::vector<std::string> names_;
  RowMatrix matrix_;
  std::vector<std::string> provenance_;
  std::unordered_map<std::string, std::size_t> index_;
};

bool operator==(const DescriptorSet& a, const DescriptorSet& b);

void write_fmap(const FeatureMap& map, std::ostream& out);
FeatureMap read_fmap(std::istream& in, std::string name = {});
void write_fmap_file(const FeatureMap& map, const std::filesystem::path& path);
/// The map's name is the file stem.
FeatureMap read_fmap_file(const std::filesystem::path& path);

void write_dset(const DescriptorSet& set, std::ostream& out);
DescriptorSet read_dset(std::istream& in);
void write_dset_file(const DescriptorSet& set, const std::filesystem::path& path);
DescriptorSet read_dset_file(const std::filesystem::path& path);

namespace detail {

// Little-endian primitive codec shared by the FMAP, DSET and WHTN containers.
void put_u16(std::ostream& out, std::uint16_t v);
void put_u32(std::ostream& out, std::uint32_t v);
void put_f32(std::ostream& out, float v);
void put_f64(std::ostream& out, double v);
void put_magic(std::ostream& out, std::string_view magic);

std::uint16_t get_u16(std::istream& in, std::string_view what);
std::uint32_t get_u32(std::istream& in, std::string_view what);
double get_f64(std::istream& in, std::string_view what);
void expect_magic(std::istream& in, std::string_view magic);
void read_exact(std::istream& in, char* dst, std::size_t bytes, std::string_view what);
void check_stream(const std::ostream& out);

}  // namespace detail

}  // namespace instret
