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

#include "instret/tensor_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>

#include <fmt/format.h>

namespace instret {

namespace {

constexpr std::uint32_t kFormatVersion = 1;
constexpr std::size_t kChunkFloats = std::size_t{1} << 18;

bool all_finite(std::span<const float> values) {
  return std::all_of(values.begin(), values.end(), [](float v) { return std::isfinite(v); });
}

}  // namespace

std::string_view to_string(IoErrc code) noexcept {
  switch (code) {
    case IoErrc::io_failure: return "io-failure";
    case IoErrc::bad_magic: return "bad-magic";
    case IoErrc::bad_version: return "bad-version";
    case IoErrc::truncated: return "truncated";
    case IoErrc::size_overflow: return "size-overflow";
    case IoErrc::duplicate_name: return "duplicate-name";
    case IoErrc::non_finite: return "non-finite";
    case IoErrc::shape_mismatch: return "shape-mismatch";
    case IoErrc::missing_file: return "missing-file";
    case IoErrc::malformed: return "malformed";
    case IoErrc::schema: return "schema";
  }
  return "unknown";
}

IoError::IoError(IoErrc code, const std::string& message)
    : std::runtime_error(fmt::format("{}: {}", to_string(code), message)),
      code_(code), message_(message) {}

// ---------------------------------------------------------------------------
// FeatureMap / DescriptorSet

FeatureMap::FeatureMap(std::string name, std::uint32_t channels, std::uint32_t height,
                       std::uint32_t width, std::vector<float> data)
    : name_(std::move(name)), channels_(channels), height_(height), width_(width),
      data_(std::move(data)) {
  if (channels_ == 0 || height_ == 0 || width_ == 0) {
    throw IoError(IoErrc::shape_mismatch,
                  fmt::format("feature map '{}' has an empty dimension ({}x{}x{})", name_,
                              channels_, height_, width_));
  }
  const std::size_t expected = static_cast<std::size_t>(channels_) * height_ * width_;
  if (data_.size() != expected) {
    throw IoError(IoErrc::shape_mismatch,
                  fmt::format("feature map '{}' holds {} values, shape needs {}", name_,
                              data_.size(), expected));
  }
  if (!all_finite(data_)) {
    throw IoError(IoErrc::non_finite, fmt::format("feature map '{}' contains NaN/Inf", name_));
  }
}

DescriptorSet::DescriptorSet(std::vector<std::string> names, RowMatrix matrix,
                             std::vector<std::string> provenance)
    : names_(std::move(names)), matrix_(std::move(matrix)), provenance_(std::move(provenance)) {
  if (static_cast<std::size_t>(matrix_.rows()) != names_.size()) {
    throw IoError(IoErrc::shape_mismatch,
                  fmt::format("descriptor set has {} names but {} rows", names_.size(),
                              matrix_.rows()));
  }
  if (!matrix_.allFinite()) {
    throw IoError(IoErrc::non_finite, "descriptor set contains NaN/Inf");
  }
  index_.reserve(names_.size());
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (!index_.emplace(names_[i], i).second) {
      throw IoError(IoErrc::duplicate_name,
                    fmt::format("descriptor name '{}' appears more than once", names_[i]));
    }
  }
}

std::optional<std::size_t> DescriptorSet::index_of(std::string_view name) const {
  const auto it = index_.find(std::string(name));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

DescriptorSet DescriptorSet::with_step(std::string tag) const {
  DescriptorSet out = *this;
  out.provenance_.push_back(std::move(tag));
  return out;
}

bool operator==(const DescriptorSet& a, const DescriptorSet& b) {
  return a.names() == b.names() && a.provenance() == b.provenance() &&
         a.matrix().rows() == b.matrix().rows() && a.matrix().cols() == b.matrix().cols() &&
         a.matrix() == b.matrix();
}

// ---------------------------------------------------------------------------
// little-endian codec

namespace detail {

void check_stream(const std::ostream& out) {
  if (!out) throw IoError(IoErrc::io_failure, "write failed");
}

void put_u16(std::ostream& out, std::uint16_t v) {
  const std::array<char, 2> b{static_cast<char>(v & 0xFF), static_cast<char>(v >> 8)};
  out.write(b.data(), b.size());
}

void put_u32(std::ostream& out, std::uint32_t v) {
  std::array<char, 4> b{};
  for (std::size_t i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(b.data(), b.size());
}

void put_f32(std::ostream& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

void put_f64(std::ostream& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  std::array<char, 8> b{};
  for (std::size_t i = 0; i < 8; ++i) b[i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
  out.write(b.data(), b.size());
}

void put_magic(std::ostream& out, std::string_view magic) {
  out.write(magic.data(), static_cast<std::streamsize>(magic.size()));
}

void read_exact(std::istream& in, char* dst, std::size_t bytes, std::string_view what) {
  in.read(dst, static_cast<std::streamsize>(bytes));
  const auto got = static_cast<std::size_t>(in.gcount());
  if (got != bytes) {
    throw IoError(IoErrc::truncated,
                  fmt::format("{}: expected {} bytes, got {}", what, bytes, got));
  }
}

std::uint16_t get_u16(std::istream& in, std::string_view what) {
  std::array<unsigned char, 2> b{};
  read_exact(in, reinterpret_cast<char*>(b.data()), b.size(), what);
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

std::uint32_t get_u32(std::istream& in, std::string_view what) {
  std::array<unsigned char, 4> b{};
  read_exact(in, reinterpret_cast<char*>(b.data()), b.size(), what);
  std::uint32_t v = 0;
  for (std::size_t i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

double get_f64(std::istream& in, std::string_view what) {
  std::array<unsigned char, 8> b{};
  read_exact(in, reinterpret_cast<char*>(b.data()), b.size(), what);
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return std::bit_cast<double>(v);
}

void expect_magic(std::istream& in, std::string_view magic) {
  std::string got(magic.size(), '\0');
  read_exact(in, got.data(), got.size(), "magic");
  if (got != magic) {
    throw IoError(IoErrc::bad_magic, fmt::format("expected magic '{}', found '{}'", magic, got));
  }
}

}  // namespace detail

namespace {

using namespace detail;

void expect_version(std::istream& in, std::string_view container) {
  const std::uint32_t version = get_u32(in, "version");
  if (version != kFormatVersion) {
    throw IoError(IoErrc::bad_version,
                  fmt::format("{} version {} is not supported (expected {})", container, version,
                              kFormatVersion));
  }
}

// Reads `count` little-endian f32 values in bounded chunks, so a corrupt
// header declaring a huge payload fails on truncation before allocating it.
std::vector<float> read_f32_payload(std::istream& in, std::uint64_t count, std::string_view what) {
  std::vector<float> values;
  std::vector<unsigned char> raw;
  std::uint64_t done = 0;
  while (done < count) {
    const std::size_t n = static_cast<std::size_t>(std::min<std::uint64_t>(kChunkFloats, count - done));
    raw.resize(n * 4);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    const auto got = static_cast<std::uint64_t>(in.gcount());
    if (got != raw.size()) {
      throw IoError(IoErrc::truncated,
                    fmt::format("{}: expected {} payload bytes, got {}", what, count * 4,
                                done * 4 + got));
    }
    values.reserve(values.size() + n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::uint32_t bits = static_cast<std::uint32_t>(raw[4 * i]) |
                                 static_cast<std::uint32_t>(raw[4 * i + 1]) << 8 |
                                 static_cast<std::uint32_t>(raw[4 * i + 2]) << 16 |
                                 static_cast<std::uint32_t>(raw[4 * i + 3]) << 24;
      values.push_back(std::bit_cast<float>(bits));
    }
    done += n;
  }
  return values;
}

std::uint64_t checked_volume(std::initializer_list<std::uint32_t> dims, std::string_view what) {
  std::uint64_t volume = 1;
  for (const std::uint32_t d : dims) {
    if (d != 0 && volume > std::numeric_limits<std::uint64_t>::max() / 4 / d) {
      throw IoError(IoErrc::size_overflow, fmt::format("{}: declared payload size overflows", what));
    }
    volume *= d;
  }
  if (volume > std::numeric_limits<std::size_t>::max() / 4 ||
      volume > static_cast<std::uint64_t>(std::vector<float>().max_size())) {
    throw IoError(IoErrc::size_overflow, fmt::format("{}: declared payload is not addressable", what));
  }
  return volume;
}

std::string read_string(std::istream& in, std::size_t length, std::string_view what) {
  std::string s(length, '\0');
  read_exact(in, s.data(), length, what);
  return s;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(IoErrc::io_failure, fmt::format("cannot open '{}' for writing", path.string()));
  return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(IoErrc::missing_file, fmt::format("cannot open '{}'", path.string()));
  return in;
}

}  // namespace

// ---------------------------------------------------------------------------
// FMAP

void write_fmap(const FeatureMap& map, std::ostream& out) {
  if (!all_finite(map.data())) {
    throw IoError(IoErrc::non_finite, fmt::format("feature map '{}' contains NaN/Inf", map.name()));
  }
  put_magic(out, "FMAP");
  put_u32(out, kFormatVersion);
  put_u32(out, map.channels());
  put_u32(out, map.height());
  put_u32(out, map.width());
  for (const float v : map.data()) put_f32(out, v);
  check_stream(out);
}

FeatureMap read_fmap(std::istream& in, std::string name) {
  expect_magic(in, "FMAP");
  expect_version(in, "FMAP");
  const std::uint32_t c = get_u32(in, "channels");
  const std::uint32_t h = get_u32(in, "height");
  const std::uint32_t w = get_u32(in, "width");
  const std::uint64_t count = checked_volume({c, h, w}, "FMAP");
  auto data = read_f32_payload(in, count, "FMAP");
  return FeatureMap(std::move(name), c, h, w, std::move(data));
}

void write_fmap_file(const FeatureMap& map, const std::filesystem::path& path) {
  auto out = open_out(path);
  write_fmap(map, out);
}

FeatureMap read_fmap_file(const std::filesystem::path& path) {
  auto in = open_in(path);
  try {
    return read_fmap(in, path.stem().string());
  } catch (const IoError& e) {
    throw IoError(e.code(), fmt::format("{}: {}", path.string(), e.message()));
  }
}

// ---------------------------------------------------------------------------
// DSET

void write_dset(const DescriptorSet& set, std::ostream& out) {
  if (set.provenance().size() > std::numeric_limits<std::uint16_t>::max()) {
    throw IoError(IoErrc::size_overflow, "too many provenance tags");
  }
  if (set.size() > std::numeric_limits<std::uint32_t>::max() ||
      set.dim() > std::numeric_limits<std::uint32_t>::max()) {
    throw IoError(IoErrc::size_overflow, "descriptor set too large for DSET");
  }
  put_magic(out, "DSET");
  put_u32(out, kFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(set.size()));
  put_u32(out, static_cast<std::uint32_t>(set.dim()));
  put_u16(out, static_cast<std::uint16_t>(set.provenance().size()));
  for (const auto& tag : set.provenance()) {
    if (tag.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw IoError(IoErrc::size_overflow, "provenance tag too long");
    }
    put_u16(out, static_cast<std::uint16_t>(tag.size()));
    out.write(tag.data(), static_cast<std::streamsize>(tag.size()));
  }
  for (const auto& name : set.names()) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
  }
  const RowMatrix& m = set.matrix();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) put_f32(out, static_cast<float>(m(i, j)));
  }
  check_stream(out);
}

DescriptorSet read_dset(std::istream& in) {
  expect_magic(in, "DSET");
  expect_version(in, "DSET");
  const std::uint32_t n = get_u32(in, "row count");
  const std::uint32_t dim = get_u32(in, "dim");
  const std::uint64_t count = checked_volume({n, dim}, "DSET");

  const std::uint16_t ntags = get_u16(in, "provenance count");
  std::vector<std::string> provenance;
  provenance.reserve(ntags);
  for (std::uint16_t i = 0; i < ntags; ++i) {
    const std::uint16_t len = get_u16(in, "provenance tag length");
    provenance.push_back(read_string(in, len, "provenance tag"));
  }

  std::vector<std::string> names;
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::uint32_t len = get_u32(in, "name length");
    names.push_back(read_string(in, len, "name"));
  }

  const auto values = read_f32_payload(in, count, "DSET");
  RowMatrix matrix(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < values.size(); ++i) matrix.data()[i] = values[i];
  return DescriptorSet(std::move(names), std::move(matrix), std::move(provenance));
}

void write_dset_file(const DescriptorSet& set, const std::filesystem::path& path) {
  auto out = open_out(path);
  write_dset(set, out);
}

DescriptorSet read_dset_file(const std::filesystem::path& path) {
  auto in = open_in(path);
  try {
    return read_dset(in);
  } catch (const IoError& e) {
    throw IoError(e.code(), fmt::format("{}: {}", path.string(), e.message()));
  }
}

}  // namespace instret
