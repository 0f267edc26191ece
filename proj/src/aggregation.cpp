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

#include "instret/aggregation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <tuple>

#include <fmt/format.h>

namespace instret {

namespace {

// Offsets of `count` windows of size `side` spread evenly over [0, extent).
std::vector<std::uint32_t> axis_offsets(std::uint32_t extent, std::uint32_t side,
                                        std::uint32_t count) {
  std::vector<std::uint32_t> offsets(count);
  const std::uint64_t span = extent - side;
  if (count == 1) {
    offsets[0] = static_cast<std::uint32_t>(span / 2);
    return offsets;
  }
  for (std::uint32_t i = 0; i < count; ++i) {
    offsets[i] = static_cast<std::uint32_t>(i * span / (count - 1));
  }
  return offsets;
}

// Smallest number of windows >= base along an axis of `extent` cells whose
// spacing leaves an overlap of at least kRegionOverlap * side. The test
// (extent - side) / (k - 1) <= 0.6 side is evaluated in integers.
std::uint32_t longer_axis_count(std::uint32_t extent, std::uint32_t side, std::uint32_t base) {
  const std::uint64_t span = extent - side;
  if (span == 0) return base;
  std::uint32_t k = std::max<std::uint32_t>(base, 2);
  while (5 * span > std::uint64_t{3} * side * (k - 1)) ++k;
  return k;
}

}  // namespace

std::vector<Region> rmac_regions(std::uint32_t width, std::uint32_t height, std::uint32_t levels) {
  if (width == 0 || height == 0 || levels == 0) {
    throw AggregationError(
        fmt::format("rmac_regions needs W, H, L >= 1 (got {}, {}, {})", width, height, levels));
  }
  const std::uint32_t shorter = std::min(width, height);
  std::vector<Region> regions;
  for (std::uint32_t l = 1; l <= levels; ++l) {
    const std::uint32_t side =
        std::max<std::uint32_t>(1, static_cast<std::uint32_t>(2ull * shorter / (l + 1)));
    std::uint32_t nx = l;
    std::uint32_t ny = l;
    if (width > height) nx = longer_axis_count(width, side, l);
    if (height > width) ny = longer_axis_count(height, side, l);
    const auto xs = axis_offsets(width, side, nx);
    const auto ys = axis_offsets(height, side, ny);
    for (const auto y : ys) {
      for (const auto x : xs) regions.push_back(Region{x, y, side, side, l});
    }
  }
  // Tiny maps can repeat offsets; keep the (scale, y, x) order strict anyway.
  std::stable_sort(regions.begin(), regions.end(), [](const Region& a, const Region& b) {
    return std::tie(a.scale, a.y, a.x) < std::tie(b.scale, b.y, b.x);
  });
  return regions;
}

Descriptor region_mac(const FeatureMap& map, const Region& r) {
  if (r.w == 0 || r.h == 0 || std::uint64_t{r.x} + r.w > map.width() ||
      std::uint64_t{r.y} + r.h > map.height()) {
    throw AggregationError(fmt::format("region ({}, {}, {}x{}) exceeds the {}x{} map", r.x, r.y,
                                       r.w, r.h, map.width(), map.height()));
  }
  Descriptor out(map.channels());
  for (std::uint32_t c = 0; c < map.channels(); ++c) {
    const auto plane = map.channel(c);
    float best = -std::numeric_limits<float>::infinity();
    for (std::uint32_t y = r.y; y < r.y + r.h; ++y) {
      const float* row = plane.data() + static_cast<std::size_t>(y) * map.width();
      best = std::max(best, *std::max_element(row + r.x, row + r.x + r.w));
    }
    out[c] = best;
  }
  return out;
}

Descriptor rmac(const FeatureMap& map, std::uint32_t levels, bool region_norm) {
  Descriptor sum = Descriptor::Zero(map.channels());
  for (const Region& r : rmac_regions(map.width(), map.height(), levels)) {
    Descriptor v = region_mac(map, r);
    if (region_norm) {
      const double norm = v.norm();
      if (norm > 0) v /= norm;
    }
    sum += v;
  }
  return sum;
}

FeatureMap downsample(const FeatureMap& map, std::uint32_t height, std::uint32_t width,
                      PoolMode mode) {
  if (height == 0 || width == 0 || height > map.height() || width > map.width()) {
    throw AggregationError(fmt::format("cannot pool a {}x{} map to {}x{}", map.height(),
                                       map.width(), height, width));
  }
  const std::uint64_t H = map.height();
  const std::uint64_t W = map.width();
  auto begin = [](std::uint64_t i, std::uint64_t in, std::uint64_t out) { return i * in / out; };
  auto end = [](std::uint64_t i, std::uint64_t in, std::uint64_t out) {
    return ((i + 1) * in + out - 1) / out;
  };

  std::vector<float> data(static_cast<std::size_t>(map.channels()) * height * width);
  std::size_t k = 0;
  for (std::uint32_t c = 0; c < map.channels(); ++c) {
    const auto plane = map.channel(c);
    for (std::uint32_t i = 0; i < height; ++i) {
      const auto y0 = begin(i, H, height), y1 = end(i, H, height);
      for (std::uint32_t j = 0; j < width; ++j) {
        const auto x0 = begin(j, W, width), x1 = end(j, W, width);
        if (mode == PoolMode::max) {
          float best = -std::numeric_limits<float>::infinity();
          for (auto y = y0; y < y1; ++y) {
            for (auto x = x0; x < x1; ++x) best = std::max(best, plane[y * W + x]);
          }
          data[k++] = best;
        } else {
          double acc = 0;
          for (auto y = y0; y < y1; ++y) {
            for (auto x = x0; x < x1; ++x) acc += plane[y * W + x];
          }
          data[k++] = static_cast<float>(acc / static_cast<double>((y1 - y0) * (x1 - x0)));
        }
      }
    }
  }
  return FeatureMap(map.name(), map.channels(), height, width, std::move(data));
}

}  // namespace instret
