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
#include <stdexcept>
#include <vector>

#include "instret/tensor_io.hpp"

namespace instret {

/// A rectangular window of cells on a feature map, at multi-scale level
/// `scale` (1-based).
struct Region {
  std::uint32_t x = 0;
  std::uint32_t y = 0;
  std::uint32_t w = 1;
  std::uint32_t h = 1;
  std::uint32_t scale = 1;
  friend bool operator==(const Region&, const Region&) = default;
};

class AggregationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Minimum overlap between consecutive regions along the longer axis, as a
/// fraction of the region side.
inline constexpr double kRegionOverlap = 0.4;

/// Multi-scale R-MAC grid over a W x H map, ordered by (scale, y, x).
///
/// At scale l the square side is floor(2 min(W,H) / (l+1)). The shorter axis
/// holds l regions; the longer one holds l + m, with m the smallest count
/// giving consecutive overlap >= 40% of the side (m = 0 for square maps).
/// Regions are evenly spaced from one border to the other.
std::vector<Region> rmac_regions(std::uint32_t width, std::uint32_t height, std::uint32_t levels);

/// Channel-wise max over the cells of `region`.
Descriptor region_mac(const FeatureMap& map, const Region& region);

/// Sum of (optionally L2-normalized) MAC vectors over rmac_regions(W, H, L).
/// Zero region vectors are added unnormalized. Accumulation is in double, in
/// region order.
Descriptor rmac(const FeatureMap& map, std::uint32_t levels = 3, bool region_norm = true);

enum class PoolMode { max, average };

/// Adaptive pooling to height x width. Output cell (i, j) pools the input
/// window [floor(i H / H'), ceil((i+1) H / H')) x [floor(j W / W'), ceil((j+1) W / W')).
FeatureMap downsample(const FeatureMap& map, std::uint32_t height, std::uint32_t width,
                      PoolMode mode = PoolMode::max);

}  // namespace instret
