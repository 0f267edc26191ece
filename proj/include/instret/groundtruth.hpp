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
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace instret {

using NameSet = std::set<std::string>;

struct BoundingBox {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

/// Relevance judgements for one query. Classic entries carry positive/junk;
/// revisited entries additionally carry easy/hard, and positive is then the
/// union easy + hard.
struct QueryTruth {
  std::string name;
  std::optional<BoundingBox> bbox;
  NameSet positive;
  NameSet junk;
  std::optional<NameSet> easy;
  std::optional<NameSet> hard;

  bool revisited() const noexcept { return easy.has_value() || hard.has_value(); }
};

struct GroundTruth {
  std::vector<QueryTruth> queries;
  /// May be empty, in which case the searched database defines it.
  std::vector<std::string> database;

  const QueryTruth* find(std::string_view query) const;
  /// Throws IoError(schema) on the first violated invariant.
  void validate() const;
};

enum class GroundTruthFormat { oxford, json };

/// Reads a directory of <q>_query.txt / _good.txt / _ok.txt / _junk.txt files.
/// With strip_prefix the leading "oxc1_"-style token of the query image name
/// is dropped.
GroundTruth parse_oxford_groundtruth(const std::filesystem::path& dir, bool strip_prefix);

GroundTruth parse_generic_groundtruth(std::string_view json_text, bool strict = false);

GroundTruth load_groundtruth(const std::filesystem::path& path, GroundTruthFormat format,
                             bool strip_prefix = false, bool strict = false);

/// Canonical JSON form, readable by parse_generic_groundtruth.
std::string groundtruth_to_json(const GroundTruth& gt);

}  // namespace instret
