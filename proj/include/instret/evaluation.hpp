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

#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "instret/groundtruth.hpp"
#include "instret/ranking.hpp"

namespace instret {

class EvaluationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Protocol { classic, easy, medium, hard };

std::string_view to_string(Protocol p) noexcept;
Protocol parse_protocol(std::string_view text);

/// How average precision integrates the precision/recall staircase once junk
/// is dropped.
enum class ApMode {
  /// Trapezoid between consecutive positive hits, starting from precision 1:
  /// sum_i (p_{i-1} + p_i) / 2 / |positive|, p_0 = 1, p_i = i / rank_i.
  trapezoid,
  /// The benchmark's compute_ap: the "previous" precision is the one at the
  /// item just before each hit.
  oxford,
  /// Non-interpolated AP: sum_i p_i / |positive|.
  plain,
};

std::string_view to_string(ApMode m) noexcept;
ApMode parse_ap_mode(std::string_view text);

double average_precision(std::span<const std::string> ranked, const NameSet& positive,
                         const NameSet& junk, ApMode mode = ApMode::trapezoid);
double average_precision(const RankedList& ranked, const NameSet& positive, const NameSet& junk,
                         ApMode mode = ApMode::trapezoid);

/// Positives among the first min(k, length) items, divided by k. Junk is
/// dropped first unless `remove_junk` is false.
double precision_at_k(std::span<const std::string> ranked, const NameSet& positive,
                      const NameSet& junk, std::size_t k, bool remove_junk = true);

struct ScoredQuery {
  std::string name;
  NameSet positive;
  NameSet junk;
};

struct ProtocolSetup {
  std::vector<ScoredQuery> queries;
  /// Queries whose positive set came out empty.
  std::vector<std::string> excluded;
};

/// Relabels revisited ground truth: easy counts hard as junk, medium counts
/// both as positive, hard counts easy as junk.
ProtocolSetup revisited_setup(const GroundTruth& gt, Protocol label);

struct EvalOptions {
  ApMode ap = ApMode::trapezoid;
  bool precision_removes_junk = true;
};

/// Values are fractions in [0, 1]; the JSON form reports percentages.
struct EvalReport {
  Protocol protocol = Protocol::classic;
  std::map<std::string, double> per_query;
  double map = 0;
  double mp5 = 0;
  double mp10 = 0;
  std::size_t n_queries = 0;
  std::vector<std::string> excluded;
  /// Ground-truth positives missing from the database, summed over queries.
  std::size_t missing_positives = 0;
};

/// `database` defaults to gt.database, or to each ranking's own names when
/// that is empty too.
EvalReport evaluate(const std::vector<RankedList>& rankings, const GroundTruth& gt,
                    Protocol protocol, const EvalOptions& options = {});

/// {protocol, map, mp5, mp10, n_queries, excluded, per_query}, percentages.
std::string report_to_json(const EvalReport& report, int indent = 2);

}  // namespace instret
