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

#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "instret/tensor_io.hpp"

namespace instret {

class RankingError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct RankedEntry {
  std::string name;
  double score = 0;
  friend bool operator==(const RankedEntry&, const RankedEntry&) = default;
};

/// Full ranking of a database for one query: descending score, ties broken
/// by ascending name.
struct RankedList {
  std::string query;
  std::vector<RankedEntry> entries;

  std::vector<std::string> names() const;
  friend bool operator==(const RankedList&, const RankedList&) = default;
};

/// Position of each database row in ascending name order; used as the final
/// tie-break key everywhere.
std::vector<std::size_t> name_order(const DescriptorSet& db);

/// Dot products of `query` with every database row, summed in a fixed order.
std::vector<double> similarity_scores(const Descriptor& query, const DescriptorSet& db);

/// Sorts database indices by (score desc, name asc).
std::vector<std::size_t> order_by_score(const std::vector<double>& scores,
                                        const std::vector<std::size_t>& name_rank);

RankedList rank_scores(std::string query, const std::vector<double>& scores,
                       const DescriptorSet& db, const std::vector<std::size_t>& name_rank);

RankedList search(std::string query_name, const Descriptor& query, const DescriptorSet& db);

std::vector<RankedList> global_search(const DescriptorSet& queries, const DescriptorSet& db,
                                      unsigned threads = 1);

/// l2_normalize(mean of the query and its top-N ranked database vectors).
Descriptor aqe(const Descriptor& query, const DescriptorSet& db, const RankedList& ranked,
               std::size_t n);

/// The `k` most similar other rows of every database row, by (score desc,
/// name asc), as (index, similarity) pairs.
struct Neighbor {
  std::size_t index;
  double similarity;
};
std::vector<std::vector<Neighbor>> knn_table(const DescriptorSet& db, std::size_t k,
                                             unsigned threads = 1);

/// Database-side augmentation: each row becomes the normalized mean of
/// itself and its N' nearest other rows, all taken from the input set. With
/// `weighted`, the neighbor at rank r (1-based) gets weight (N'+1-r)/(N'+1)
/// and the row itself weight 1.
DescriptorSet dba(const DescriptorSet& db, std::size_t n, bool weighted = false,
                  unsigned threads = 1);

/// TSV with a header line and columns query, rank (1-based), name, score
/// (6 decimals).
void write_rankings_tsv(const std::vector<RankedList>& rankings, std::ostream& out);

}  // namespace instret
