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

#include "instret/ranking.hpp"

#include <algorithm>
#include <numeric>
#include <ostream>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "instret/parallel.hpp"
#include "instret/postprocess.hpp"

namespace instret {

namespace {

// Rows per block of the all-pairs similarity product. Fixed so that results
// never depend on the worker count.
constexpr Eigen::Index kBlockRows = 256;

struct ScoreOrder {
  const std::vector<double>& scores;
  const std::vector<std::size_t>& name_rank;
  bool operator()(std::size_t a, std::size_t b) const {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return name_rank[a] < name_rank[b];
  }
};

void check_dims(std::size_t a, std::size_t b) {
  if (a != b) throw RankingError(fmt::format("descriptor dims differ ({} vs {})", a, b));
}

}  // namespace

std::vector<std::string> RankedList::names() const {
  std::vector<std::string> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(e.name);
  return out;
}

std::vector<std::size_t> name_order(const DescriptorSet& db) {
  std::vector<std::size_t> idx(db.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(),
            [&](std::size_t a, std::size_t b) { return db.names()[a] < db.names()[b]; });
  std::vector<std::size_t> rank(db.size());
  for (std::size_t r = 0; r < idx.size(); ++r) rank[idx[r]] = r;
  return rank;
}

std::vector<double> similarity_scores(const Descriptor& query, const DescriptorSet& db) {
  check_dims(static_cast<std::size_t>(query.size()), db.dim());
  const RowMatrix& m = db.matrix();
  const Eigen::Index dim = m.cols();
  std::vector<double> scores(db.size());
  for (std::size_t i = 0; i < db.size(); ++i) {
    const double* row = m.data() + static_cast<Eigen::Index>(i) * dim;
    double s = 0;
    for (Eigen::Index k = 0; k < dim; ++k) s += row[k] * query[k];
    scores[i] = s;
  }
  return scores;
}

std::vector<std::size_t> order_by_score(const std::vector<double>& scores,
                                        const std::vector<std::size_t>& name_rank) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), ScoreOrder{scores, name_rank});
  return idx;
}

RankedList rank_scores(std::string query, const std::vector<double>& scores,
                       const DescriptorSet& db, const std::vector<std::size_t>& name_rank) {
  RankedList list{std::move(query), {}};
  list.entries.reserve(scores.size());
  for (const std::size_t i : order_by_score(scores, name_rank)) {
    list.entries.push_back({db.names()[i], scores[i]});
  }
  return list;
}

RankedList search(std::string query_name, const Descriptor& query, const DescriptorSet& db) {
  return rank_scores(std::move(query_name), similarity_scores(query, db), db, name_order(db));
}

std::vector<RankedList> global_search(const DescriptorSet& queries, const DescriptorSet& db,
                                      unsigned threads) {
  check_dims(queries.dim(), db.dim());
  const auto name_rank = name_order(db);
  std::vector<RankedList> out(queries.size());
  parallel_for(queries.size(), threads, [&](std::size_t q) {
    const Descriptor v = queries.row(q).transpose();
    out[q] = rank_scores(queries.names()[q], similarity_scores(v, db), db, name_rank);
  });
  return out;
}

Descriptor aqe(const Descriptor& query, const DescriptorSet& db, const RankedList& ranked,
               std::size_t n) {
  check_dims(static_cast<std::size_t>(query.size()), db.dim());
  if (n > db.size() || n > ranked.entries.size()) {
    throw RankingError(fmt::format("AQE depth {} exceeds database size {}", n, db.size()));
  }
  Descriptor sum = query;
  for (std::size_t r = 0; r < n; ++r) {
    const auto idx = db.index_of(ranked.entries[r].name);
    if (!idx) {
      throw RankingError(fmt::format("ranked name '{}' is not in the database", ranked.entries[r].name));
    }
    sum += db.row(*idx).transpose();
  }
  return l2_normalize(sum / static_cast<double>(n + 1));
}

std::vector<std::vector<Neighbor>> knn_table(const DescriptorSet& db, std::size_t k,
                                             unsigned threads) {
  const std::size_t n = db.size();
  if (k >= n && k > 0) {
    throw RankingError(fmt::format("neighbor count {} must be below database size {}", k, n));
  }
  std::vector<std::vector<Neighbor>> table(n);
  if (k == 0) return table;
  const auto name_rank = name_order(db);
  const RowMatrix& m = db.matrix();
  const auto rows = static_cast<Eigen::Index>(n);
  const auto blocks = static_cast<std::size_t>((rows + kBlockRows - 1) / kBlockRows);

  parallel_for(blocks, threads, [&](std::size_t b) {
    const Eigen::Index start = static_cast<Eigen::Index>(b) * kBlockRows;
    const Eigen::Index count = std::min(kBlockRows, rows - start);
    const Eigen::MatrixXd sims = m.middleRows(start, count) * m.transpose();
    std::vector<double> scores(n);
    std::vector<std::size_t> idx;
    for (Eigen::Index r = 0; r < count; ++r) {
      const auto self = static_cast<std::size_t>(start + r);
      for (std::size_t j = 0; j < n; ++j) scores[j] = sims(r, static_cast<Eigen::Index>(j));
      idx.clear();
      for (std::size_t j = 0; j < n; ++j) {
        if (j != self) idx.push_back(j);
      }
      std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                        ScoreOrder{scores, name_rank});
      auto& row = table[self];
      row.reserve(k);
      for (std::size_t t = 0; t < k; ++t) row.push_back({idx[t], scores[idx[t]]});
    }
  });
  return table;
}

DescriptorSet dba(const DescriptorSet& db, std::size_t n, bool weighted, unsigned threads) {
  if (n >= db.size() && n > 0) {
    throw RankingError(
        fmt::format("DBA depth {} must be below database size {}", n, db.size()));
  }
  const auto table = knn_table(db, n, threads);
  RowMatrix out(db.matrix().rows(), db.matrix().cols());
  parallel_for(db.size(), threads, [&](std::size_t i) {
    Descriptor sum = db.row(i).transpose();
    double total = 1.0;
    for (std::size_t r = 0; r < table[i].size(); ++r) {
      const double w = weighted ? static_cast<double>(n - r) / static_cast<double>(n + 1) : 1.0;
      sum += w * db.row(table[i][r].index).transpose();
      total += w;
    }
    out.row(static_cast<Eigen::Index>(i)) = l2_normalize(sum / total).transpose();
  });
  auto tags = db.provenance();
  tags.push_back(fmt::format("{}-{}", weighted ? "dbaw" : "dba", n));
  return DescriptorSet(db.names(), std::move(out), std::move(tags));
}

void write_rankings_tsv(const std::vector<RankedList>& rankings, std::ostream& out) {
  out << "query\trank\tname\tscore\n";
  for (const auto& list : rankings) {
    for (std::size_t r = 0; r < list.entries.size(); ++r) {
      fmt::print(out, "{}\t{}\t{}\t{:.6f}\n", list.query, r + 1, list.entries[r].name,
                 list.entries[r].score);
    }
  }
}

}  // namespace instret
