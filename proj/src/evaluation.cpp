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

#include "instret/evaluation.hpp"

#include <algorithm>
#include <cctype>

#include <fmt/format.h>
#include <json.hpp>

namespace instret {

std::string_view to_string(Protocol p) noexcept {
  switch (p) {
    case Protocol::classic: return "classic";
    case Protocol::easy: return "easy";
    case Protocol::medium: return "medium";
    case Protocol::hard: return "hard";
  }
  return "classic";
}

Protocol parse_protocol(std::string_view text) {
  std::string s(text);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "classic") return Protocol::classic;
  if (s == "easy") return Protocol::easy;
  if (s == "medium") return Protocol::medium;
  if (s == "hard") return Protocol::hard;
  throw EvaluationError(fmt::format("unknown protocol '{}'", text));
}

std::string_view to_string(ApMode m) noexcept {
  switch (m) {
    case ApMode::trapezoid: return "trapezoid";
    case ApMode::oxford: return "oxford";
    case ApMode::plain: return "plain";
  }
  return "trapezoid";
}

ApMode parse_ap_mode(std::string_view text) {
  if (text == "trapezoid") return ApMode::trapezoid;
  if (text == "oxford") return ApMode::oxford;
  if (text == "plain") return ApMode::plain;
  throw EvaluationError(fmt::format("unknown AP mode '{}'", text));
}

double average_precision(std::span<const std::string> ranked, const NameSet& positive,
                         const NameSet& junk, ApMode mode) {
  if (positive.empty()) throw EvaluationError("average precision needs at least one positive");
  double ap = 0;
  double prev_precision = 1.0;
  std::size_t hits = 0;
  std::size_t seen = 0;
  for (const auto& name : ranked) {
    if (junk.contains(name)) continue;
    ++seen;
    const bool hit = positive.contains(name);
    if (hit) ++hits;
    const double precision = static_cast<double>(hits) / static_cast<double>(seen);
    if (hit) {
      if (mode == ApMode::plain) {
        ap += precision;
      } else {
        ap += (prev_precision + precision) / 2.0;
      }
    }
    if (mode == ApMode::oxford || hit) prev_precision = precision;
  }
  return ap / static_cast<double>(positive.size());
}

double average_precision(const RankedList& ranked, const NameSet& positive, const NameSet& junk,
                         ApMode mode) {
  const auto names = ranked.names();
  return average_precision(names, positive, junk, mode);
}

double precision_at_k(std::span<const std::string> ranked, const NameSet& positive,
                      const NameSet& junk, std::size_t k, bool remove_junk) {
  if (k == 0) throw EvaluationError("precision@k needs k >= 1");
  std::size_t taken = 0;
  std::size_t hits = 0;
  for (const auto& name : ranked) {
    if (taken == k) break;
    if (remove_junk && junk.contains(name)) continue;
    ++taken;
    if (positive.contains(name)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(k);
}

ProtocolSetup revisited_setup(const GroundTruth& gt, Protocol label) {
  ProtocolSetup setup;
  for (const auto& q : gt.queries) {
    ScoredQuery out{q.name, {}, q.junk};
    if (label == Protocol::classic) {
      out.positive = q.positive;
    } else {
      if (!q.revisited()) {
        throw EvaluationError(fmt::format(
            "query '{}' has no easy/hard labels; the {} protocol needs revisited ground truth",
            q.name, to_string(label)));
      }
      const NameSet& easy = *q.easy;
      const NameSet& hard = *q.hard;
      switch (label) {
        case Protocol::easy:
          out.positive = easy;
          out.junk.insert(hard.begin(), hard.end());
          break;
        case Protocol::medium:
          out.positive = easy;
          out.positive.insert(hard.begin(), hard.end());
          break;
        case Protocol::hard:
          out.positive = hard;
          out.junk.insert(easy.begin(), easy.end());
          break;
        case Protocol::classic: break;
      }
    }
    if (out.positive.empty()) {
      setup.excluded.push_back(q.name);
    } else {
      setup.queries.push_back(std::move(out));
    }
  }
  return setup;
}

EvalReport evaluate(const std::vector<RankedList>& rankings, const GroundTruth& gt,
                    Protocol protocol, const EvalOptions& options) {
  const ProtocolSetup setup = revisited_setup(gt, protocol);
  EvalReport report;
  report.protocol = protocol;
  const NameSet gt_database(gt.database.begin(), gt.database.end());

  for (const auto& ranked : rankings) {
    if (!gt.find(ranked.query)) {
      throw EvaluationError(fmt::format("query '{}' is not in the ground truth", ranked.query));
    }
    const auto scored = std::find_if(setup.queries.begin(), setup.queries.end(),
                                     [&](const ScoredQuery& s) { return s.name == ranked.query; });
    if (scored == setup.queries.end()) {
      report.excluded.push_back(ranked.query);
      continue;
    }
    const auto names = ranked.names();
    const NameSet ranked_set(names.begin(), names.end());
    const NameSet& database = gt_database.empty() ? ranked_set : gt_database;
    NameSet positive;
    for (const auto& p : scored->positive) {
      if (database.contains(p)) {
        positive.insert(p);
      } else {
        ++report.missing_positives;
      }
    }
    if (positive.empty()) {
      report.excluded.push_back(ranked.query);
      continue;
    }
    const double ap = average_precision(names, positive, scored->junk, options.ap);
    report.per_query[ranked.query] = ap;
    report.map += ap;
    report.mp5 += precision_at_k(names, positive, scored->junk, 5, options.precision_removes_junk);
    report.mp10 += precision_at_k(names, positive, scored->junk, 10, options.precision_removes_junk);
  }
  report.n_queries = report.per_query.size();
  if (report.n_queries > 0) {
    const auto n = static_cast<double>(report.n_queries);
    report.map /= n;
    report.mp5 /= n;
    report.mp10 /= n;
  }
  std::sort(report.excluded.begin(), report.excluded.end());
  return report;
}

std::string report_to_json(const EvalReport& report, int indent) {
  nlohmann::ordered_json doc;
  doc["protocol"] = std::string(to_string(report.protocol));
  doc["map"] = 100.0 * report.map;
  doc["mp5"] = 100.0 * report.mp5;
  doc["mp10"] = 100.0 * report.mp10;
  doc["n_queries"] = report.n_queries;
  doc["excluded"] = report.excluded;
  nlohmann::ordered_json per_query = nlohmann::ordered_json::object();
  for (const auto& [name, ap] : report.per_query) per_query[name] = 100.0 * ap;
  doc["per_query"] = std::move(per_query);
  return doc.dump(indent);
}

}  // namespace instret
