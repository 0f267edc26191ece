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

#include "instret/groundtruth.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include <fmt/format.h>
#include <json.hpp>

#include "instret/tensor_io.hpp"

namespace instret {

namespace {

using nlohmann::json;

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(IoErrc::missing_file, fmt::format("cannot open '{}'", path.string()));
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

NameSet read_name_list(const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) {
    throw IoError(IoErrc::missing_file, fmt::format("missing companion file '{}'", path.string()));
  }
  std::istringstream lines(read_text(path));
  NameSet names;
  for (std::string line; std::getline(lines, line);) {
    auto name = trim(line);
    if (!name.empty()) names.insert(std::move(name));
  }
  return names;
}

void check_bbox(const BoundingBox& b, std::string_view query) {
  if (!(b.x1 < b.x2) || !(b.y1 < b.y2)) {
    throw IoError(IoErrc::malformed,
                  fmt::format("query '{}': bounding box ({}, {}, {}, {}) needs x1<x2 and y1<y2",
                              query, b.x1, b.y1, b.x2, b.y2));
  }
}

std::string strip_leading_token(const std::string& name) {
  const auto pos = name.find('_');
  if (pos == std::string::npos || pos + 1 == name.size()) return name;
  return name.substr(pos + 1);
}

NameSet name_set(const json& node, std::string_view field, std::string_view query) {
  if (!node.is_array()) {
    throw IoError(IoErrc::schema,
                  fmt::format("query '{}': field '{}' must be an array of names", query, field));
  }
  NameSet out;
  for (const auto& item : node) {
    if (!item.is_string()) {
      throw IoError(IoErrc::schema,
                    fmt::format("query '{}': field '{}' holds a non-string entry", query, field));
    }
    out.insert(item.get<std::string>());
  }
  return out;
}

bool disjoint(const NameSet& a, const NameSet& b) {
  return std::none_of(a.begin(), a.end(), [&](const std::string& s) { return b.contains(s); });
}

}  // namespace

const QueryTruth* GroundTruth::find(std::string_view query) const {
  const auto it = std::find_if(queries.begin(), queries.end(),
                               [&](const QueryTruth& q) { return q.name == query; });
  return it == queries.end() ? nullptr : &*it;
}

void GroundTruth::validate() const {
  std::unordered_set<std::string> seen;
  for (const auto& q : queries) {
    if (q.name.empty()) throw IoError(IoErrc::schema, "query with empty name");
    if (!seen.insert(q.name).second) {
      throw IoError(IoErrc::schema, fmt::format("query '{}' is listed twice", q.name));
    }
    if (q.bbox) check_bbox(*q.bbox, q.name);
    if (!disjoint(q.positive, q.junk)) {
      throw IoError(IoErrc::schema, fmt::format("query '{}': positive and junk overlap", q.name));
    }
    if (q.easy && q.hard && !disjoint(*q.easy, *q.hard)) {
      throw IoError(IoErrc::schema, fmt::format("query '{}': easy and hard overlap", q.name));
    }
  }
}

GroundTruth parse_oxford_groundtruth(const std::filesystem::path& dir, bool strip_prefix) {
  if (!std::filesystem::is_directory(dir)) {
    throw IoError(IoErrc::missing_file,
                  fmt::format("ground-truth directory '{}' not found", dir.string()));
  }
  static constexpr std::string_view kQuerySuffix = "_query.txt";
  std::vector<std::string> stems;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const auto file = entry.path().filename().string();
    if (entry.is_regular_file() && file.size() > kQuerySuffix.size() && file.ends_with(kQuerySuffix)) {
      stems.push_back(file.substr(0, file.size() - kQuerySuffix.size()));
    }
  }
  if (stems.empty()) {
    throw IoError(IoErrc::missing_file,
                  fmt::format("no *_query.txt files in '{}'", dir.string()));
  }
  std::sort(stems.begin(), stems.end());

  GroundTruth gt;
  for (const auto& stem : stems) {
    const auto query_file = dir / (stem + "_query.txt");
    std::istringstream line(trim(read_text(query_file)));
    QueryTruth q;
    BoundingBox box;
    std::string image;
    if (!(line >> image >> box.x1 >> box.y1 >> box.x2 >> box.y2)) {
      throw IoError(IoErrc::malformed,
                    fmt::format("'{}': expected '<image> x1 y1 x2 y2'", query_file.string()));
    }
    std::string rest;
    if (line >> rest) {
      throw IoError(IoErrc::malformed,
                    fmt::format("'{}': trailing content '{}'", query_file.string(), rest));
    }
    q.name = strip_prefix ? strip_leading_token(image) : image;
    check_bbox(box, q.name);
    q.bbox = box;

    const NameSet good = read_name_list(dir / (stem + "_good.txt"));
    const NameSet ok = read_name_list(dir / (stem + "_ok.txt"));
    q.junk = read_name_list(dir / (stem + "_junk.txt"));
    q.positive = good;
    q.positive.insert(ok.begin(), ok.end());
    gt.queries.push_back(std::move(q));
  }
  gt.validate();
  return gt;
}

GroundTruth parse_generic_groundtruth(std::string_view json_text, bool strict) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw IoError(IoErrc::malformed, fmt::format("ground-truth JSON: {}", e.what()));
  }
  if (!doc.is_object()) throw IoError(IoErrc::schema, "ground truth must be a JSON object");
  for (const auto& [key, _] : doc.items()) {
    if (key != "database" && key != "queries") {
      throw IoError(IoErrc::schema, fmt::format("unknown top-level field '{}'", key));
    }
  }

  GroundTruth gt;
  if (doc.contains("database")) {
    const auto db = name_set(doc["database"], "database", "<root>");
    for (const auto& item : doc["database"]) gt.database.push_back(item.get<std::string>());
    if (db.size() != gt.database.size()) {
      throw IoError(IoErrc::schema, "database lists a name twice");
    }
  }
  if (!doc.contains("queries") || !doc["queries"].is_array()) {
    throw IoError(IoErrc::schema, "ground truth needs a 'queries' array");
  }

  static const std::unordered_set<std::string> kFields = {"name", "bbox", "positive",
                                                          "easy", "hard", "junk"};
  for (const auto& node : doc["queries"]) {
    if (!node.is_object() || !node.contains("name") || !node["name"].is_string()) {
      throw IoError(IoErrc::schema, "each query needs a string 'name'");
    }
    QueryTruth q;
    q.name = node["name"].get<std::string>();
    for (const auto& [key, _] : node.items()) {
      if (!kFields.contains(key)) {
        throw IoError(IoErrc::schema, fmt::format("query '{}': unknown field '{}'", q.name, key));
      }
    }
    const bool has_positive = node.contains("positive");
    const bool has_revisited = node.contains("easy") || node.contains("hard");
    if (has_positive && has_revisited) {
      throw IoError(IoErrc::schema,
                    fmt::format("query '{}': 'positive' cannot be combined with 'easy'/'hard'",
                                q.name));
    }
    if (!has_positive && !has_revisited) {
      throw IoError(IoErrc::schema,
                    fmt::format("query '{}': needs 'positive' or 'easy'/'hard'", q.name));
    }
    if (node.contains("bbox")) {
      const auto& b = node["bbox"];
      if (!b.is_array() || b.size() != 4 ||
          !std::all_of(b.begin(), b.end(), [](const json& v) { return v.is_number(); })) {
        throw IoError(IoErrc::malformed,
                      fmt::format("query '{}': bbox must be [x1, y1, x2, y2]", q.name));
      }
      q.bbox = BoundingBox{b[0].get<double>(), b[1].get<double>(), b[2].get<double>(),
                           b[3].get<double>()};
    }
    if (node.contains("junk")) q.junk = name_set(node["junk"], "junk", q.name);
    if (has_positive) {
      q.positive = name_set(node["positive"], "positive", q.name);
    } else {
      q.easy = node.contains("easy") ? name_set(node["easy"], "easy", q.name) : NameSet{};
      q.hard = node.contains("hard") ? name_set(node["hard"], "hard", q.name) : NameSet{};
      q.positive = *q.easy;
      q.positive.insert(q.hard->begin(), q.hard->end());
    }
    gt.queries.push_back(std::move(q));
  }
  gt.validate();

  if (strict) {
    const NameSet db(gt.database.begin(), gt.database.end());
    for (const auto& q : gt.queries) {
      for (const NameSet* set : {&q.positive, &q.junk}) {
        for (const auto& name : *set) {
          if (!db.contains(name)) {
            throw IoError(IoErrc::schema,
                          fmt::format("query '{}': '{}' is not in the database", q.name, name));
          }
        }
      }
    }
  }
  return gt;
}

GroundTruth load_groundtruth(const std::filesystem::path& path, GroundTruthFormat format,
                             bool strip_prefix, bool strict) {
  if (format == GroundTruthFormat::oxford) return parse_oxford_groundtruth(path, strip_prefix);
  return parse_generic_groundtruth(read_text(path), strict);
}

std::string groundtruth_to_json(const GroundTruth& gt) {
  json doc;
  doc["database"] = gt.database;
  doc["queries"] = json::array();
  for (const auto& q : gt.queries) {
    json node;
    node["name"] = q.name;
    if (q.bbox) node["bbox"] = {q.bbox->x1, q.bbox->y1, q.bbox->x2, q.bbox->y2};
    if (q.revisited()) {
      node["easy"] = q.easy.value_or(NameSet{});
      node["hard"] = q.hard.value_or(NameSet{});
    } else {
      node["positive"] = q.positive;
    }
    node["junk"] = q.junk;
    doc["queries"].push_back(std::move(node));
  }
  return doc.dump(2);
}

}  // namespace instret
