/*
 * Copyright 2026 The xeval Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Attribution dumps and atomic file output.
//
// Dump layout: lines starting with '#' carry metadata ("# key<TAB>json"),
// then a header row "input_id explainer normalized f0 f1 ..." and one
// tab-separated row per attribution. Reals are written with 17 significant
// digits so reading a dump back is exact.

#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "xeval/data.hpp"
#include "xeval/error.hpp"
#include "xeval/explain.hpp"

namespace xeval {

// Writes to a sibling temp file and renames it over `path`, so readers never
// see a partial file.
inline void WriteFileAtomic(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) Fail(ErrorCode::kIoError, "cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) Fail(ErrorCode::kIoError, "write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    Fail(ErrorCode::kIoError, "cannot rename onto " + path.string());
  }
}

inline std::string ReadFile(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) Fail(ErrorCode::kIoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::string FormatReal(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct AttributionDump {
  std::vector<std::string> feature_names;
  std::vector<AttributionVector> rows;
  // Ordered so output is stable.
  std::map<std::string, nlohmann::json> metadata;
};

inline std::string FormatDump(const AttributionDump& dump) {
  std::string out = "# xeval attribution dump v1\n";
  for (const auto& [key, value] : dump.metadata) out += "# " + key + "\t" + value.dump() + "\n";
  out += "input_id\texplainer\tnormalized";
  for (const auto& name : dump.feature_names) out += "\t" + name;
  out += "\n";
  for (const auto& row : dump.rows) {
    Require(row.values.size() == dump.feature_names.size(), ErrorCode::kDimensionMismatch,
            "attribution length does not match the feature names");
    out += row.input_id ? std::to_string(*row.input_id) : std::string("-");
    out += "\t" + row.explainer_name + "\t" + (row.normalized ? "1" : "0");
    for (double v : row.values) out += "\t" + FormatReal(v);
    out += "\n";
  }
  return out;
}

inline void WriteDump(const std::filesystem::path& path, const AttributionDump& dump) {
  WriteFileAtomic(path, FormatDump(dump));
}

inline AttributionDump ParseDump(const std::string& text) {
  AttributionDump dump;
  std::istringstream in(text);
  std::string line;
  bool have_header = false;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto tab = line.find('\t');
      if (tab == std::string::npos) continue;
      try {
        dump.metadata[line.substr(2, tab - 2)] = nlohmann::json::parse(line.substr(tab + 1));
      } catch (const nlohmann::json::exception&) {
        Fail(ErrorCode::kParseError, "bad metadata on line " + std::to_string(line_no));
      }
      continue;
    }
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, '\t')) cells.push_back(cell);
    if (!have_header) {
      Require(cells.size() >= 3 && cells[0] == "input_id", ErrorCode::kParseError,
              "dump header missing");
      dump.feature_names.assign(cells.begin() + 3, cells.end());
      have_header = true;
      continue;
    }
    Require(cells.size() == dump.feature_names.size() + 3, ErrorCode::kParseError,
            "wrong cell count on line " + std::to_string(line_no));
    AttributionVector row;
    if (cells[0] != "-") row.input_id = std::stoull(cells[0]);
    row.explainer_name = cells[1];
    row.normalized = cells[2] == "1";
    for (std::size_t j = 3; j < cells.size(); ++j) {
      const auto v = detail::ParseReal(cells[j]);
      Require(v.has_value(), ErrorCode::kParseError,
              "bad number '" + cells[j] + "' on line " + std::to_string(line_no));
      row.values.push_back(*v);
    }
    dump.rows.push_back(std::move(row));
  }
  Require(have_header, ErrorCode::kParseError, "dump header missing");
  return dump;
}

inline AttributionDump ReadDump(const std::filesystem::path& path) { return ParseDump(ReadFile(path)); }

}  // namespace xeval
