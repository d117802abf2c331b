// Copyright 2026 The Empathic Retrieval Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "empathic/jsonl.hpp"

#include <fstream>

#include "empathic/error.hpp"

namespace empathic::jsonl {

void ForEachRecord(const std::filesystem::path& path,
                   const std::function<void(const Json&, std::size_t)>& visit) {
  std::ifstream in(path);
  if (!in) {
    Fail(ErrorKind::kIo, "io.unreadable", "cannot open " + path.string());
  }
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Json record;
    try {
      record = Json::parse(line);
    } catch (const Json::parse_error& e) {
      Fail(ErrorKind::kParse, "parse.malformed_record",
           path.string() + ":" + std::to_string(line_number) + ": " + e.what());
    }
    if (!record.is_object()) {
      Fail(ErrorKind::kParse, "parse.malformed_record",
           path.string() + ":" + std::to_string(line_number) +
               ": record is not a JSON object");
    }
    visit(record, line_number);
  }
}

std::vector<Json> ReadAll(const std::filesystem::path& path) {
  std::vector<Json> records;
  ForEachRecord(path, [&](const Json& r, std::size_t) { records.push_back(r); });
  return records;
}

void WriteAll(const std::filesystem::path& path, const std::vector<Json>& records) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) Fail(ErrorKind::kIo, "io.unwritable", "cannot write " + tmp.string());
    for (const Json& r : records) out << r.dump() << '\n';
    if (!out) Fail(ErrorKind::kIo, "io.unwritable", "write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

const Json& RequireField(const Json& record, const char* field, std::size_t line) {
  auto it = record.find(field);
  if (it == record.end()) {
    Fail(ErrorKind::kParse, "parse.missing_field",
         "line " + std::to_string(line) + ": missing field '" + field + "'");
  }
  return *it;
}

std::string RequireString(const Json& record, const char* field, std::size_t line) {
  const Json& value = RequireField(record, field, line);
  if (!value.is_string()) {
    Fail(ErrorKind::kParse, "parse.bad_field",
         "line " + std::to_string(line) + ": field '" + field + "' must be a string");
  }
  return value.get<std::string>();
}

}  // namespace empathic::jsonl
