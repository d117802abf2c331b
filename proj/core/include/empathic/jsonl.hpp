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

#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace empathic::jsonl {

using Json = nlohmann::json;

// Calls visit(record, line_number) for every non-blank line. Malformed JSON
// raises a parse error naming the file and 1-based line number.
void ForEachRecord(const std::filesystem::path& path,
                   const std::function<void(const Json&, std::size_t)>& visit);

std::vector<Json> ReadAll(const std::filesystem::path& path);

// Writes one compact record per line, replacing the file atomically.
void WriteAll(const std::filesystem::path& path, const std::vector<Json>& records);

// Field accessors that raise a parse error naming the line on mismatch.
std::string RequireString(const Json& record, const char* field, std::size_t line);
const Json& RequireField(const Json& record, const char* field, std::size_t line);

}  // namespace empathic::jsonl
