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

#include <stdexcept>
#include <string>
#include <string_view>

namespace empathic {

enum class ErrorKind {
  kArgument,
  kParse,
  kValidation,
  kComputation,
  kLookup,
  kTransport,
  kRetrieval,
  kTraining,
  kScoring,
  kGeneration,
  kConflict,
  kNotFound,
  kUnavailable,
  kConfig,
  kIo,
};

std::string_view KindName(ErrorKind kind);

// Every failure raised by the library carries a kind and a dotted error class
// ("corpus.duplicate_id", "config.path_missing") that the CLI prints verbatim.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string error_class, const std::string& message)
      : std::runtime_error(message),
        kind_(kind),
        error_class_(std::move(error_class)) {}

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& error_class() const noexcept { return error_class_; }

 private:
  ErrorKind kind_;
  std::string error_class_;
};

[[noreturn]] inline void Fail(ErrorKind kind, std::string error_class,
                              const std::string& message) {
  throw Error(kind, std::move(error_class), message);
}

}  // namespace empathic
