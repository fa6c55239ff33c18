// Copyright 2026 The refscore Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace refscore {

// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad input data: malformed files, invariant violations, duplicate keys.
// The CLI maps these to exit code 2.
class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& message,
                           std::optional<std::size_t> line = std::nullopt,
                           std::string field = {})
      : Error(line ? "line " + std::to_string(*line) + ": " + message
                   : message),
        line_(line),
        field_(std::move(field)) {}

  std::optional<std::size_t> line() const { return line_; }
  const std::string& field() const { return field_; }

 private:
  std::optional<std::size_t> line_;
  std::string field_;
};

}  // namespace refscore
