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

#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "refscore/gateway.hpp"

namespace refscore {

inline constexpr int kExitOk = 0;
inline constexpr int kExitOperational = 1;
inline constexpr int kExitValidation = 2;

// Process-level dependencies, replaceable in tests.
struct CliEnvironment {
  std::function<std::optional<std::string>(std::string_view)> getenv;
  std::function<std::shared_ptr<Transport>(const std::string& base_url)>
      make_transport;

  static CliEnvironment system();
};

// Subcommands: ingest, run, score, eval, report. `args` excludes argv[0].
// Returns the process exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err, const CliEnvironment& env = CliEnvironment::system());

}  // namespace refscore
