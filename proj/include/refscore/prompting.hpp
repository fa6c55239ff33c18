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

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "refscore/corpus.hpp"

namespace refscore {

enum class Strategy { kClassificationTable, kTokenScore, kStandard };

// "classification_table" / "token_score" / "standard".
std::string_view strategy_name(Strategy strategy);
// Accepts the canonical names and the short CLI forms
// "classification" / "token".
std::optional<Strategy> strategy_from_string(std::string_view text);

struct PromptBundle {
  std::string system_text;
  std::string user_text;
  Strategy strategy = Strategy::kStandard;
  int max_response_tokens = 1;
  bool logprobs_requested = false;
  int top_logprobs = 0;

  bool operator==(const PromptBundle&) const = default;
};

inline constexpr int kTokenScoreMaxTokens = 5;
inline constexpr int kTokenScoreTopLogprobs = 5;
inline constexpr int kStandardMaxTokens = 1000;
inline constexpr int kClassificationMaxTokens = 1000;

// First line of any shipped placeholder instruction file. Scoring refuses to
// run with placeholders unless explicitly overridden.
inline constexpr std::string_view kPlaceholderMarker =
    "PLACEHOLDER SYSTEM INSTRUCTIONS";

// System instructions per Main Panel.
class SystemInstructionSet {
 public:
  SystemInstructionSet() = default;

  // Reads panel_a.txt .. panel_d.txt; missing files leave the panel unset.
  static SystemInstructionSet load(const std::filesystem::path& dir);

  void set(MainPanel panel, std::string text);
  const std::string* find(MainPanel panel) const;
  // Throws ValidationError naming the panel when absent.
  const std::string& at(MainPanel panel) const;

  bool complete() const;
  bool has_placeholders() const;

  // All four panels present, and no placeholder text unless allowed.
  void require_ready(bool allow_placeholders) const;

 private:
  std::array<std::optional<std::string>, 4> texts_;
};

PromptBundle build_classification_prompt(const Article& article,
                                         const SystemInstructionSet& instructions);
PromptBundle build_token_prompt(const Article& article,
                                const SystemInstructionSet& instructions);
PromptBundle build_standard_prompt(const Article& article,
                                   const SystemInstructionSet& instructions);

PromptBundle build_prompt(Strategy strategy, const Article& article,
                          const SystemInstructionSet& instructions);

}  // namespace refscore
