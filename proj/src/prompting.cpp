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

#include "refscore/prompting.hpp"

#include <fstream>

#include <fmt/format.h>

#include "refscore/error.hpp"
#include "text_util.hpp"

namespace refscore {
namespace {

constexpr std::string_view kClassificationTemplate =
    "Given the following article, estimate the likelihood (in percentages) "
    "that it belongs to each of the four quality categories and then stop. "
    "The total should add up to 100%.\n"
    "\n"
    "Categories:\n"
    "- 1*\n"
    "- 2*\n"
    "- 3*\n"
    "- 4*\n"
    "\n"
    "Respond with a list like:\n"
    "- 1*: __%\n"
    "- 2*: __%\n"
    "- 3*: __%\n"
    "- 4*: __%\n"
    "\n"
    "Article:\n"
    "{title}\n"
    "{abstract}";

constexpr std::string_view kTokenTemplate =
    "Score this article, giving your answer as one of 1*, 2*, 3*, or 4* then "
    "stop:\n"
    "{title}\n"
    "Abstract\n"
    "{abstract}";

constexpr std::string_view kStandardTemplate =
    "Score this journal article:\n"
    "{title}\n"
    "Abstract\n"
    "{abstract}";

std::size_t panel_index(MainPanel panel) {
  return static_cast<std::size_t>(panel);
}

// Only the title and abstract ever reach the prompt.
std::string render(std::string_view tmpl, const Article& article) {
  return fmt::format(fmt::runtime(tmpl), fmt::arg("title", article.title),
                     fmt::arg("abstract", article.abstract));
}

}  // namespace

std::string_view strategy_name(Strategy strategy) {
  switch (strategy) {
    case Strategy::kClassificationTable: return "classification_table";
    case Strategy::kTokenScore: return "token_score";
    case Strategy::kStandard: return "standard";
  }
  return "unknown";
}

std::optional<Strategy> strategy_from_string(std::string_view text) {
  if (text == "classification_table" || text == "classification") {
    return Strategy::kClassificationTable;
  }
  if (text == "token_score" || text == "token") return Strategy::kTokenScore;
  if (text == "standard") return Strategy::kStandard;
  return std::nullopt;
}

SystemInstructionSet SystemInstructionSet::load(
    const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw ValidationError("instructions directory not found: " + dir.string());
  }
  SystemInstructionSet set;
  for (MainPanel panel :
       {MainPanel::kA, MainPanel::kB, MainPanel::kC, MainPanel::kD}) {
    const auto file =
        dir / fmt::format("panel_{}.txt",
                          static_cast<char>(panel_letter(panel) - 'A' + 'a'));
    if (std::filesystem::exists(file)) {
      set.set(panel, detail::read_file(file.string()));
    }
  }
  return set;
}

void SystemInstructionSet::set(MainPanel panel, std::string text) {
  texts_[panel_index(panel)] = std::move(text);
}

const std::string* SystemInstructionSet::find(MainPanel panel) const {
  const auto& slot = texts_[panel_index(panel)];
  return slot ? &*slot : nullptr;
}

const std::string& SystemInstructionSet::at(MainPanel panel) const {
  if (const auto* text = find(panel)) return *text;
  throw ValidationError(
      fmt::format("no system instructions loaded for Main Panel {}",
                  panel_letter(panel)),
      std::nullopt, "main_panel");
}

bool SystemInstructionSet::complete() const {
  for (const auto& slot : texts_) {
    if (!slot) return false;
  }
  return true;
}

bool SystemInstructionSet::has_placeholders() const {
  for (const auto& slot : texts_) {
    if (slot && detail::trim(*slot).substr(0, kPlaceholderMarker.size()) ==
                    kPlaceholderMarker) {
      return true;
    }
  }
  return false;
}

void SystemInstructionSet::require_ready(bool allow_placeholders) const {
  for (MainPanel panel :
       {MainPanel::kA, MainPanel::kB, MainPanel::kC, MainPanel::kD}) {
    at(panel);
  }
  if (has_placeholders() && !allow_placeholders) {
    throw ValidationError(
        "system instructions are placeholders; supply real panel_a.txt.."
        "panel_d.txt or pass --allow-placeholder-instructions");
  }
}

PromptBundle build_classification_prompt(
    const Article& article, const SystemInstructionSet& instructions) {
  PromptBundle bundle;
  bundle.system_text = instructions.at(article.main_panel);
  bundle.user_text = render(kClassificationTemplate, article);
  bundle.strategy = Strategy::kClassificationTable;
  bundle.max_response_tokens = kClassificationMaxTokens;
  return bundle;
}

PromptBundle build_token_prompt(const Article& article,
                                const SystemInstructionSet& instructions) {
  PromptBundle bundle;
  bundle.system_text = instructions.at(article.main_panel);
  bundle.user_text = render(kTokenTemplate, article);
  bundle.strategy = Strategy::kTokenScore;
  bundle.max_response_tokens = kTokenScoreMaxTokens;
  bundle.logprobs_requested = true;
  bundle.top_logprobs = kTokenScoreTopLogprobs;
  return bundle;
}

PromptBundle build_standard_prompt(const Article& article,
                                   const SystemInstructionSet& instructions) {
  PromptBundle bundle;
  bundle.system_text = instructions.at(article.main_panel);
  bundle.user_text = render(kStandardTemplate, article);
  bundle.strategy = Strategy::kStandard;
  bundle.max_response_tokens = kStandardMaxTokens;
  return bundle;
}

PromptBundle build_prompt(Strategy strategy, const Article& article,
                          const SystemInstructionSet& instructions) {
  switch (strategy) {
    case Strategy::kClassificationTable:
      return build_classification_prompt(article, instructions);
    case Strategy::kTokenScore:
      return build_token_prompt(article, instructions);
    case Strategy::kStandard:
      return build_standard_prompt(article, instructions);
  }
  throw Error("unknown strategy");
}

}  // namespace refscore
