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

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "refscore/error.hpp"
#include "refscore/gateway.hpp"
#include "refscore/parsing.hpp"
#include "refscore/prompting.hpp"

namespace refscore {

// Expected score sum_s s * p[s], in [1, 4].
double weighted_score(const ScoreDistribution& d);
// argmax_s p[s]; ties go to the lower score.
int winner(const ScoreDistribution& d);

struct ScoredResult {
  std::string article_id;
  Strategy strategy = Strategy::kStandard;
  int iteration = 1;
  std::optional<ScoreDistribution> distribution;
  double weighted_score = 0.0;  // meaningful only with a distribution
  int winner = 0;               // 0 when there is no distribution
  std::vector<ReasonCode> flags;

  // Flag-free with a distribution. `include_flagged_tables` also admits
  // classification tables whose only flag is the percentage-sum check.
  bool usable(bool include_flagged_tables = false) const;

  bool operator==(const ScoredResult&) const = default;
};

ScoredResult make_scored_result(std::string article_id, Strategy strategy,
                                int iteration, const ScoreDistribution& d);

// Parses one stored response under its strategy's rules. Failures become
// flags; nothing is thrown for unusable responses.
ScoredResult score_record(const ResponseRecord& record);

struct ArticleScore {
  std::string article_id;
  Strategy strategy = Strategy::kStandard;
  double mean_weighted_score = 0.0;
  double mean_winner_score = 0.0;
  int n_iterations_used = 0;
  int n_iterations_flagged = 0;
};

class UnusableArticleError : public Error {
 public:
  using Error::Error;
};

// Means over usable iterations. All results must share article and strategy.
// Throws UnusableArticleError when none are usable.
ArticleScore aggregate(std::span<const ScoredResult> results,
                       bool include_flagged_tables = false);

struct AggregateSummary {
  std::vector<ArticleScore> scores;  // ordered by (strategy, article_id)
  std::vector<std::pair<std::string, Strategy>> unusable;
};

// Groups by (article, strategy) and aggregates each group.
AggregateSummary aggregate_all(std::span<const ScoredResult> results,
                               bool include_flagged_tables = false);

// CSV with header article_id,strategy,iteration,p1,p2,p3,p4,weighted,winner,flags.
// Flags are ';'-separated reason codes. Numbers use shortest round-trip form.
std::string serialize_scored_csv(std::span<const ScoredResult> results);
std::vector<ScoredResult> parse_scored_csv(std::string_view text);
// One JSON object per line with the same fields.
std::string serialize_scored_jsonl(std::span<const ScoredResult> results);
std::vector<ScoredResult> parse_scored_jsonl(std::string_view text);

void write_scored(const std::filesystem::path& path,
                  std::span<const ScoredResult> results);
// Format chosen by extension (.jsonl or .csv).
std::vector<ScoredResult> load_scored(const std::filesystem::path& path);

}  // namespace refscore
