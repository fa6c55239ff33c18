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
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "refscore/corpus.hpp"
#include "refscore/error.hpp"
#include "refscore/scoring.hpp"

namespace refscore {

// ---------------------------------------------------------------------------
// Rank correlation

class UndefinedCorrelationError : public Error {
 public:
  using Error::Error;
};

// 1-based ranks; tied values share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> values);

// Pearson correlation of the average-rank vectors. Throws ValidationError on
// length mismatch or n < 2, UndefinedCorrelationError when either side is
// constant.
double spearman(std::span<const double> x, std::span<const double> y);

// ---------------------------------------------------------------------------
// Profiles and internal consistency

struct Profile {
  std::array<int, 4> pct{};  // whole percentage points, 1* first

  auto operator<=>(const Profile&) const = default;
  int sum() const { return pct[0] + pct[1] + pct[2] + pct[3]; }
  // Rounding can move the total; more than 2 points off is flagged.
  bool sum_ok() const { return sum() >= 98 && sum() <= 102; }
  std::string label() const;  // "10-20-40-30"
};

Profile quantize(const ScoreDistribution& d);

struct ProfileCount {
  Profile profile;
  std::size_t count = 0;
};

struct ConsistencyRow {
  Profile profile;
  std::array<double, 4> predicted_pct{};
  std::array<double, 4> observed_pct{};
  std::array<std::size_t, 4> observed_counts{};  // winners of the other iterations
  double mad = 0.0;        // sum over levels of |predicted - observed|, points
  std::size_t weight = 0;  // occurrences of the profile that were compared
};

struct ConsistencyReport {
  std::vector<ConsistencyRow> rows;  // by weight desc, then profile
  std::optional<double> weighted_mean_mad;
  std::optional<double> unweighted_mean_mad;
  std::size_t single_iteration_articles = 0;
};

// For every occurrence of a profile, tallies the winners of the other usable
// iterations of the same article, pooled over all articles with that
// profile. All results must share one strategy.
ConsistencyReport consistency_mad(std::span<const ScoredResult> results,
                                  bool include_flagged_tables = false);

using PanelLookup = std::unordered_map<std::string, MainPanel>;
PanelLookup panel_lookup(std::span<const Article> corpus);

// Top-k quantized profiles among usable results of articles in `panel`,
// by count descending then profile ascending.
std::vector<ProfileCount> profile_histogram(std::span<const ScoredResult> results,
                                            const PanelLookup& panels,
                                            MainPanel panel, std::size_t k,
                                            bool include_flagged_tables = false);

// ---------------------------------------------------------------------------
// Evaluation against the proxy

enum class ScoreSeries { kWeighted, kWinner };
std::string_view series_name(ScoreSeries series);

struct SpearmanCell {
  Strategy strategy;
  ScoreSeries series;
  int unit;
  int year;
  std::size_t n = 0;
  std::optional<double> rho;
  std::string skip_reason;  // set when rho is absent
};

struct UnitSummary {
  Strategy strategy;
  ScoreSeries series;
  int unit;
  std::optional<double> mean_over_years;  // unweighted mean of cell rhos
  std::size_t years_used = 0;
  std::optional<double> pooled_rho;  // all years pooled
  std::size_t pooled_n = 0;
};

struct OverallSummary {
  Strategy strategy;
  ScoreSeries series;
  std::optional<double> pooled_rho;  // all articles of all units
  std::size_t pooled_n = 0;
  std::optional<double> mean_of_unit_means;
  std::size_t units_used = 0;
};

struct SpearmanReport {
  std::vector<SpearmanCell> cells;
  std::vector<UnitSummary> units;
  std::vector<OverallSummary> overall;
};

// Pairs each article score with its department's proxy mean and correlates
// per (unit, year). Throws ValidationError when an article is missing from
// the corpus or its (department, unit) from the proxy.
SpearmanReport evaluate(std::span<const ArticleScore> scores,
                        std::span<const Article> corpus,
                        const ProxyTable& proxy);

struct MadSummary {
  Strategy strategy;
  std::optional<MainPanel> panel;  // nullopt: all panels
  ConsistencyReport report;
};

struct ProfileTable {
  Strategy strategy;
  MainPanel panel;
  std::vector<ProfileCount> top;
};

struct StrategyCounts {
  Strategy strategy;
  std::size_t results = 0;
  std::size_t usable = 0;
  std::size_t flagged = 0;
  std::size_t articles_scored = 0;
  std::size_t articles_unusable = 0;
};

struct EvalOptions {
  std::size_t top_k = 20;
  bool include_flagged_tables = false;
};

struct EvalReport {
  std::vector<StrategyCounts> counts;
  SpearmanReport spearman;
  std::vector<MadSummary> mad;
  std::vector<ProfileTable> profiles;
  std::vector<std::string> notes;
};

// Full report over scored results of one or more strategies. Throws
// ValidationError when `results` is empty.
EvalReport build_report(std::span<const ScoredResult> results,
                        std::span<const Article> corpus,
                        const ProxyTable& proxy, const EvalOptions& options = {});

nlohmann::ordered_json report_to_json(const EvalReport& report);
// Aligned plain-text tables, rendered from the JSON form.
std::string render_report_text(const nlohmann::json& report);

// report.json, report.txt and one CSV per table. Output is a pure function
// of the report.
void write_report(const std::filesystem::path& dir, const EvalReport& report);

}  // namespace refscore
