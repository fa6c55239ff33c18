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

#include "refscore/scoring.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>

#include <fmt/format.h>
#include <json.hpp>

#include "text_util.hpp"

namespace refscore {

double weighted_score(const ScoreDistribution& d) {
  return 1.0 * d[1] + 2.0 * d[2] + 3.0 * d[3] + 4.0 * d[4];
}

int winner(const ScoreDistribution& d) {
  int best = 1;
  for (int s = 2; s <= 4; ++s) {
    if (d[s] > d[best]) best = s;
  }
  return best;
}

bool ScoredResult::usable(bool include_flagged_tables) const {
  if (!distribution) return false;
  if (flags.empty()) return true;
  return include_flagged_tables && flags.size() == 1 &&
         flags[0] == ReasonCode::kSumOutOfTolerance;
}

ScoredResult make_scored_result(std::string article_id, Strategy strategy,
                                int iteration, const ScoreDistribution& d) {
  ScoredResult result;
  result.article_id = std::move(article_id);
  result.strategy = strategy;
  result.iteration = iteration;
  result.distribution = d;
  result.weighted_score = weighted_score(d);
  result.winner = winner(d);
  return result;
}

ScoredResult score_record(const ResponseRecord& record) {
  ScoredResult flagged;
  flagged.article_id = record.key.article_id;
  flagged.strategy = record.key.strategy;
  flagged.iteration = record.key.iteration;
  if (!record.ok()) {
    flagged.flags.push_back(ReasonCode::kMalformedPayload);
    return flagged;
  }
  try {
    switch (record.key.strategy) {
      case Strategy::kClassificationTable: {
        const auto table = parse_classification_table(record);
        auto result = make_scored_result(record.key.article_id,
                                         record.key.strategy,
                                         record.key.iteration,
                                         table.distribution());
        if (!table.sum_within_tolerance()) {
          result.flags.push_back(ReasonCode::kSumOutOfTolerance);
        }
        return result;
      }
      case Strategy::kTokenScore:
        return make_scored_result(record.key.article_id, record.key.strategy,
                                  record.key.iteration,
                                  parse_token_score(record));
      case Strategy::kStandard:
        return make_scored_result(
            record.key.article_id, record.key.strategy, record.key.iteration,
            ScoreDistribution::point_mass(parse_standard_score(record.content)));
    }
  } catch (const ParseFailure& e) {
    flagged.flags.push_back(e.reason());
  }
  return flagged;
}

ArticleScore aggregate(std::span<const ScoredResult> results,
                       bool include_flagged_tables) {
  if (results.empty()) throw UnusableArticleError("no results to aggregate");
  ArticleScore out;
  out.article_id = results.front().article_id;
  out.strategy = results.front().strategy;
  double weighted_total = 0.0;
  double winner_total = 0.0;
  for (const auto& r : results) {
    if (r.article_id != out.article_id || r.strategy != out.strategy) {
      throw ValidationError("aggregate needs results for one article and strategy");
    }
    if (!r.usable(include_flagged_tables)) {
      ++out.n_iterations_flagged;
      continue;
    }
    weighted_total += r.weighted_score;
    winner_total += r.winner;
    ++out.n_iterations_used;
  }
  if (out.n_iterations_used == 0) {
    throw UnusableArticleError(
        fmt::format("article {} has no usable {} iterations", out.article_id,
                    strategy_name(out.strategy)));
  }
  out.mean_weighted_score = weighted_total / out.n_iterations_used;
  out.mean_winner_score = winner_total / out.n_iterations_used;
  return out;
}

AggregateSummary aggregate_all(std::span<const ScoredResult> results,
                               bool include_flagged_tables) {
  std::map<std::pair<Strategy, std::string>, std::vector<ScoredResult>> groups;
  for (const auto& r : results) groups[{r.strategy, r.article_id}].push_back(r);
  AggregateSummary summary;
  for (auto& [key, group] : groups) {
    // Iteration order does not affect the means but does affect rounding.
    std::sort(group.begin(), group.end(),
              [](const ScoredResult& a, const ScoredResult& b) {
                return a.iteration < b.iteration;
              });
    try {
      summary.scores.push_back(aggregate(group, include_flagged_tables));
    } catch (const UnusableArticleError&) {
      summary.unusable.emplace_back(key.second, key.first);
    }
  }
  return summary;
}

// ---------------------------------------------------------------------------
// Scored table IO

namespace {

std::string join_flags(const std::vector<ReasonCode>& flags) {
  std::string out;
  for (const auto flag : flags) {
    if (!out.empty()) out += ';';
    out += reason_name(flag);
  }
  return out;
}

std::vector<ReasonCode> split_flags(std::string_view text, std::size_t line) {
  std::vector<ReasonCode> flags;
  text = detail::trim(text);
  while (!text.empty()) {
    const auto sep = text.find(';');
    const auto item = detail::trim(text.substr(0, sep));
    const auto reason = reason_from_string(item);
    if (!reason) {
      throw ValidationError(fmt::format("unknown flag '{}'", item), line, "flags");
    }
    flags.push_back(*reason);
    if (sep == std::string_view::npos) break;
    text = text.substr(sep + 1);
  }
  return flags;
}

double parse_number(std::string_view text, std::size_t line,
                    const char* field) {
  std::string owned(detail::trim(text));
  char* end = nullptr;
  const double value = std::strtod(owned.c_str(), &end);
  if (owned.empty() || end != owned.c_str() + owned.size()) {
    throw ValidationError(fmt::format("field '{}' is not a number", field),
                          line, field);
  }
  return value;
}

int parse_int(std::string_view text, std::size_t line, const char* field) {
  text = detail::trim(text);
  int value = 0;
  const auto [ptr, ec] =
      std::from_chars(text.data(), text.data() + text.size(), value);
  if (text.empty() || ec != std::errc{} || ptr != text.data() + text.size()) {
    throw ValidationError(fmt::format("field '{}' is not an integer", field),
                          line, field);
  }
  return value;
}

Strategy parse_strategy(std::string_view text, std::size_t line) {
  const auto strategy = strategy_from_string(detail::trim(text));
  if (!strategy) {
    throw ValidationError(fmt::format("unknown strategy '{}'", text), line,
                          "strategy");
  }
  return *strategy;
}

// Rebuilds a row from its probabilities and checks the stored derived
// columns against them.
ScoredResult rebuild(std::string article_id, Strategy strategy, int iteration,
                     std::optional<std::array<double, 4>> p,
                     std::optional<double> weighted, std::optional<int> win,
                     std::vector<ReasonCode> flags, std::size_t line) {
  if (iteration < 1) {
    throw ValidationError("iteration must be >= 1", line, "iteration");
  }
  ScoredResult result;
  if (p) {
    std::optional<ScoreDistribution> d;
    try {
      d = ScoreDistribution::from_probabilities(*p);
    } catch (const ValidationError& e) {
      throw ValidationError(e.what(), line, "p1");
    }
    result = make_scored_result(std::move(article_id), strategy, iteration, *d);
    if (weighted && std::abs(*weighted - result.weighted_score) > 1e-9) {
      throw ValidationError("weighted disagrees with p1..p4", line, "weighted");
    }
    if (win && *win != result.winner) {
      throw ValidationError("winner disagrees with p1..p4", line, "winner");
    }
  } else {
    result.article_id = std::move(article_id);
    result.strategy = strategy;
    result.iteration = iteration;
  }
  result.flags = std::move(flags);
  return result;
}

}  // namespace

std::string serialize_scored_csv(std::span<const ScoredResult> results) {
  std::string out = "article_id,strategy,iteration,p1,p2,p3,p4,weighted,winner,flags\n";
  for (const auto& r : results) {
    out += fmt::format("{},{},{},", detail::csv_field(r.article_id),
                       strategy_name(r.strategy), r.iteration);
    if (r.distribution) {
      const auto& p = r.distribution->probabilities();
      out += fmt::format("{},{},{},{},{},{},", p[0], p[1], p[2], p[3],
                         r.weighted_score, r.winner);
    } else {
      out += ",,,,,,";
    }
    out += detail::csv_field(join_flags(r.flags));
    out += '\n';
  }
  return out;
}

std::vector<ScoredResult> parse_scored_csv(std::string_view text) {
  const auto rows = detail::parse_csv(text);
  std::vector<ScoredResult> results;
  if (rows.empty()) return results;
  const std::vector<std::string> expected = {
      "article_id", "strategy", "iteration", "p1",     "p2",
      "p3",         "p4",       "weighted",  "winner", "flags"};
  if (rows.front().fields != expected) {
    throw ValidationError("scored table header mismatch", rows.front().line);
  }
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& row = rows[i];
    const auto& f = row.fields;
    if (f.size() != expected.size()) {
      throw ValidationError(
          fmt::format("expected {} fields, found {}", expected.size(), f.size()),
          row.line);
    }
    std::optional<std::array<double, 4>> p;
    std::optional<double> weighted;
    std::optional<int> win;
    if (!detail::trim(f[3]).empty()) {
      p = std::array<double, 4>{parse_number(f[3], row.line, "p1"),
                                parse_number(f[4], row.line, "p2"),
                                parse_number(f[5], row.line, "p3"),
                                parse_number(f[6], row.line, "p4")};
      weighted = parse_number(f[7], row.line, "weighted");
      win = parse_int(f[8], row.line, "winner");
    }
    results.push_back(rebuild(f[0], parse_strategy(f[1], row.line),
                              parse_int(f[2], row.line, "iteration"), p,
                              weighted, win, split_flags(f[9], row.line),
                              row.line));
  }
  return results;
}

std::string serialize_scored_jsonl(std::span<const ScoredResult> results) {
  std::string out;
  for (const auto& r : results) {
    nlohmann::ordered_json row;
    row["article_id"] = r.article_id;
    row["strategy"] = strategy_name(r.strategy);
    row["iteration"] = r.iteration;
    if (r.distribution) {
      const auto& p = r.distribution->probabilities();
      row["p1"] = p[0];
      row["p2"] = p[1];
      row["p3"] = p[2];
      row["p4"] = p[3];
      row["weighted"] = r.weighted_score;
      row["winner"] = r.winner;
    } else {
      for (const char* key : {"p1", "p2", "p3", "p4", "weighted", "winner"}) {
        row[key] = nullptr;
      }
    }
    auto flags = nlohmann::ordered_json::array();
    for (const auto flag : r.flags) flags.push_back(reason_name(flag));
    row["flags"] = std::move(flags);
    out += row.dump();
    out += '\n';
  }
  return out;
}

std::vector<ScoredResult> parse_scored_jsonl(std::string_view text) {
  std::vector<ScoredResult> results;
  std::size_t line = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    ++line;
    const auto raw = text.substr(start, end - start);
    start = end + 1;
    if (detail::trim(raw).empty()) continue;
    try {
      const auto row = nlohmann::json::parse(raw);
      std::optional<std::array<double, 4>> p;
      std::optional<double> weighted;
      std::optional<int> win;
      if (!row.at("p1").is_null()) {
        p = std::array<double, 4>{row.at("p1").get<double>(),
                                  row.at("p2").get<double>(),
                                  row.at("p3").get<double>(),
                                  row.at("p4").get<double>()};
        weighted = row.at("weighted").get<double>();
        win = row.at("winner").get<int>();
      }
      std::vector<ReasonCode> flags;
      for (const auto& flag : row.at("flags")) {
        const auto reason = reason_from_string(flag.get<std::string>());
        if (!reason) throw ValidationError("unknown flag", line, "flags");
        flags.push_back(*reason);
      }
      results.push_back(rebuild(
          row.at("article_id").get<std::string>(),
          parse_strategy(row.at("strategy").get<std::string>(), line),
          row.at("iteration").get<int>(), p, weighted, win, std::move(flags),
          line));
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(fmt::format("bad scored row: {}", e.what()), line);
    }
  }
  return results;
}

void write_scored(const std::filesystem::path& path,
                  std::span<const ScoredResult> results) {
  detail::write_file(path.string(), path.extension() == ".jsonl"
                                        ? serialize_scored_jsonl(results)
                                        : serialize_scored_csv(results));
}

std::vector<ScoredResult> load_scored(const std::filesystem::path& path) {
  const auto text = detail::read_file(path.string());
  return path.extension() == ".jsonl" ? parse_scored_jsonl(text)
                                      : parse_scored_csv(text);
}

}  // namespace refscore
