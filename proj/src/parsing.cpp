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

#include "refscore/parsing.hpp"

#include <cctype>
#include <cmath>
#include <regex>
#include <vector>

#include <fmt/format.h>

#include "text_util.hpp"

namespace refscore {

ScoreDistribution ScoreDistribution::from_weights(
    const std::array<double, 4>& weights) {
  double total = 0.0;
  for (double w : weights) {
    if (!std::isfinite(w) || w < 0.0) {
      throw ValidationError("distribution weights must be finite and >= 0");
    }
    total += w;
  }
  if (!(total > 0.0)) {
    throw ValidationError("distribution weights sum to zero");
  }
  ScoreDistribution d;
  for (std::size_t i = 0; i < 4; ++i) d.p_[i] = weights[i] / total;
  return d;
}

ScoreDistribution ScoreDistribution::from_probabilities(
    const std::array<double, 4>& p) {
  double total = 0.0;
  for (double v : p) {
    if (!std::isfinite(v) || v < 0.0) {
      throw ValidationError("probabilities must be finite and >= 0");
    }
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw ValidationError(fmt::format("probabilities sum to {}, not 1", total));
  }
  ScoreDistribution d;
  d.p_ = p;
  return d;
}

ScoreDistribution ScoreDistribution::point_mass(int score) {
  if (score < 1 || score > 4) {
    throw ValidationError(fmt::format("score must be in 1..4, got {}", score));
  }
  ScoreDistribution d;
  d.p_[static_cast<std::size_t>(score - 1)] = 1.0;
  return d;
}

double ScoreDistribution::operator[](int score) const {
  return p_.at(static_cast<std::size_t>(score - 1));
}

std::string_view reason_name(ReasonCode reason) {
  switch (reason) {
    case ReasonCode::kNoScore: return "no_score";
    case ReasonCode::kMissingScoreLines: return "missing_score_lines";
    case ReasonCode::kUnparseablePercentage: return "unparseable_percentage";
    case ReasonCode::kSumOutOfTolerance: return "sum_out_of_tolerance";
    case ReasonCode::kMalformedPayload: return "malformed_payload";
    case ReasonCode::kMissingRecord: return "missing_record";
  }
  return "unknown";
}

std::optional<ReasonCode> reason_from_string(std::string_view text) {
  for (ReasonCode r :
       {ReasonCode::kNoScore, ReasonCode::kMissingScoreLines,
        ReasonCode::kUnparseablePercentage, ReasonCode::kSumOutOfTolerance,
        ReasonCode::kMalformedPayload, ReasonCode::kMissingRecord}) {
    if (reason_name(r) == text) return r;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Classification tables

double ParsedPercentages::sum() const {
  return raw_pct[0] + raw_pct[1] + raw_pct[2] + raw_pct[3];
}

bool ParsedPercentages::sum_within_tolerance() const {
  return std::abs(sum() - 100.0) <= kPercentSumTolerance;
}

ScoreDistribution ParsedPercentages::distribution() const {
  if (!(sum() > 0.0)) {
    throw ParseFailure(ReasonCode::kUnparseablePercentage,
                       "all percentages are zero");
  }
  return ScoreDistribution::from_weights(raw_pct);
}

namespace {

// Optional bullet ("-" or U+2022), optional bold, digit, star, optional
// bold, optional colon, number, percent sign.
const std::regex& table_line_regex() {
  static const std::regex re(
      R"(^(?:(?:-|\xE2\x80\xA2)\s*)?(?:\*\*)?([1-4])\s*\*(?:\*\*)?\s*[:=]?\s*(?:\*\*)?\s*([0-9]+(?:\.[0-9]+)?)\s*%)");
  return re;
}

// Same prefix without the percentage; a line matching this but not the full
// pattern is a score line whose value could not be read.
const std::regex& table_prefix_regex() {
  static const std::regex re(
      R"(^(?:(?:-|\xE2\x80\xA2)\s*)?(?:\*\*)?([1-4])\s*\*(?:\*\*)?\s*[:=])");
  return re;
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (true) {
    const auto end = text.find('\n', start);
    if (end == std::string_view::npos) {
      lines.push_back(text.substr(start));
      break;
    }
    lines.push_back(text.substr(start, end - start));
    start = end + 1;
  }
  return lines;
}

}  // namespace

ParsedPercentages parse_classification_table(std::string_view content) {
  ParsedPercentages out;
  std::array<bool, 4> seen{};
  int found = 0;
  std::optional<std::size_t> last_table_line;
  const auto lines = split_lines(content);

  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string line(detail::trim(lines[i]));
    std::smatch match;
    if (std::regex_search(line, match, table_line_regex())) {
      const int score = match[1].str()[0] - '0';
      const double value = std::strtod(match[2].str().c_str(), nullptr);
      if (!(value >= 0.0 && value <= 100.0)) {
        throw ParseFailure(
            ReasonCode::kUnparseablePercentage,
            fmt::format("percentage for {}* out of range: {}", score, value));
      }
      auto& flag = seen[static_cast<std::size_t>(score - 1)];
      if (flag) {
        throw ParseFailure(ReasonCode::kMissingScoreLines,
                           fmt::format("score {}* listed twice", score));
      }
      flag = true;
      out.raw_pct[static_cast<std::size_t>(score - 1)] = value;
      ++found;
      last_table_line = i;
      if (found == 4) break;
    } else if (std::regex_search(line, match, table_prefix_regex())) {
      throw ParseFailure(ReasonCode::kUnparseablePercentage,
                         fmt::format("cannot read percentage in line '{}'", line));
    }
  }
  if (found < 4) {
    throw ParseFailure(ReasonCode::kMissingScoreLines,
                       fmt::format("found {} of 4 score lines", found));
  }

  std::string tail;
  for (std::size_t i = *last_table_line + 1; i < lines.size(); ++i) {
    if (!tail.empty()) tail += '\n';
    tail += lines[i];
  }
  const auto trimmed = detail::trim(tail);
  if (!trimmed.empty()) out.trailing_commentary = std::string(trimmed);
  return out;
}

ParsedPercentages parse_classification_table(const ResponseRecord& record) {
  return parse_classification_table(record.content);
}

// ---------------------------------------------------------------------------
// Token scores

std::optional<int> normalize_score_token(std::string_view token) {
  auto strippable = [](char c) {
    return std::isspace(static_cast<unsigned char>(c)) || c == '*' ||
           c == '.' || c == ',' || c == ':' || c == ';';
  };
  std::size_t first = 0;
  std::size_t last = token.size();
  while (first < last && strippable(token[first])) ++first;
  while (last > first && strippable(token[last - 1])) --last;
  if (last - first != 1) return std::nullopt;
  const char c = token[first];
  if (c < '1' || c > '4') return std::nullopt;
  return c - '0';
}

ScoreDistribution parse_token_score(
    std::span<const TokenAlternatives> positions) {
  for (const auto& position : positions) {
    const auto chosen = normalize_score_token(position.chosen_token);
    if (!chosen) continue;

    std::array<double, 4> mass{};
    bool chosen_listed = false;
    for (const auto& alt : position.alternatives) {
      const auto score = normalize_score_token(alt.token);
      if (!score) continue;
      mass[static_cast<std::size_t>(*score - 1)] += std::exp(alt.logprob);
      if (alt.token == position.chosen_token) chosen_listed = true;
    }
    if (!chosen_listed) {
      mass[static_cast<std::size_t>(*chosen - 1)] +=
          std::exp(position.chosen_logprob);
    }
    return ScoreDistribution::from_weights(mass);
  }
  throw ParseFailure(ReasonCode::kNoScore, "no score token in response");
}

ScoreDistribution parse_token_score(const ResponseRecord& record) {
  if (record.token_logprobs.empty()) {
    throw ParseFailure(ReasonCode::kNoScore, "record carries no logprobs");
  }
  return parse_token_score(std::span<const TokenAlternatives>(record.token_logprobs));
}

// ---------------------------------------------------------------------------
// Standard responses

int parse_standard_score(std::string_view text) {
  std::optional<int> last;
  for (std::size_t i = 0; i + 1 < text.size(); ++i) {
    const char c = text[i];
    if (c < '1' || c > '4' || text[i + 1] != '*') continue;
    if (i > 0) {
      const char prev = text[i - 1];
      if (std::isdigit(static_cast<unsigned char>(prev)) || prev == '.') continue;
    }
    last = c - '0';
  }
  if (!last) throw ParseFailure(ReasonCode::kNoScore, "no N* score in response");
  return *last;
}

}  // namespace refscore
