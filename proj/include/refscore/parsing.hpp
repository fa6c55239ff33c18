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
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "refscore/error.hpp"
#include "refscore/gateway.hpp"

namespace refscore {

// Probabilities over the quality levels 1*..4*. Always nonnegative and
// summing to 1 within 1e-9.
class ScoreDistribution {
 public:
  // Normalizes nonnegative finite weights with a positive sum.
  static ScoreDistribution from_weights(const std::array<double, 4>& weights);
  // Stores already-normalized probabilities verbatim; throws unless they are
  // nonnegative and sum to 1 within 1e-9.
  static ScoreDistribution from_probabilities(const std::array<double, 4>& p);
  static ScoreDistribution point_mass(int score);

  // score in 1..4
  double operator[](int score) const;
  const std::array<double, 4>& probabilities() const { return p_; }

  bool operator==(const ScoreDistribution&) const = default;

 private:
  ScoreDistribution() = default;
  std::array<double, 4> p_{};
};

// Why a response could not be scored, or was scored but set aside.
enum class ReasonCode {
  kNoScore,
  kMissingScoreLines,
  kUnparseablePercentage,
  kSumOutOfTolerance,
  kMalformedPayload,
  kMissingRecord,
};

std::string_view reason_name(ReasonCode reason);
std::optional<ReasonCode> reason_from_string(std::string_view text);

class ParseFailure : public Error {
 public:
  ParseFailure(ReasonCode reason, const std::string& message)
      : Error(message), reason_(reason) {}
  ReasonCode reason() const { return reason_; }

 private:
  ReasonCode reason_;
};

inline constexpr double kPercentSumTolerance = 1.0;

struct ParsedPercentages {
  std::array<double, 4> raw_pct{};  // as stated, index 0 is 1*
  std::optional<std::string> trailing_commentary;

  double sum() const;
  bool sum_within_tolerance() const;
  // raw_pct / sum. Throws ParseFailure when every percentage is zero.
  ScoreDistribution distribution() const;
};

// Reads the four "N*: x%" lines. Tolerates bullets, bold markers, missing or
// extra spaces, and commentary after the table.
// Throws ParseFailure(kMissingScoreLines | kUnparseablePercentage).
ParsedPercentages parse_classification_table(std::string_view content);
ParsedPercentages parse_classification_table(const ResponseRecord& record);

// Maps a token to its score when it is one digit 1..4 surrounded only by
// whitespace, asterisks or . , : ; characters.
std::optional<int> normalize_score_token(std::string_view token);

// Finds the first position whose chosen token is a score, then renormalizes
// the exponentiated logprobs of that position's score alternatives.
// Throws ParseFailure(kNoScore).
ScoreDistribution parse_token_score(std::span<const TokenAlternatives> positions);
ScoreDistribution parse_token_score(const ResponseRecord& record);

// The last "N*" (N in 1..4, not part of a longer number) in the text.
// Throws ParseFailure(kNoScore).
int parse_standard_score(std::string_view text);

}  // namespace refscore
