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
#include <random>

#include <doctest.h>

#include "test_support.hpp"

using namespace refscore;
using refscore::testing::completion_payload;
using refscore::testing::fixture_path;
using refscore::testing::read_text;
using refscore::testing::TempDir;

namespace {

ScoreDistribution pct(double a, double b, double c, double d) {
  return ScoreDistribution::from_weights({a, b, c, d});
}

std::vector<ScoredResult> results_for(const std::string& id, Strategy strategy,
                                      const std::vector<ScoreDistribution>& ds) {
  std::vector<ScoredResult> out;
  int i = 0;
  for (const auto& d : ds) out.push_back(make_scored_result(id, strategy, ++i, d));
  return out;
}

ResponseRecord record(Strategy strategy, std::string content, int iteration = 1) {
  ResponseRecord r;
  r.key = {"a1", strategy, iteration};
  r.content = std::move(content);
  return r;
}

std::array<double, 4> random_weights(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::array<double, 4> w{};
  do {
    for (auto& x : w) x = rng() % 4 == 0 ? 0.0 : u(rng);
  } while (w[0] + w[1] + w[2] + w[3] <= 0.0);
  return w;
}

}  // namespace

TEST_CASE("weighted score examples") {
  CHECK(weighted_score(pct(10, 20, 35, 35)) == doctest::Approx(2.95));
  CHECK(weighted_score(pct(0, 0.2, 0.2, 0.6)) == doctest::Approx(3.4));
  CHECK(weighted_score(ScoreDistribution::point_mass(3)) == 3.0);
  CHECK(weighted_score(pct(10, 30, 45, 15)) == doctest::Approx(2.65));
}

TEST_CASE("winner picks the most likely score, ties to the lower score") {
  CHECK(winner(pct(10, 20, 40, 30)) == 3);
  CHECK(winner(pct(0, 0.2, 0.2, 0.6)) == 4);
  CHECK(winner(pct(10, 30, 30, 30)) == 2);
  CHECK(winner(pct(25, 25, 25, 25)) == 1);
  CHECK(winner(pct(0, 0, 50, 50)) == 3);
}

TEST_CASE("aggregation over iterations") {
  SUBCASE("token probabilities that drift across iterations") {
    const auto results = results_for("a", Strategy::kTokenScore,
                                     {pct(0, 0, 90, 10), pct(0, 0, 82, 18), pct(0, 0, 92, 8),
                                      pct(0, 0, 82, 18), pct(0, 0, 92, 8)});
    const auto score = aggregate(results);
    CHECK(score.mean_weighted_score == doctest::Approx(3.124));
    CHECK(score.mean_winner_score == 3.0);
    CHECK(score.n_iterations_used == 5);
  }
  SUBCASE("classification tables from the fixture") {
    std::vector<ScoredResult> results;
    std::istringstream in(read_text(fixture_path("classification_iterations.jsonl")));
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto row = nlohmann::json::parse(line);
      results.push_back(score_record(record(Strategy::kClassificationTable,
                                            row["content"].get<std::string>(),
                                            row["iteration"].get<int>())));
    }
    const auto score = aggregate(results);
    CHECK(score.mean_weighted_score == doctest::Approx(2.70));
    CHECK(score.mean_winner_score == 3.0);
  }
  SUBCASE("identical iterations aggregate to themselves") {
    const auto d = pct(5, 15, 50, 30);
    const auto score = aggregate(results_for("a", Strategy::kTokenScore, {d, d, d}));
    CHECK(score.mean_weighted_score == doctest::Approx(weighted_score(d)));
    CHECK(score.mean_winner_score == 3.0);
  }
  SUBCASE("flagged iterations are excluded and counted") {
    auto results = results_for("a", Strategy::kStandard,
                               {ScoreDistribution::point_mass(2), ScoreDistribution::point_mass(4)});
    ScoredResult bad;
    bad.article_id = "a";
    bad.strategy = Strategy::kStandard;
    bad.iteration = 3;
    bad.flags = {ReasonCode::kNoScore};
    results.push_back(bad);
    const auto score = aggregate(results);
    CHECK(score.mean_weighted_score == 3.0);
    CHECK(score.n_iterations_used == 2);
    CHECK(score.n_iterations_flagged == 1);
  }
  SUBCASE("all iterations flagged") {
    ScoredResult bad;
    bad.article_id = "a";
    bad.flags = {ReasonCode::kNoScore};
    const std::vector<ScoredResult> results = {bad, bad};
    CHECK_THROWS_AS(aggregate(results), UnusableArticleError);
    const auto summary = aggregate_all(results);
    CHECK(summary.scores.empty());
    REQUIRE(summary.unusable.size() == 1);
    CHECK(summary.unusable[0].first == "a");
  }
  SUBCASE("out-of-tolerance tables only count on request") {
    const auto flagged = score_record(
        record(Strategy::kClassificationTable, "1*: 10%\n2*: 30%\n3*: 40%\n4*: 10%"));
    REQUIRE(flagged.flags == std::vector<ReasonCode>{ReasonCode::kSumOutOfTolerance});
    const std::vector<ScoredResult> results = {flagged};
    CHECK_THROWS_AS(aggregate(results), UnusableArticleError);
    CHECK(aggregate(results, true).mean_weighted_score ==
          doctest::Approx((10 + 60 + 120 + 40) / 90.0));
  }
}

TEST_CASE("score_record turns failures into flags") {
  CHECK(score_record(record(Strategy::kStandard, "I would give this 3*.")).winner == 3);
  CHECK(score_record(record(Strategy::kStandard, "No opinion.")).flags ==
        std::vector<ReasonCode>{ReasonCode::kNoScore});
  CHECK(score_record(record(Strategy::kClassificationTable, "1*: 10%\n2*: 90%")).flags ==
        std::vector<ReasonCode>{ReasonCode::kMissingScoreLines});
  CHECK(score_record(record(Strategy::kTokenScore, "3*")).flags ==
        std::vector<ReasonCode>{ReasonCode::kNoScore});
  auto broken = record(Strategy::kTokenScore, "");
  broken.error = "malformed_payload";
  const auto r = score_record(broken);
  CHECK(r.flags == std::vector<ReasonCode>{ReasonCode::kMalformedPayload});
  CHECK_FALSE(r.distribution.has_value());

  auto token = record(Strategy::kTokenScore, "Score: 3*\n\n");
  token.token_logprobs =
      parse_chat_completion(read_text(fixture_path("chat_completion_logprobs.json")), true)
          .token_logprobs;
  const auto scored = score_record(token);
  CHECK(scored.usable());
  CHECK(scored.winner == 3);
  CHECK(scored.weighted_score == doctest::Approx(2.9968787591392765).epsilon(1e-12));
}

TEST_CASE("aggregation is linear, scale and permutation invariant (property)") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 1 + rng() % 6;
    std::vector<std::array<double, 4>> weights;
    std::vector<ScoreDistribution> ds;
    for (std::size_t i = 0; i < n; ++i) {
      weights.push_back(random_weights(rng));
      ds.push_back(ScoreDistribution::from_weights(weights.back()));
    }
    // Oracle: mean of sum(s * w_s / sum(w)).
    double oracle = 0.0;
    for (const auto& w : weights) {
      const double total = w[0] + w[1] + w[2] + w[3];
      oracle += (w[0] + 2 * w[1] + 3 * w[2] + 4 * w[3]) / total;
    }
    oracle /= static_cast<double>(n);
    const auto base = aggregate(results_for("a", Strategy::kTokenScore, ds));
    CHECK(base.mean_weighted_score == doctest::Approx(oracle).epsilon(1e-12));

    std::vector<ScoreDistribution> scaled;
    const double factor = 0.001 + static_cast<double>(rng() % 1000);
    for (const auto& w : weights) {
      scaled.push_back(ScoreDistribution::from_weights(
          {w[0] * factor, w[1] * factor, w[2] * factor, w[3] * factor}));
    }
    CHECK(aggregate(results_for("a", Strategy::kTokenScore, scaled)).mean_weighted_score ==
          doctest::Approx(oracle).epsilon(1e-12));

    auto shuffled = ds;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const auto perm = aggregate(results_for("a", Strategy::kTokenScore, shuffled));
    CHECK(perm.mean_weighted_score == doctest::Approx(base.mean_weighted_score).epsilon(1e-12));
    CHECK(perm.mean_winner_score == base.mean_winner_score);
  }
}

TEST_CASE("scored tables round trip in both formats") {
  std::mt19937_64 rng(3);
  std::vector<ScoredResult> results;
  for (int i = 0; i < 50; ++i) {
    const auto strategy = static_cast<Strategy>(i % 3);
    results.push_back(make_scored_result(fmt::format("id,{}\"q", i), strategy, 1 + i % 5,
                                         ScoreDistribution::from_weights(random_weights(rng))));
  }
  ScoredResult flagged;
  flagged.article_id = "bad";
  flagged.strategy = Strategy::kClassificationTable;
  flagged.flags = {ReasonCode::kMissingScoreLines};
  results.push_back(flagged);
  auto table = make_scored_result("tbl", Strategy::kClassificationTable, 2, pct(10, 30, 40, 15));
  table.flags = {ReasonCode::kSumOutOfTolerance};
  results.push_back(table);

  CHECK(parse_scored_csv(serialize_scored_csv(results)) == results);
  CHECK(parse_scored_jsonl(serialize_scored_jsonl(results)) == results);
  TempDir dir;
  for (const char* name : {"s.csv", "s.jsonl"}) {
    write_scored(dir / name, results);
    CHECK(load_scored(dir / name) == results);
  }
  CHECK_THROWS_AS(parse_scored_csv("article_id,strategy,iteration,p1,p2,p3,p4,weighted,winner,flags\n"
                                   "a,token_score,1,0.5,0.5,0,0,9,1,\n"),
                  ValidationError);
}
