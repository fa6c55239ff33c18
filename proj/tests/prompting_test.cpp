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

#include <doctest.h>

#include "refscore/error.hpp"
#include "test_support.hpp"

using namespace refscore;

namespace {

Article sample_article(int unit = 8) {
  Article a;
  a.id = "a1";
  a.title = "Soil carbon under {braces} and 100% cover";
  a.abstract = "We measure things.\nThen we report them.";
  a.unit = unit;
  a.main_panel = panel_for_unit(unit);
  a.department_id = "inst-07";
  a.year = 2017;
  return a;
}

SystemInstructionSet full_set() {
  SystemInstructionSet set;
  set.set(MainPanel::kA, "SYS-A");
  set.set(MainPanel::kB, "SYS-B");
  set.set(MainPanel::kC, "SYS-C");
  set.set(MainPanel::kD, "SYS-D");
  return set;
}

}  // namespace

TEST_CASE("classification prompt is byte exact") {
  const auto bundle = build_classification_prompt(sample_article(), full_set());
  CHECK(bundle.system_text == "SYS-B");
  CHECK(bundle.user_text ==
        "Given the following article, estimate the likelihood (in percentages) that it "
        "belongs to each of the four quality categories and then stop. The total should "
        "add up to 100%.\n\nCategories:\n- 1*\n- 2*\n- 3*\n- 4*\n\nRespond with a list "
        "like:\n- 1*: __%\n- 2*: __%\n- 3*: __%\n- 4*: __%\n\nArticle:\n"
        "Soil carbon under {braces} and 100% cover\n"
        "We measure things.\nThen we report them.");
  CHECK_FALSE(bundle.logprobs_requested);
  CHECK(bundle.max_response_tokens == 1000);
  CHECK(bundle.strategy == Strategy::kClassificationTable);
}

TEST_CASE("token prompt is byte exact and asks for log probabilities") {
  const auto bundle = build_token_prompt(sample_article(3), full_set());
  CHECK(bundle.system_text == "SYS-A");
  CHECK(bundle.user_text ==
        "Score this article, giving your answer as one of 1*, 2*, 3*, or 4* then stop:\n"
        "Soil carbon under {braces} and 100% cover\nAbstract\n"
        "We measure things.\nThen we report them.");
  CHECK(bundle.logprobs_requested);
  CHECK(bundle.max_response_tokens == 5);
  CHECK(bundle.top_logprobs == 5);
}

TEST_CASE("standard prompt") {
  const auto bundle = build_standard_prompt(sample_article(30), full_set());
  CHECK(bundle.system_text == "SYS-D");
  CHECK(bundle.user_text.rfind("Score this journal article:\n", 0) == 0);
  CHECK(bundle.user_text ==
        "Score this journal article:\nSoil carbon under {braces} and 100% cover\n"
        "Abstract\nWe measure things.\nThen we report them.");
  CHECK(bundle.max_response_tokens == 1000);
  CHECK_FALSE(bundle.logprobs_requested);
}

TEST_CASE("prompts are deterministic and depend only on title and abstract") {
  const auto set = full_set();
  for (auto strategy :
       {Strategy::kClassificationTable, Strategy::kTokenScore, Strategy::kStandard}) {
    const auto a = sample_article(14);
    auto b = a;
    b.id = "other";
    b.department_id = "inst-99";
    b.year = 2020;
    b.unit = 20;  // same panel C
    b.main_panel = panel_for_unit(20);
    CHECK(build_prompt(strategy, a, set) == build_prompt(strategy, a, set));
    CHECK(build_prompt(strategy, a, set) == build_prompt(strategy, b, set));
    const auto bundle = build_prompt(strategy, a, set);
    CHECK(bundle.user_text.find("a1") == std::string::npos);
    CHECK(bundle.user_text.find("inst-07") == std::string::npos);
    CHECK(bundle.user_text.find("2017") == std::string::npos);
  }
}

TEST_CASE("missing panel instructions name the panel") {
  SystemInstructionSet set;
  set.set(MainPanel::kA, "SYS-A");
  try {
    build_token_prompt(sample_article(26), set);
    FAIL("expected an error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("Main Panel D") != std::string::npos);
  }
  CHECK_FALSE(set.complete());
  CHECK_THROWS_AS(set.require_ready(true), ValidationError);
}

TEST_CASE("placeholder instructions are detected") {
  const auto shipped = SystemInstructionSet::load(std::string(REFSCORE_SOURCE_DIR) + "/instructions");
  CHECK(shipped.complete());
  CHECK(shipped.has_placeholders());
  CHECK_THROWS_AS(shipped.require_ready(false), ValidationError);
  CHECK_NOTHROW(shipped.require_ready(true));
  CHECK_NOTHROW(full_set().require_ready(false));
  CHECK_THROWS_AS(SystemInstructionSet::load("/nonexistent/dir"), ValidationError);
}

TEST_CASE("strategy names round trip") {
  for (auto strategy :
       {Strategy::kClassificationTable, Strategy::kTokenScore, Strategy::kStandard}) {
    CHECK(strategy_from_string(strategy_name(strategy)) == strategy);
  }
  CHECK_FALSE(strategy_from_string("bogus").has_value());
}
