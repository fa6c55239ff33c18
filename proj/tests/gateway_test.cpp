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

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "refscore/gateway.hpp"

#include <set>

#include <doctest.h>

#include "test_support.hpp"

using namespace refscore;
using refscore::testing::completion_payload;
using refscore::testing::fixture_path;
using refscore::testing::read_text;
using refscore::testing::ScriptedTransport;
using refscore::testing::TempDir;
using refscore::testing::write_text;

namespace {

SystemInstructionSet instructions() {
  SystemInstructionSet set;
  for (auto p : {MainPanel::kA, MainPanel::kB, MainPanel::kC, MainPanel::kD}) {
    set.set(p, std::string("instructions for ") + panel_letter(p));
  }
  return set;
}

std::vector<Article> articles(int n) {
  std::vector<Article> out;
  for (int i = 0; i < n; ++i) {
    Article a;
    a.id = fmt::format("art-{}", i);
    a.title = fmt::format("Title {}", i);
    a.abstract = "An abstract.";
    a.unit = 8;
    a.main_panel = MainPanel::kB;
    a.department_id = "d";
    a.year = 2016;
    out.push_back(a);
  }
  return out;
}

struct Harness {
  TempDir dir;
  std::shared_ptr<ScriptedTransport> transport = std::make_shared<ScriptedTransport>();
  std::vector<std::chrono::milliseconds> sleeps;
  std::unique_ptr<ResponseStore> store;

  Harness() { store = std::make_unique<ResponseStore>(dir / "store.jsonl"); }

  GatewayConfig config(int max_retries = 5) {
    GatewayConfig c;
    c.api_key = "sk-test";
    c.retry.max_retries = max_retries;
    c.sleep = [this](std::chrono::milliseconds d) { sleeps.push_back(d); };
    return c;
  }
};

PromptBundle standard_bundle() {
  return build_standard_prompt(articles(1)[0], instructions());
}

}  // namespace

TEST_CASE("server errors are retried up to the cap") {
  Harness h;
  for (int i = 0; i < 3; ++i) h.transport->push({500, "boom", {}, false});
  ChatGateway gateway(h.config(2), h.transport, *h.store);
  try {
    gateway.send(standard_bundle(), "art-0", 1);
    FAIL("expected an error");
  } catch (const GatewayError& e) {
    CHECK(e.kind() == GatewayErrorKind::kServer);
    CHECK(e.retryable());
    CHECK(e.status() == 500);
    CHECK(std::string(e.what()).find("gave up after 3 attempts") != std::string::npos);
  }
  CHECK(h.transport->calls() == 3);
  CHECK(h.sleeps.size() == 2);
  CHECK(h.store->line_count() == 0);
}

TEST_CASE("authentication failures are not retried") {
  Harness h;
  h.transport->push({401, "bad key", {}, false});
  ChatGateway gateway(h.config(5), h.transport, *h.store);
  try {
    gateway.send(standard_bundle(), "art-0", 1);
    FAIL("expected an error");
  } catch (const GatewayError& e) {
    CHECK(e.kind() == GatewayErrorKind::kAuth);
    CHECK_FALSE(e.retryable());
  }
  CHECK(h.transport->calls() == 1);
  CHECK(h.transport->keys().at(0) == "sk-test");
}

TEST_CASE("rate limits and network failures are retried, honoring Retry-After") {
  Harness h;
  h.transport->push({429, "slow down", {{"retry-after", "2"}}, false});
  h.transport->push({0, "", {}, true});
  h.transport->push({200, completion_payload("3*"), {}, false});
  ChatGateway gateway(h.config(5), h.transport, *h.store);
  const auto record = gateway.send(standard_bundle(), "art-0", 1);
  CHECK(record.content == "3*");
  CHECK(record.ok());
  CHECK(h.transport->calls() == 3);
  REQUIRE(h.sleeps.size() == 2);
  CHECK(h.sleeps[0] == std::chrono::milliseconds(2000));
  // Equal jitter keeps the second delay within [1s, 2s).
  CHECK(h.sleeps[1] >= std::chrono::milliseconds(1000));
  CHECK(h.sleeps[1] < std::chrono::milliseconds(2000));
  CHECK(gateway.network_calls() == 3);
}

TEST_CASE("backoff schedule") {
  RetryPolicy policy;
  CHECK(policy.backoff(0, 1.0) == std::chrono::milliseconds(1000));
  CHECK(policy.backoff(0, 0.0) == std::chrono::milliseconds(500));
  CHECK(policy.backoff(3, 1.0) == std::chrono::milliseconds(8000));
  CHECK(policy.backoff(20, 1.0) == std::chrono::milliseconds(60000));
  policy.jitter = false;
  CHECK(policy.backoff(1, 0.0) == std::chrono::milliseconds(2000));
}

TEST_CASE("malformed payloads are stored before the error surfaces") {
  Harness h;
  h.transport->push({200, R"({"choices": "nope"})", {}, false});
  ChatGateway gateway(h.config(), h.transport, *h.store);
  try {
    gateway.send(standard_bundle(), "art-0", 1);
    FAIL("expected an error");
  } catch (const GatewayError& e) {
    CHECK(e.kind() == GatewayErrorKind::kMalformedPayload);
  }
  const auto stored = h.store->find({"art-0", Strategy::kStandard, 1});
  REQUIRE(stored.has_value());
  CHECK(stored->raw_payload == R"({"choices": "nope"})");
  CHECK(stored->error == std::optional<std::string>("malformed_payload"));
  CHECK_FALSE(h.store->has_ok({"art-0", Strategy::kStandard, 1}));
}

TEST_CASE("token payload fixture parses into alternatives") {
  const auto parsed =
      parse_chat_completion(read_text(fixture_path("chat_completion_logprobs.json")), true);
  CHECK(parsed.content == "Score: 3*\n\n");
  REQUIRE(parsed.token_logprobs.size() == 5);
  const auto& score_position = parsed.token_logprobs[3];
  CHECK(score_position.chosen_token == "3");
  REQUIRE(score_position.alternatives.size() == 5);
  CHECK(score_position.alternatives[0].token == "3");
  CHECK(score_position.alternatives[0].logprob == doctest::Approx(-0.003229052061215043));
  for (std::size_t i = 1; i < score_position.alternatives.size(); ++i) {
    CHECK(score_position.alternatives[i - 1].logprob >= score_position.alternatives[i].logprob);
  }
  CHECK_THROWS_AS(parse_chat_completion(completion_payload("3*"), true), GatewayError);
  CHECK_THROWS_AS(parse_chat_completion("not json", false), GatewayError);
}

TEST_CASE("replay returns identical records and reports missing keys") {
  Harness h;
  h.transport->set_default([n = 0](const std::string&) mutable {
    return ScriptedTransport::Reply{200, completion_payload(fmt::format("{}*", 1 + n++ % 4)), {},
                                    false};
  });
  {
    ChatGateway gateway(h.config(), h.transport, *h.store);
    for (int i = 1; i <= 5; ++i) gateway.send(standard_bundle(), "art-0", i);
  }
  const auto path = h.dir / "store.jsonl";
  ResponseStore reloaded(path);
  GatewayConfig replay_config;
  replay_config.mode = GatewayMode::kReplay;
  ChatGateway replayer(replay_config, nullptr, reloaded);
  for (int i = 1; i <= 5; ++i) {
    const auto original = h.store->get({"art-0", Strategy::kStandard, i});
    CHECK(replayer.send(standard_bundle(), "art-0", i) == original);
    CHECK(replay(path, "art-0", Strategy::kStandard, i) == original);
  }
  CHECK(replayer.network_calls() == 0);
  try {
    replay(path, "art-0", Strategy::kStandard, 6);
    FAIL("expected an error");
  } catch (const GatewayError& e) {
    CHECK(e.kind() == GatewayErrorKind::kMissingRecord);
    CHECK(std::string(e.what()).find("art-0") != std::string::npos);
  }
  CHECK_THROWS_AS(replay(h.dir / "absent.jsonl", "art-0", Strategy::kStandard, 1),
                  ValidationError);
}

TEST_CASE("a corrupted store line reports its offset") {
  TempDir dir;
  const auto path = dir / "store.jsonl";
  {
    ResponseStore store(path);
    ResponseRecord r;
    r.key = {"a", Strategy::kStandard, 1};
    r.content = "2*";
    store.append(r);
  }
  const auto good = read_text(path);
  write_text(path, good + "{\"article_id\": tru\n");
  try {
    ResponseStore store(path);
    FAIL("expected an error");
  } catch (const ValidationError& e) {
    CHECK(e.line() == 2);
    CHECK(std::string(e.what()).find(fmt::format("byte offset {}", good.size())) !=
          std::string::npos);
  }
}

TEST_CASE("the latest line for a key wins") {
  TempDir dir;
  const auto path = dir / "store.jsonl";
  ResponseRecord r;
  r.key = {"a", Strategy::kTokenScore, 2};
  r.error = "malformed_payload";
  {
    ResponseStore store(path);
    store.append(r);
    r.error.reset();
    r.content = "4*";
    r.token_logprobs = {{"4", -0.1, {{"4", -0.1}, {"3", -2.5}}}};
    store.append(r);
  }
  ResponseStore store(path);
  CHECK(store.line_count() == 2);
  CHECK(store.latest().size() == 1);
  CHECK(store.get(r.key) == r);
  CHECK(record_from_json(nlohmann::json::parse(record_to_json(r).dump())) == r);
}

TEST_CASE("run_batch fetches every pair and resumes only the missing ones") {
  Harness h;
  h.transport->set_default([](const std::string&) {
    return ScriptedTransport::Reply{200, completion_payload("2*"), {}, false};
  });
  const auto corpus = articles(3);
  {
    ChatGateway gateway(h.config(), h.transport, *h.store);
    // Pre-populate two pairs to simulate an interrupted run.
    gateway.send(build_standard_prompt(corpus[0], instructions()), "art-0", 1);
    gateway.send(build_standard_prompt(corpus[2], instructions()), "art-2", 5);
  }
  const std::size_t before = h.transport->calls();
  ChatGateway gateway(h.config(), h.transport, *h.store);
  const auto result =
      run_batch(gateway, corpus, instructions(), Strategy::kStandard, 5, 3);
  CHECK(result.records.size() == 15);
  CHECK(result.errors.empty());
  CHECK(result.reused == 2);
  CHECK(result.fetched == 13);
  CHECK(h.transport->calls() - before == 13);
  std::set<RecordKey> keys;
  for (std::size_t i = 0; i < result.records.size(); ++i) {
    const auto& key = result.records[i].key;
    CHECK(key.article_id == corpus[i / 5].id);
    CHECK(key.iteration == static_cast<int>(i % 5) + 1);
    keys.insert(key);
  }
  CHECK(keys.size() == 15);

  // A second run has nothing left to fetch.
  const auto again = run_batch(gateway, corpus, instructions(), Strategy::kStandard, 5, 3);
  CHECK(again.fetched == 0);
  CHECK(again.reused == 15);
}

TEST_CASE("concurrency limit bounds in-flight requests") {
  for (int limit : {1, 3}) {
    Harness h;
    h.transport->set_delay(std::chrono::milliseconds(5));
    h.transport->set_default([](const std::string&) {
      return ScriptedTransport::Reply{200, completion_payload("2*"), {}, false};
    });
    ChatGateway gateway(h.config(), h.transport, *h.store);
    const auto result =
        run_batch(gateway, articles(4), instructions(), Strategy::kStandard, 3, limit);
    CHECK(result.records.size() == 12);
    CHECK(h.transport->max_in_flight() <= limit);
    if (limit == 1) {
      // Sequential requests: sent_at values follow the work order.
      for (std::size_t i = 1; i < result.records.size(); ++i) {
        CHECK(result.records[i - 1].timestamp <= result.records[i].sent_at);
      }
    }
  }
}

TEST_CASE("batch errors are collected per item") {
  Harness h;
  h.transport->push({400, "bad request", {}, false});
  h.transport->set_default([](const std::string&) {
    return ScriptedTransport::Reply{200, completion_payload("2*"), {}, false};
  });
  ChatGateway gateway(h.config(), h.transport, *h.store);
  const auto result =
      run_batch(gateway, articles(1), instructions(), Strategy::kStandard, 2, 1);
  REQUIRE(result.errors.size() == 1);
  CHECK(result.errors[0].key.iteration == 1);
  CHECK(result.records.size() == 1);
}

TEST_CASE("wire request shape") {
  const auto token = make_request(build_token_prompt(articles(1)[0], instructions()),
                                  "model-x", 0.0);
  const auto wire = token.to_wire();
  CHECK(wire["model"] == "model-x");
  REQUIRE(wire["messages"].size() == 2);
  CHECK(wire["messages"][0]["role"] == "system");
  CHECK(wire["messages"][0]["content"] == "instructions for B");
  CHECK(wire["messages"][1]["role"] == "user");
  CHECK(wire["max_tokens"] == 5);
  CHECK(wire["logprobs"] == true);
  CHECK(wire["top_logprobs"] == 5);
  CHECK(wire["temperature"] == 0.0);

  const auto standard = make_request(standard_bundle(), "model-x").to_wire();
  CHECK_FALSE(standard.contains("logprobs"));
  CHECK_FALSE(standard.contains("top_logprobs"));
  CHECK_FALSE(standard.contains("temperature"));

  const auto fp1 = request_fingerprint(token, "art-0", 1);
  CHECK(fp1.size() == 64);
  CHECK(fp1 == request_fingerprint(token, "art-0", 1));
  CHECK(fp1 != request_fingerprint(token, "art-0", 2));
}

TEST_CASE("http transport talks to a local server") {
  httplib::Server server;
  std::string seen_auth;
  std::string seen_body;
  server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    seen_auth = req.get_header_value("Authorization");
    seen_body = req.body;
    res.set_header("Retry-After", "7");
    res.set_content(completion_payload("1*"), "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread thread([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  HttpTransport transport(fmt::format("http://127.0.0.1:{}/v1/", port),
                          std::chrono::seconds(5));
  const auto response = transport.post_json(R"({"x":1})", "sk-local");
  server.stop();
  thread.join();

  CHECK(response.status == 200);
  CHECK(seen_auth == "Bearer sk-local");
  CHECK(seen_body == R"({"x":1})");
  CHECK(response.headers.at("retry-after") == "7");
  CHECK(parse_chat_completion(response.body, false).content == "1*");

  HttpTransport closed(fmt::format("http://127.0.0.1:{}/v1", port), std::chrono::seconds(1));
  try {
    closed.post_json("{}", "");
    FAIL("expected an error");
  } catch (const GatewayError& e) {
    CHECK(e.kind() == GatewayErrorKind::kNetwork);
  }
  CHECK_THROWS_AS(HttpTransport("ftp://x"), ValidationError);
}
