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

#include <atomic>
#include <chrono>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "refscore/corpus.hpp"
#include "refscore/error.hpp"
#include "refscore/prompting.hpp"

namespace refscore {

// ---------------------------------------------------------------------------
// Errors

enum class GatewayErrorKind {
  kAuth,              // 401/403, never retried
  kRateLimit,         // 429 after the retry cap
  kServer,            // 5xx / 408 / 409 after the retry cap
  kClient,            // other 4xx
  kNetwork,           // connection or timeout failures
  kMalformedPayload,  // 2xx body that is not a usable chat completion
  kMissingRecord,     // replay lookup failed
};

std::string_view gateway_error_kind_name(GatewayErrorKind kind);

class GatewayError : public Error {
 public:
  GatewayError(GatewayErrorKind kind, const std::string& message,
               int status = 0)
      : Error(message), kind_(kind), status_(status) {}

  GatewayErrorKind kind() const { return kind_; }
  int status() const { return status_; }
  bool retryable() const {
    return kind_ == GatewayErrorKind::kRateLimit ||
           kind_ == GatewayErrorKind::kServer ||
           kind_ == GatewayErrorKind::kNetwork;
  }

 private:
  GatewayErrorKind kind_;
  int status_;
};

// ---------------------------------------------------------------------------
// Wire types

struct ChatRequest {
  std::string model_id;
  std::string system_text;
  std::string user_text;
  int max_tokens = 1;
  bool logprobs = false;
  int top_logprobs = 0;
  std::optional<double> temperature;

  // Throws ValidationError when an invariant does not hold.
  void validate() const;
  // Chat-completion request body.
  nlohmann::json to_wire() const;
};

ChatRequest make_request(const PromptBundle& bundle, std::string model_id,
                         std::optional<double> temperature = std::nullopt);

struct TokenAlternative {
  std::string token;
  double logprob = 0.0;

  bool operator==(const TokenAlternative&) const = default;
};

// One generated position: the chosen token plus the endpoint's top-k list,
// sorted by logprob descending.
struct TokenAlternatives {
  std::string chosen_token;
  double chosen_logprob = 0.0;
  std::vector<TokenAlternative> alternatives;

  bool operator==(const TokenAlternatives&) const = default;
};

struct ParsedCompletion {
  std::string content;
  std::vector<TokenAlternatives> token_logprobs;
};

// Extracts choices[0].message.content and choices[0].logprobs.content[].
// Throws GatewayError(kMalformedPayload).
ParsedCompletion parse_chat_completion(std::string_view payload,
                                       bool logprobs_requested);

struct RecordKey {
  std::string article_id;
  Strategy strategy = Strategy::kStandard;
  int iteration = 1;

  auto operator<=>(const RecordKey&) const = default;
  std::string to_string() const;
};

struct ResponseRecord {
  RecordKey key;
  std::string fingerprint;
  std::string model_id;
  std::string sent_at;    // ISO-8601 UTC, request start
  std::string timestamp;  // ISO-8601 UTC, payload received
  bool logprobs_requested = false;
  std::string content;
  std::vector<TokenAlternatives> token_logprobs;
  std::string raw_payload;           // wire body, verbatim
  std::optional<std::string> error;  // reason code when the payload was unusable

  bool ok() const { return !error.has_value(); }
  bool operator==(const ResponseRecord&) const = default;
};

nlohmann::ordered_json record_to_json(const ResponseRecord& record);
ResponseRecord record_from_json(const nlohmann::json& object);

// Hex SHA-256 of the request body, article id and iteration.
std::string request_fingerprint(const ChatRequest& request,
                                std::string_view article_id, int iteration);

// ---------------------------------------------------------------------------
// Store

// Append-only JSONL store, one ResponseRecord per line. Later lines for the
// same key supersede earlier ones. Appends are serialized.
class ResponseStore {
 public:
  // Loads any existing lines. A corrupted line raises ValidationError with
  // its line number and byte offset. The file is created on first append.
  explicit ResponseStore(std::filesystem::path path);

  ResponseStore(const ResponseStore&) = delete;
  ResponseStore& operator=(const ResponseStore&) = delete;

  const std::filesystem::path& path() const { return path_; }

  void append(const ResponseRecord& record);

  std::optional<ResponseRecord> find(const RecordKey& key) const;
  // Throws GatewayError(kMissingRecord) naming the key.
  ResponseRecord get(const RecordKey& key) const;
  bool has_ok(const RecordKey& key) const;

  // Latest record per key, ordered by key.
  std::vector<ResponseRecord> latest() const;
  std::size_t line_count() const;

 private:
  std::filesystem::path path_;
  mutable std::mutex mutex_;
  std::map<RecordKey, ResponseRecord> latest_;
  std::size_t lines_ = 0;
  std::ofstream out_;
};

// Reads one record from a store without network access.
ResponseRecord replay(const std::filesystem::path& store_path,
                      std::string_view article_id, Strategy strategy,
                      int iteration);

// ---------------------------------------------------------------------------
// Transport

struct HttpResponse {
  int status = 0;
  std::string body;
  std::map<std::string, std::string> headers;  // lower-cased names
};

class Transport {
 public:
  virtual ~Transport() = default;
  // Network failures throw GatewayError(kNetwork).
  virtual HttpResponse post_json(const std::string& body,
                                 const std::string& api_key) = 0;
};

// POSTs to <base_url>/chat/completions over HTTP or HTTPS.
class HttpTransport : public Transport {
 public:
  explicit HttpTransport(std::string base_url,
                         std::chrono::seconds timeout = std::chrono::seconds(120));
  HttpResponse post_json(const std::string& body,
                         const std::string& api_key) override;

 private:
  std::string origin_;
  std::string path_;
  std::chrono::seconds timeout_;
};

// ---------------------------------------------------------------------------
// Gateway

struct RetryPolicy {
  int max_retries = 5;
  std::chrono::milliseconds initial_delay{1000};
  double multiplier = 2.0;
  std::chrono::milliseconds max_delay{60000};
  bool jitter = true;

  // Delay before retry number `retry` (0-based), without Retry-After.
  std::chrono::milliseconds backoff(int retry, double unit_draw) const;
};

enum class GatewayMode { kLive, kReplay };

inline constexpr std::string_view kApiKeyEnvVar = "OPENAI_API_KEY";
inline constexpr std::string_view kDefaultModel = "gpt-4o-mini-2024-07-18";
inline constexpr std::string_view kDefaultBaseUrl = "https://api.openai.com/v1";

struct GatewayConfig {
  GatewayMode mode = GatewayMode::kLive;
  std::string model_id = std::string(kDefaultModel);
  std::string api_key;
  std::optional<double> temperature;
  RetryPolicy retry;
  // Test hook; defaults to std::this_thread::sleep_for.
  std::function<void(std::chrono::milliseconds)> sleep;
};

class ChatGateway {
 public:
  // `transport` may be null in replay mode.
  ChatGateway(GatewayConfig config, std::shared_ptr<Transport> transport,
              ResponseStore& store);

  // Live: posts with retries, persists the payload, then parses it.
  // Replay: returns the stored record for the key.
  ResponseRecord send(const PromptBundle& bundle, std::string_view article_id,
                      int iteration);

  GatewayMode mode() const { return config_.mode; }
  ResponseStore& store() { return store_; }
  std::size_t network_calls() const { return network_calls_.load(); }

 private:
  HttpResponse post_with_retries(const std::string& body);
  std::chrono::milliseconds jitter_draw(int retry);

  GatewayConfig config_;
  std::shared_ptr<Transport> transport_;
  ResponseStore& store_;
  std::atomic<std::size_t> network_calls_{0};
  std::mutex rng_mutex_;
  std::mt19937_64 rng_;
};

struct BatchItemError {
  RecordKey key;
  std::string message;
};

struct BatchResult {
  std::vector<ResponseRecord> records;  // ordered by (article, iteration)
  std::vector<BatchItemError> errors;
  std::size_t fetched = 0;  // sent over the network (or looked up in replay)
  std::size_t reused = 0;   // already persisted before this run
};

using BatchProgress = std::function<void(std::size_t done, std::size_t total)>;

// Runs `iterations` requests per article with at most `concurrency_limit`
// in flight. Pairs that already have a usable stored record are not
// refetched. In replay mode records come from the store only and
// `instructions` is unused. Per-item failures are collected, never thrown.
BatchResult run_batch(ChatGateway& gateway, const std::vector<Article>& articles,
                      const SystemInstructionSet& instructions,
                      Strategy strategy, int iterations, int concurrency_limit,
                      const BatchProgress& progress = {});

}  // namespace refscore
