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

#include "refscore/gateway.hpp"

#include <algorithm>
#include <cmath>
#include <ctime>
#include <thread>

#include <fmt/format.h>
#include <openssl/evp.h>

#include "text_util.hpp"

namespace refscore {

using nlohmann::json;
using nlohmann::ordered_json;

std::string_view gateway_error_kind_name(GatewayErrorKind kind) {
  switch (kind) {
    case GatewayErrorKind::kAuth: return "auth";
    case GatewayErrorKind::kRateLimit: return "rate_limit";
    case GatewayErrorKind::kServer: return "server";
    case GatewayErrorKind::kClient: return "client";
    case GatewayErrorKind::kNetwork: return "network";
    case GatewayErrorKind::kMalformedPayload: return "malformed_payload";
    case GatewayErrorKind::kMissingRecord: return "missing_record";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// Requests

void ChatRequest::validate() const {
  if (model_id.empty()) {
    throw ValidationError("model id must be nonempty", std::nullopt, "model_id");
  }
  if (max_tokens <= 0) {
    throw ValidationError("max_tokens must be positive", std::nullopt,
                          "max_tokens");
  }
  if (top_logprobs < 0 || top_logprobs > 5) {
    throw ValidationError("top_logprobs must be in 0..5", std::nullopt,
                          "top_logprobs");
  }
  if (top_logprobs > 0 && !logprobs) {
    throw ValidationError("top_logprobs requires logprobs", std::nullopt,
                          "top_logprobs");
  }
}

ChatRequest make_request(const PromptBundle& bundle, std::string model_id,
                         std::optional<double> temperature) {
  ChatRequest request;
  request.model_id = std::move(model_id);
  request.system_text = bundle.system_text;
  request.user_text = bundle.user_text;
  request.max_tokens = bundle.max_response_tokens;
  request.logprobs = bundle.logprobs_requested;
  request.top_logprobs = bundle.top_logprobs;
  request.temperature = temperature;
  request.validate();
  return request;
}

namespace {

std::string wire_body(const ChatRequest& request) {
  ordered_json body;
  body["model"] = request.model_id;
  body["messages"] = ordered_json::array(
      {ordered_json{{"role", "system"}, {"content", request.system_text}},
       ordered_json{{"role", "user"}, {"content", request.user_text}}});
  body["max_tokens"] = request.max_tokens;
  if (request.logprobs) {
    body["logprobs"] = true;
    body["top_logprobs"] = request.top_logprobs;
  }
  if (request.temperature) body["temperature"] = *request.temperature;
  return body.dump();
}

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &length, EVP_sha256(),
                 nullptr) != 1) {
    throw Error("SHA-256 digest failed");
  }
  std::string hex;
  hex.reserve(length * 2);
  for (unsigned int i = 0; i < length; ++i) {
    hex += fmt::format("{:02x}", digest[i]);
  }
  return hex;
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const auto micros = std::chrono::duration_cast<std::chrono::microseconds>(
                          now.time_since_epoch())
                          .count() %
                      1000000;
  const std::time_t seconds = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&seconds, &tm);
  char buffer[32];
  std::strftime(buffer, sizeof buffer, "%Y-%m-%dT%H:%M:%S", &tm);
  return fmt::format("{}.{:06}Z", buffer, micros);
}

[[noreturn]] void malformed(const std::string& what) {
  throw GatewayError(GatewayErrorKind::kMalformedPayload,
                     "malformed chat completion: " + what);
}

}  // namespace

std::string request_fingerprint(const ChatRequest& request,
                                std::string_view article_id, int iteration) {
  return sha256_hex(fmt::format("{}\n{}\n{}", wire_body(request), article_id,
                                iteration));
}

json ChatRequest::to_wire() const { return json::parse(wire_body(*this)); }

// ---------------------------------------------------------------------------
// Responses

ParsedCompletion parse_chat_completion(std::string_view payload,
                                       bool logprobs_requested) {
  json root;
  try {
    root = json::parse(payload);
  } catch (const json::parse_error& e) {
    malformed(e.what());
  }
  if (!root.is_object()) malformed("top level is not an object");
  const auto choices = root.find("choices");
  if (choices == root.end() || !choices->is_array() || choices->empty()) {
    malformed("no choices");
  }
  const auto& choice = (*choices)[0];
  if (!choice.is_object()) malformed("choice is not an object");
  const auto message = choice.find("message");
  if (message == choice.end() || !message->is_object()) {
    malformed("no message");
  }
  const auto content = message->find("content");
  if (content == message->end() || !content->is_string()) {
    malformed("message has no text content");
  }

  ParsedCompletion out;
  out.content = content->get<std::string>();
  if (!logprobs_requested) return out;

  const auto logprobs = choice.find("logprobs");
  if (logprobs == choice.end() || !logprobs->is_object()) {
    malformed("logprobs requested but absent");
  }
  const auto positions = logprobs->find("content");
  if (positions == logprobs->end() || !positions->is_array() ||
      positions->empty()) {
    malformed("logprobs.content empty");
  }
  for (const auto& position : *positions) {
    if (!position.is_object() || !position.contains("token") ||
        !position["token"].is_string() || !position.contains("logprob") ||
        !position["logprob"].is_number()) {
      malformed("logprobs entry lacks token/logprob");
    }
    TokenAlternatives alt;
    alt.chosen_token = position["token"].get<std::string>();
    alt.chosen_logprob = position["logprob"].get<double>();
    if (const auto top = position.find("top_logprobs"); top != position.end()) {
      if (!top->is_array()) malformed("top_logprobs is not an array");
      for (const auto& entry : *top) {
        if (!entry.is_object() || !entry.contains("token") ||
            !entry["token"].is_string() || !entry.contains("logprob") ||
            !entry["logprob"].is_number()) {
          malformed("top_logprobs entry lacks token/logprob");
        }
        alt.alternatives.push_back(
            {entry["token"].get<std::string>(), entry["logprob"].get<double>()});
      }
    }
    std::stable_sort(alt.alternatives.begin(), alt.alternatives.end(),
                     [](const TokenAlternative& a, const TokenAlternative& b) {
                       return a.logprob > b.logprob;
                     });
    out.token_logprobs.push_back(std::move(alt));
  }
  return out;
}

std::string RecordKey::to_string() const {
  return fmt::format("({}, {}, iteration {})", article_id,
                     strategy_name(strategy), iteration);
}

ordered_json record_to_json(const ResponseRecord& record) {
  ordered_json out;
  out["article_id"] = record.key.article_id;
  out["strategy"] = strategy_name(record.key.strategy);
  out["iteration"] = record.key.iteration;
  out["fingerprint"] = record.fingerprint;
  out["model_id"] = record.model_id;
  out["sent_at"] = record.sent_at;
  out["timestamp"] = record.timestamp;
  out["logprobs_requested"] = record.logprobs_requested;
  out["content"] = record.content;
  ordered_json positions = ordered_json::array();
  for (const auto& position : record.token_logprobs) {
    ordered_json top = ordered_json::array();
    for (const auto& alt : position.alternatives) {
      top.push_back(ordered_json{{"token", alt.token}, {"logprob", alt.logprob}});
    }
    positions.push_back(ordered_json{{"token", position.chosen_token},
                                     {"logprob", position.chosen_logprob},
                                     {"top_logprobs", std::move(top)}});
  }
  out["token_logprobs"] = std::move(positions);
  out["raw_payload"] = record.raw_payload;
  out["error"] = record.error ? ordered_json(*record.error) : ordered_json();
  return out;
}

ResponseRecord record_from_json(const json& object) {
  ResponseRecord record;
  const auto strategy = strategy_from_string(object.at("strategy").get<std::string>());
  if (!strategy) throw ValidationError("unknown strategy in record");
  record.key = {object.at("article_id").get<std::string>(), *strategy,
                object.at("iteration").get<int>()};
  if (record.key.iteration < 1) throw ValidationError("iteration must be >= 1");
  record.fingerprint = object.at("fingerprint").get<std::string>();
  record.model_id = object.at("model_id").get<std::string>();
  record.sent_at = object.at("sent_at").get<std::string>();
  record.timestamp = object.at("timestamp").get<std::string>();
  record.logprobs_requested = object.at("logprobs_requested").get<bool>();
  record.content = object.at("content").get<std::string>();
  for (const auto& position : object.at("token_logprobs")) {
    TokenAlternatives alt;
    alt.chosen_token = position.at("token").get<std::string>();
    alt.chosen_logprob = position.at("logprob").get<double>();
    for (const auto& entry : position.at("top_logprobs")) {
      alt.alternatives.push_back({entry.at("token").get<std::string>(),
                                  entry.at("logprob").get<double>()});
    }
    record.token_logprobs.push_back(std::move(alt));
  }
  record.raw_payload = object.at("raw_payload").get<std::string>();
  if (const auto& error = object.at("error"); !error.is_null()) {
    record.error = error.get<std::string>();
  }
  return record;
}

// ---------------------------------------------------------------------------
// Store

ResponseStore::ResponseStore(std::filesystem::path path) : path_(std::move(path)) {
  if (!std::filesystem::exists(path_)) return;
  const std::string text = detail::read_file(path_.string());
  std::size_t offset = 0;
  std::size_t line = 0;
  while (offset < text.size()) {
    auto end = text.find('\n', offset);
    if (end == std::string::npos) end = text.size();
    ++line;
    const std::string_view raw(text.data() + offset, end - offset);
    if (!detail::trim(raw).empty()) {
      try {
        auto record = record_from_json(json::parse(raw));
        latest_.insert_or_assign(record.key, std::move(record));
      } catch (const std::exception& e) {
        throw ValidationError(
            fmt::format("corrupted store record at byte offset {} in {}: {}",
                        offset, path_.string(), e.what()),
            line);
      }
      ++lines_;
    }
    offset = end + 1;
  }
}

void ResponseStore::append(const ResponseRecord& record) {
  const std::string line = record_to_json(record).dump() + "\n";
  std::lock_guard lock(mutex_);
  if (!out_.is_open()) {
    if (path_.has_parent_path()) {
      std::filesystem::create_directories(path_.parent_path());
    }
    out_.open(path_, std::ios::binary | std::ios::app);
    if (!out_) throw Error("cannot open store for append: " + path_.string());
  }
  out_.write(line.data(), static_cast<std::streamsize>(line.size()));
  out_.flush();
  if (!out_) throw Error("store append failed: " + path_.string());
  latest_.insert_or_assign(record.key, record);
  ++lines_;
}

std::optional<ResponseRecord> ResponseStore::find(const RecordKey& key) const {
  std::lock_guard lock(mutex_);
  const auto it = latest_.find(key);
  if (it == latest_.end()) return std::nullopt;
  return it->second;
}

ResponseRecord ResponseStore::get(const RecordKey& key) const {
  if (auto record = find(key)) return *std::move(record);
  throw GatewayError(GatewayErrorKind::kMissingRecord,
                     fmt::format("no stored record for {} in {}",
                                 key.to_string(), path_.string()));
}

bool ResponseStore::has_ok(const RecordKey& key) const {
  std::lock_guard lock(mutex_);
  const auto it = latest_.find(key);
  return it != latest_.end() && it->second.ok();
}

std::vector<ResponseRecord> ResponseStore::latest() const {
  std::lock_guard lock(mutex_);
  std::vector<ResponseRecord> out;
  out.reserve(latest_.size());
  for (const auto& [key, record] : latest_) out.push_back(record);
  return out;
}

std::size_t ResponseStore::line_count() const {
  std::lock_guard lock(mutex_);
  return lines_;
}

ResponseRecord replay(const std::filesystem::path& store_path,
                      std::string_view article_id, Strategy strategy,
                      int iteration) {
  if (!std::filesystem::exists(store_path)) {
    throw ValidationError("store not found: " + store_path.string());
  }
  const ResponseStore store(store_path);
  return store.get(RecordKey{std::string(article_id), strategy, iteration});
}

// ---------------------------------------------------------------------------
// Gateway

std::chrono::milliseconds RetryPolicy::backoff(int retry,
                                               double unit_draw) const {
  const double base = static_cast<double>(initial_delay.count()) *
                      std::pow(multiplier, static_cast<double>(retry));
  const double capped = std::min(base, static_cast<double>(max_delay.count()));
  // Equal jitter: half fixed, half random.
  const double delay = jitter ? capped * (0.5 + 0.5 * unit_draw) : capped;
  return std::chrono::milliseconds(static_cast<long long>(delay));
}

ChatGateway::ChatGateway(GatewayConfig config,
                         std::shared_ptr<Transport> transport,
                         ResponseStore& store)
    : config_(std::move(config)),
      transport_(std::move(transport)),
      store_(store),
      rng_(std::random_device{}()) {
  if (!config_.sleep) {
    config_.sleep = [](std::chrono::milliseconds d) {
      std::this_thread::sleep_for(d);
    };
  }
  if (config_.mode == GatewayMode::kLive && !transport_) {
    throw Error("live mode requires a transport");
  }
  if (config_.retry.max_retries < 0) {
    throw ValidationError("max_retries must be >= 0");
  }
}

std::chrono::milliseconds ChatGateway::jitter_draw(int retry) {
  double draw = 0.0;
  {
    std::lock_guard lock(rng_mutex_);
    draw = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
  }
  return config_.retry.backoff(retry, draw);
}

namespace {

std::optional<std::chrono::milliseconds> retry_after(const HttpResponse& r) {
  const auto it = r.headers.find("retry-after");
  if (it == r.headers.end()) return std::nullopt;
  char* end = nullptr;
  const double seconds = std::strtod(it->second.c_str(), &end);
  if (end == it->second.c_str() || seconds < 0) return std::nullopt;
  return std::chrono::milliseconds(static_cast<long long>(seconds * 1000.0));
}

GatewayError error_for_status(const HttpResponse& response) {
  const int status = response.status;
  std::string snippet = response.body.substr(0, 300);
  const std::string message = fmt::format("HTTP {}: {}", status, snippet);
  if (status == 401 || status == 403) {
    return GatewayError(GatewayErrorKind::kAuth, message, status);
  }
  if (status == 429) {
    return GatewayError(GatewayErrorKind::kRateLimit, message, status);
  }
  if (status >= 500 || status == 408 || status == 409) {
    return GatewayError(GatewayErrorKind::kServer, message, status);
  }
  return GatewayError(GatewayErrorKind::kClient, message, status);
}

}  // namespace

HttpResponse ChatGateway::post_with_retries(const std::string& body) {
  for (int attempt = 0;; ++attempt) {
    std::optional<GatewayError> failure;
    std::optional<std::chrono::milliseconds> hinted;
    try {
      ++network_calls_;
      HttpResponse response = transport_->post_json(body, config_.api_key);
      if (response.status >= 200 && response.status < 300) return response;
      failure = error_for_status(response);
      hinted = retry_after(response);
    } catch (const GatewayError& e) {
      failure = e;
    }
    if (!failure->retryable() || attempt >= config_.retry.max_retries) {
      if (failure->retryable()) {
        throw GatewayError(
            failure->kind(),
            fmt::format("{} (gave up after {} attempts)", failure->what(),
                        attempt + 1),
            failure->status());
      }
      throw *failure;
    }
    auto delay = jitter_draw(attempt);
    if (hinted) delay = std::min(*hinted, config_.retry.max_delay);
    config_.sleep(delay);
  }
}

ResponseRecord ChatGateway::send(const PromptBundle& bundle,
                                 std::string_view article_id, int iteration) {
  if (iteration < 1) {
    throw ValidationError("iteration must be >= 1", std::nullopt, "iteration");
  }
  RecordKey key{std::string(article_id), bundle.strategy, iteration};
  if (config_.mode == GatewayMode::kReplay) return store_.get(key);

  const ChatRequest request =
      make_request(bundle, config_.model_id, config_.temperature);
  ResponseRecord record;
  record.key = std::move(key);
  record.fingerprint = request_fingerprint(request, article_id, iteration);
  record.model_id = request.model_id;
  record.logprobs_requested = request.logprobs;
  record.sent_at = utc_now();
  HttpResponse response = post_with_retries(wire_body(request));
  record.timestamp = utc_now();
  record.raw_payload = std::move(response.body);

  std::optional<GatewayError> parse_failure;
  try {
    auto parsed =
        parse_chat_completion(record.raw_payload, record.logprobs_requested);
    record.content = std::move(parsed.content);
    record.token_logprobs = std::move(parsed.token_logprobs);
  } catch (const GatewayError& e) {
    parse_failure = e;
    record.error = std::string(gateway_error_kind_name(e.kind()));
  }
  store_.append(record);
  if (parse_failure) throw *parse_failure;
  return record;
}

BatchResult run_batch(ChatGateway& gateway, const std::vector<Article>& articles,
                      const SystemInstructionSet& instructions,
                      Strategy strategy, int iterations, int concurrency_limit,
                      const BatchProgress& progress) {
  if (iterations < 1) {
    throw ValidationError("iterations must be >= 1", std::nullopt, "iterations");
  }
  if (concurrency_limit < 1) {
    throw ValidationError("concurrency limit must be >= 1", std::nullopt,
                          "concurrency");
  }

  struct Slot {
    const Article* article;
    int iteration;
    std::optional<ResponseRecord> record;
    std::optional<std::string> error;
    bool reused = false;
  };
  std::vector<Slot> slots;
  slots.reserve(articles.size() * static_cast<std::size_t>(iterations));
  for (const auto& article : articles) {
    for (int i = 1; i <= iterations; ++i) slots.push_back({&article, i, {}, {}});
  }

  std::vector<std::size_t> pending;
  for (std::size_t s = 0; s < slots.size(); ++s) {
    RecordKey key{slots[s].article->id, strategy, slots[s].iteration};
    if (gateway.mode() == GatewayMode::kLive && gateway.store().has_ok(key)) {
      slots[s].record = gateway.store().find(key);
      slots[s].reused = true;
    } else {
      pending.push_back(s);
    }
  }

  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> done{slots.size() - pending.size()};
  std::mutex progress_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t p = next.fetch_add(1);
      if (p >= pending.size()) return;
      Slot& slot = slots[pending[p]];
      try {
        if (gateway.mode() == GatewayMode::kReplay) {
          slot.record = gateway.store().get(
              RecordKey{slot.article->id, strategy, slot.iteration});
        } else {
          const auto bundle = build_prompt(strategy, *slot.article, instructions);
          slot.record = gateway.send(bundle, slot.article->id, slot.iteration);
        }
      } catch (const std::exception& e) {
        slot.error = e.what();
      }
      const std::size_t now_done = ++done;
      if (progress) {
        std::lock_guard lock(progress_mutex);
        progress(now_done, slots.size());
      }
    }
  };

  const std::size_t threads = std::min<std::size_t>(
      static_cast<std::size_t>(concurrency_limit), pending.size());
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }

  BatchResult result;
  for (auto& slot : slots) {
    if (slot.record) {
      if (slot.reused) {
        ++result.reused;
      } else {
        ++result.fetched;
      }
      result.records.push_back(std::move(*slot.record));
    } else {
      result.errors.push_back(
          {RecordKey{slot.article->id, strategy, slot.iteration},
           slot.error.value_or("unknown error")});
    }
  }
  return result;
}

}  // namespace refscore
