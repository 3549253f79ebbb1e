// Copyright 2026 The Refine Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Uniform access to chat-completion and multimodal-embedding providers.
//
// Providers are thin adapters that make one attempt per call. The clients
// layered on top own everything else: retries with exponential backoff, the
// in-flight limit, token accounting, telemetry, and (for embeddings) the
// content-addressed cache.

#ifndef REFINE_GATEWAY_H_
#define REFINE_GATEWAY_H_

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <string_view>
#include <vector>

#include "refine/util.h"

namespace refine {

struct TokenUsage {
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
  // True when either count came from ApproxTokenCount rather than the
  // provider.
  bool approximate = false;

  std::int64_t total() const { return prompt_tokens + completion_tokens; }
  TokenUsage& operator+=(const TokenUsage& o) {
    prompt_tokens += o.prompt_tokens;
    completion_tokens += o.completion_tokens;
    approximate = approximate || o.approximate;
    return *this;
  }
  bool operator==(const TokenUsage&) const = default;
};

enum class Role { kSystem, kUser };
const char* RoleName(Role role);

struct ContentPart {
  enum class Kind { kText, kImage };
  Kind kind = Kind::kText;
  std::string text;        // kText
  std::string image_bytes; // kImage, raw bytes
  std::string media_type;  // kImage

  static ContentPart Text(std::string text) {
    return {Kind::kText, std::move(text), {}, {}};
  }
  static ContentPart Image(std::string bytes, std::string media_type) {
    return {Kind::kImage, {}, std::move(bytes), std::move(media_type)};
  }
  bool operator==(const ContentPart&) const = default;
};

struct Message {
  Role role = Role::kUser;
  std::vector<ContentPart> parts;

  // Concatenation of the text parts, joined by '\n'.
  std::string JoinedText() const;
  bool operator==(const Message&) const = default;
};

struct ChatRequest {
  std::string model_id;
  std::vector<Message> messages;
  double temperature = 0.0;
  int max_output_tokens = 1024;

  // Joined text of the user-role messages.
  std::string UserText() const;
  // Throws ValidationError.
  void Validate() const;
};

struct ChatResponse {
  std::string text;
  TokenUsage usage;
  // Providers set this when `usage` came from the provider itself.
  bool usage_reported = false;
  double latency_ms = 0.0;
};

struct EmbeddingVector {
  std::vector<float> values;

  std::size_t dim() const { return values.size(); }
  bool AllZero() const;
  bool operator==(const EmbeddingVector&) const = default;
};

enum class ProviderErrorKind {
  kAuth,
  kRateLimit,
  kTransport,
  kMalformed,
  kExhausted,
  kDimensionMismatch,
  kNoFixture,
};
const char* ProviderErrorKindName(ProviderErrorKind kind);

class ProviderError : public Error {
 public:
  ProviderError(ProviderErrorKind kind, const std::string& what)
      : Error(std::string(ProviderErrorKindName(kind)) + ": " + what), kind_(kind) {}
  ProviderErrorKind kind() const { return kind_; }
  bool retryable() const {
    return kind_ == ProviderErrorKind::kRateLimit || kind_ == ProviderErrorKind::kTransport;
  }

 private:
  ProviderErrorKind kind_;
};

class ChatProvider {
 public:
  virtual ~ChatProvider() = default;
  // One attempt. Throws ProviderError.
  virtual ChatResponse Complete(const ChatRequest& request) = 0;
};

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  // One attempt. Throws ProviderError.
  virtual EmbeddingVector Embed(std::string_view image_bytes,
                                std::string_view media_type,
                                std::string_view text) = 0;
};

// ceil(code points / 4). Monotone in the length of the text.
std::int64_t ApproxTokenCount(std::string_view text);

struct RetryPolicy {
  // Attempts = max_retries + 1.
  int max_retries = 2;
  double base_delay_s = 0.5;
  double jitter = 0.2;
  std::uint64_t jitter_seed = 0x5EEDULL;
  // Called with the delay in seconds. Defaults to sleeping the thread.
  std::function<void(double)> sleep;

  // base * 2^retry_index scaled by a uniform factor in [1 - jitter, 1 + jitter].
  double Delay(int retry_index, SplitMix64& rng) const;
};

void DefaultSleep(double seconds);

struct CallStats {
  std::int64_t requests = 0;
  std::int64_t provider_calls = 0;
  std::int64_t retries = 0;
  std::int64_t failures = 0;
  std::int64_t cache_hits = 0;
};

class Telemetry {
 public:
  std::atomic<std::int64_t> requests{0};
  std::atomic<std::int64_t> provider_calls{0};
  std::atomic<std::int64_t> retries{0};
  std::atomic<std::int64_t> failures{0};
  std::atomic<std::int64_t> cache_hits{0};

  CallStats Snapshot() const {
    return {requests.load(), provider_calls.load(), retries.load(),
            failures.load(), cache_hits.load()};
  }
};

// Runs `attempt` under `policy`; retryable ProviderErrors are retried, the
// final one is rethrown as kExhausted. Counts into `telemetry`.
template <typename Fn>
auto WithRetries(const RetryPolicy& policy, Telemetry& telemetry,
                 std::uint64_t jitter_stream, Fn&& attempt) -> decltype(attempt()) {
  SplitMix64 rng(policy.jitter_seed ^ jitter_stream);
  for (int retry = 0;; ++retry) {
    try {
      telemetry.provider_calls.fetch_add(1);
      return attempt();
    } catch (const ProviderError& e) {
      if (!e.retryable()) {
        telemetry.failures.fetch_add(1);
        throw;
      }
      if (retry >= policy.max_retries) {
        telemetry.failures.fetch_add(1);
        throw ProviderError(ProviderErrorKind::kExhausted,
                            "gave up after " + std::to_string(retry + 1) +
                                " attempts; last error: " + e.what());
      }
      telemetry.retries.fetch_add(1);
      const double delay = policy.Delay(retry, rng);
      if (policy.sleep) {
        policy.sleep(delay);
      } else {
        DefaultSleep(delay);
      }
    }
  }
}

// Content-addressed byte store. Memory-only when `dir` is empty; otherwise
// each value also lives in `dir/<key>.bin`. Safe for concurrent use.
class ContentStore {
 public:
  explicit ContentStore(std::filesystem::path dir = {});

  std::optional<std::string> Get(const std::string& key);
  void Put(const std::string& key, std::string_view value);

 private:
  std::filesystem::path dir_;
  std::mutex mu_;
  std::map<std::string, std::string> memory_;
};

class ChatClient {
 public:
  ChatClient(std::shared_ptr<ChatProvider> provider, RetryPolicy policy = {},
             int max_in_flight = 8);

  // Returns the provider text verbatim. Usage falls back to ApproxTokenCount
  // over request and response text when the provider reports none.
  ChatResponse Complete(const ChatRequest& request);

  CallStats stats() const { return telemetry_.Snapshot(); }

 private:
  std::shared_ptr<ChatProvider> provider_;
  RetryPolicy policy_;
  std::counting_semaphore<1024> in_flight_;
  Telemetry telemetry_;
};

// A chat client bound to one model at the pipeline's decoding settings.
struct ModelHandle {
  ChatClient* client = nullptr;
  std::string model_id;
  int max_output_tokens = 1024;
  double temperature = 0.0;

  ChatResponse Ask(std::vector<Message> messages) const;
};

class EmbeddingClient {
 public:
  EmbeddingClient(std::shared_ptr<EmbeddingProvider> provider,
                  std::string model_id, std::size_t dim,
                  std::shared_ptr<ContentStore> cache, RetryPolicy policy = {},
                  int max_in_flight = 8);

  // φ(image, text). Identical (image bytes, text, model id) triples are served
  // from the cache after the first provider call, including concurrent
  // duplicates. Throws ProviderError (kDimensionMismatch, kMalformed, ...)
  // and ValidationError for empty text.
  // `from_cache`, when given, reports whether no provider call was made.
  EmbeddingVector Embed(std::string_view image_bytes, std::string_view media_type,
                        std::string_view text, bool* from_cache = nullptr);

  static std::string CacheKey(std::string_view model_id, std::string_view image_bytes,
                              std::string_view text);

  const std::string& model_id() const { return model_id_; }
  std::size_t dim() const { return dim_; }
  CallStats stats() const { return telemetry_.Snapshot(); }

 private:
  EmbeddingVector Fetch(std::string_view image_bytes, std::string_view media_type,
                        std::string_view text, const std::string& key, bool* from_cache);

  std::shared_ptr<EmbeddingProvider> provider_;
  std::string model_id_;
  std::size_t dim_;
  std::shared_ptr<ContentStore> cache_;
  RetryPolicy policy_;
  std::counting_semaphore<1024> in_flight_;
  Telemetry telemetry_;
  std::mutex pending_mu_;
  std::map<std::string, std::shared_future<EmbeddingVector>> pending_;
};

// Fixture-driven providers. Fixture file: JSONL of
//   {"key": str, "text": str, ["prompt_tokens": int, "completion_tokens": int,]
//    ["latency_ms": number,] ["error": "auth"|"rate_limit"|"transport"|"malformed"]}
// for chat, and {"key": str, "vector": [float]} for embeddings.
// A request matches the first entry (file order) whose key is a substring of
// the user-role text (chat) or of the text input (embeddings); the key "*"
// matches anything. Matching never looks at system messages, so instructions
// that quote example phrases cannot shadow the keyed content.
struct ChatFixture {
  std::string key;
  std::string text;
  std::optional<TokenUsage> usage;
  double latency_ms = 0.0;
  std::optional<ProviderErrorKind> error;
};

struct EmbeddingFixture {
  std::string key;
  EmbeddingVector vector;
};

std::vector<ChatFixture> ParseChatFixtures(const std::string& jsonl);
std::vector<EmbeddingFixture> ParseEmbeddingFixtures(const std::string& jsonl);

class MockChatProvider : public ChatProvider {
 public:
  explicit MockChatProvider(std::vector<ChatFixture> fixtures);
  static std::shared_ptr<MockChatProvider> FromFile(const std::filesystem::path& path);

  ChatResponse Complete(const ChatRequest& request) override;
  std::int64_t calls() const { return calls_.load(); }

 private:
  std::vector<ChatFixture> fixtures_;
  std::atomic<std::int64_t> calls_{0};
};

class MockEmbeddingProvider : public EmbeddingProvider {
 public:
  explicit MockEmbeddingProvider(std::vector<EmbeddingFixture> fixtures);
  static std::shared_ptr<MockEmbeddingProvider> FromFile(const std::filesystem::path& path);

  EmbeddingVector Embed(std::string_view image_bytes, std::string_view media_type,
                        std::string_view text) override;
  std::int64_t calls() const { return calls_.load(); }

 private:
  std::vector<EmbeddingFixture> fixtures_;
  std::atomic<std::int64_t> calls_{0};
};

}  // namespace refine

#endif  // REFINE_GATEWAY_H_
