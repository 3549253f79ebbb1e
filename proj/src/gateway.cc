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

#include "refine/gateway.h"

#include <chrono>
#include <cmath>
#include <cstring>
#include <thread>

#include "json.hpp"

namespace refine {

using nlohmann::json;

const char* RoleName(Role role) {
  return role == Role::kSystem ? "system" : "user";
}

std::string Message::JoinedText() const {
  std::string out;
  for (const ContentPart& p : parts) {
    if (p.kind != ContentPart::Kind::kText) continue;
    if (!out.empty()) out += '\n';
    out += p.text;
  }
  return out;
}

std::string ChatRequest::UserText() const {
  std::string out;
  for (const Message& m : messages) {
    if (m.role != Role::kUser) continue;
    if (!out.empty()) out += '\n';
    out += m.JoinedText();
  }
  return out;
}

void ChatRequest::Validate() const {
  if (messages.empty()) throw ValidationError("chat request has no messages");
  if (!(temperature >= 0.0)) throw ValidationError("temperature must be >= 0");
  if (max_output_tokens <= 0) throw ValidationError("max_output_tokens must be positive");
}

bool EmbeddingVector::AllZero() const {
  for (float v : values) {
    if (v != 0.0f) return false;
  }
  return true;
}

const char* ProviderErrorKindName(ProviderErrorKind kind) {
  switch (kind) {
    case ProviderErrorKind::kAuth: return "auth failure";
    case ProviderErrorKind::kRateLimit: return "rate limited";
    case ProviderErrorKind::kTransport: return "transport error";
    case ProviderErrorKind::kMalformed: return "malformed provider payload";
    case ProviderErrorKind::kExhausted: return "retries exhausted";
    case ProviderErrorKind::kDimensionMismatch: return "dimension mismatch";
    case ProviderErrorKind::kNoFixture: return "no mock fixture";
  }
  return "provider error";
}

std::int64_t ApproxTokenCount(std::string_view text) {
  const auto chars = static_cast<std::int64_t>(Utf8Length(text));
  return (chars + 3) / 4;
}

double RetryPolicy::Delay(int retry_index, SplitMix64& rng) const {
  const double factor = 1.0 + jitter * (2.0 * rng.NextDouble() - 1.0);
  return base_delay_s * std::ldexp(1.0, retry_index) * factor;
}

void DefaultSleep(double seconds) {
  std::this_thread::sleep_for(std::chrono::duration<double>(seconds));
}

namespace {

// Releases a semaphore slot on scope exit.
class SlotGuard {
 public:
  explicit SlotGuard(std::counting_semaphore<1024>& sem) : sem_(sem) { sem_.acquire(); }
  ~SlotGuard() { sem_.release(); }
  SlotGuard(const SlotGuard&) = delete;
  SlotGuard& operator=(const SlotGuard&) = delete;

 private:
  std::counting_semaphore<1024>& sem_;
};

std::uint64_t StreamOf(std::string_view text) {
  // FNV-1a; only used to decorrelate jitter between requests.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string RequestText(const ChatRequest& request) {
  std::string out;
  for (const Message& m : request.messages) {
    if (!out.empty()) out += '\n';
    out += m.JoinedText();
  }
  return out;
}

int ClampLimit(int limit) {
  if (limit < 1) throw ValidationError("in-flight limit must be positive");
  return std::min(limit, 1024);
}

std::string EncodeVector(const EmbeddingVector& v) {
  std::string out(v.values.size() * sizeof(float), '\0');
  std::memcpy(out.data(), v.values.data(), out.size());
  return out;
}

EmbeddingVector DecodeVector(const std::string& bytes) {
  EmbeddingVector v;
  v.values.resize(bytes.size() / sizeof(float));
  std::memcpy(v.values.data(), bytes.data(), v.values.size() * sizeof(float));
  return v;
}

void AppendField(std::string& out, std::string_view field) {
  const std::uint64_t n = field.size();
  out.append(reinterpret_cast<const char*>(&n), sizeof(n));
  out.append(field);
}

}  // namespace

ContentStore::ContentStore(std::filesystem::path dir) : dir_(std::move(dir)) {
  if (!dir_.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) throw IoError("cannot create cache directory " + dir_.string());
  }
}

std::optional<std::string> ContentStore::Get(const std::string& key) {
  std::lock_guard<std::mutex> lock(mu_);
  if (auto it = memory_.find(key); it != memory_.end()) return it->second;
  if (dir_.empty()) return std::nullopt;
  const auto path = dir_ / (key + ".bin");
  if (!std::filesystem::exists(path)) return std::nullopt;
  std::string value = ReadFile(path);
  memory_.emplace(key, value);
  return value;
}

void ContentStore::Put(const std::string& key, std::string_view value) {
  std::lock_guard<std::mutex> lock(mu_);
  memory_[key] = std::string(value);
  if (dir_.empty()) return;
  // Write-then-rename so readers never observe a partial entry.
  const auto final_path = dir_ / (key + ".bin");
  const auto tmp_path = dir_ / (key + ".tmp");
  WriteFile(tmp_path, value);
  std::error_code ec;
  std::filesystem::rename(tmp_path, final_path, ec);
  if (ec) throw IoError("cannot publish cache entry " + final_path.string());
}

ChatClient::ChatClient(std::shared_ptr<ChatProvider> provider, RetryPolicy policy,
                       int max_in_flight)
    : provider_(std::move(provider)),
      policy_(std::move(policy)),
      in_flight_(ClampLimit(max_in_flight)) {}

ChatResponse ChatClient::Complete(const ChatRequest& request) {
  request.Validate();
  telemetry_.requests.fetch_add(1);
  SlotGuard slot(in_flight_);
  const std::string text = RequestText(request);
  ChatResponse response = WithRetries(policy_, telemetry_, StreamOf(text),
                                      [&] { return provider_->Complete(request); });
  if (!response.usage_reported) {
    response.usage.prompt_tokens = ApproxTokenCount(text);
    response.usage.completion_tokens = ApproxTokenCount(response.text);
    response.usage.approximate = true;
  }
  if (response.latency_ms < 0) response.latency_ms = 0;
  return response;
}

ChatResponse ModelHandle::Ask(std::vector<Message> messages) const {
  if (client == nullptr) throw UsageError("model '" + model_id + "' has no client");
  ChatRequest request;
  request.model_id = model_id;
  request.messages = std::move(messages);
  request.temperature = temperature;
  request.max_output_tokens = max_output_tokens;
  return client->Complete(request);
}

EmbeddingClient::EmbeddingClient(std::shared_ptr<EmbeddingProvider> provider,
                                 std::string model_id, std::size_t dim,
                                 std::shared_ptr<ContentStore> cache,
                                 RetryPolicy policy, int max_in_flight)
    : provider_(std::move(provider)),
      model_id_(std::move(model_id)),
      dim_(dim),
      cache_(cache ? std::move(cache) : std::make_shared<ContentStore>()),
      policy_(std::move(policy)),
      in_flight_(ClampLimit(max_in_flight)) {
  if (dim_ == 0) throw ValidationError("embedding dim must be positive");
}

std::string EmbeddingClient::CacheKey(std::string_view model_id,
                                      std::string_view image_bytes,
                                      std::string_view text) {
  std::string payload;
  AppendField(payload, "embed-v1");
  AppendField(payload, model_id);
  AppendField(payload, image_bytes);
  AppendField(payload, text);
  return Sha256Hex(payload);
}

EmbeddingVector EmbeddingClient::Embed(std::string_view image_bytes,
                                       std::string_view media_type,
                                       std::string_view text, bool* from_cache) {
  if (text.empty()) throw ValidationError("embedding text is empty");
  if (from_cache != nullptr) *from_cache = true;
  telemetry_.requests.fetch_add(1);
  const std::string key = CacheKey(model_id_, image_bytes, text);
  if (auto hit = cache_->Get(key)) {
    EmbeddingVector v = DecodeVector(*hit);
    if (v.dim() == dim_) {
      telemetry_.cache_hits.fetch_add(1);
      return v;
    }
  }

  // Collapse concurrent misses for the same key onto one provider call.
  std::promise<EmbeddingVector> promise;
  std::shared_future<EmbeddingVector> waiter;
  bool owner = false;
  {
    std::lock_guard<std::mutex> lock(pending_mu_);
    auto it = pending_.find(key);
    if (it != pending_.end()) {
      waiter = it->second;
    } else {
      waiter = promise.get_future().share();
      pending_.emplace(key, waiter);
      owner = true;
    }
  }
  if (!owner) {
    telemetry_.cache_hits.fetch_add(1);
    return waiter.get();
  }
  try {
    EmbeddingVector v = Fetch(image_bytes, media_type, text, key, from_cache);
    promise.set_value(v);
    std::lock_guard<std::mutex> lock(pending_mu_);
    pending_.erase(key);
    return v;
  } catch (...) {
    promise.set_exception(std::current_exception());
    std::lock_guard<std::mutex> lock(pending_mu_);
    pending_.erase(key);
    throw;
  }
}

EmbeddingVector EmbeddingClient::Fetch(std::string_view image_bytes,
                                       std::string_view media_type,
                                       std::string_view text, const std::string& key,
                                       bool* from_cache) {
  // A waiter that lost the race to an earlier owner may find it cached now.
  if (auto hit = cache_->Get(key)) {
    EmbeddingVector v = DecodeVector(*hit);
    if (v.dim() == dim_) {
      telemetry_.cache_hits.fetch_add(1);
      return v;
    }
  }
  SlotGuard slot(in_flight_);
  if (from_cache != nullptr) *from_cache = false;
  EmbeddingVector v = WithRetries(policy_, telemetry_, StreamOf(key), [&] {
    return provider_->Embed(image_bytes, media_type, text);
  });
  if (v.dim() != dim_) {
    telemetry_.failures.fetch_add(1);
    throw ProviderError(ProviderErrorKind::kDimensionMismatch,
                        "provider returned dim " + std::to_string(v.dim()) +
                            ", configured " + std::to_string(dim_));
  }
  if (v.AllZero()) {
    telemetry_.failures.fetch_add(1);
    throw ProviderError(ProviderErrorKind::kMalformed, "provider returned an all-zero embedding");
  }
  cache_->Put(key, EncodeVector(v));
  return v;
}

namespace {

std::optional<ProviderErrorKind> ParseErrorKind(const std::string& name) {
  if (name == "auth") return ProviderErrorKind::kAuth;
  if (name == "rate_limit") return ProviderErrorKind::kRateLimit;
  if (name == "transport") return ProviderErrorKind::kTransport;
  if (name == "malformed") return ProviderErrorKind::kMalformed;
  throw ValidationError("unknown fixture error kind '" + name + "'");
}

template <typename Fn>
void ForEachJsonLine(const std::string& jsonl, Fn&& fn) {
  std::size_t line_no = 0;
  for (const std::string& line : SplitLines(jsonl)) {
    ++line_no;
    if (Trim(line).empty()) continue;
    try {
      fn(json::parse(line));
    } catch (const json::exception& e) {
      throw ParseError(line_no, std::string("bad fixture record: ") + e.what());
    } catch (const ValidationError& e) {
      throw ParseError(line_no, e.what());
    }
  }
}

bool KeyMatches(const std::string& key, std::string_view haystack) {
  return key == "*" || haystack.find(key) != std::string_view::npos;
}

}  // namespace

std::vector<ChatFixture> ParseChatFixtures(const std::string& jsonl) {
  std::vector<ChatFixture> out;
  ForEachJsonLine(jsonl, [&](const json& j) {
    ChatFixture f;
    f.key = j.at("key").get<std::string>();
    if (f.key.empty()) throw ValidationError("fixture key is empty");
    f.text = j.value("text", std::string());
    if (j.contains("prompt_tokens") || j.contains("completion_tokens")) {
      f.usage = TokenUsage{j.value("prompt_tokens", std::int64_t{0}),
                           j.value("completion_tokens", std::int64_t{0}), false};
    }
    f.latency_ms = j.value("latency_ms", 0.0);
    if (j.contains("error")) f.error = ParseErrorKind(j.at("error").get<std::string>());
    if (!f.error && !j.contains("text")) throw ValidationError("chat fixture needs 'text'");
    out.push_back(std::move(f));
  });
  return out;
}

std::vector<EmbeddingFixture> ParseEmbeddingFixtures(const std::string& jsonl) {
  std::vector<EmbeddingFixture> out;
  ForEachJsonLine(jsonl, [&](const json& j) {
    EmbeddingFixture f;
    f.key = j.at("key").get<std::string>();
    if (f.key.empty()) throw ValidationError("fixture key is empty");
    f.vector.values = j.at("vector").get<std::vector<float>>();
    out.push_back(std::move(f));
  });
  return out;
}

MockChatProvider::MockChatProvider(std::vector<ChatFixture> fixtures)
    : fixtures_(std::move(fixtures)) {}

std::shared_ptr<MockChatProvider> MockChatProvider::FromFile(
    const std::filesystem::path& path) {
  return std::make_shared<MockChatProvider>(ParseChatFixtures(ReadFile(path)));
}

ChatResponse MockChatProvider::Complete(const ChatRequest& request) {
  calls_.fetch_add(1);
  const std::string user = request.UserText();
  for (const ChatFixture& f : fixtures_) {
    if (!KeyMatches(f.key, user)) continue;
    if (f.error) throw ProviderError(*f.error, "mock fixture '" + f.key + "'");
    ChatResponse r;
    r.text = f.text;
    r.latency_ms = f.latency_ms;
    if (f.usage) {
      r.usage = *f.usage;
      r.usage_reported = true;
    }
    return r;
  }
  throw ProviderError(ProviderErrorKind::kNoFixture, "no chat fixture matches the request");
}

MockEmbeddingProvider::MockEmbeddingProvider(std::vector<EmbeddingFixture> fixtures)
    : fixtures_(std::move(fixtures)) {}

std::shared_ptr<MockEmbeddingProvider> MockEmbeddingProvider::FromFile(
    const std::filesystem::path& path) {
  return std::make_shared<MockEmbeddingProvider>(ParseEmbeddingFixtures(ReadFile(path)));
}

EmbeddingVector MockEmbeddingProvider::Embed(std::string_view, std::string_view,
                                             std::string_view text) {
  calls_.fetch_add(1);
  for (const EmbeddingFixture& f : fixtures_) {
    if (KeyMatches(f.key, text)) return f.vector;
  }
  throw ProviderError(ProviderErrorKind::kNoFixture,
                      "no embedding fixture matches '" + std::string(text.substr(0, 60)) + "'");
}

}  // namespace refine
