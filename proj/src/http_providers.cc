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

#include "refine/http_providers.h"

#include <chrono>
#include <cstdlib>
#include <regex>

#include "httplib.h"
#include "json.hpp"

namespace refine {

namespace {

using nlohmann::json;

std::string DataUrl(std::string_view bytes, std::string_view media_type) {
  return "data:" + std::string(media_type) + ";base64," + Base64Encode(bytes);
}

httplib::Result Post(const HttpEndpoint& ep, const std::string& path, const std::string& key,
                     double timeout_s, const std::string& body) {
  httplib::Client client(ep.origin);
  const auto secs = static_cast<time_t>(timeout_s);
  const auto usecs = static_cast<time_t>((timeout_s - static_cast<double>(secs)) * 1e6);
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);
  httplib::Headers headers;
  if (!key.empty()) headers.emplace("Authorization", "Bearer " + key);
  return client.Post(ep.base_path + path, headers, body, "application/json");
}

// Throws ProviderError for any non-200 outcome; returns the parsed body.
json CheckedJson(const httplib::Result& res) {
  if (!res) {
    throw ProviderError(ProviderErrorKind::kTransport,
                        "request failed: " + httplib::to_string(res.error()));
  }
  const int status = res->status;
  if (status == 401 || status == 403) {
    throw ProviderError(ProviderErrorKind::kAuth, "HTTP " + std::to_string(status));
  }
  if (status == 429) throw ProviderError(ProviderErrorKind::kRateLimit, "HTTP 429");
  if (status >= 500) {
    throw ProviderError(ProviderErrorKind::kTransport, "HTTP " + std::to_string(status));
  }
  if (status != 200) {
    throw ProviderError(ProviderErrorKind::kMalformed,
                        "unexpected HTTP " + std::to_string(status) + ": " +
                            res->body.substr(0, 200));
  }
  try {
    return json::parse(res->body);
  } catch (const json::exception& e) {
    throw ProviderError(ProviderErrorKind::kMalformed, std::string("bad JSON body: ") + e.what());
  }
}

}  // namespace

HttpEndpoint ParseEndpoint(const std::string& url) {
  static const std::regex re(R"(^(https?://[^/\s]+)(/[^\s]*)?$)");
  std::smatch m;
  if (!std::regex_match(url, m, re)) throw ValidationError("bad endpoint URL '" + url + "'");
  HttpEndpoint ep;
  ep.origin = m[1].str();
  ep.base_path = m[2].str();
  while (!ep.base_path.empty() && ep.base_path.back() == '/') ep.base_path.pop_back();
  return ep;
}

std::string ApiKeyFromEnv(const std::string& env_var) {
  if (env_var.empty()) return {};
  const char* v = std::getenv(env_var.c_str());
  return v == nullptr ? std::string() : std::string(v);
}

HttpChatProvider::HttpChatProvider(std::string endpoint, std::string api_key, double timeout_s)
    : endpoint_(ParseEndpoint(endpoint)), api_key_(std::move(api_key)), timeout_s_(timeout_s) {}

ChatResponse HttpChatProvider::Complete(const ChatRequest& request) {
  json body;
  body["model"] = request.model_id;
  body["temperature"] = request.temperature;
  body["max_tokens"] = request.max_output_tokens;
  json messages = json::array();
  for (const Message& m : request.messages) {
    json content = json::array();
    for (const ContentPart& p : m.parts) {
      if (p.kind == ContentPart::Kind::kText) {
        content.push_back({{"type", "text"}, {"text", p.text}});
      } else {
        content.push_back({{"type", "image_url"},
                           {"image_url", {{"url", DataUrl(p.image_bytes, p.media_type)}}}});
      }
    }
    messages.push_back({{"role", RoleName(m.role)}, {"content", std::move(content)}});
  }
  body["messages"] = std::move(messages);

  const auto start = std::chrono::steady_clock::now();
  const json reply =
      CheckedJson(Post(endpoint_, "/chat/completions", api_key_, timeout_s_, body.dump()));
  ChatResponse out;
  out.latency_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  try {
    const json& content = reply.at("choices").at(0).at("message").at("content");
    out.text = content.is_null() ? std::string() : content.get<std::string>();
    if (reply.contains("usage") && reply["usage"].is_object()) {
      const json& u = reply["usage"];
      out.usage.prompt_tokens = u.at("prompt_tokens").get<std::int64_t>();
      out.usage.completion_tokens = u.at("completion_tokens").get<std::int64_t>();
      out.usage_reported = true;
    }
  } catch (const json::exception& e) {
    throw ProviderError(ProviderErrorKind::kMalformed,
                        std::string("unexpected chat payload: ") + e.what());
  }
  return out;
}

HttpEmbeddingProvider::HttpEmbeddingProvider(std::string endpoint, std::string model_id,
                                             std::string api_key, double timeout_s)
    : endpoint_(ParseEndpoint(endpoint)),
      model_id_(std::move(model_id)),
      api_key_(std::move(api_key)),
      timeout_s_(timeout_s) {}

EmbeddingVector HttpEmbeddingProvider::Embed(std::string_view image_bytes,
                                             std::string_view media_type, std::string_view text) {
  json content = json::array();
  content.push_back({{"type", "text"}, {"text", std::string(text)}});
  if (!image_bytes.empty()) {
    content.push_back(
        {{"type", "image_base64"}, {"image_base64", DataUrl(image_bytes, media_type)}});
  }
  json body;
  body["model"] = model_id_;
  body["inputs"] = json::array({{{"content", std::move(content)}}});

  const json reply =
      CheckedJson(Post(endpoint_, "/multimodalembeddings", api_key_, timeout_s_, body.dump()));
  try {
    EmbeddingVector v;
    v.values = reply.at("data").at(0).at("embedding").get<std::vector<float>>();
    return v;
  } catch (const json::exception& e) {
    throw ProviderError(ProviderErrorKind::kMalformed,
                        std::string("unexpected embedding payload: ") + e.what());
  }
}

}  // namespace refine
