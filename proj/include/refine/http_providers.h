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

// HTTP adapters for hosted providers.
//
// Chat speaks the OpenAI-compatible wire format:
//   POST {endpoint}/chat/completions
//   {"model", "temperature", "max_tokens",
//    "messages": [{"role", "content": [{"type":"text","text"} |
//                  {"type":"image_url","image_url":{"url":"data:<mt>;base64,..."}}]}]}
//   -> {"choices":[{"message":{"content": str}}],
//       "usage":{"prompt_tokens","completion_tokens"}}
//
// Embeddings speak a multimodal-embedding format:
//   POST {endpoint}/multimodalembeddings
//   {"model", "inputs": [{"content": [{"type":"text","text"},
//                                     {"type":"image_base64","image_base64":"data:..."}]}]}
//   -> {"data":[{"embedding":[float]}]}
//
// Status mapping: 401/403 auth, 429 rate_limit, 5xx and connection failures
// transport, anything unparseable malformed.

#ifndef REFINE_HTTP_PROVIDERS_H_
#define REFINE_HTTP_PROVIDERS_H_

#include <string>

#include "refine/gateway.h"

namespace refine {

inline constexpr char kTeacherKeyEnv[] = "REFINE_TEACHER_API_KEY";
inline constexpr char kStudentKeyEnv[] = "REFINE_STUDENT_API_KEY";
inline constexpr char kEmbedKeyEnv[] = "REFINE_EMBED_API_KEY";

struct HttpEndpoint {
  // scheme://host[:port]
  std::string origin;
  // Path prefix without a trailing slash, possibly empty.
  std::string base_path;
};

// Throws ValidationError for anything that is not http(s)://host[:port][/path].
HttpEndpoint ParseEndpoint(const std::string& url);

// The value of `env_var`, or empty when unset. An empty name yields empty.
std::string ApiKeyFromEnv(const std::string& env_var);

class HttpChatProvider : public ChatProvider {
 public:
  HttpChatProvider(std::string endpoint, std::string api_key, double timeout_s = 120.0);
  ChatResponse Complete(const ChatRequest& request) override;

 private:
  HttpEndpoint endpoint_;
  std::string api_key_;
  double timeout_s_;
};

class HttpEmbeddingProvider : public EmbeddingProvider {
 public:
  HttpEmbeddingProvider(std::string endpoint, std::string model_id, std::string api_key,
                        double timeout_s = 60.0);
  EmbeddingVector Embed(std::string_view image_bytes, std::string_view media_type,
                        std::string_view text) override;

 private:
  HttpEndpoint endpoint_;
  std::string model_id_;
  std::string api_key_;
  double timeout_s_;
};

}  // namespace refine

#endif  // REFINE_HTTP_PROVIDERS_H_
