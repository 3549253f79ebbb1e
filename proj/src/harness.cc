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

#include "refine/harness.h"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <exception>
#include <map>
#include <mutex>
#include <regex>
#include <thread>

#include "json.hpp"

namespace refine {

namespace {

bool IsValid(char letter, std::string_view valid) {
  return valid.find(letter) != std::string_view::npos;
}

char Upper(char c) {
  return static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
}

}  // namespace

std::optional<char> ExtractAnswer(std::string_view raw_output,
                                  std::string_view valid_letters) {
  const std::string text(raw_output);

  // Rule 1. Uppercase letters may stand bare; lowercase only inside
  // parentheses, so "the answer is a bit unclear" does not match.
  static const std::regex kAnswerPhrase(
      R"(answer\s*(?:is|:)\s*:?\s*(?:\(([A-Ea-e])\)|([A-E])(?![A-Za-z])))",
      std::regex::icase);
  std::optional<char> phrase;
  for (auto it = std::sregex_iterator(text.begin(), text.end(), kAnswerPhrase);
       it != std::sregex_iterator(); ++it) {
    const std::smatch& m = *it;
    const std::string letter = m[1].matched ? m[1].str() : m[2].str();
    // icase also lets [A-E] match lowercase; keep the bare form uppercase.
    if (!m[1].matched && !std::isupper(static_cast<unsigned char>(letter[0]))) continue;
    const char c = Upper(letter[0]);
    if (IsValid(c, valid_letters)) phrase = c;
  }
  if (phrase) return phrase;

  // Rule 2.
  std::string trimmed = Trim(text);
  std::string core = trimmed;
  if (core.size() == 3 && core.front() == '(' && core.back() == ')') core = core.substr(1, 1);
  if (core.size() == 2 && core.back() == '.') core.pop_back();
  if (core.size() == 1 && std::isalpha(static_cast<unsigned char>(core[0]))) {
    const char c = Upper(core[0]);
    if (IsValid(c, valid_letters)) return c;
    return std::nullopt;
  }

  // Rule 3.
  static const std::regex kTerminalParen(R"(\(([A-Ea-e])\)[\s.!]*$)");
  std::smatch m;
  if (std::regex_search(trimmed, m, kTerminalParen)) {
    const char c = Upper(m[1].str()[0]);
    if (IsValid(c, valid_letters)) return c;
  }
  return std::nullopt;
}

void ParallelFor(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
  if (workers < 1) throw UsageError("concurrency limit must be positive");
  const std::size_t threads = std::min<std::size_t>(static_cast<std::size_t>(workers), n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mu;
  {
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
          try {
            fn(i);
          } catch (...) {
            std::lock_guard<std::mutex> lock(error_mu);
            if (!first_error) first_error = std::current_exception();
            next.store(n);
          }
        }
      });
    }
  }
  if (first_error) std::rethrow_exception(first_error);
}

std::vector<Prediction> EvaluateSplit(const std::vector<std::string>& ids,
                                      const CorpusIndex& corpus,
                                      const Strategy& strategy,
                                      const ModelHandle& student,
                                      const RetrievalHook& retriever,
                                      const EvalOptions& options) {
  if (strategy.ConsumesFeedback() && !retriever) {
    throw UsageError("strategy '" + strategy.Tag() + "' needs a retriever");
  }
  if (!strategy.ConsumesFeedback() && retriever) {
    throw UsageError("strategy '" + strategy.Tag() + "' takes no retriever");
  }
  // Resolve every id before any call is made.
  std::vector<const Sample*> samples;
  samples.reserve(ids.size());
  for (const std::string& id : ids) samples.push_back(&corpus.At(id));

  const std::string tag = strategy.Tag();
  std::vector<Prediction> out(ids.size());
  ParallelFor(ids.size(), options.max_concurrency, [&](std::size_t i) {
    const Sample& sample = *samples[i];
    Prediction& p = out[i];
    p.sample_id = sample.id;
    p.strategy = tag;
    try {
      std::string image = ReadImageBytes(sample.image, options.image_base_dir);
      std::optional<Attachment> attachment;
      if (retriever) {
        Retrieved r = retriever(sample, image);
        p.retrieval_ms = r.retrieval_ms;
        p.embedding_calls = r.embedding_calls;
        p.teacher_calls = r.teacher_calls;
        attachment = std::move(r.attachment);
      }
      // Rendering errors are configuration faults and abort the run.
      std::vector<Message> prompt = RenderPrompt(sample, strategy, attachment, std::move(image));
      p.student_calls = 1;
      ChatResponse response = student.Ask(std::move(prompt));
      p.raw_output = response.text;
      p.usage = response.usage;
      p.latency_ms = response.latency_ms;
      p.extracted = ExtractAnswer(response.text, sample.letters());
      p.correct = p.extracted.has_value() && *p.extracted == sample.answer;
    } catch (const ProviderError& e) {
      p.raw_output = std::string(kFailedOutputPrefix) + e.what() + ">";
      p.extracted.reset();
      p.correct = false;
    }
  });
  return out;
}

std::vector<ErrorCase> CollectErrors(const std::vector<Prediction>& predictions,
                                     const CorpusIndex& corpus) {
  std::vector<ErrorCase> errors;
  for (const Prediction& p : predictions) {
    const Sample& s = corpus.At(p.sample_id);
    if (p.correct) continue;
    ErrorCase e;
    e.sample_id = s.id;
    e.question = s.question;
    e.choices = s.choices;
    e.image = s.image;
    e.student_answer = p.extracted;
    e.raw_output = p.raw_output;
    e.ground_truth = s.answer;
    errors.push_back(std::move(e));
  }
  return errors;
}

double PassAt1(const std::vector<Prediction>& predictions) {
  if (predictions.empty()) throw ValidationError("pass@1 of an empty run");
  const auto correct = std::count_if(predictions.begin(), predictions.end(),
                                     [](const Prediction& p) { return p.correct; });
  return static_cast<double>(correct) / static_cast<double>(predictions.size());
}

std::string SerializePredictions(const std::vector<Prediction>& predictions) {
  std::string out;
  for (const Prediction& p : predictions) {
    nlohmann::ordered_json j;
    j["sample_id"] = p.sample_id;
    j["strategy"] = p.strategy;
    j["raw_output"] = p.raw_output;
    if (p.extracted) {
      j["extracted"] = std::string(1, *p.extracted);
    } else {
      j["extracted"] = nullptr;
    }
    j["correct"] = p.correct;
    j["usage"] = {{"prompt_tokens", p.usage.prompt_tokens},
                  {"completion_tokens", p.usage.completion_tokens},
                  {"approximate", p.usage.approximate}};
    j["latency_ms"] = p.latency_ms;
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::vector<Prediction> ParsePredictions(const std::string& jsonl) {
  std::vector<Prediction> out;
  std::size_t line_no = 0;
  for (const std::string& line : SplitLines(jsonl)) {
    ++line_no;
    if (Trim(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      Prediction p;
      p.sample_id = j.at("sample_id").get<std::string>();
      p.strategy = j.at("strategy").get<std::string>();
      p.raw_output = j.at("raw_output").get<std::string>();
      const auto& ex = j.at("extracted");
      if (!ex.is_null()) {
        const std::string letter = ex.get<std::string>();
        if (letter.size() != 1) throw ValidationError("extracted must be one letter");
        p.extracted = letter[0];
      }
      p.correct = j.at("correct").get<bool>();
      const auto& usage = j.at("usage");
      p.usage.prompt_tokens = usage.at("prompt_tokens").get<std::int64_t>();
      p.usage.completion_tokens = usage.at("completion_tokens").get<std::int64_t>();
      p.usage.approximate = usage.value("approximate", false);
      p.latency_ms = j.at("latency_ms").get<double>();
      if (p.usage.prompt_tokens < 0 || p.usage.completion_tokens < 0 || p.latency_ms < 0) {
        throw ValidationError("negative usage or latency");
      }
      if (p.correct && !p.extracted) throw ValidationError("correct without an extracted answer");
      out.push_back(std::move(p));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(line_no, std::string("bad prediction record: ") + e.what());
    } catch (const ValidationError& e) {
      throw ParseError(line_no, e.what());
    }
  }
  return out;
}

std::string SerializeTelemetry(const std::vector<Prediction>& predictions) {
  std::string out;
  for (const Prediction& p : predictions) {
    nlohmann::ordered_json j;
    j["sample_id"] = p.sample_id;
    j["retrieval_ms"] = p.retrieval_ms;
    j["student_calls"] = p.student_calls;
    j["teacher_calls"] = p.teacher_calls;
    j["embedding_calls"] = p.embedding_calls;
    out += j.dump();
    out += '\n';
  }
  return out;
}

void MergeTelemetry(const std::string& jsonl, std::vector<Prediction>& predictions) {
  std::map<std::string, Prediction*> by_id;
  for (Prediction& p : predictions) by_id[p.sample_id] = &p;
  std::size_t line_no = 0;
  for (const std::string& line : SplitLines(jsonl)) {
    ++line_no;
    if (Trim(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      auto it = by_id.find(j.at("sample_id").get<std::string>());
      if (it == by_id.end()) continue;
      Prediction& p = *it->second;
      p.retrieval_ms = j.at("retrieval_ms").get<double>();
      p.student_calls = j.at("student_calls").get<std::int64_t>();
      p.teacher_calls = j.at("teacher_calls").get<std::int64_t>();
      p.embedding_calls = j.at("embedding_calls").get<std::int64_t>();
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(line_no, std::string("bad telemetry record: ") + e.what());
    }
  }
}

}  // namespace refine
