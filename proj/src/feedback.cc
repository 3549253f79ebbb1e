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

#include "refine/feedback.h"

#include <array>
#include <regex>

#include "json.hpp"
#include "refine/prompts.h"

namespace refine {

namespace {

constexpr std::array<const char*, 3> kHeaders = {"FEED-TARGET", "FEED-CHECK", "FEED-PATH"};

std::string JoinMissing(const std::vector<std::string>& missing) {
  std::string out;
  for (const std::string& m : missing) {
    if (!out.empty()) out += ", ";
    out += m;
  }
  return out;
}

Message SystemMessage(std::string text) {
  Message m;
  m.role = Role::kSystem;
  m.parts.push_back(ContentPart::Text(std::move(text)));
  return m;
}

Message UserMessage(std::string text) {
  Message m;
  m.role = Role::kUser;
  m.parts.push_back(ContentPart::Text(std::move(text)));
  return m;
}

}  // namespace

MissingSectionError::MissingSectionError(std::vector<std::string> missing)
    : ValidationError("teacher response is missing section(s): " + JoinMissing(missing)),
      missing_(std::move(missing)) {}

void AuditLog::Append(std::vector<TeacherExchange> exchanges) {
  std::lock_guard<std::mutex> lock(mu_);
  for (TeacherExchange& e : exchanges) entries_.push_back(std::move(e));
}

std::vector<TeacherExchange> AuditLog::Entries() const {
  std::lock_guard<std::mutex> lock(mu_);
  return entries_;
}

std::string AuditLog::Serialize() const {
  std::lock_guard<std::mutex> lock(mu_);
  std::string out;
  for (const TeacherExchange& e : entries_) {
    nlohmann::ordered_json j;
    j["sample_id"] = e.sample_id;
    j["purpose"] = e.purpose;
    auto prompt = nlohmann::ordered_json::array();
    for (const Message& m : e.prompt) {
      auto parts = nlohmann::ordered_json::array();
      for (const ContentPart& p : m.parts) {
        if (p.kind == ContentPart::Kind::kText) {
          parts.push_back({{"type", "text"}, {"text", p.text}});
        } else {
          parts.push_back({{"type", "image"},
                           {"media_type", p.media_type},
                           {"sha256", Sha256Hex(p.image_bytes)}});
        }
      }
      prompt.push_back({{"role", RoleName(m.role)}, {"content", std::move(parts)}});
    }
    j["prompt"] = std::move(prompt);
    j["raw_response"] = e.raw_response;
    j["usage"] = {{"prompt_tokens", e.usage.prompt_tokens},
                  {"completion_tokens", e.usage.completion_tokens},
                  {"approximate", e.usage.approximate}};
    if (!e.error.empty()) j["error"] = e.error;
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::vector<Message> RenderTeacherPrompt(const ErrorCase& error, std::string image_bytes,
                                         std::string media_type, bool strict) {
  std::string system =
      "You are an expert teacher reviewing a vision-language student model's mistake on a "
      "multiple-choice question about an image. Write feedback that helps the student answer "
      "this kind of question correctly. Address the task itself and the reasoning steps it "
      "requires; do not comment on the student's habits or abilities.";

  std::string user;
  user += "Question:\n" + RenderQuestionBlock(error.question, error.choices) + "\n\n";
  user += "Student's answer: ";
  if (error.student_answer) {
    user += std::string("(") + *error.student_answer + ")";
  } else {
    user += kNoParseableAnswer;
  }
  user += "\nCorrect answer: (" + std::string(1, error.ground_truth) + ")\n\n";
  user += "Analyze the error by answering three questions:\n";
  user += std::string("1. FEED-TARGET: ") + kFeedTargetQuestion + "\n";
  user += std::string("2. FEED-CHECK: ") + kFeedCheckQuestion + "\n";
  user += std::string("3. FEED-PATH: ") + kFeedPathQuestion + "\n\n";
  user +=
      "Respond with exactly three sections, each starting on its own line with its header:\n"
      "FEED-TARGET: <the task goal>\n"
      "FEED-CHECK: <where the student's reasoning or perception failed>\n"
      "FEED-PATH: <concrete corrective steps>";
  if (strict) {
    user +=
        "\n\nYour previous reply could not be parsed. Use the three headers exactly as "
        "written above, in that order, with non-empty text after each, and nothing else.";
  }

  Message prompt;
  prompt.role = Role::kUser;
  prompt.parts.push_back(ContentPart::Image(std::move(image_bytes), std::move(media_type)));
  prompt.parts.push_back(ContentPart::Text(std::move(user)));
  return {SystemMessage(std::move(system)), std::move(prompt)};
}

StructuredFeedback ParseFeedback(const std::string& raw_response) {
  static const std::regex kHeader(
      R"(^[\s>#*_`\-]*(?:\d+[.)]\s*)?[*_`]*feed[\s_\-]*(target|check|path)[\s*_`]*:?[\s*_`]*(.*)$)",
      std::regex::icase);
  std::array<std::optional<std::string>, 3> sections;
  int current = -1;
  for (const std::string& line : SplitLines(raw_response)) {
    std::smatch m;
    if (std::regex_match(line, m, kHeader)) {
      const std::string name = ToLower(m[1].str());
      const int idx = name == "target" ? 0 : name == "check" ? 1 : 2;
      if (sections[static_cast<std::size_t>(idx)]) {
        // Repeated header: later text joins the first occurrence.
        current = idx;
        *sections[static_cast<std::size_t>(idx)] += "\n" + m[2].str();
      } else {
        current = idx;
        sections[static_cast<std::size_t>(idx)] = m[2].str();
      }
      continue;
    }
    if (current >= 0) *sections[static_cast<std::size_t>(current)] += "\n" + line;
  }

  StructuredFeedback fb;
  std::vector<std::string> missing;
  std::array<std::string*, 3> fields = {&fb.target, &fb.check, &fb.path};
  for (std::size_t i = 0; i < 3; ++i) {
    std::string text = sections[i] ? Trim(*sections[i]) : std::string();
    if (text.empty()) {
      missing.emplace_back(kHeaders[i]);
    } else {
      *fields[i] = std::move(text);
    }
  }
  if (!missing.empty()) throw MissingSectionError(std::move(missing));
  return fb;
}

std::vector<Message> RenderClassificationPrompt(const StructuredFeedback& fb, bool strict) {
  std::string system =
      "You classify feedback written for a vision-language student model into one of two "
      "categories.\n"
      "TASK: task/process feedback. It directly corrects task-specific errors or adds "
      "specifics for reasoning. Examples: \"Adjust counts for occluded objects.\", \"Verify "
      "spatial relationships again.\"\n"
      "SELF: self-regulatory feedback. It addresses metacognitive habits or personal traits. "
      "Examples: \"To improve accuracy, try solving similar problems multiple times.\", \"You "
      "are good at object recognition.\"\n"
      "Judge the feedback as a whole by its dominant intent. Reply with exactly one word: "
      "TASK or SELF.";
  if (strict) {
    system += " Any reply other than the single word TASK or the single word SELF is invalid.";
  }
  std::string user = "Feedback to classify:\n" + RenderFeedbackTriple(fb);
  return {SystemMessage(std::move(system)), UserMessage(std::move(user))};
}

std::optional<FeedbackCategory> ParseClassification(const std::string& response) {
  const std::string text = ToUpper(response);
  static const std::regex kWord(R"([A-Z]+)");
  std::vector<std::string> words;
  for (auto it = std::sregex_iterator(text.begin(), text.end(), kWord);
       it != std::sregex_iterator(); ++it) {
    words.push_back(it->str());
  }
  auto label_of = [](const std::string& w) -> std::optional<FeedbackCategory> {
    if (w == "TASK") return FeedbackCategory::kTaskProcess;
    if (w == "SELF") return FeedbackCategory::kSelfRegulatory;
    return std::nullopt;
  };
  if (words.empty()) return std::nullopt;
  if (auto first = label_of(words.front())) return first;
  // Otherwise accept a reply that mentions exactly one of the two labels.
  bool saw_task = false;
  bool saw_self = false;
  for (const std::string& w : words) {
    saw_task = saw_task || w == "TASK";
    saw_self = saw_self || w == "SELF";
  }
  if (saw_task != saw_self) {
    return saw_task ? FeedbackCategory::kTaskProcess : FeedbackCategory::kSelfRegulatory;
  }
  return std::nullopt;
}

StructuredFeedback ClassifyFeedback(StructuredFeedback fb, const ModelHandle& teacher,
                                    std::vector<TeacherExchange>* audit) {
  if (fb.category != FeedbackCategory::kUnassigned) {
    throw ValidationError("feedback for '" + fb.sample_id + "' is already classified");
  }
  for (int attempt = 0; attempt < 2; ++attempt) {
    TeacherExchange ex;
    ex.sample_id = fb.sample_id;
    ex.purpose = attempt == 0 ? "classify" : "classify_retry";
    ex.prompt = RenderClassificationPrompt(fb, attempt > 0);
    std::optional<FeedbackCategory> label;
    try {
      ChatResponse r = teacher.Ask(ex.prompt);
      ex.raw_response = r.text;
      ex.usage = r.usage;
      label = ParseClassification(r.text);
    } catch (const ProviderError& e) {
      ex.error = e.what();
    }
    if (audit != nullptr) audit->push_back(std::move(ex));
    if (label) {
      fb.category = *label;
      return fb;
    }
  }
  LogWarning("classification of '" + fb.sample_id + "' failed twice; excluding it");
  fb.category = FeedbackCategory::kSelfRegulatory;
  return fb;
}

std::vector<StructuredFeedback> FilterFeedback(const std::vector<StructuredFeedback>& items) {
  std::vector<StructuredFeedback> out;
  for (const StructuredFeedback& fb : items) {
    if (fb.category == FeedbackCategory::kUnassigned) {
      throw ValidationError("feedback for '" + fb.sample_id + "' has no category");
    }
    if (fb.category == FeedbackCategory::kTaskProcess) out.push_back(fb);
  }
  return out;
}

std::optional<StructuredFeedback> GenerateFeedback(const ErrorCase& error,
                                                   const std::string& image_bytes,
                                                   const std::string& media_type,
                                                   const ModelHandle& teacher,
                                                   std::vector<TeacherExchange>* audit) {
  std::string last_problem;
  for (int attempt = 0; attempt < 2; ++attempt) {
    TeacherExchange ex;
    ex.sample_id = error.sample_id;
    ex.purpose = attempt == 0 ? "feedback" : "feedback_retry";
    ex.prompt = RenderTeacherPrompt(error, image_bytes, media_type, attempt > 0);
    std::optional<StructuredFeedback> parsed;
    try {
      ChatResponse r = teacher.Ask(ex.prompt);
      ex.raw_response = r.text;
      ex.usage = r.usage;
      parsed = ParseFeedback(r.text);
      parsed->sample_id = error.sample_id;
    } catch (const ProviderError& e) {
      ex.error = last_problem = e.what();
    } catch (const MissingSectionError& e) {
      ex.error = last_problem = e.what();
    }
    if (audit != nullptr) audit->push_back(std::move(ex));
    if (parsed) return parsed;
  }
  LogWarning("dropping error case '" + error.sample_id + "': " + last_problem);
  return std::nullopt;
}

std::string SerializeFeedback(const std::vector<StructuredFeedback>& items) {
  std::string out;
  for (const StructuredFeedback& fb : items) {
    out += FeedbackToJson(fb).dump();
    out += '\n';
  }
  return out;
}

std::vector<StructuredFeedback> ParseFeedbackJsonl(const std::string& jsonl) {
  std::vector<StructuredFeedback> out;
  std::size_t line_no = 0;
  for (const std::string& line : SplitLines(jsonl)) {
    ++line_no;
    if (Trim(line).empty()) continue;
    try {
      out.push_back(FeedbackFromJson(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(line_no, std::string("malformed JSON: ") + e.what());
    } catch (const ValidationError& e) {
      throw ParseError(line_no, e.what());
    }
  }
  return out;
}

}  // namespace refine
