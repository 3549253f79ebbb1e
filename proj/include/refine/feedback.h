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

// Teacher-side feedback: the three-question analysis of each student error,
// parsing of the labeled response, task/process vs. self-regulatory
// classification, and filtering.

#ifndef REFINE_FEEDBACK_H_
#define REFINE_FEEDBACK_H_

#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "refine/gateway.h"
#include "refine/types.h"

namespace refine {

inline constexpr char kFeedTargetQuestion[] = "What is the straightforward goal of this task?";
inline constexpr char kFeedCheckQuestion[] =
    "How does the student's current progress align with the goal?";
inline constexpr char kFeedPathQuestion[] =
    "What actionable steps bridge the gap to achieve the goal?";
inline constexpr char kNoParseableAnswer[] = "no parseable answer";

// Thrown by ParseFeedback; lists every absent header, e.g. {"FEED-CHECK"}.
class MissingSectionError : public ValidationError {
 public:
  explicit MissingSectionError(std::vector<std::string> missing);
  const std::vector<std::string>& missing() const { return missing_; }

 private:
  std::vector<std::string> missing_;
};

// One teacher round trip, kept for the audit log.
struct TeacherExchange {
  std::string sample_id;
  // "feedback", "feedback_retry", "classify", "classify_retry", "principle",
  // "principle_retry".
  std::string purpose;
  std::vector<Message> prompt;
  std::string raw_response;
  TokenUsage usage;
  std::string error;
};

// Thread-safe append-only collection of exchanges.
class AuditLog {
 public:
  void Append(std::vector<TeacherExchange> exchanges);
  std::vector<TeacherExchange> Entries() const;
  // One JSON object per exchange; image parts appear as
  // {"type": "image", "media_type", "sha256"}.
  std::string Serialize() const;

 private:
  mutable std::mutex mu_;
  std::vector<TeacherExchange> entries_;
};

// System + user messages asking the teacher to analyze `error` under
// FEED-TARGET / FEED-CHECK / FEED-PATH headers.
std::vector<Message> RenderTeacherPrompt(const ErrorCase& error, std::string image_bytes,
                                         std::string media_type, bool strict = false);

// Splits a response on the three headers. Case, markdown decoration (#, *, _,
// backticks, '>') and section order are tolerated; content may continue on
// the following lines. Throws MissingSectionError. Category is unassigned.
StructuredFeedback ParseFeedback(const std::string& raw_response);

std::vector<Message> RenderClassificationPrompt(const StructuredFeedback& fb,
                                                bool strict = false);
// "TASK" -> task/process, "SELF" -> self-regulatory, otherwise nullopt.
std::optional<FeedbackCategory> ParseClassification(const std::string& response);

// Asks the teacher for a binary label. An unparseable answer gets one
// stricter retry; a second failure (or a provider error) classifies the item
// as self-regulatory so that it is excluded.
StructuredFeedback ClassifyFeedback(StructuredFeedback fb, const ModelHandle& teacher,
                                    std::vector<TeacherExchange>* audit = nullptr);

// The task/process items, in order. Throws ValidationError on an
// unclassified item.
std::vector<StructuredFeedback> FilterFeedback(const std::vector<StructuredFeedback>& items);

// Feedback call plus at most one stricter retry when the response lacks a
// section. Returns nullopt (and logs) when both attempts fail.
std::optional<StructuredFeedback> GenerateFeedback(const ErrorCase& error,
                                                   const std::string& image_bytes,
                                                   const std::string& media_type,
                                                   const ModelHandle& teacher,
                                                   std::vector<TeacherExchange>* audit = nullptr);

std::string SerializeFeedback(const std::vector<StructuredFeedback>& items);
std::vector<StructuredFeedback> ParseFeedbackJsonl(const std::string& jsonl);

}  // namespace refine

#endif  // REFINE_FEEDBACK_H_
