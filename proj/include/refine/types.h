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

// Domain types shared across the harness, feedback, error-book and baseline
// modules.

#ifndef REFINE_TYPES_H_
#define REFINE_TYPES_H_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "refine/corpus.h"
#include "refine/gateway.h"

namespace refine {

enum class FeedbackCategory { kUnassigned, kTaskProcess, kSelfRegulatory };

const char* CategoryName(FeedbackCategory c);
// Accepts "task_process", "self_regulatory"; null/absent maps to kUnassigned.
FeedbackCategory ParseCategory(const std::string& name);

// Teacher feedback for one error case: Feed-Target (task goal), Feed-Check
// (failure diagnosis), Feed-Path (corrective actions).
struct StructuredFeedback {
  std::string sample_id;
  std::string target;
  std::string check;
  std::string path;
  FeedbackCategory category = FeedbackCategory::kUnassigned;

  bool operator==(const StructuredFeedback&) const = default;
};

nlohmann::ordered_json FeedbackToJson(const StructuredFeedback& fb);
// Throws ValidationError.
StructuredFeedback FeedbackFromJson(const nlohmann::json& j);

enum class StrategyKind { kStandard, kCot, kDirect, kRefine, kRicp };

// Table-3 style additive components on top of the task/process feedback.
struct AblationFlags {
  bool task_process = true;
  bool self_reg = false;
  bool cluster_level = false;
  bool cot = false;

  bool any() const { return self_reg || cluster_level || cot; }
  bool operator==(const AblationFlags&) const = default;
};

struct Strategy {
  StrategyKind kind = StrategyKind::kStandard;
  AblationFlags ablation;  // meaningful only for kRefine

  // "standard", "cot", "direct", "refine", "ricp", or "refine+self_reg+..."
  // with components in the fixed order self_reg, cluster, cot.
  std::string Tag() const;
  bool ConsumesFeedback() const {
    return kind == StrategyKind::kDirect || kind == StrategyKind::kRefine ||
           kind == StrategyKind::kRicp;
  }
  bool operator==(const Strategy&) const = default;
};

// Throws UsageError on an unknown tag.
Strategy ParseStrategy(const std::string& tag);
// Parses a comma list of "self_reg", "cluster", "cot".
AblationFlags ParseAblation(const std::string& list);

struct Prediction {
  std::string sample_id;
  std::string strategy;
  std::string raw_output;
  std::optional<char> extracted;
  bool correct = false;
  TokenUsage usage;
  double latency_ms = 0.0;

  // Run telemetry. Wall-clock and cache dependent, so it is kept out of the
  // predictions file and written to a sidecar instead.
  double retrieval_ms = 0.0;
  std::int64_t student_calls = 0;
  std::int64_t teacher_calls = 0;
  std::int64_t embedding_calls = 0;

  // Equality over the persisted fields only.
  bool SameRecord(const Prediction& o) const {
    return sample_id == o.sample_id && strategy == o.strategy &&
           raw_output == o.raw_output && extracted == o.extracted &&
           correct == o.correct && usage == o.usage && latency_ms == o.latency_ms;
  }
};

struct ErrorCase {
  std::string sample_id;
  std::string question;
  std::vector<Choice> choices;
  ImageRef image;
  std::optional<char> student_answer;
  std::string raw_output;
  char ground_truth = 'A';
};

}  // namespace refine

#endif  // REFINE_TYPES_H_
