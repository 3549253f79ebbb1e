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

// Student prompt templates.
//
// Every student prompt has the shape
//
//   <question>\nOptions:\nA. ...\nB. ...\n\n
//   [feedback blocks, each "<open>\n<body>\n<close>\n\n"]
//   Answer with the option's letter from the given choices directly.
//   [\nLet’s think step by step.]
//
// so that deleting any feedback block (an exact substring) leaves the
// remaining prompt well formed, and deleting all of them yields the
// standard prompt. Block order is fixed: task/process, direct (raw),
// question-level insights, self-regulatory, cluster principle.

#ifndef REFINE_PROMPTS_H_
#define REFINE_PROMPTS_H_

#include <optional>
#include <string>
#include <vector>

#include "refine/corpus.h"
#include "refine/gateway.h"
#include "refine/types.h"

namespace refine {

inline constexpr char kAnswerInstruction[] =
    "Answer with the option's letter from the given choices directly.";
// U+2019 apostrophe.
inline constexpr char kCotSuffix[] = "Let’s think step by step.";

inline constexpr char kTaskProcessOpen[] = "=== TASK/PROCESS FEEDBACK ===";
inline constexpr char kSelfRegOpen[] = "=== SELF-REGULATORY FEEDBACK ===";
inline constexpr char kClusterOpen[] = "=== CLUSTER-LEVEL PRINCIPLE ===";
inline constexpr char kDirectOpen[] = "=== FEEDBACK ===";
inline constexpr char kInsightsOpen[] = "=== RELATED INSIGHTS ===";
inline constexpr char kBlockClose[] = "=== END ===";

// Everything a feedback-consuming strategy may attach to a prompt.
struct Attachment {
  std::optional<StructuredFeedback> task_process;
  std::optional<StructuredFeedback> self_regulatory;
  std::optional<std::string> cluster_principle;
  // Unstructured critiques: one for Direct Feedback, top-k for RICP-style.
  std::vector<std::string> raw_feedback;
};

// Question text followed by the lettered options.
std::string RenderQuestionBlock(const std::string& question,
                                const std::vector<Choice>& choices);
std::string RenderQuestionBlock(const Sample& sample);

// question_block + "\n\n" + answer instruction.
std::string StandardPromptText(const std::string& question_block);

// "FEED-TARGET: t\nFEED-CHECK: c\nFEED-PATH: p"
std::string RenderFeedbackTriple(const StructuredFeedback& fb);
// The triple as free text without the FEED-* labels.
std::string RenderFeedbackRaw(const StructuredFeedback& fb);

// "<open>\n<body>\n=== END ===\n\n"
std::string RenderBlock(const char* open, const std::string& body);

// Text of the student prompt. Throws UsageError when a required attachment
// is missing or one is supplied to a strategy that takes none.
std::string RenderPromptText(const Sample& sample, const Strategy& strategy,
                             const std::optional<Attachment>& attachment);

// Single user message: image part then the prompt text.
std::vector<Message> RenderPrompt(const Sample& sample, const Strategy& strategy,
                                  const std::optional<Attachment>& attachment,
                                  std::string image_bytes);

}  // namespace refine

#endif  // REFINE_PROMPTS_H_
