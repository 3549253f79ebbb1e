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

#include "refine/prompts.h"

namespace refine {

std::string RenderQuestionBlock(const std::string& question,
                                const std::vector<Choice>& choices) {
  std::string out = question;
  out += "\nOptions:";
  for (const Choice& c : choices) {
    out += '\n';
    out += c.letter;
    out += ". ";
    out += c.text;
  }
  return out;
}

std::string RenderQuestionBlock(const Sample& sample) {
  return RenderQuestionBlock(sample.question, sample.choices);
}

std::string StandardPromptText(const std::string& question_block) {
  return question_block + "\n\n" + kAnswerInstruction;
}

std::string RenderFeedbackTriple(const StructuredFeedback& fb) {
  return "FEED-TARGET: " + fb.target + "\nFEED-CHECK: " + fb.check +
         "\nFEED-PATH: " + fb.path;
}

std::string RenderFeedbackRaw(const StructuredFeedback& fb) {
  return fb.target + " " + fb.check + " " + fb.path;
}

std::string RenderBlock(const char* open, const std::string& body) {
  return std::string(open) + "\n" + body + "\n" + kBlockClose + "\n\n";
}

namespace {

std::string RenderInsights(const std::vector<std::string>& items) {
  std::string body;
  for (const std::string& item : items) {
    if (!body.empty()) body += '\n';
    body += "- " + item;
  }
  return body;
}

}  // namespace

std::string RenderPromptText(const Sample& sample, const Strategy& strategy,
                             const std::optional<Attachment>& attachment) {
  const std::string tag = strategy.Tag();
  if (strategy.ConsumesFeedback() && !attachment) {
    throw UsageError("strategy '" + tag + "' requires retrieved feedback");
  }
  if (!strategy.ConsumesFeedback() && attachment) {
    throw UsageError("strategy '" + tag + "' takes no feedback attachment");
  }

  std::string blocks;
  bool cot = strategy.kind == StrategyKind::kCot;
  switch (strategy.kind) {
    case StrategyKind::kStandard:
    case StrategyKind::kCot:
      break;
    case StrategyKind::kDirect:
      if (attachment->raw_feedback.empty()) {
        throw UsageError("direct strategy requires a raw feedback text");
      }
      blocks += RenderBlock(kDirectOpen, attachment->raw_feedback.front());
      break;
    case StrategyKind::kRicp:
      if (attachment->raw_feedback.empty()) {
        throw UsageError("ricp strategy requires question-level insights");
      }
      blocks += RenderBlock(kInsightsOpen, RenderInsights(attachment->raw_feedback));
      if (attachment->cluster_principle) {
        blocks += RenderBlock(kClusterOpen, *attachment->cluster_principle);
      }
      break;
    case StrategyKind::kRefine: {
      const AblationFlags& flags = strategy.ablation;
      if (!flags.task_process) throw UsageError("refine always carries task/process feedback");
      if (!attachment->task_process) {
        throw UsageError("refine strategy requires task/process feedback");
      }
      blocks += RenderBlock(kTaskProcessOpen, RenderFeedbackTriple(*attachment->task_process));
      if (flags.self_reg) {
        if (!attachment->self_regulatory) {
          throw UsageError("self_reg ablation requires self-regulatory feedback");
        }
        blocks += RenderBlock(kSelfRegOpen, RenderFeedbackTriple(*attachment->self_regulatory));
      }
      // A cluster whose principle generation failed contributes no block.
      if (flags.cluster_level && attachment->cluster_principle) {
        blocks += RenderBlock(kClusterOpen, *attachment->cluster_principle);
      }
      cot = flags.cot;
      break;
    }
  }

  std::string text = RenderQuestionBlock(sample) + "\n\n" + blocks + kAnswerInstruction;
  if (cot) {
    text += '\n';
    text += kCotSuffix;
  }
  return text;
}

std::vector<Message> RenderPrompt(const Sample& sample, const Strategy& strategy,
                                  const std::optional<Attachment>& attachment,
                                  std::string image_bytes) {
  Message user;
  user.role = Role::kUser;
  const std::string media = sample.image.media_type.empty()
                                ? GuessMediaType(sample.image.path)
                                : sample.image.media_type;
  user.parts.push_back(ContentPart::Image(std::move(image_bytes), media));
  user.parts.push_back(ContentPart::Text(RenderPromptText(sample, strategy, attachment)));
  return {std::move(user)};
}

}  // namespace refine
