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

#include "refine/types.h"

#include <sstream>

namespace refine {

const char* CategoryName(FeedbackCategory c) {
  switch (c) {
    case FeedbackCategory::kTaskProcess: return "task_process";
    case FeedbackCategory::kSelfRegulatory: return "self_regulatory";
    case FeedbackCategory::kUnassigned: break;
  }
  return "unassigned";
}

FeedbackCategory ParseCategory(const std::string& name) {
  if (name == "task_process") return FeedbackCategory::kTaskProcess;
  if (name == "self_regulatory") return FeedbackCategory::kSelfRegulatory;
  if (name.empty() || name == "unassigned") return FeedbackCategory::kUnassigned;
  throw ValidationError("unknown feedback category '" + name + "'");
}

nlohmann::ordered_json FeedbackToJson(const StructuredFeedback& fb) {
  nlohmann::ordered_json j;
  j["sample_id"] = fb.sample_id;
  j["target"] = fb.target;
  j["check"] = fb.check;
  j["path"] = fb.path;
  if (fb.category == FeedbackCategory::kUnassigned) {
    j["category"] = nullptr;
  } else {
    j["category"] = CategoryName(fb.category);
  }
  return j;
}

StructuredFeedback FeedbackFromJson(const nlohmann::json& j) {
  try {
    StructuredFeedback fb;
    fb.sample_id = j.at("sample_id").get<std::string>();
    fb.target = j.at("target").get<std::string>();
    fb.check = j.at("check").get<std::string>();
    fb.path = j.at("path").get<std::string>();
    const auto it = j.find("category");
    if (it != j.end() && !it->is_null()) fb.category = ParseCategory(it->get<std::string>());
    if (fb.target.empty() || fb.check.empty() || fb.path.empty()) {
      throw ValidationError("feedback for '" + fb.sample_id + "' has an empty section");
    }
    return fb;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("bad feedback record: ") + e.what());
  }
}

std::string Strategy::Tag() const {
  switch (kind) {
    case StrategyKind::kStandard: return "standard";
    case StrategyKind::kCot: return "cot";
    case StrategyKind::kDirect: return "direct";
    case StrategyKind::kRicp: return "ricp";
    case StrategyKind::kRefine: break;
  }
  std::string tag = "refine";
  if (ablation.self_reg) tag += "+self_reg";
  if (ablation.cluster_level) tag += "+cluster";
  if (ablation.cot) tag += "+cot";
  return tag;
}

namespace {

void ApplyComponent(const std::string& name, AblationFlags& flags) {
  if (name == "self_reg") {
    flags.self_reg = true;
  } else if (name == "cluster") {
    flags.cluster_level = true;
  } else if (name == "cot") {
    flags.cot = true;
  } else {
    throw UsageError("unknown ablation component '" + name +
                     "' (expected self_reg, cluster, cot)");
  }
}

}  // namespace

AblationFlags ParseAblation(const std::string& list) {
  AblationFlags flags;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = Trim(item);
    if (!item.empty()) ApplyComponent(item, flags);
  }
  return flags;
}

Strategy ParseStrategy(const std::string& tag) {
  Strategy s;
  const std::string head = tag.substr(0, tag.find('+'));
  if (head == "standard") {
    s.kind = StrategyKind::kStandard;
  } else if (head == "cot") {
    s.kind = StrategyKind::kCot;
  } else if (head == "direct") {
    s.kind = StrategyKind::kDirect;
  } else if (head == "refine") {
    s.kind = StrategyKind::kRefine;
  } else if (head == "ricp") {
    s.kind = StrategyKind::kRicp;
  } else {
    throw UsageError("unknown strategy '" + tag + "'");
  }
  if (head.size() < tag.size()) {
    if (s.kind != StrategyKind::kRefine) {
      throw UsageError("ablation components only apply to the refine strategy");
    }
    std::stringstream ss(tag.substr(head.size() + 1));
    std::string item;
    while (std::getline(ss, item, '+')) ApplyComponent(item, s.ablation);
  }
  return s;
}

}  // namespace refine
