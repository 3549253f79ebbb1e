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

// Run scoring, aggregation and comparison reports.

#ifndef REFINE_METRICS_H_
#define REFINE_METRICS_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "refine/corpus.h"
#include "refine/types.h"

namespace refine {

struct AccuracyCell {
  std::int64_t n = 0;
  std::int64_t correct = 0;
  double accuracy = 0.0;

  bool operator==(const AccuracyCell&) const = default;
};

struct TokenTotals {
  std::int64_t prompt = 0;
  std::int64_t completion = 0;
  std::int64_t total = 0;
  bool approximate = false;

  bool operator==(const TokenTotals&) const = default;
};

struct LatencyStats {
  double mean_ms = 0.0;
  double p50_ms = 0.0;
  double p95_ms = 0.0;
  double total_ms = 0.0;

  bool operator==(const LatencyStats&) const = default;
};

struct CallCounts {
  std::int64_t student = 0;
  std::int64_t teacher = 0;
  std::int64_t embedding = 0;

  bool operator==(const CallCounts&) const = default;
};

struct RunReport {
  std::string strategy;
  std::map<std::string, AccuracyCell> per_category;
  // Micro-averaged: total correct / total n.
  AccuracyCell overall;
  // Unweighted mean of the per-category accuracies.
  double macro_accuracy = 0.0;
  TokenTotals tokens;
  // Model-call latency.
  LatencyStats latency;
  // Retrieval pipeline time, kept apart from model calls.
  double retrieval_mean_ms = 0.0;
  double retrieval_total_ms = 0.0;
  CallCounts calls;

  bool operator==(const RunReport&) const = default;
};

// Nearest-rank percentile (p in (0, 100]) of `values`; 0 for an empty list.
double NearestRank(std::vector<double> values, double p);

// Throws ValidationError for an empty list, an unknown sample id, a repeated
// sample id or mixed strategy tags.
RunReport Score(const std::vector<Prediction>& predictions, const CorpusIndex& corpus);

struct ComparisonRow {
  std::string strategy;
  double delta_accuracy = 0.0;
  // Per-query means of this run over the reference; absent when the
  // reference mean is zero.
  std::optional<double> token_ratio;
  std::optional<double> prompt_token_ratio;
  std::optional<double> retrieval_time_ratio;
  // reference retrieval time / this run's; absent when this run's is zero.
  std::optional<double> speedup;

  bool operator==(const ComparisonRow&) const = default;
};

struct Comparison {
  std::string reference;
  std::vector<ComparisonRow> rows;

  bool operator==(const Comparison&) const = default;
};

// One row per report, in input order. Throws UsageError when no report has
// the reference tag.
Comparison Compare(const std::vector<RunReport>& reports, const std::string& reference);

nlohmann::ordered_json ReportToJson(const RunReport& report);
RunReport ReportFromJson(const nlohmann::json& j);
nlohmann::ordered_json ComparisonToJson(const Comparison& comparison);
Comparison ComparisonFromJson(const nlohmann::json& j);

inline constexpr char kReportCsvHeader[] =
    "strategy,category,n,correct,accuracy,prompt_tokens,completion_tokens,total_tokens,"
    "mean_latency_ms,p50,p95,student_calls,teacher_calls,embedding_calls";
inline constexpr char kComparisonCsvHeader[] =
    "strategy,reference,delta_accuracy,token_ratio,prompt_token_ratio,retrieval_time_ratio,"
    "speedup";

// Per-category rows then an "overall" row per report. Token, latency and call
// columns are run-level and repeated only on the overall row.
std::string ReportsToCsv(const std::vector<RunReport>& reports);
std::string ComparisonToCsv(const Comparison& comparison);

enum class ReportFormat { kJson, kCsv };

// Stable bytes for a given input. Throws IoError.
void EmitReports(const std::vector<RunReport>& reports, const std::filesystem::path& path,
                 ReportFormat format);
void EmitComparison(const Comparison& comparison, const std::filesystem::path& path,
                    ReportFormat format);

}  // namespace refine

#endif  // REFINE_METRICS_H_
