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

// End-to-end commands: ingest, build, eval, report.
//
// Artifacts written next to an error-book `<dir>/book.refb` by build and read
// back by eval:
//   book.json          lossy JSON mirror of the book
//   feedback.jsonl     every parsed and classified feedback item
//   selfreg.refb       the filtered-out self-regulatory items
//   audit.jsonl        one line per teacher call
//   train_predictions.jsonl
//   clusters.json, principles.jsonl   when enough entries exist to cluster

#ifndef REFINE_PIPELINE_H_
#define REFINE_PIPELINE_H_

#include <cstdint>
#include <exception>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "refine/baselines.h"
#include "refine/metrics.h"
#include "refine/types.h"

namespace refine {

struct ProviderConfig {
  std::string model_id;
  // Exactly one of endpoint / fixture.
  std::string endpoint;
  std::filesystem::path fixture;
  // Defaults to the role's REFINE_*_API_KEY variable.
  std::string api_key_env;
  // Embedder only.
  std::size_t dim = 0;
  // Chat only.
  int max_output_tokens = 1024;

  bool configured() const { return !model_id.empty() || !endpoint.empty() || !fixture.empty(); }
};

struct RunConfig {
  std::filesystem::path corpus;
  // Images given by relative path resolve here; defaults to the corpus dir.
  std::filesystem::path image_dir;
  double fraction = 0.8;
  std::uint64_t split_seed = 0;
  ProviderConfig student;
  ProviderConfig teacher;
  ProviderConfig embedder;
  std::string strategy = "standard";
  AblationFlags ablate;
  int max_concurrency = 8;
  int max_retries = 2;
  std::filesystem::path out = "out";
  std::filesystem::path cache_dir;
  std::optional<std::size_t> limit;
  int kmeans_k = kDefaultClusterCount;
  std::uint64_t kmeans_seed = 0;
  int kmeans_max_iters = 100;
  std::uint64_t principle_seed = 0;
  RicpOptions ricp;

  // Fraction in (0, 1), concurrency >= 1, and every configured provider
  // names exactly one of endpoint / fixture. Throws ValidationError.
  void Validate() const;
  // The strategy with `ablate` folded in. Throws UsageError.
  Strategy ResolvedStrategy() const;
};

// Unknown keys are rejected. Relative paths resolve against `base_dir`.
RunConfig RunConfigFromJson(const nlohmann::json& j, const std::filesystem::path& base_dir);
RunConfig LoadRunConfig(const std::filesystem::path& path);
// Snapshot with absolute paths; no secrets (only env var names).
nlohmann::ordered_json RunConfigToJson(const RunConfig& config);

// Lenient raw records to validated canonical samples, keeping the first
// `limit` records. Throws ParseError with the line number.
std::vector<Sample> IngestCorpus(const std::string& raw_jsonl,
                                 std::optional<std::size_t> limit = std::nullopt);
void CmdIngest(const std::filesystem::path& input, const std::filesystem::path& output,
               std::optional<std::size_t> limit);

enum class SplitPart { kTrain, kTest, kAll };
SplitPart ParseSplitPart(const std::string& name);

struct BuildResult {
  std::size_t errors = 0;
  std::size_t feedback_parsed = 0;
  std::size_t task_process = 0;
  std::size_t self_regulatory = 0;
  std::size_t book_entries = 0;
  std::size_t teacher_calls = 0;
  std::size_t clusters = 0;
  std::filesystem::path book_path;
};

// Standard-prompt eval of the student on `part` (normally the train split),
// teacher feedback for every error, classification and filtering, then the
// embedded book. `book_path` defaults to <out>/book.refb.
BuildResult CmdBuild(const RunConfig& config, std::optional<std::filesystem::path> book_path,
                     SplitPart part = SplitPart::kTrain);

struct EvalResult {
  std::vector<Prediction> predictions;
  std::filesystem::path predictions_path;
  std::filesystem::path telemetry_path;
  std::size_t failures = 0;
};

// Writes <out>/predictions_<tag>.jsonl, the telemetry sidecar
// <out>/telemetry_<tag>.jsonl and <out>/resolved_config.json. A strategy
// that consumes feedback needs `book_path` (UsageError otherwise).
EvalResult CmdEval(const RunConfig& config, const std::optional<std::filesystem::path>& book_path,
                   SplitPart part);

std::filesystem::path TelemetryPathFor(const std::filesystem::path& predictions_path);

struct ReportResult {
  std::vector<RunReport> reports;
  std::optional<Comparison> comparison;
};

// Scores each predictions file (merging its telemetry sidecar when present)
// and writes report.{json,csv}, plus comparison.{json,csv} when a reference
// is given. Throws UsageError for an absent reference.
ReportResult CmdReport(const std::vector<std::filesystem::path>& prediction_files,
                       const std::filesystem::path& corpus, const std::filesystem::path& out_dir,
                       const std::optional<std::string>& reference);

// 0 success, 1 validation/usage/format, 2 provider failure, 3 I/O.
int ExitCodeFor(std::exception_ptr error);

}  // namespace refine

#endif  // REFINE_PIPELINE_H_
