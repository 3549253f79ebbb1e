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

// Student evaluation: prompt rendering, answer extraction, pass@1 runs and
// error collection.

#ifndef REFINE_HARNESS_H_
#define REFINE_HARNESS_H_

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "refine/corpus.h"
#include "refine/gateway.h"
#include "refine/prompts.h"
#include "refine/types.h"

namespace refine {

// Ordered rules, first match wins:
//   1. "answer is (X)" / "answer: X" (the last such phrase in the output);
//   2. the whole trimmed output is a single letter, optionally wrapped in
//      parentheses or followed by a period;
//   3. a letter in parentheses at the very end of the output;
//   4. otherwise absent.
// Only letters in `valid_letters` are accepted.
std::optional<char> ExtractAnswer(std::string_view raw_output,
                                  std::string_view valid_letters);

// What a retrieval hook hands back for one query.
struct Retrieved {
  Attachment attachment;
  // Time from having the query embedding to having the attachment.
  double retrieval_ms = 0.0;
  std::int64_t embedding_calls = 0;
  std::int64_t teacher_calls = 0;
};

// Computes the feedback attachment for one sample. May throw ProviderError
// (recorded as a per-sample failure).
using RetrievalHook =
    std::function<Retrieved(const Sample& sample, const std::string& image_bytes)>;

struct EvalOptions {
  std::filesystem::path image_base_dir;
  int max_concurrency = 8;
};

inline constexpr char kFailedOutputPrefix[] = "<error: ";

// One prediction per id, in input order, each from exactly one student call.
// Provider failures become failed predictions (correct = false, raw_output =
// "<error: ...>"); configuration faults throw UsageError.
std::vector<Prediction> EvaluateSplit(const std::vector<std::string>& ids,
                                      const CorpusIndex& corpus,
                                      const Strategy& strategy,
                                      const ModelHandle& student,
                                      const RetrievalHook& retriever,
                                      const EvalOptions& options);

// Incorrect predictions joined with their samples, in prediction order.
// Throws ValidationError for an unknown sample id.
std::vector<ErrorCase> CollectErrors(const std::vector<Prediction>& predictions,
                                     const CorpusIndex& corpus);

double PassAt1(const std::vector<Prediction>& predictions);

// Predictions JSONL:
//   {"sample_id", "strategy", "raw_output", "extracted", "correct",
//    "usage": {"prompt_tokens", "completion_tokens", "approximate"},
//    "latency_ms"}
std::string SerializePredictions(const std::vector<Prediction>& predictions);
std::vector<Prediction> ParsePredictions(const std::string& jsonl);

// Telemetry sidecar JSONL:
//   {"sample_id", "retrieval_ms", "student_calls", "teacher_calls",
//    "embedding_calls"}
std::string SerializeTelemetry(const std::vector<Prediction>& predictions);
// Merges sidecar records into `predictions` by sample id.
void MergeTelemetry(const std::string& jsonl, std::vector<Prediction>& predictions);

// Runs fn(i) for i in [0, n) on up to `workers` threads. The first exception
// is rethrown after all workers finish.
void ParallelFor(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

}  // namespace refine

#endif  // REFINE_HARNESS_H_
