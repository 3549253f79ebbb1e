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

// Comparison strategies: seeded k-means over embeddings, cluster-level
// principles, ablation composition, and the RICP-style retriever.

#ifndef REFINE_BASELINES_H_
#define REFINE_BASELINES_H_

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "refine/errorbook.h"
#include "refine/feedback.h"
#include "refine/gateway.h"
#include "refine/prompts.h"
#include "refine/types.h"

namespace refine {

inline constexpr int kDefaultClusterCount = 5;
inline constexpr std::size_t kPrincipleSampleSize = 20;
inline constexpr int kKMeansRestarts = 10;

struct LabeledPoint {
  std::string id;
  EmbeddingVector vector;
};

struct ClusterModel {
  int k = 0;
  std::uint64_t seed = 0;
  std::size_t dim = 0;
  std::vector<EmbeddingVector> centroids;
  std::map<std::string, int> assignments;

  bool operator==(const ClusterModel&) const = default;
};

struct ClusterPrinciple {
  int cluster_index = 0;
  // Absent when the teacher failed twice.
  std::optional<std::string> text;
  std::vector<std::string> source_ids;

  bool operator==(const ClusterPrinciple&) const = default;
};

// Within-cluster sum of squared Euclidean distances.
double ClusterSse(const std::vector<LabeledPoint>& points, const ClusterModel& model);

// k-means++ seeding from SplitMix64(seed), then Lloyd iterations until the
// assignment is stable or `max_iters` is reached. Assignment uses squared
// Euclidean distance with ties to the lower index; an empty cluster has its
// centroid moved onto the point farthest from its own centroid. Arithmetic is
// double; centroids are stored as float. When given, `sse_trace` receives the
// SSE after each assignment step. Throws ValidationError when there are
// fewer points than k or dims differ.
// Seeded k-means++ with `restarts` independent seedings; each is refined by
// Lloyd iterations and the lowest-SSE result is kept. `sse_trace` receives the
// per-iteration SSE of the kept run.
ClusterModel KMeans(const std::vector<LabeledPoint>& points, int k, std::uint64_t seed,
                    int max_iters, std::vector<double>* sse_trace = nullptr,
                    int restarts = kKMeansRestarts);

// Argmax cosine similarity to the centroids, ties to the lower index.
int AssignCluster(const ClusterModel& model, const EmbeddingVector& query);

// L2-normalized copy. Throws ValidationError on a zero vector.
EmbeddingVector Normalized(const EmbeddingVector& v);

// For each non-empty cluster: a seeded sample of min(20, size) of its
// task/process feedback, summarized by the teacher into one principle (one
// stricter retry, then absent). Throws ValidationError when a feedback's
// sample is not assigned.
std::vector<ClusterPrinciple> GenerateClusterFeedback(
    const ClusterModel& model, const std::vector<StructuredFeedback>& feedbacks,
    const ModelHandle& teacher, std::uint64_t seed,
    std::vector<TeacherExchange>* audit = nullptr,
    std::size_t sample_size = kPrincipleSampleSize);

std::vector<Message> RenderPrinciplePrompt(int cluster_index,
                                           const std::vector<const StructuredFeedback*>& sources,
                                           bool strict = false);

// REFINE plus the flagged components. Throws ValidationError when
// task_process is off.
Strategy ComposeStrategy(const AblationFlags& flags);

nlohmann::ordered_json ClusterModelToJson(const ClusterModel& model);
ClusterModel ClusterModelFromJson(const nlohmann::json& j);
std::string SerializePrinciples(const std::vector<ClusterPrinciple>& principles);
std::vector<ClusterPrinciple> ParsePrinciples(const std::string& jsonl);

struct RicpOptions {
  // Nearest entries considered for question-level insights.
  std::size_t candidates = 10;
  // Insights kept after grouping the candidates.
  int groups = 3;
  std::uint64_t seed = 0;
  int max_iters = 20;
};

// RICP-style retrieval: the query's cluster principle plus question-level
// insights. The insights come from the nearest `candidates` entries, grouped
// per query by k-means into `groups` clusters, keeping the highest-ranked
// member closest to each group centroid.
class RicpRetriever {
 public:
  RicpRetriever(const ErrorBook& book, const ClusterModel& model,
                std::vector<ClusterPrinciple> principles, RicpOptions options);

  Attachment Retrieve(const EmbeddingVector& query) const;

 private:
  const ErrorBook& book_;
  const ClusterModel& model_;
  std::map<int, std::string> principle_text_;
  RicpOptions options_;
};

}  // namespace refine

#endif  // REFINE_BASELINES_H_
