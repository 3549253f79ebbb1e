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

// Shared fixtures for the unit and acceptance tests.

#ifndef REFINE_TESTS_SUPPORT_H_
#define REFINE_TESTS_SUPPORT_H_

#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "refine/corpus.h"
#include "refine/errorbook.h"
#include "refine/gateway.h"
#include "refine/types.h"
#include "refine/util.h"

namespace refine::testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "refine");
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// Components uniform in [-1, 1); never all zero.
EmbeddingVector RandomVector(SplitMix64& rng, std::size_t dim);
EmbeddingVector RandomUnit(SplitMix64& rng, std::size_t dim);

StructuredFeedback MakeFeedback(const std::string& id,
                                FeedbackCategory category = FeedbackCategory::kTaskProcess);

// Ids "e000000".. in shuffled order; about one entry in ten duplicates the
// embedding of an earlier one so that ties occur.
ErrorBook RandomBook(SplitMix64& rng, std::size_t n, std::size_t dim, bool with_ties = true);

Sample MakeSample(const std::string& id, const std::string& question, char answer,
                  const std::string& category = "perception", int n_choices = 4);

// Argmax of CosineSimilarity over every entry, ties to the smallest id.
std::size_t BruteForceNearest(const ErrorBook& book, const EmbeddingVector& query);

// The mock world behind the end-to-end checks.
//
//   corpus.jsonl  50 samples s00..s49; the student answers s<i> wrongly under
//                 standard prompting iff i is designated (i % 5 in {0, 2}),
//                 so standard pass@1 is 0.60.
//   twins.jsonl   one near-duplicate t<i> per designated s<i> (same answer,
//                 embedding within cosine 0.99 of the source).
//   student.jsonl correct whenever the prompt carries "FBTOKEN-s<i>".
//   teacher.jsonl keyed triples (~150 tokens each), TASK/SELF labels, and a
//                 cluster principle (~100 tokens).
//   embed.jsonl   random unit vectors (dim 64) keyed by question.
//   config.json   all three providers on fixtures, cache under out/cache.
struct World {
  std::filesystem::path dir;
  std::filesystem::path config;
  std::filesystem::path twins_config;
  std::vector<std::string> designated;       // s-ids answered wrongly
  std::vector<std::string> twins;            // matching t-ids
  std::set<std::string> self_regulatory;     // s-ids labelled SELF
  std::size_t dim = 64;
};

// `self_reg_fraction` of the designated errors, spread evenly, get SELF.
World MakeWorld(const std::filesystem::path& dir, double self_reg_fraction = 0.0,
                std::uint64_t seed = 7);

int CountLines(const std::string& text);

}  // namespace refine::testing

#endif  // REFINE_TESTS_SUPPORT_H_
