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

// The error-book: structured feedback indexed by the joint image-question
// embedding of the error it came from, with exact cosine retrieval.
//
// On-disk format (.refb), all integers little-endian:
//
//   "REFB"                    4-byte magic
//   version                   u32, currently 1
//   dim                       u32
//   count                     u32
//   model id                  u32 length + UTF-8 bytes
//   count x entry:
//     sample id               u32 length + UTF-8 bytes
//     embedding               dim x f32 (IEEE-754 bit patterns)
//     feedback                u32 length + UTF-8 JSON record
//                             {"sample_id","target","check","path","category"}
//   crc32                     u32 over every preceding byte (zlib polynomial)

#ifndef REFINE_ERRORBOOK_H_
#define REFINE_ERRORBOOK_H_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "refine/corpus.h"
#include "refine/gateway.h"
#include "refine/types.h"

namespace refine {

inline constexpr char kErrorBookMagic[4] = {'R', 'E', 'F', 'B'};
inline constexpr std::uint32_t kErrorBookVersion = 1;

struct ErrorBookEntry {
  std::string sample_id;
  EmbeddingVector embedding;
  StructuredFeedback feedback;

  bool operator==(const ErrorBookEntry&) const = default;
};

// Immutable after construction; safe for concurrent retrieval.
//
// An ErrorBook proper holds task/process feedback only. The same container
// (and file format) also backs the store of filtered-out self-regulatory
// items used by the Self-Reg ablation; `category` says which one this is.
class ErrorBook {
 public:
  // Throws ValidationError: zero dim, mismatched entry dim, duplicate sample
  // ids, an all-zero embedding, or feedback of another category.
  ErrorBook(std::size_t dim, std::string embed_model_id, std::vector<ErrorBookEntry> entries,
            FeedbackCategory category = FeedbackCategory::kTaskProcess);

  std::size_t dim() const { return dim_; }
  const std::string& embed_model_id() const { return embed_model_id_; }
  const std::vector<ErrorBookEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  FeedbackCategory category() const { return category_; }
  // sqrt(sum of squares) of entry i, accumulated in double in index order.
  double norm(std::size_t i) const { return norms_[i]; }

  bool operator==(const ErrorBook& o) const {
    return dim_ == o.dim_ && embed_model_id_ == o.embed_model_id_ && entries_ == o.entries_ &&
           category_ == o.category_;
  }

 private:
  std::size_t dim_;
  std::string embed_model_id_;
  std::vector<ErrorBookEntry> entries_;
  FeedbackCategory category_;
  std::vector<double> norms_;
};

struct RetrievalResult {
  const ErrorBookEntry* entry = nullptr;
  std::size_t index = 0;
  double similarity = 0.0;
};

// a.b / (|a| |b|) with 64-bit accumulation in index order, clamped to
// [-1, 1]. Throws ValidationError on a dim mismatch or a zero-norm vector.
double CosineSimilarity(std::span<const float> a, std::span<const float> b);
// Same accumulation over 64-bit inputs, e.g. vectors rescaled in double.
double CosineSimilarity(std::span<const double> a, std::span<const double> b);
double CosineSimilarity(const EmbeddingVector& a, const EmbeddingVector& b);

// Exact argmax of cosine similarity over every entry; ties go to the
// smallest sample id. The returned similarity is bit-identical to
// CosineSimilarity(query, entry.embedding). Throws ValidationError on an
// empty book, dim mismatch or zero query.
RetrievalResult RetrieveNearest(const ErrorBook& book, const EmbeddingVector& query);

// The k best entries by (similarity desc, sample id asc).
std::vector<RetrievalResult> RetrieveTopK(const ErrorBook& book, const EmbeddingVector& query,
                                          std::size_t k);

// One entry per task/process feedback item, embedded from its sample's
// (image, question). A feedback whose sample has the same image bytes and
// question text as an earlier one is dropped; dropped ids are appended to
// `dropped` when given. Throws ValidationError for a non task/process item
// or an unknown sample id, ProviderError from the embedder.
ErrorBook BuildErrorBook(const std::vector<StructuredFeedback>& feedbacks,
                         const CorpusIndex& corpus, const std::filesystem::path& image_base_dir,
                         EmbeddingClient& embedder, std::vector<std::string>* dropped = nullptr,
                         FeedbackCategory category = FeedbackCategory::kTaskProcess);

// The question block, then the retrieved feedback as a task/process block,
// then the answer instruction. Deleting the block yields
// StandardPromptText(question_block).
std::string EnhancePrompt(const std::string& question_block, const RetrievalResult& retrieved);

std::string SerializeErrorBook(const ErrorBook& book);
// Throws FormatError (kBadMagic, kVersion, kTruncated, kChecksum, kCorrupt)
// and ValidationError when the decoded book breaks an invariant for
// `category`.
ErrorBook DeserializeErrorBook(std::string_view bytes,
                               FeedbackCategory category = FeedbackCategory::kTaskProcess);

void SaveErrorBook(const ErrorBook& book, const std::filesystem::path& path);
ErrorBook LoadErrorBook(const std::filesystem::path& path,
                        FeedbackCategory category = FeedbackCategory::kTaskProcess);

// Debug mirror; floats are printed in decimal, so this is lossy.
nlohmann::ordered_json ErrorBookToJson(const ErrorBook& book);

}  // namespace refine

#endif  // REFINE_ERRORBOOK_H_
