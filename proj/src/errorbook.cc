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

#include "refine/errorbook.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <set>

#include "refine/prompts.h"

namespace refine {

namespace {

template <typename T>
double SumOfSquares(std::span<const T> v) {
  double s = 0.0;
  for (T x : v) s += static_cast<double>(x) * static_cast<double>(x);
  return s;
}

template <typename T>
double Dot(std::span<const T> a, std::span<const T> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  }
  return s;
}

double Clamp(double c) { return std::clamp(c, -1.0, 1.0); }

// (similarity desc, sample id asc).
bool Better(double sim_a, const std::string& id_a, double sim_b, const std::string& id_b) {
  if (sim_a != sim_b) return sim_a > sim_b;
  return id_a < id_b;
}

}  // namespace

ErrorBook::ErrorBook(std::size_t dim, std::string embed_model_id,
                     std::vector<ErrorBookEntry> entries, FeedbackCategory category)
    : dim_(dim),
      embed_model_id_(std::move(embed_model_id)),
      entries_(std::move(entries)),
      category_(category) {
  if (dim_ == 0) throw ValidationError("error-book dim must be positive");
  if (category_ == FeedbackCategory::kUnassigned) {
    throw ValidationError("error-book category must be assigned");
  }
  std::set<std::string> ids;
  norms_.reserve(entries_.size());
  for (const ErrorBookEntry& e : entries_) {
    if (e.embedding.dim() != dim_) {
      throw ValidationError("entry '" + e.sample_id + "' has dim " +
                            std::to_string(e.embedding.dim()) + ", book dim is " +
                            std::to_string(dim_));
    }
    if (!ids.insert(e.sample_id).second) {
      throw ValidationError("duplicate error-book sample id '" + e.sample_id + "'");
    }
    if (e.feedback.category != category_) {
      throw ValidationError("entry '" + e.sample_id + "' carries " +
                            CategoryName(e.feedback.category) + " feedback in a " +
                            CategoryName(category_) + " book");
    }
    if (e.feedback.sample_id != e.sample_id) {
      throw ValidationError("entry '" + e.sample_id + "' holds feedback for '" +
                            e.feedback.sample_id + "'");
    }
    const double ss = SumOfSquares<float>(e.embedding.values);
    if (ss == 0.0) throw ValidationError("entry '" + e.sample_id + "' has a zero embedding");
    norms_.push_back(std::sqrt(ss));
  }
}

namespace {

template <typename T>
double Cosine(std::span<const T> a, std::span<const T> b) {
  if (a.size() != b.size()) {
    throw ValidationError("cosine of vectors with dims " + std::to_string(a.size()) + " and " +
                          std::to_string(b.size()));
  }
  const double na2 = SumOfSquares(a);
  const double nb2 = SumOfSquares(b);
  if (na2 == 0.0 || nb2 == 0.0) throw ValidationError("cosine of a zero-norm vector");
  return Clamp(Dot(a, b) / (std::sqrt(na2) * std::sqrt(nb2)));
}

}  // namespace

double CosineSimilarity(std::span<const float> a, std::span<const float> b) {
  return Cosine(a, b);
}

double CosineSimilarity(std::span<const double> a, std::span<const double> b) {
  return Cosine(a, b);
}

double CosineSimilarity(const EmbeddingVector& a, const EmbeddingVector& b) {
  return CosineSimilarity(std::span<const float>(a.values), std::span<const float>(b.values));
}

namespace {

double QueryNorm(const ErrorBook& book, const EmbeddingVector& query) {
  if (book.empty()) throw ValidationError("retrieval from an empty error-book");
  if (query.dim() != book.dim()) {
    throw ValidationError("query dim " + std::to_string(query.dim()) + " != book dim " +
                          std::to_string(book.dim()));
  }
  const double ss = SumOfSquares<float>(query.values);
  if (ss == 0.0) throw ValidationError("zero-norm query embedding");
  return std::sqrt(ss);
}

}  // namespace

RetrievalResult RetrieveNearest(const ErrorBook& book, const EmbeddingVector& query) {
  const double qn = QueryNorm(book, query);
  const auto& entries = book.entries();
  RetrievalResult best;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const double sim =
        Clamp(Dot<float>(query.values, entries[i].embedding.values) / (qn * book.norm(i)));
    if (best.entry == nullptr ||
        Better(sim, entries[i].sample_id, best.similarity, best.entry->sample_id)) {
      best = {&entries[i], i, sim};
    }
  }
  return best;
}

std::vector<RetrievalResult> RetrieveTopK(const ErrorBook& book, const EmbeddingVector& query,
                                          std::size_t k) {
  const double qn = QueryNorm(book, query);
  const auto& entries = book.entries();
  std::vector<RetrievalResult> all;
  all.reserve(entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    all.push_back({&entries[i], i,
                   Clamp(Dot<float>(query.values, entries[i].embedding.values) / (qn * book.norm(i)))});
  }
  const std::size_t n = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n), all.end(),
                    [](const RetrievalResult& a, const RetrievalResult& b) {
                      return Better(a.similarity, a.entry->sample_id, b.similarity,
                                    b.entry->sample_id);
                    });
  all.resize(n);
  return all;
}

ErrorBook BuildErrorBook(const std::vector<StructuredFeedback>& feedbacks,
                         const CorpusIndex& corpus, const std::filesystem::path& image_base_dir,
                         EmbeddingClient& embedder, std::vector<std::string>* dropped,
                         FeedbackCategory category) {
  for (const StructuredFeedback& fb : feedbacks) {
    if (fb.category != category) {
      throw ValidationError("cannot build a " + std::string(CategoryName(category)) +
                            " book from " + CategoryName(fb.category) + " feedback ('" +
                            fb.sample_id + "')");
    }
    corpus.At(fb.sample_id);
  }
  std::vector<ErrorBookEntry> entries;
  std::set<std::string> seen_content;
  for (const StructuredFeedback& fb : feedbacks) {
    const Sample& sample = corpus.At(fb.sample_id);
    const std::string image = ReadImageBytes(sample.image, image_base_dir);
    const std::string content_key = EmbeddingClient::CacheKey("content", image, sample.question);
    if (!seen_content.insert(content_key).second) {
      LogInfo("error-book: dropping '" + fb.sample_id +
              "', same image and question as an earlier entry");
      if (dropped != nullptr) dropped->push_back(fb.sample_id);
      continue;
    }
    const std::string media =
        sample.image.media_type.empty() ? GuessMediaType(sample.image.path) : sample.image.media_type;
    entries.push_back({fb.sample_id, embedder.Embed(image, media, sample.question), fb});
  }
  return ErrorBook(embedder.dim(), embedder.model_id(), std::move(entries), category);
}

std::string EnhancePrompt(const std::string& question_block, const RetrievalResult& retrieved) {
  if (retrieved.entry == nullptr) throw ValidationError("empty retrieval result");
  return question_block + "\n\n" +
         RenderBlock(kTaskProcessOpen, RenderFeedbackTriple(retrieved.entry->feedback)) +
         kAnswerInstruction;
}

namespace {

void PutU32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t LoadU32(std::string_view bytes, std::size_t pos) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
  }
  return v;
}

void PutString(std::string& out, std::string_view s) {
  if (s.size() > UINT32_MAX) throw ValidationError("string too long for .refb");
  PutU32(out, static_cast<std::uint32_t>(s.size()));
  out.append(s);
}

class Reader {
 public:
  // `end` excludes the trailing checksum.
  Reader(std::string_view bytes, std::size_t end) : bytes_(bytes), end_(end) {}

  std::uint32_t U32() {
    Need(4);
    const std::uint32_t v = LoadU32(bytes_, pos_);
    pos_ += 4;
    return v;
  }

  std::string String() {
    const std::uint32_t n = U32();
    Need(n);
    std::string s(bytes_.substr(pos_, n));
    pos_ += n;
    return s;
  }

  float F32() { return std::bit_cast<float>(U32()); }

  std::size_t pos() const { return pos_; }

 private:
  void Need(std::size_t n) {
    if (n > end_ - pos_) throw FormatError(FormatErrorKind::kTruncated, ".refb file is truncated");
  }

  std::string_view bytes_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string SerializeErrorBook(const ErrorBook& book) {
  std::string out(kErrorBookMagic, sizeof(kErrorBookMagic));
  PutU32(out, kErrorBookVersion);
  PutU32(out, static_cast<std::uint32_t>(book.dim()));
  PutU32(out, static_cast<std::uint32_t>(book.size()));
  PutString(out, book.embed_model_id());
  for (const ErrorBookEntry& e : book.entries()) {
    PutString(out, e.sample_id);
    for (float x : e.embedding.values) PutU32(out, std::bit_cast<std::uint32_t>(x));
    PutString(out, FeedbackToJson(e.feedback).dump());
  }
  const std::uint32_t crc = Crc32(std::span<const std::uint8_t>(
      reinterpret_cast<const std::uint8_t*>(out.data()), out.size()));
  PutU32(out, crc);
  return out;
}

ErrorBook DeserializeErrorBook(std::string_view bytes, FeedbackCategory category) {
  if (bytes.size() < 4) throw FormatError(FormatErrorKind::kTruncated, ".refb file is truncated");
  if (std::memcmp(bytes.data(), kErrorBookMagic, 4) != 0) {
    throw FormatError(FormatErrorKind::kBadMagic, "not a .refb file (bad magic)");
  }
  if (bytes.size() < 8 + 4) throw FormatError(FormatErrorKind::kTruncated, ".refb file is truncated");
  const std::size_t body_end = bytes.size() - 4;
  Reader header(bytes, body_end);
  header.U32();  // magic
  const std::uint32_t version = header.U32();
  if (version != kErrorBookVersion) {
    throw FormatError(FormatErrorKind::kVersion,
                      ".refb version " + std::to_string(version) + " is not supported (reader is " +
                          std::to_string(kErrorBookVersion) + ")");
  }

  Reader r(bytes, body_end);
  r.U32();
  r.U32();
  const std::uint32_t dim = r.U32();
  const std::uint32_t count = r.U32();
  std::string model_id = r.String();
  struct RawEntry {
    std::string id;
    EmbeddingVector embedding;
    std::string feedback_json;
  };
  std::vector<RawEntry> raw;
  // Every entry needs at least 12 + 4*dim bytes; reject absurd counts early.
  const std::uint64_t min_entry = 12 + 4ULL * dim;
  if (static_cast<std::uint64_t>(count) * min_entry > body_end) {
    throw FormatError(FormatErrorKind::kTruncated, ".refb file is truncated");
  }
  raw.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    RawEntry e;
    e.id = r.String();
    e.embedding.values.resize(dim);
    for (std::uint32_t d = 0; d < dim; ++d) e.embedding.values[d] = r.F32();
    e.feedback_json = r.String();
    raw.push_back(std::move(e));
  }
  if (r.pos() != body_end) {
    throw FormatError(FormatErrorKind::kCorrupt, ".refb file has trailing bytes");
  }
  const std::uint32_t stored = LoadU32(bytes, body_end);
  const std::uint32_t actual = Crc32(std::span<const std::uint8_t>(
      reinterpret_cast<const std::uint8_t*>(bytes.data()), body_end));
  if (stored != actual) {
    throw FormatError(FormatErrorKind::kChecksum, ".refb checksum mismatch");
  }

  std::vector<ErrorBookEntry> entries;
  entries.reserve(raw.size());
  for (RawEntry& e : raw) {
    StructuredFeedback fb;
    try {
      fb = FeedbackFromJson(nlohmann::json::parse(e.feedback_json));
    } catch (const nlohmann::json::exception& ex) {
      throw FormatError(FormatErrorKind::kCorrupt,
                        "entry '" + e.id + "' has malformed feedback: " + ex.what());
    }
    entries.push_back({std::move(e.id), std::move(e.embedding), std::move(fb)});
  }
  return ErrorBook(dim, std::move(model_id), std::move(entries), category);
}

void SaveErrorBook(const ErrorBook& book, const std::filesystem::path& path) {
  WriteFile(path, SerializeErrorBook(book));
}

ErrorBook LoadErrorBook(const std::filesystem::path& path, FeedbackCategory category) {
  return DeserializeErrorBook(ReadFile(path), category);
}

nlohmann::ordered_json ErrorBookToJson(const ErrorBook& book) {
  nlohmann::ordered_json j;
  j["version"] = kErrorBookVersion;
  j["dim"] = book.dim();
  j["embed_model_id"] = book.embed_model_id();
  j["category"] = CategoryName(book.category());
  auto entries = nlohmann::ordered_json::array();
  for (const ErrorBookEntry& e : book.entries()) {
    nlohmann::ordered_json je;
    je["sample_id"] = e.sample_id;
    je["embedding"] = e.embedding.values;
    je["feedback"] = FeedbackToJson(e.feedback);
    entries.push_back(std::move(je));
  }
  j["entries"] = std::move(entries);
  return j;
}

}  // namespace refine
