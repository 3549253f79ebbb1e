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

// Multiple-choice image QA corpora: the canonical JSONL record, validation,
// and seeded train/test splitting.
//
// Canonical record (one per line):
//   {"id": str,
//    "image": {"path": str} | {"b64": str, "media_type": str},
//    "question": str,
//    "choices": [{"letter": "A", "text": str}, ...],
//    "answer": "B",
//    "category": str}

#ifndef REFINE_CORPUS_H_
#define REFINE_CORPUS_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace refine {

inline constexpr char kMaxChoiceLetter = 'E';

// Either a path (relative paths resolve against the corpus file's directory)
// or an inline base64 payload.
struct ImageRef {
  std::string path;
  std::string b64;
  std::string media_type;

  bool inline_payload() const { return path.empty(); }
  bool operator==(const ImageRef&) const = default;
};

struct Choice {
  char letter = 'A';
  std::string text;
  bool operator==(const Choice&) const = default;
};

struct Sample {
  std::string id;
  ImageRef image;
  std::string question;
  std::vector<Choice> choices;
  char answer = 'A';
  std::string category;

  std::string letters() const;
  bool operator==(const Sample&) const = default;
};

struct Split {
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;
  bool operator==(const Split&) const = default;
};

// Throws ValidationError naming the sample id and the violated invariant.
void ValidateSample(const Sample& sample);

// Strict decode of one canonical record. Throws ValidationError.
Sample SampleFromJson(const nlohmann::json& j);
// Lenient decode for ingestion: letters are case-folded, choices may be a
// list of strings (lettered A, B, ...) or a letter->text object, and choices
// are sorted by letter. The result is validated.
Sample SampleFromRawJson(const nlohmann::json& j);
nlohmann::ordered_json SampleToJson(const Sample& sample);

// Loads a canonical JSONL corpus in file order. Blank lines are skipped.
// Throws ParseError (with line number) on malformed JSON or invalid records
// and on duplicate ids.
std::vector<Sample> LoadCorpus(const std::filesystem::path& path);
std::vector<Sample> ParseCorpus(const std::string& text);
std::string SerializeCorpus(const std::vector<Sample>& samples);

// Shuffles ids with SplitMix64(seed) and gives the first round(fraction * N)
// of the permutation to train. Requires N >= 2 and fraction in (0, 1).
Split SplitCorpus(const std::vector<Sample>& samples, double fraction,
                  std::uint64_t seed);

// Raw image bytes; paths resolve against `base_dir`.
std::string ReadImageBytes(const ImageRef& image,
                           const std::filesystem::path& base_dir);
std::string GuessMediaType(const std::string& path);

// id -> index lookup over a loaded corpus.
class CorpusIndex {
 public:
  explicit CorpusIndex(const std::vector<Sample>& samples);
  const Sample* Find(const std::string& id) const;
  // Throws ValidationError for an unknown id.
  const Sample& At(const std::string& id) const;

 private:
  const std::vector<Sample>* samples_;
  std::map<std::string, std::size_t> by_id_;
};

}  // namespace refine

#endif  // REFINE_CORPUS_H_
