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

#include "refine/corpus.h"

#include <algorithm>
#include <cmath>
#include <set>

#include "refine/util.h"

namespace refine {

using nlohmann::json;

std::string Sample::letters() const {
  std::string out;
  for (const Choice& c : choices) out.push_back(c.letter);
  return out;
}

void ValidateSample(const Sample& s) {
  auto fail = [&](const std::string& what) {
    throw ValidationError("sample '" + s.id + "': " + what);
  };
  if (s.id.empty()) throw ValidationError("sample with empty id");
  if (s.question.empty()) fail("question is empty");
  if (s.image.inline_payload()) {
    if (s.image.b64.empty()) fail("image has neither path nor b64 payload");
    if (s.image.media_type.empty()) fail("inline image lacks media_type");
  }
  if (s.choices.empty()) fail("no choices");
  char prev = 0;
  for (const Choice& c : s.choices) {
    if (c.letter < 'A' || c.letter > kMaxChoiceLetter) {
      fail(std::string("choice letter '") + c.letter + "' outside A..E");
    }
    if (c.letter <= prev) {
      fail("choice letters must be unique and ascending");
    }
    prev = c.letter;
  }
  if (s.letters().find(s.answer) == std::string::npos) {
    fail(std::string("answer '") + s.answer + "' is not among the choice letters");
  }
}

namespace {

const json& Require(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw ValidationError(std::string("missing field '") + key + "'");
  return *it;
}

std::string RequireString(const json& j, const char* key) {
  const json& v = Require(j, key);
  if (!v.is_string()) throw ValidationError(std::string("field '") + key + "' must be a string");
  return v.get<std::string>();
}

char ParseLetter(const std::string& text, bool fold_case, const std::string& what) {
  std::string t = fold_case ? ToUpper(Trim(text)) : text;
  if (t.size() != 1) throw ValidationError(what + " must be a single letter, got '" + text + "'");
  return t[0];
}

ImageRef ParseImage(const json& j) {
  if (!j.is_object()) throw ValidationError("field 'image' must be an object");
  ImageRef ref;
  const bool has_path = j.contains("path");
  const bool has_b64 = j.contains("b64");
  if (has_path == has_b64) {
    throw ValidationError("field 'image' needs exactly one of 'path' or 'b64'");
  }
  if (has_path) {
    ref.path = RequireString(j, "path");
    if (ref.path.empty()) throw ValidationError("image path is empty");
    if (j.contains("media_type")) ref.media_type = RequireString(j, "media_type");
  } else {
    ref.b64 = RequireString(j, "b64");
    ref.media_type = RequireString(j, "media_type");
  }
  return ref;
}

std::string IdOf(const json& j) {
  if (j.is_object() && j.contains("id") && j["id"].is_string()) return j["id"].get<std::string>();
  return "?";
}

template <typename Fn>
Sample WithId(const json& j, Fn&& fn) {
  try {
    return fn();
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    if (msg.rfind("sample '", 0) == 0) throw;
    throw ValidationError("sample '" + IdOf(j) + "': " + msg);
  }
}

}  // namespace

Sample SampleFromJson(const json& j) {
  return WithId(j, [&] {
    if (!j.is_object()) throw ValidationError("record must be a JSON object");
    Sample s;
    s.id = RequireString(j, "id");
    s.image = ParseImage(Require(j, "image"));
    s.question = RequireString(j, "question");
    const json& choices = Require(j, "choices");
    if (!choices.is_array()) throw ValidationError("field 'choices' must be an array");
    for (const json& c : choices) {
      if (!c.is_object()) throw ValidationError("each choice must be an object");
      s.choices.push_back({ParseLetter(RequireString(c, "letter"), false, "choice letter"),
                           RequireString(c, "text")});
    }
    s.answer = ParseLetter(RequireString(j, "answer"), false, "answer");
    s.category = RequireString(j, "category");
    ValidateSample(s);
    return s;
  });
}

Sample SampleFromRawJson(const json& j) {
  return WithId(j, [&] {
    if (!j.is_object()) throw ValidationError("record must be a JSON object");
    Sample s;
    s.id = Trim(RequireString(j, "id"));
    s.image = ParseImage(Require(j, "image"));
    s.question = Trim(RequireString(j, "question"));
    const json& choices = Require(j, "choices");
    if (choices.is_array()) {
      char next = 'A';
      for (const json& c : choices) {
        if (c.is_string()) {
          s.choices.push_back({next, Trim(c.get<std::string>())});
        } else if (c.is_object()) {
          s.choices.push_back({ParseLetter(RequireString(c, "letter"), true, "choice letter"),
                               Trim(RequireString(c, "text"))});
        } else {
          throw ValidationError("each choice must be a string or an object");
        }
        ++next;
      }
    } else if (choices.is_object()) {
      for (const auto& [letter, text] : choices.items()) {
        if (!text.is_string()) throw ValidationError("choice text must be a string");
        s.choices.push_back({ParseLetter(letter, true, "choice letter"), Trim(text.get<std::string>())});
      }
    } else {
      throw ValidationError("field 'choices' must be an array or object");
    }
    std::stable_sort(s.choices.begin(), s.choices.end(),
                     [](const Choice& a, const Choice& b) { return a.letter < b.letter; });
    s.answer = ParseLetter(RequireString(j, "answer"), true, "answer");
    s.category = j.contains("category") ? Trim(RequireString(j, "category")) : std::string();
    ValidateSample(s);
    return s;
  });
}

nlohmann::ordered_json SampleToJson(const Sample& s) {
  nlohmann::ordered_json j;
  j["id"] = s.id;
  nlohmann::ordered_json image;
  if (s.image.inline_payload()) {
    image["b64"] = s.image.b64;
    image["media_type"] = s.image.media_type;
  } else {
    image["path"] = s.image.path;
    if (!s.image.media_type.empty()) image["media_type"] = s.image.media_type;
  }
  j["image"] = std::move(image);
  j["question"] = s.question;
  auto choices = nlohmann::ordered_json::array();
  for (const Choice& c : s.choices) {
    choices.push_back({{"letter", std::string(1, c.letter)}, {"text", c.text}});
  }
  j["choices"] = std::move(choices);
  j["answer"] = std::string(1, s.answer);
  j["category"] = s.category;
  return j;
}

std::vector<Sample> ParseCorpus(const std::string& text) {
  std::vector<Sample> samples;
  std::set<std::string> seen;
  std::size_t line_no = 0;
  for (const std::string& line : SplitLines(text)) {
    ++line_no;
    if (Trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(line_no, std::string("malformed JSON: ") + e.what());
    }
    Sample s;
    try {
      s = SampleFromJson(j);
    } catch (const ValidationError& e) {
      throw ParseError(line_no, e.what());
    }
    if (!seen.insert(s.id).second) {
      throw ParseError(line_no, "duplicate sample id '" + s.id + "'");
    }
    samples.push_back(std::move(s));
  }
  return samples;
}

std::vector<Sample> LoadCorpus(const std::filesystem::path& path) {
  return ParseCorpus(ReadFile(path));
}

std::string SerializeCorpus(const std::vector<Sample>& samples) {
  std::string out;
  for (const Sample& s : samples) {
    out += SampleToJson(s).dump();
    out += '\n';
  }
  return out;
}

Split SplitCorpus(const std::vector<Sample>& samples, double fraction,
                  std::uint64_t seed) {
  if (samples.size() < 2) {
    throw ValidationError("split needs at least 2 samples, got " +
                          std::to_string(samples.size()));
  }
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw ValidationError("split fraction must lie in (0, 1)");
  }
  std::vector<std::string> ids;
  ids.reserve(samples.size());
  for (const Sample& s : samples) ids.push_back(s.id);
  SplitMix64 rng(seed);
  SeededShuffle(ids, rng);
  const auto n_train = static_cast<std::size_t>(
      std::llround(fraction * static_cast<double>(ids.size())));
  Split split;
  split.train_ids.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_train));
  split.test_ids.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_train), ids.end());
  return split;
}

std::string ReadImageBytes(const ImageRef& image,
                           const std::filesystem::path& base_dir) {
  if (image.inline_payload()) return Base64Decode(image.b64);
  std::filesystem::path p(image.path);
  if (p.is_relative()) p = base_dir / p;
  return ReadFile(p);
}

std::string GuessMediaType(const std::string& path) {
  const std::string ext = ToLower(std::filesystem::path(path).extension().string());
  if (ext == ".png") return "image/png";
  if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
  if (ext == ".gif") return "image/gif";
  if (ext == ".webp") return "image/webp";
  return "application/octet-stream";
}

CorpusIndex::CorpusIndex(const std::vector<Sample>& samples) : samples_(&samples) {
  for (std::size_t i = 0; i < samples.size(); ++i) by_id_.emplace(samples[i].id, i);
}

const Sample* CorpusIndex::Find(const std::string& id) const {
  auto it = by_id_.find(id);
  return it == by_id_.end() ? nullptr : &(*samples_)[it->second];
}

const Sample& CorpusIndex::At(const std::string& id) const {
  const Sample* s = Find(id);
  if (s == nullptr) throw ValidationError("unknown sample id '" + id + "'");
  return *s;
}

}  // namespace refine
