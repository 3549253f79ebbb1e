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

#include "support.h"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>

#include "json.hpp"

namespace refine::testing {

namespace fs = std::filesystem;
using nlohmann::json;

TempDir::TempDir(const std::string& tag) {
  static std::atomic<int> counter{0};
  const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
  path_ = fs::temp_directory_path() /
          (tag + "-" + std::to_string(stamp) + "-" + std::to_string(counter.fetch_add(1)));
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

EmbeddingVector RandomVector(SplitMix64& rng, std::size_t dim) {
  EmbeddingVector v;
  v.values.resize(dim);
  do {
    for (float& x : v.values) x = static_cast<float>(rng.NextDouble() * 2.0 - 1.0);
  } while (v.AllZero());
  return v;
}

EmbeddingVector RandomUnit(SplitMix64& rng, std::size_t dim) {
  EmbeddingVector v = RandomVector(rng, dim);
  double ss = 0.0;
  for (float x : v.values) ss += static_cast<double>(x) * x;
  const double inv = 1.0 / std::sqrt(ss);
  for (float& x : v.values) x = static_cast<float>(x * inv);
  return v;
}

StructuredFeedback MakeFeedback(const std::string& id, FeedbackCategory category) {
  StructuredFeedback fb;
  fb.sample_id = id;
  fb.target = "Identify what the question about " + id + " asks.";
  fb.check = "The student misread the scene in " + id + ".";
  fb.path = "Re-examine the relevant region before answering " + id + ".";
  fb.category = category;
  return fb;
}

ErrorBook RandomBook(SplitMix64& rng, std::size_t n, std::size_t dim, bool with_ties) {
  std::vector<std::string> ids(n);
  for (std::size_t i = 0; i < n; ++i) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "e%06zu", i);
    ids[i] = buf;
  }
  SeededShuffle(ids, rng);
  std::vector<ErrorBookEntry> entries;
  entries.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    ErrorBookEntry e;
    e.sample_id = ids[i];
    if (with_ties && i > 0 && rng.Below(10) == 0) {
      e.embedding = entries[rng.Below(i)].embedding;
    } else {
      e.embedding = RandomVector(rng, dim);
    }
    e.feedback = MakeFeedback(ids[i]);
    entries.push_back(std::move(e));
  }
  return ErrorBook(dim, "test-embed", std::move(entries));
}

Sample MakeSample(const std::string& id, const std::string& question, char answer,
                  const std::string& category, int n_choices) {
  Sample s;
  s.id = id;
  s.question = question;
  for (int i = 0; i < n_choices; ++i) {
    const char letter = static_cast<char>('A' + i);
    s.choices.push_back({letter, std::string("option ") + letter + " for " + id});
  }
  s.answer = answer;
  s.category = category;
  s.image.b64 = Base64Encode("image-bytes-" + id);
  s.image.media_type = "image/png";
  return s;
}

std::size_t BruteForceNearest(const ErrorBook& book, const EmbeddingVector& query) {
  std::size_t best = 0;
  double best_sim = CosineSimilarity(query, book.entries()[0].embedding);
  for (std::size_t i = 1; i < book.size(); ++i) {
    const double sim = CosineSimilarity(query, book.entries()[i].embedding);
    if (sim > best_sim ||
        (sim == best_sim && book.entries()[i].sample_id < book.entries()[best].sample_id)) {
      best = i;
      best_sim = sim;
    }
  }
  return best;
}

namespace {

std::string Padded(std::string text, std::size_t length) {
  static const char* kFiller[] = {"carefully", "verify", "the", "visual", "evidence",
                                  "against", "each", "option", "before", "committing"};
  for (std::size_t i = 0; text.size() < length; ++i) {
    text += ' ';
    text += kFiller[i % 10];
  }
  text.resize(length);
  return text;
}

std::string Id(char prefix, int i) {
  char buf[8];
  std::snprintf(buf, sizeof(buf), "%c%02d", prefix, i);
  return buf;
}

std::string Question(const std::string& id) {
  return "Question " + id + ": which option matches the scene?";
}

std::string Answer(char letter) { return std::string("The answer is (") + letter + ")."; }

char WrongLetter(char right) { return right == 'D' ? 'A' : static_cast<char>(right + 1); }

json VectorJson(const EmbeddingVector& v) { return v.values; }

void WriteJsonl(const fs::path& path, const std::vector<json>& rows) {
  std::string out;
  for (const json& r : rows) out += r.dump() + "\n";
  WriteFile(path, out);
}

}  // namespace

World MakeWorld(const fs::path& dir, double self_reg_fraction, std::uint64_t seed) {
  static const char* kCategories[] = {"perception", "reasoning", "ocr"};
  World w;
  w.dir = dir;
  fs::create_directories(dir);
  SplitMix64 rng(seed);

  std::vector<Sample> corpus, twins;
  std::vector<json> student, teacher_keyed, teacher_feedback, embed;
  std::vector<json> student_tokens;
  for (int i = 0; i < 50; ++i) {
    const std::string id = Id('s', i);
    const char answer = static_cast<char>('A' + (i * 7) % 4);
    corpus.push_back(MakeSample(id, Question(id), answer, kCategories[i % 3]));
    const EmbeddingVector v = RandomUnit(rng, w.dim);
    embed.push_back({{"key", Question(id)}, {"vector", VectorJson(v)}});
    const bool wrong = i % 5 == 0 || i % 5 == 2;
    student.push_back({{"key", Question(id)}, {"text", Answer(wrong ? WrongLetter(answer) : answer)}});
    if (!wrong) continue;

    const std::string tid = Id('t', i);
    const std::size_t j = w.designated.size();
    w.designated.push_back(id);
    w.twins.push_back(tid);
    twins.push_back(MakeSample(tid, Question(tid), answer, kCategories[i % 3]));
    // Small perturbation: cosine to the source stays above 0.99.
    EmbeddingVector noise = RandomUnit(rng, w.dim);
    EmbeddingVector t;
    for (std::size_t d = 0; d < w.dim; ++d) t.values.push_back(v.values[d] + 0.05f * noise.values[d]);
    embed.push_back({{"key", Question(tid)}, {"vector", VectorJson(t)}});
    student.push_back({{"key", Question(tid)}, {"text", Answer(WrongLetter(answer))}});

    const std::string token = "FBTOKEN-" + id;
    student_tokens.push_back({{"key", token}, {"text", Answer(answer)}});
    const bool self = std::floor(static_cast<double>(j + 1) * self_reg_fraction) >
                      std::floor(static_cast<double>(j) * self_reg_fraction);
    if (self) w.self_regulatory.insert(id);
    teacher_keyed.push_back({{"key", token}, {"text", self ? "SELF" : "TASK"}});
    const std::string triple =
        "FEED-TARGET: " + Padded(token + " Decide which option matches the scene.", 190) +
        "\nFEED-CHECK: " + Padded("The student chose a neighbouring option.", 190) +
        "\nFEED-PATH: " + Padded("Locate the described object first.", 190);
    teacher_feedback.push_back({{"key", Question(id)}, {"text", triple}});
  }

  // Feedback-token entries come first so they win over the question keys.
  std::vector<json> student_all = student_tokens;
  student_all.insert(student_all.end(), student.begin(), student.end());
  std::vector<json> teacher_all;
  teacher_all.push_back({{"key", "Feedback samples from cluster"},
                         {"text", "PRINCIPLE: " + Padded("Ground every answer in the image.", 400)}});
  teacher_all.insert(teacher_all.end(), teacher_keyed.begin(), teacher_keyed.end());
  teacher_all.insert(teacher_all.end(), teacher_feedback.begin(), teacher_feedback.end());

  WriteFile(dir / "corpus.jsonl", SerializeCorpus(corpus));
  WriteFile(dir / "twins.jsonl", SerializeCorpus(twins));
  WriteJsonl(dir / "student.jsonl", student_all);
  WriteJsonl(dir / "teacher.jsonl", teacher_all);
  WriteJsonl(dir / "embed.jsonl", embed);

  json config = {
      {"corpus", "corpus.jsonl"},
      {"split", {{"fraction", 0.5}, {"seed", 1}}},
      {"providers",
       {{"student", {{"model_id", "mock-student"}, {"fixture", "student.jsonl"}}},
        {"teacher", {{"model_id", "mock-teacher"}, {"fixture", "teacher.jsonl"}}},
        {"embedder", {{"model_id", "mock-embed"}, {"fixture", "embed.jsonl"}, {"dim", w.dim}}}}},
      {"out", "out"},
      {"cache_dir", "cache"},
      {"kmeans", {{"k", 5}, {"seed", 3}}},
  };
  w.config = dir / "config.json";
  WriteFile(w.config, config.dump(2));
  config["corpus"] = "twins.jsonl";
  w.twins_config = dir / "twins_config.json";
  WriteFile(w.twins_config, config.dump(2));
  return w;
}

int CountLines(const std::string& text) {
  return static_cast<int>(std::count(text.begin(), text.end(), '\n'));
}

}  // namespace refine::testing
