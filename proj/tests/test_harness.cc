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


#include <atomic>
#include <memory>

#include "doctest.h"
#include "refine/harness.h"
#include "refine/prompts.h"
#include "support.h"

namespace refine {
namespace {

using testing::MakeSample;

RetryPolicy Quick() {
  RetryPolicy p;
  p.sleep = [](double) {};
  return p;
}

std::size_t Count(const std::string& haystack, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = haystack.find(needle); pos != std::string::npos;
       pos = haystack.find(needle, pos + 1)) {
    ++n;
  }
  return n;
}

std::vector<std::string> Ids(int n) {
  std::vector<std::string> ids;
  for (int i = 0; i < n; ++i) ids.push_back("q" + std::to_string(i));
  return ids;
}

std::vector<Sample> Corpus(int n) {
  std::vector<Sample> out;
  for (const auto& id : Ids(n)) out.push_back(MakeSample(id, "What about " + id + "?", 'C'));
  return out;
}

TEST_SUITE("prompts") {
  TEST_CASE("standard prompt carries question, choices and the format instruction") {
    const Sample q1 = MakeSample("q1", "How many people are standing?", 'B');
    const std::string text = RenderPromptText(q1, ParseStrategy("standard"), std::nullopt);
    CHECK(text.find(q1.question) == 0);
    for (const Choice& c : q1.choices) {
      CHECK(text.find(std::string(1, c.letter) + ". " + c.text) != std::string::npos);
    }
    CHECK(text.find(kAnswerInstruction) != std::string::npos);
    CHECK(text.find(kCotSuffix) == std::string::npos);
  }

  TEST_CASE("cot appends the step-by-step trigger") {
    const Sample q1 = MakeSample("q1", "How many people are standing?", 'B');
    const std::string standard = RenderPromptText(q1, ParseStrategy("standard"), std::nullopt);
    const std::string cot = RenderPromptText(q1, ParseStrategy("cot"), std::nullopt);
    CHECK(cot == standard + "\nLet’s think step by step.");
  }

  TEST_CASE("refine places the feedback after the verbatim question") {
    const Sample q1 = MakeSample("q1", "How many people are standing?", 'B');
    Attachment a;
    a.task_process = testing::MakeFeedback("x");
    a.task_process->path = "Recount standing/walking poses";
    const std::string text = RenderPromptText(q1, ParseStrategy("refine"), a);
    const auto q = text.find(q1.question);
    const auto f = text.find("Recount standing/walking poses");
    REQUIRE(q != std::string::npos);
    REQUIRE(f != std::string::npos);
    CHECK(q < f);
    CHECK(f < text.find(kAnswerInstruction));
    CHECK(Count(text, kTaskProcessOpen) == 1);
  }

  TEST_CASE("attachment presence must match the strategy") {
    const Sample s = MakeSample("q", "x?", 'A');
    CHECK_THROWS_AS(RenderPromptText(s, ParseStrategy("refine"), std::nullopt), UsageError);
    CHECK_THROWS_AS(RenderPromptText(s, ParseStrategy("direct"), Attachment{}), UsageError);
    CHECK_THROWS_AS(RenderPromptText(s, ParseStrategy("standard"), Attachment{}), UsageError);
  }

  TEST_CASE("direct attaches raw text without the structured labels") {
    const Sample s = MakeSample("q", "x?", 'A');
    Attachment a;
    a.raw_feedback.push_back(RenderFeedbackRaw(testing::MakeFeedback("n")));
    const std::string text = RenderPromptText(s, ParseStrategy("direct"), a);
    CHECK(text.find(kDirectOpen) != std::string::npos);
    CHECK(text.find("FEED-") == std::string::npos);
  }

  TEST_CASE("the image travels as the first content part") {
    const Sample s = MakeSample("q", "x?", 'A');
    const auto messages = RenderPrompt(s, ParseStrategy("standard"), std::nullopt, "IMG");
    REQUIRE(messages.size() == 1);
    REQUIRE(messages[0].parts.size() == 2);
    CHECK(messages[0].parts[0].kind == ContentPart::Kind::kImage);
    CHECK(messages[0].parts[0].image_bytes == "IMG");
    CHECK(messages[0].parts[0].media_type == "image/png");
  }
}

TEST_SUITE("harness") {
  TEST_CASE("answer extraction rules") {
    CHECK(ExtractAnswer("The answer is (B).", "ABCD") == 'B');
    CHECK(ExtractAnswer("b", "ABCD") == 'B');
    CHECK_FALSE(ExtractAnswer("Both A and C seem plausible.", "ABCD").has_value());
    CHECK(ExtractAnswer("Answer: C", "ABCD") == 'C');
    CHECK(ExtractAnswer("  (d) ", "ABCD") == 'D');
    CHECK(ExtractAnswer("After counting, I pick (A).", "ABCD") == 'A');
    CHECK_FALSE(ExtractAnswer("The answer is a bit unclear", "ABCD").has_value());
    CHECK_FALSE(ExtractAnswer("E", "ABCD").has_value());
    CHECK_FALSE(ExtractAnswer("", "ABCD").has_value());
  }

  TEST_CASE("all-correct student over 10 ids") {
    const auto samples = Corpus(10);
    const CorpusIndex index(samples);
    ChatClient client(std::make_shared<MockChatProvider>(
                          std::vector<ChatFixture>{{"*", "The answer is (C).", {}, 0.0, {}}}),
                      Quick());
    const ModelHandle student{&client, "student"};
    const auto preds =
        EvaluateSplit(Ids(10), index, ParseStrategy("standard"), student, nullptr, {});
    REQUIRE(preds.size() == 10);
    for (std::size_t i = 0; i < preds.size(); ++i) {
      CHECK(preds[i].sample_id == Ids(10)[i]);
      CHECK(preds[i].correct);
      CHECK(preds[i].strategy == "standard");
    }
    CHECK(PassAt1(preds) == 1.0);
    CHECK(CollectErrors(preds, index).empty());
  }

  TEST_CASE("a permanently failing sample is isolated") {
    const auto samples = Corpus(10);
    const CorpusIndex index(samples);
    std::vector<ChatFixture> fixtures;
    fixtures.push_back({"What about q3?", "", {}, 0.0, ProviderErrorKind::kTransport});
    fixtures.push_back({"What about q7?", "The answer is (A).", {}, 0.0, {}});
    fixtures.push_back({"*", "The answer is (C).", {}, 0.0, {}});
    ChatClient client(std::make_shared<MockChatProvider>(fixtures), Quick());
    const auto preds = EvaluateSplit(Ids(10), index, ParseStrategy("standard"),
                                     ModelHandle{&client, "student"}, nullptr, {});
    REQUIRE(preds.size() == 10);
    CHECK_FALSE(preds[3].correct);
    CHECK(preds[3].raw_output.rfind(kFailedOutputPrefix, 0) == 0);
    CHECK_FALSE(preds[7].correct);
    CHECK(preds[7].extracted == 'A');
    CHECK(PassAt1(preds) == doctest::Approx(0.8));

    const auto errors = CollectErrors(preds, index);
    REQUIRE(errors.size() == 2);
    CHECK(errors[0].sample_id == "q3");
    CHECK_FALSE(errors[0].student_answer.has_value());
    CHECK(errors[1].sample_id == "q7");
    CHECK(errors[1].ground_truth == 'C');
  }

  TEST_CASE("refine over 5 ids: one student call and one embedding call each") {
    const auto samples = Corpus(5);
    const CorpusIndex index(samples);
    auto chat = std::make_shared<MockChatProvider>(
        std::vector<ChatFixture>{{"*", "The answer is (C).", {}, 0.0, {}}});
    ChatClient client(chat, Quick());
    std::vector<EmbeddingFixture> vecs{{"*", EmbeddingVector{{1.0f, 0.0f, 0.0f}}}};
    auto embedder = std::make_shared<MockEmbeddingProvider>(vecs);
    EmbeddingClient embed(embedder, "e", 3, std::make_shared<ContentStore>(), Quick());
    RetrievalHook hook = [&](const Sample& s, const std::string& image) {
      bool cached = false;
      embed.Embed(image, s.image.media_type, s.question, &cached);
      Retrieved r;
      r.attachment.task_process = testing::MakeFeedback("n");
      r.embedding_calls = cached ? 0 : 1;
      return r;
    };
    const auto preds = EvaluateSplit(Ids(5), index, ParseStrategy("refine"),
                                     ModelHandle{&client, "student"}, hook, {});
    CHECK(preds.size() == 5);
    CHECK(chat->calls() == 5);
    CHECK(client.stats().provider_calls == 5);
    CHECK(embedder->calls() == 5);
    CHECK(embed.stats().provider_calls == 5);
    for (const auto& p : preds) {
      CHECK(p.student_calls == 1);
      CHECK(p.embedding_calls == 1);
    }
  }

  TEST_CASE("retriever presence is checked up front") {
    const auto samples = Corpus(2);
    const CorpusIndex index(samples);
    ChatClient client(std::make_shared<MockChatProvider>(std::vector<ChatFixture>{}), Quick());
    CHECK_THROWS_AS(EvaluateSplit(Ids(2), index, ParseStrategy("refine"),
                                  ModelHandle{&client, "s"}, nullptr, {}),
                    UsageError);
    CHECK_THROWS_AS(EvaluateSplit({"nope"}, index, ParseStrategy("standard"),
                                  ModelHandle{&client, "s"}, nullptr, {}),
                    ValidationError);
  }

  TEST_CASE("repeat runs serialize byte-identically and order is restored") {
    const auto samples = Corpus(40);
    const CorpusIndex index(samples);
    auto run = [&] {
      ChatClient client(std::make_shared<MockChatProvider>(std::vector<ChatFixture>{
                            {"q1", "The answer is (B).", {}, 0.0, {}},
                            {"*", "The answer is (C).", {}, 0.0, {}}}),
                        Quick());
      EvalOptions options;
      options.max_concurrency = 6;
      return SerializePredictions(EvaluateSplit(Ids(40), index, ParseStrategy("cot"),
                                                ModelHandle{&client, "s"}, nullptr, options));
    };
    const std::string a = run();
    CHECK(a == run());
    const auto back = ParsePredictions(a);
    REQUIRE(back.size() == 40);
    CHECK(back[13].sample_id == "q13");
    CHECK_FALSE(back[1].correct);  // "q1" also prefixes q10..q19
    CHECK(SerializePredictions(back) == a);
  }

  TEST_CASE("telemetry sidecar merges back onto predictions") {
    Prediction p;
    p.sample_id = "a";
    p.strategy = "refine";
    p.retrieval_ms = 1.5;
    p.student_calls = 1;
    p.embedding_calls = 1;
    const std::string side = SerializeTelemetry({p});
    std::vector<Prediction> plain(1);
    plain[0].sample_id = "a";
    plain[0].strategy = "refine";
    MergeTelemetry(side, plain);
    CHECK(plain[0].retrieval_ms == 1.5);
    CHECK(plain[0].embedding_calls == 1);
  }

  TEST_CASE("errors and correct predictions partition the run") {
    SplitMix64 rng(5);
    const auto samples = Corpus(30);
    const CorpusIndex index(samples);
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<Prediction> preds;
      std::size_t right = 0;
      for (const auto& s : samples) {
        Prediction p;
        p.sample_id = s.id;
        const auto roll = rng.Below(3);
        if (roll == 0) p.extracted = 'C';
        if (roll == 1) p.extracted = 'A';
        p.correct = p.extracted == 'C';
        right += p.correct;
        preds.push_back(p);
      }
      CHECK(CollectErrors(preds, index).size() + right == preds.size());
      CHECK(PassAt1(preds) == static_cast<double>(right) / 30.0);
    }
  }
}

}  // namespace
}  // namespace refine
