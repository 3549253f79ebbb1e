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

#include <set>

#include "doctest.h"
#include "json.hpp"
#include "refine/corpus.h"
#include "refine/util.h"
#include "support.h"

namespace refine {
namespace {

using nlohmann::json;
using testing::MakeSample;

std::vector<Sample> Numbered(int n, const char* fmt = "q%d") {
  std::vector<Sample> out;
  for (int i = 0; i < n; ++i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), fmt, i);
    out.push_back(MakeSample(buf, "What is shown?", 'B'));
  }
  return out;
}

std::string Line(const Sample& s) { return SampleToJson(s).dump() + "\n"; }

TEST_SUITE("util") {
  TEST_CASE("splitmix64 matches the reference stream") {
    // Frozen from tests/oracles/seeded_split.py.
    SplitMix64 rng(0);
    CHECK(rng.Next() == 0xe220a8397b1dcdafULL);
    CHECK(rng.Next() == 0x6e789e6aa1b965f4ULL);
    CHECK(rng.Next() == 0x06c45d188009454fULL);
  }

  TEST_CASE("Below stays in range and NextDouble in [0, 1)") {
    SplitMix64 rng(42);
    for (int i = 0; i < 10000; ++i) {
      CHECK(rng.Below(7) < 7);
      const double d = rng.NextDouble();
      CHECK(d >= 0.0);
      CHECK(d < 1.0);
    }
    CHECK_THROWS(rng.Below(0));
  }

  TEST_CASE("sha256, crc32 and base64 known answers") {
    CHECK(Sha256Hex("abc") ==
          "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    const std::string check = "123456789";
    CHECK(Crc32({reinterpret_cast<const std::uint8_t*>(check.data()), check.size()}) ==
          0xCBF43926u);
    CHECK(Base64Encode("foobar") == "Zm9vYmFy");
    CHECK(Base64Encode("fo") == "Zm8=");
    CHECK(Base64Decode("Zm8=") == "fo");
    CHECK(Base64Decode(Base64Encode(std::string("\0\xff\x10", 3))) == std::string("\0\xff\x10", 3));
    CHECK_THROWS_AS(Base64Decode("not base64!"), ValidationError);
  }

  TEST_CASE("text helpers") {
    CHECK(Trim("  a b \n") == "a b");
    CHECK(Utf8Length("Let’s") == 5);
    const auto lines = SplitLines("a\r\nb\n\nc");
    REQUIRE(lines.size() == 4);
    CHECK(lines[0] == "a");
    CHECK(lines[2].empty());
  }

  TEST_CASE("file round trip and missing file") {
    testing::TempDir dir;
    WriteFile(dir / "nested/x.bin", std::string("a\0b", 3));
    CHECK(ReadFile(dir / "nested/x.bin") == std::string("a\0b", 3));
    CHECK_THROWS_AS(ReadFile(dir / "absent"), IoError);
  }
}

TEST_SUITE("corpus") {
  TEST_CASE("3-line valid file loads in file order") {
    const auto samples = Numbered(3);
    const auto loaded = ParseCorpus(SerializeCorpus(samples));
    REQUIRE(loaded.size() == 3);
    CHECK(loaded[0].id == "q0");
    CHECK(loaded[2].id == "q2");
    CHECK(loaded == samples);
  }

  TEST_CASE("duplicate id is rejected naming the id and line") {
    const std::string text = Line(MakeSample("q1", "a?", 'A')) + Line(MakeSample("q1", "b?", 'A'));
    try {
      ParseCorpus(text);
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.line() == 2);
      CHECK(std::string(e.what()).find("q1") != std::string::npos);
    }
  }

  TEST_CASE("answer outside the choices is a validation error") {
    json j = SampleToJson(MakeSample("q9", "x?", 'A'));
    j["answer"] = "F";
    CHECK_THROWS_AS(SampleFromJson(j), ValidationError);
    try {
      ParseCorpus(j.dump() + "\n");
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.line() == 1);
      CHECK(std::string(e.what()).find("q9") != std::string::npos);
    }
  }

  TEST_CASE("choice invariants") {
    Sample s = MakeSample("q", "x?", 'A');
    s.choices[1].letter = 'A';
    CHECK_THROWS_AS(ValidateSample(s), ValidationError);  // duplicate
    s = MakeSample("q", "x?", 'A');
    std::swap(s.choices[0], s.choices[1]);
    CHECK_THROWS_AS(ValidateSample(s), ValidationError);  // not ascending
    s = MakeSample("q", "x?", 'A', "c", 5);
    CHECK_NOTHROW(ValidateSample(s));
    s.choices.push_back({'F', "too many"});
    CHECK_THROWS_AS(ValidateSample(s), ValidationError);
    s = MakeSample("q", "x?", 'A');
    s.image.media_type.clear();
    CHECK_THROWS_AS(ValidateSample(s), ValidationError);  // inline needs a media type
  }

  TEST_CASE("malformed JSON reports its line") {
    const std::string text = Line(MakeSample("a", "x?", 'A')) + "\n{oops\n";
    try {
      ParseCorpus(text);
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.line() == 3);
    }
  }

  TEST_CASE("lenient raw records are canonicalized") {
    const json raw = {{"id", " r1 "},
                      {"image", {{"path", "img/r1.png"}}},
                      {"question", "Which?"},
                      {"choices", {{"b", "second"}, {"a", "first"}}},
                      {"answer", "b"},
                      {"category", "Chart"}};
    const Sample s = SampleFromRawJson(raw);
    CHECK(s.id == "r1");
    CHECK(s.answer == 'B');
    REQUIRE(s.choices.size() == 2);
    CHECK(s.choices[0].letter == 'A');
    CHECK(s.choices[0].text == "first");
    const json list = {{"id", "r2"}, {"image", {{"path", "x.png"}}}, {"question", "Q"},
                       {"choices", {"one", "two", "three"}}, {"answer", "C"}, {"category", "x"}};
    CHECK(SampleFromRawJson(list).choices[2].letter == 'C');
  }

  TEST_CASE("generated records always satisfy the invariants after a round trip") {
    SplitMix64 rng(11);
    for (int i = 0; i < 300; ++i) {
      const int n = 2 + static_cast<int>(rng.Below(4));
      const char answer = static_cast<char>('A' + rng.Below(static_cast<std::uint64_t>(n)));
      const Sample s = MakeSample("g" + std::to_string(i), "q" + std::to_string(rng.Next()),
                                  answer, "cat", n);
      const Sample back = SampleFromJson(json::parse(SampleToJson(s).dump()));
      CHECK(back == s);
      CHECK_NOTHROW(ValidateSample(back));
    }
  }

  TEST_CASE("split: 10 samples, fraction 0.5, seed 7") {
    const Split split = SplitCorpus(Numbered(10), 0.5, 7);
    // Frozen from tests/oracles/seeded_split.py.
    CHECK(split.train_ids == std::vector<std::string>{"q8", "q1", "q5", "q9", "q0"});
    CHECK(split.test_ids == std::vector<std::string>{"q4", "q3", "q2", "q6", "q7"});
  }

  TEST_CASE("split is deterministic, disjoint and covering") {
    const auto samples = Numbered(37);
    const Split a = SplitCorpus(samples, 0.3, 99);
    CHECK(a == SplitCorpus(samples, 0.3, 99));
    CHECK(a.train_ids.size() == 11);  // round(0.3 * 37)
    std::set<std::string> all(a.train_ids.begin(), a.train_ids.end());
    for (const auto& id : a.test_ids) CHECK(all.insert(id).second);
    CHECK(all.size() == 37);
  }

  TEST_CASE("split: 100 samples, seed 1 vs seed 2") {
    const auto samples = Numbered(100, "q%02d");
    const Split a = SplitCorpus(samples, 0.5, 1);
    const Split b = SplitCorpus(samples, 0.5, 2);
    // Frozen from tests/oracles/seeded_split.py.
    CHECK(std::vector<std::string>(a.train_ids.begin(), a.train_ids.begin() + 5) ==
          std::vector<std::string>{"q32", "q42", "q35", "q28", "q03"});
    CHECK(std::vector<std::string>(b.train_ids.begin(), b.train_ids.begin() + 5) ==
          std::vector<std::string>{"q66", "q53", "q79", "q35", "q90"});
    CHECK(a.train_ids != b.train_ids);
  }

  TEST_CASE("split preconditions") {
    CHECK_THROWS_AS(SplitCorpus(Numbered(1), 0.5, 1), ValidationError);
    CHECK_THROWS_AS(SplitCorpus(Numbered(4), 0.0, 1), ValidationError);
    CHECK_THROWS_AS(SplitCorpus(Numbered(4), 1.0, 1), ValidationError);
  }

  TEST_CASE("image bytes from inline payloads and relative paths") {
    testing::TempDir dir;
    WriteFile(dir / "img/a.png", "PNGDATA");
    ImageRef ref;
    ref.path = "img/a.png";
    CHECK(ReadImageBytes(ref, dir.path()) == "PNGDATA");
    CHECK(GuessMediaType("x.JPG") == "image/jpeg");
    const Sample s = MakeSample("i", "q", 'A');
    CHECK(ReadImageBytes(s.image, {}) == "image-bytes-i");
  }

  TEST_CASE("corpus index") {
    const auto samples = Numbered(3);
    const CorpusIndex index(samples);
    CHECK(index.Find("q1") == &samples[1]);
    CHECK(index.Find("zz") == nullptr);
    CHECK_THROWS_AS(index.At("zz"), ValidationError);
  }
}

}  // namespace
}  // namespace refine
