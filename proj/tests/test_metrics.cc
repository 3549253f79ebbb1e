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


#include <algorithm>

#include "doctest.h"
#include "refine/metrics.h"
#include "support.h"

namespace refine {
namespace {

using testing::MakeSample;

struct Fixture {
  std::vector<Sample> samples;
  std::vector<Prediction> preds;
};

// `groups` lists (category, n, correct) groups.
Fixture Make(const std::vector<std::tuple<std::string, int, int>>& groups,
             const std::string& strategy = "standard") {
  Fixture f;
  int next = 0;
  for (const auto& [cat, n, correct] : groups) {
    for (int i = 0; i < n; ++i) {
      const std::string id = "x" + std::to_string(next++);
      f.samples.push_back(MakeSample(id, "q", 'A', cat));
      Prediction p;
      p.sample_id = id;
      p.strategy = strategy;
      p.correct = i < correct;
      p.extracted = p.correct ? 'A' : 'B';
      p.usage = {100 + next, 3, false};
      p.latency_ms = next;
      p.student_calls = 1;
      p.embedding_calls = 1;
      p.retrieval_ms = 0.5;
      f.preds.push_back(p);
    }
  }
  return f;
}

// `prompt` is the run total over 100 queries.
RunReport WithTokens(const std::string& strategy, std::int64_t prompt, double retrieval_ms,
                     double accuracy = 0.5) {
  RunReport r;
  r.strategy = strategy;
  r.overall = {100, static_cast<std::int64_t>(accuracy * 100), accuracy};
  r.tokens = {prompt, 0, prompt, false};
  r.retrieval_mean_ms = retrieval_ms;
  r.retrieval_total_ms = retrieval_ms * 100;
  return r;
}

TEST_SUITE("metrics") {
  TEST_CASE("overall accuracy") {
    const Fixture f = Make({{"c", 10, 3}});
    const CorpusIndex index(f.samples);
    const RunReport r = Score(f.preds, index);
    CHECK(r.overall.accuracy == doctest::Approx(0.30));
    CHECK(r.overall.n == 10);
    CHECK(r.overall.correct == 3);
  }

  TEST_CASE("per-category accuracy and micro averaging") {
    const Fixture f = Make({{"A", 4, 2}, {"B", 6, 1}});
    const CorpusIndex index(f.samples);
    const RunReport r = Score(f.preds, index);
    CHECK(r.per_category.at("A").accuracy == doctest::Approx(0.5));
    CHECK(r.per_category.at("B").accuracy == doctest::Approx(0.1667).epsilon(1e-3));
    CHECK(r.overall.accuracy == doctest::Approx(0.30));
    CHECK(r.macro_accuracy == doctest::Approx((0.5 + 1.0 / 6) / 2));
  }

  TEST_CASE("aggregates are exact sums") {
    const Fixture f = Make({{"A", 7, 2}, {"B", 5, 5}});
    const CorpusIndex index(f.samples);
    const RunReport r = Score(f.preds, index);
    std::int64_t prompt = 0;
    for (const auto& p : f.preds) prompt += p.usage.prompt_tokens;
    CHECK(r.tokens.prompt == prompt);
    CHECK(r.tokens.completion == 36);
    CHECK(r.tokens.total == prompt + 36);
    CHECK(r.calls == CallCounts{12, 0, 12});
    CHECK(r.latency.total_ms == 78.0);
    CHECK(r.latency.p50_ms == 6.0);
    CHECK(r.latency.p95_ms == 12.0);
    CHECK(r.retrieval_total_ms == 6.0);
    std::int64_t n = 0;
    for (const auto& [cat, cell] : r.per_category) n += cell.n;
    CHECK(n == r.overall.n);
  }

  TEST_CASE("score is permutation invariant") {
    Fixture f = Make({{"A", 9, 4}, {"B", 8, 3}, {"C", 3, 0}});
    const CorpusIndex index(f.samples);
    const RunReport base = Score(f.preds, index);
    SplitMix64 rng(4);
    for (int i = 0; i < 20; ++i) {
      SeededShuffle(f.preds, rng);
      CHECK(Score(f.preds, index) == base);
    }
  }

  TEST_CASE("score preconditions") {
    const Fixture f = Make({{"A", 2, 1}});
    const CorpusIndex index(f.samples);
    CHECK_THROWS_AS(Score({}, index), ValidationError);
    auto bad = f.preds;
    bad[0].sample_id = "unknown";
    CHECK_THROWS_AS(Score(bad, index), ValidationError);
    bad = f.preds;
    bad[1].sample_id = bad[0].sample_id;
    CHECK_THROWS_AS(Score(bad, index), ValidationError);
    bad = f.preds;
    bad[1].strategy = "cot";
    CHECK_THROWS_AS(Score(bad, index), ValidationError);
  }

  TEST_CASE("nearest-rank percentiles") {
    CHECK(NearestRank({5, 1, 3, 2, 4}, 50) == 3);
    CHECK(NearestRank({5, 1, 3, 2, 4}, 95) == 5);
    CHECK(NearestRank({7}, 1) == 7);
  }

  TEST_CASE("comparison ratios") {
    const Comparison c = Compare({WithTokens("refine", 1000, 2.0, 0.6), WithTokens("ricp", 2793, 100.0)},
                                 "ricp");
    REQUIRE(c.rows.size() == 2);
    const ComparisonRow& refine = c.rows[0];
    CHECK(refine.strategy == "refine");
    CHECK(*refine.token_ratio == doctest::Approx(0.358).epsilon(1e-3));
    CHECK(*refine.prompt_token_ratio == doctest::Approx(1000.0 / 2793.0));
    CHECK(*refine.speedup == doctest::Approx(50.0));
    CHECK(*refine.retrieval_time_ratio == doctest::Approx(0.02));
    CHECK(refine.delta_accuracy == doctest::Approx(0.1));
  }

  TEST_CASE("comparison against itself is the identity") {
    const RunReport r = WithTokens("refine", 1200, 3.0);
    const Comparison c = Compare({r}, "refine");
    REQUIRE(c.rows.size() == 1);
    CHECK(c.rows[0].delta_accuracy == 0.0);
    CHECK(*c.rows[0].token_ratio == 1.0);
    CHECK(*c.rows[0].retrieval_time_ratio == 1.0);
    CHECK(*c.rows[0].speedup == 1.0);
    CHECK_THROWS_AS(Compare({r}, "ricp"), UsageError);
  }

  TEST_CASE("zero denominators give absent ratios") {
    const Comparison c = Compare({WithTokens("standard", 1000, 0.0), WithTokens("ricp", 0, 0.0)}, "ricp");
    CHECK_FALSE(c.rows[0].token_ratio.has_value());
    CHECK_FALSE(c.rows[0].speedup.has_value());
  }

  TEST_CASE("emission round trips and is byte stable") {
    const Fixture f = Make({{"A", 4, 2}, {"B", 6, 1}});
    const CorpusIndex index(f.samples);
    const RunReport r = Score(f.preds, index);
    CHECK(ReportFromJson(nlohmann::json::parse(ReportToJson(r).dump())) == r);
    const Comparison c = Compare({r, WithTokens("ricp", 30000, 9.0)}, "ricp");
    CHECK(ComparisonFromJson(nlohmann::json::parse(ComparisonToJson(c).dump())) == c);

    const std::string csv = ReportsToCsv({r});
    CHECK(csv.substr(0, csv.find('\n')) == kReportCsvHeader);
    CHECK(testing::CountLines(csv) == 4);  // header, A, B, overall
    const std::string ccsv = ComparisonToCsv(c);
    CHECK(ccsv.substr(0, ccsv.find('\n')) == kComparisonCsvHeader);

    testing::TempDir dir;
    EmitReports({r}, dir / "a.json", ReportFormat::kJson);
    EmitReports({r}, dir / "b.json", ReportFormat::kJson);
    CHECK(ReadFile(dir / "a.json") == ReadFile(dir / "b.json"));
    EmitReports({r}, dir / "a.csv", ReportFormat::kCsv);
    CHECK(ReadFile(dir / "a.csv") == csv);
    EmitComparison(c, dir / "c.csv", ReportFormat::kCsv);
    CHECK(ReadFile(dir / "c.csv") == ccsv);
    CHECK(ReadFile(dir / "a.json").find("\"overall_averaging\"") != std::string::npos);
  }
}

}  // namespace
}  // namespace refine
