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


#include <cstdlib>
#include <string>

#include "doctest.h"
#include "json.hpp"
#include "refine/pipeline.h"
#include "support.h"

#ifndef REFINE_CLI_PATH
#error "REFINE_CLI_PATH must name the built command-line binary"
#endif

namespace refine {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string RawCorpus(int n) {
  std::string out;
  for (int i = 0; i < n; ++i) {
    json r = {{"id", "r" + std::to_string(i)},
              {"image", {{"path", "img/r.png"}}},
              {"question", "Which one " + std::to_string(i) + "?"},
              {"choices", {"x", "y", "z"}},
              {"answer", "b"},
              {"category", "Counting"}};
    out += r.dump() + "\n";
  }
  return out;
}

int Run(const std::string& args) {
  const std::string cmd = std::string(REFINE_CLI_PATH) + " -q " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

RunConfig Config(const testing::World& w, std::optional<std::size_t> limit = std::nullopt) {
  RunConfig c = LoadRunConfig(w.config);
  c.limit = limit;
  return c;
}

TEST_SUITE("pipeline") {
  TEST_CASE("ingest canonicalizes, limits and reports bad lines") {
    const auto samples = IngestCorpus(RawCorpus(12));
    REQUIRE(samples.size() == 12);
    CHECK(samples[0].answer == 'B');
    CHECK(samples[0].choices[2].letter == 'C');
    CHECK(IngestCorpus(RawCorpus(12), 10).size() == 10);
    try {
      IngestCorpus(RawCorpus(2) + "{\"id\": \"bad\"}\n");
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.line() == 3);
    }

    testing::TempDir dir;
    WriteFile(dir / "raw.jsonl", RawCorpus(12));
    CmdIngest(dir / "raw.jsonl", dir / "canon.jsonl", 10);
    const auto canon = ParseCorpus(ReadFile(dir / "canon.jsonl"));
    CHECK(canon.size() == 10);
    CHECK(canon == IngestCorpus(RawCorpus(10)));
  }

  TEST_CASE("config parsing") {
    testing::TempDir dir;
    const testing::World w = testing::MakeWorld(dir.path());
    const RunConfig c = LoadRunConfig(w.config);
    CHECK(c.corpus == dir / "corpus.jsonl");
    CHECK(c.embedder.dim == 64);
    CHECK(c.fraction == 0.5);
    CHECK(c.kmeans_seed == 3);

    json j = json::parse(ReadFile(w.config));
    j["bogus"] = 1;
    CHECK_THROWS_AS(RunConfigFromJson(j, dir.path()), ValidationError);
    j = json::parse(ReadFile(w.config));
    j["providers"]["student"]["endpoint"] = "http://localhost:1/v1";
    CHECK_THROWS_AS(RunConfigFromJson(j, dir.path()).Validate(), ValidationError);
    j = json::parse(ReadFile(w.config));
    j["split"]["fraction"] = 1.0;
    CHECK_THROWS_AS(RunConfigFromJson(j, dir.path()).Validate(), ValidationError);

    RunConfig a = c;
    a.strategy = "refine";
    a.ablate.cot = true;
    CHECK(a.ResolvedStrategy().Tag() == "refine+cot");
    a.strategy = "direct";
    CHECK_THROWS_AS(a.ResolvedStrategy(), UsageError);
    CHECK(RunConfigToJson(c).dump().find("mock-student") != std::string::npos);
  }

  TEST_CASE("eval is deterministic and writes a config snapshot") {
    testing::TempDir dir;
    const testing::World w = testing::MakeWorld(dir.path());
    const RunConfig c = Config(w);
    const EvalResult a = CmdEval(c, std::nullopt, SplitPart::kTest);
    const std::string first = ReadFile(a.predictions_path);
    CHECK(a.predictions.size() == 25);
    CHECK(a.failures == 0);
    CmdEval(c, std::nullopt, SplitPart::kTest);
    CHECK(ReadFile(a.predictions_path) == first);
    CHECK(a.predictions_path.filename() == "predictions_standard.jsonl");
    CHECK(fs::exists(a.telemetry_path));
    CHECK(fs::exists(c.out / "resolved_config.json"));
  }

  TEST_CASE("feedback strategies need a book") {
    testing::TempDir dir;
    const testing::World w = testing::MakeWorld(dir.path());
    RunConfig c = Config(w);
    c.strategy = "refine";
    CHECK_THROWS_AS(CmdEval(c, std::nullopt, SplitPart::kTest), UsageError);
    CHECK_THROWS_AS(CmdEval(c, dir / "absent.refb", SplitPart::kTest), IoError);
  }

  TEST_CASE("build from four errors") {
    // s00..s09 hold four designated errors: s00, s02, s05, s07.
    testing::TempDir dir;
    const testing::World w = testing::MakeWorld(dir.path());
    const RunConfig c = Config(w, 10);
    const BuildResult r = CmdBuild(c, std::nullopt, SplitPart::kAll);
    CHECK(r.errors == 4);
    CHECK(r.task_process == 4);
    CHECK(r.book_entries == 4);
    CHECK(LoadErrorBook(r.book_path).size() == 4);
    CHECK(r.clusters == 0);  // fewer entries than k
    const std::string audit = ReadFile(c.out / "audit.jsonl");
    CHECK(static_cast<std::size_t>(testing::CountLines(audit)) == r.teacher_calls);
    CHECK(r.teacher_calls == 8);  // one feedback and one classification call per error
  }

  TEST_CASE("build drops the self-regulatory item") {
    testing::TempDir dir;
    const testing::World w = testing::MakeWorld(dir.path(), 0.25);
    REQUIRE(w.self_regulatory.count("s07") == 1);
    const RunConfig c = Config(w, 10);
    const BuildResult r = CmdBuild(c, dir / "custom.refb", SplitPart::kAll);
    CHECK(r.errors == 4);
    CHECK(r.self_regulatory == 1);
    CHECK(r.book_entries == 3);
    CHECK(r.book_path == dir / "custom.refb");
    const ErrorBook book = LoadErrorBook(r.book_path);
    for (const auto& e : book.entries()) CHECK(e.sample_id != "s07");
    const ErrorBook selfreg =
        LoadErrorBook(dir / "selfreg.refb", FeedbackCategory::kSelfRegulatory);  // beside the book
    REQUIRE(selfreg.size() == 1);
    CHECK(selfreg.entries()[0].sample_id == "s07");
  }

  TEST_CASE("report over two runs") {
    testing::TempDir dir;
    const testing::World w = testing::MakeWorld(dir.path());
    RunConfig c = Config(w);
    const BuildResult b = CmdBuild(c, std::nullopt, SplitPart::kAll);
    const EvalResult standard = CmdEval(c, std::nullopt, SplitPart::kTest);
    c.strategy = "refine";
    const EvalResult refine = CmdEval(c, b.book_path, SplitPart::kTest);
    const std::vector<fs::path> files{standard.predictions_path, refine.predictions_path};

    const ReportResult r = CmdReport(files, c.corpus, dir / "rep", "standard");
    REQUIRE(r.reports.size() == 2);
    REQUIRE(r.comparison.has_value());
    CHECK(r.comparison->rows.size() == 2);
    CHECK(r.reports[1].calls.student == 25);
    CHECK(r.reports[1].calls.teacher == 0);
    // Test samples that were also mined by the build are cache hits.
    CHECK(r.reports[1].calls.embedding < 25);
    const std::string csv = ReadFile(dir / "rep/comparison.csv");
    CHECK(csv.rfind(kComparisonCsvHeader, 0) == 0);
    const std::string report = ReadFile(dir / "rep/report.json");
    CmdReport(files, c.corpus, dir / "rep", "standard");
    CHECK(ReadFile(dir / "rep/report.json") == report);
    CHECK(ReadFile(dir / "rep/comparison.csv") == csv);
    CHECK_THROWS_AS(CmdReport(files, c.corpus, dir / "rep", "ricp"), UsageError);
  }

  TEST_CASE("telemetry sidecar naming") {
    CHECK(TelemetryPathFor("out/predictions_refine.jsonl") == fs::path("out/telemetry_refine.jsonl"));
    CHECK(TelemetryPathFor("x/run.jsonl") == fs::path("x/run.telemetry.jsonl"));
  }

  TEST_CASE("exit codes") {
    CHECK(ExitCodeFor(nullptr) == 0);
    CHECK(ExitCodeFor(std::make_exception_ptr(UsageError("u"))) == 1);
    CHECK(ExitCodeFor(std::make_exception_ptr(ValidationError("v"))) == 1);
    CHECK(ExitCodeFor(std::make_exception_ptr(FormatError(FormatErrorKind::kChecksum, "f"))) == 1);
    CHECK(ExitCodeFor(std::make_exception_ptr(
              ProviderError(ProviderErrorKind::kAuth, "p"))) == 2);
    CHECK(ExitCodeFor(std::make_exception_ptr(IoError("i"))) == 3);
  }

  TEST_CASE("command-line binary") {
    testing::TempDir dir;
    const testing::World w = testing::MakeWorld(dir.path());
    const std::string d = dir.path().string();
    WriteFile(dir / "raw.jsonl", RawCorpus(12));
    WriteFile(dir / "bad.jsonl", RawCorpus(1) + "{oops\n");

    CHECK(Run("ingest --corpus " + d + "/raw.jsonl --out " + d + "/c.jsonl --limit 10") == 0);
    CHECK(testing::CountLines(ReadFile(dir / "c.jsonl")) == 10);
    CHECK(Run("ingest --corpus " + d + "/bad.jsonl --out " + d + "/c2.jsonl") == 1);
    CHECK(Run("ingest --corpus " + d + "/missing.jsonl --out " + d + "/c3.jsonl") == 3);
    CHECK(Run("") == 1);
    CHECK(Run("eval --config " + w.config.string() + " --strategy refine") == 1);

    CHECK(Run("eval --config " + w.config.string() + " --out " + d + "/o1") == 0);
    CHECK(Run("eval --config " + w.config.string() + " --out " + d + "/o2") == 0);
    CHECK(ReadFile(dir / "o1/predictions_standard.jsonl") ==
          ReadFile(dir / "o2/predictions_standard.jsonl"));

    // A student fixture with no matching key fails every call.
    WriteFile(dir / "student.jsonl", "{\"key\": \"nothing matches\", \"text\": \"A\"}\n");
    CHECK(Run("eval --config " + w.config.string() + " --limit 2 --out " + d + "/o3") == 2);
  }
}

}  // namespace
}  // namespace refine
