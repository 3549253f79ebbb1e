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

// refine: ingest | build | eval | report

#include <cstdio>
#include <exception>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "refine/harness.h"
#include "refine/pipeline.h"

namespace {

struct Overrides {
  std::string config;
  std::string corpus;
  std::optional<std::uint64_t> split_seed;
  std::optional<double> fraction;
  std::string strategy;
  std::string ablate;
  std::string out;
  std::optional<std::size_t> limit;
  std::optional<int> max_concurrency;
};

void AddRunFlags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "JSON run config");
  cmd->add_option("--corpus", o.corpus, "canonical corpus JSONL");
  cmd->add_option("--split-seed", o.split_seed, "train/test split seed");
  cmd->add_option("--fraction", o.fraction, "train fraction in (0, 1)");
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_option("--limit", o.limit, "evaluate only the first N ids of the split");
  cmd->add_option("--max-concurrency", o.max_concurrency, "in-flight request limit");
}

refine::RunConfig Resolve(const Overrides& o) {
  refine::RunConfig c;
  if (!o.config.empty()) c = refine::LoadRunConfig(o.config);
  if (!o.corpus.empty()) c.corpus = std::filesystem::absolute(o.corpus);
  if (o.split_seed) c.split_seed = *o.split_seed;
  if (o.fraction) c.fraction = *o.fraction;
  if (!o.strategy.empty()) c.strategy = o.strategy;
  if (!o.ablate.empty()) c.ablate = refine::ParseAblation(o.ablate);
  if (!o.out.empty()) c.out = std::filesystem::absolute(o.out);
  if (o.limit) c.limit = *o.limit;
  if (o.max_concurrency) c.max_concurrency = *o.max_concurrency;
  c.Validate();
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Error-book feedback retrieval for multimodal QA"};
  app.require_subcommand(1);
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "only print warnings");

  std::string ingest_in, ingest_out;
  std::optional<std::size_t> ingest_limit;
  CLI::App* ingest = app.add_subcommand("ingest", "validate and canonicalize a raw corpus");
  ingest->add_option("--corpus", ingest_in, "raw corpus JSONL")->required();
  ingest->add_option("--out", ingest_out, "canonical corpus JSONL to write")->required();
  ingest->add_option("--limit", ingest_limit, "keep only the first N records");

  Overrides build_o;
  std::string build_book, build_split = "train";
  CLI::App* build = app.add_subcommand("build", "collect errors, generate feedback, build the book");
  AddRunFlags(build, build_o);
  build->add_option("--errorbook", build_book, "book path to write (default <out>/book.refb)");
  build->add_option("--split", build_split, "split whose errors feed the book")
      ->check(CLI::IsMember({"train", "test", "all"}));

  Overrides eval_o;
  std::string eval_book, eval_split = "test";
  CLI::App* eval = app.add_subcommand("eval", "run one strategy over a split");
  AddRunFlags(eval, eval_o);
  eval->add_option("--strategy", eval_o.strategy, "standard|cot|direct|refine|ricp");
  eval->add_option("--ablate", eval_o.ablate, "comma list of self_reg,cluster,cot");
  eval->add_option("--errorbook", eval_book, "book for feedback-consuming strategies");
  eval->add_option("--split", eval_split, "train|test|all")->check(CLI::IsMember({"train", "test", "all"}));

  std::vector<std::string> report_files;
  std::string report_corpus, report_out = ".", report_reference, report_config;
  CLI::App* report = app.add_subcommand("report", "score prediction files and compare them");
  report->add_option("predictions", report_files, "predictions JSONL files")->required();
  report->add_option("--config", report_config, "JSON run config (for the corpus path)");
  report->add_option("--corpus", report_corpus, "canonical corpus JSONL");
  report->add_option("--out", report_out, "output directory");
  report->add_option("--reference", report_reference, "strategy tag to compare against");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }
  refine::SetQuiet(quiet);

  try {
    if (ingest->parsed()) {
      refine::CmdIngest(ingest_in, ingest_out, ingest_limit);
    } else if (build->parsed()) {
      const refine::RunConfig c = Resolve(build_o);
      std::optional<std::filesystem::path> book;
      if (!build_book.empty()) book = std::filesystem::absolute(build_book);
      const refine::BuildResult r = refine::CmdBuild(c, book, refine::ParseSplitPart(build_split));
      std::printf("book %s: %zu entries from %zu errors (%zu task/process, %zu self-regulatory), "
                  "%zu teacher calls\n",
                  r.book_path.string().c_str(), r.book_entries, r.errors, r.task_process,
                  r.self_regulatory, r.teacher_calls);
    } else if (eval->parsed()) {
      const refine::RunConfig c = Resolve(eval_o);
      std::optional<std::filesystem::path> book;
      if (!eval_book.empty()) book = std::filesystem::absolute(eval_book);
      const refine::EvalResult r = refine::CmdEval(c, book, refine::ParseSplitPart(eval_split));
      std::printf("%s: pass@1 %.4f over %zu samples -> %s\n",
                  r.predictions.empty() ? "-" : r.predictions.front().strategy.c_str(),
                  r.predictions.empty() ? 0.0 : refine::PassAt1(r.predictions),
                  r.predictions.size(), r.predictions_path.string().c_str());
      if (r.failures > 0) {
        std::fprintf(stderr, "error: %zu provider failures during eval\n", r.failures);
        return 2;
      }
    } else if (report->parsed()) {
      std::filesystem::path corpus = report_corpus;
      if (corpus.empty() && !report_config.empty()) {
        corpus = refine::LoadRunConfig(report_config).corpus;
      }
      if (corpus.empty()) throw refine::UsageError("report needs --corpus or --config");
      std::vector<std::filesystem::path> files(report_files.begin(), report_files.end());
      std::optional<std::string> reference;
      if (!report_reference.empty()) reference = report_reference;
      const refine::ReportResult r = refine::CmdReport(files, corpus, report_out, reference);
      for (const refine::RunReport& rep : r.reports) {
        std::printf("%-28s pass@1 %.4f (%lld/%lld)  tokens %lld\n", rep.strategy.c_str(),
                    rep.overall.accuracy, static_cast<long long>(rep.overall.correct),
                    static_cast<long long>(rep.overall.n),
                    static_cast<long long>(rep.tokens.total));
      }
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return refine::ExitCodeFor(std::current_exception());
  }
  return 0;
}
